//! Judge prompts, verdict parsing and the four-judge trimmed mean.
//!
//! Judges answer with `\boxed{S}` (task completion, 0–10 rubric) or
//! `\boxed{G}` (information grounding, already in `[0, 1]`). Each instance's
//! score is the mean of the two middle judge scores. An instance with any
//! judge failure is excluded from the metric and counted instead.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const JUDGE_POOL_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    TaskCompletion,
    InformationGrounding,
    Prepare,
    Process,
    Stop,
    Final,
    Judge,
    Summarize,
}

impl Template {
    pub const ALL: [Template; 8] = [
        Template::TaskCompletion,
        Template::InformationGrounding,
        Template::Prepare,
        Template::Process,
        Template::Stop,
        Template::Final,
        Template::Judge,
        Template::Summarize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Template::TaskCompletion => "task_completion",
            Template::InformationGrounding => "information_grounding",
            Template::Prepare => "prepare",
            Template::Process => "process",
            Template::Stop => "stop",
            Template::Final => "final",
            Template::Judge => "judge",
            Template::Summarize => "summarize",
        }
    }

    /// Raw template text.
    pub fn text(self) -> &'static str {
        let raw = match self {
            Template::TaskCompletion => include_str!("../templates/task_completion.txt"),
            Template::InformationGrounding => include_str!("../templates/information_grounding.txt"),
            Template::Prepare => include_str!("../templates/prepare.txt"),
            Template::Process => include_str!("../templates/process.txt"),
            Template::Stop => include_str!("../templates/stop.txt"),
            Template::Final => include_str!("../templates/final.txt"),
            Template::Judge => include_str!("../templates/judge.txt"),
            Template::Summarize => include_str!("../templates/summarize.txt"),
        };
        raw.strip_suffix('\n').unwrap_or(raw)
    }

    /// Placeholders substituted as `{name}`. Other braces in the text are literal.
    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            Template::Prepare => &["i", "self.max_step"],
            Template::Process => &["self.max_concurrent"],
            Template::Stop => &["last_user"],
            _ => &[],
        }
    }
}

impl FromStr for Template {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Template::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown template {s:?}"))
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn render_prompt(template: Template, context: &BTreeMap<String, String>) -> Result<String> {
    let mut text = template.text().to_string();
    for &name in template.placeholders() {
        let value = context.get(name).ok_or_else(|| Error::MissingPlaceholder {
            template: template.name().to_string(),
            placeholder: name.to_string(),
        })?;
        text = text.replace(&format!("{{{name}}}"), value);
    }
    Ok(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// 0–10 rubric, divided by 10.
    TenToUnit,
    Unit,
}

/// Score from the last parsable `\boxed{...}` in `response`, normalized and
/// clamped to `[0, 1]`.
pub fn parse_boxed_score(response: &str, scale: Scale) -> Result<f64> {
    const OPEN: &str = "boxed{";
    let mut found = None;
    let mut rest = response;
    while let Some(pos) = rest.find(OPEN) {
        let after = &rest[pos + OPEN.len()..];
        let Some(close) = after.find('}') else { break };
        if let Ok(x) = after[..close].trim().parse::<f64>() {
            if x.is_finite() {
                found = Some(x);
            }
        }
        rest = &after[close + 1..];
    }
    let raw = found.ok_or_else(|| Error::NoScore {
        excerpt: response.chars().take(120).collect(),
    })?;
    let scaled = match scale {
        Scale::TenToUnit => raw / 10.0,
        Scale::Unit => raw,
    };
    Ok(scaled.clamp(0.0, 1.0))
}

/// Mean of the four scores after dropping one minimum and one maximum
/// (lowest index wins ties).
pub fn trimmed_mean(scores: &[f64]) -> Result<f64> {
    if scores.len() != JUDGE_POOL_SIZE {
        return Err(Error::Arity {
            expected: JUDGE_POOL_SIZE,
            got: scores.len(),
        });
    }
    if let Some(pos) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(pos));
    }
    let argmin = (0..4).fold(0, |best, i| if scores[i] < scores[best] { i } else { best });
    let argmax = (0..4)
        .filter(|&i| i != argmin)
        .fold(None, |best: Option<usize>, i| match best {
            Some(b) if scores[i] <= scores[b] => Some(b),
            _ => Some(i),
        })
        .expect("four scores");
    let kept: f64 = (0..4).filter(|&i| i != argmin && i != argmax).map(|i| scores[i]).sum();
    Ok(kept / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub judge_id: String,
    pub raw_response: String,
    pub score: f64,
    pub scale_applied: Scale,
}

impl JudgeVerdict {
    pub fn parse(judge_id: impl Into<String>, raw_response: impl Into<String>, scale: Scale) -> Result<Self> {
        let raw_response = raw_response.into();
        let score = parse_boxed_score(&raw_response, scale)?;
        Ok(Self {
            judge_id: judge_id.into(),
            raw_response,
            score,
            scale_applied: scale,
        })
    }
}

pub fn task_completion(verdicts: &[JudgeVerdict]) -> Result<f64> {
    let scores: Vec<f64> = verdicts.iter().map(|v| v.score).collect();
    trimmed_mean(&scores)
}

/// Per-judge scores keyed by `(gt_step, pred_step)`.
pub type StepScoreTable = BTreeMap<(usize, usize), f64>;

/// Trimmed mean per step pair, averaged uniformly over step pairs.
pub fn information_grounding(tables: &[StepScoreTable]) -> Result<f64> {
    if tables.len() != JUDGE_POOL_SIZE {
        return Err(Error::Arity {
            expected: JUDGE_POOL_SIZE,
            got: tables.len(),
        });
    }
    let keys: BTreeSet<&(usize, usize)> = tables[0].keys().collect();
    if keys.is_empty() {
        return Err(Error::Shape("judges supplied no step pairs".into()));
    }
    for (j, t) in tables.iter().enumerate().skip(1) {
        if t.keys().collect::<BTreeSet<_>>() != keys {
            return Err(Error::Shape(format!(
                "judge {j} scored different step pairs than judge 0"
            )));
        }
    }
    let mut sum = 0.0;
    for key in &keys {
        let scores: Vec<f64> = tables.iter().map(|t| t[*key]).collect();
        sum += trimmed_mean(&scores)?;
    }
    Ok(sum / keys.len() as f64)
}

/// One judge's answer for one instance in task mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResponse {
    pub judge_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub gt_step: usize,
    pub pred_step: usize,
    pub text: String,
}

/// One judge's step-level answers for one instance in grounding mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingResponse {
    pub judge_id: String,
    #[serde(default)]
    pub steps: Vec<StepResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A line of a responses file: all judge answers for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResponseRow {
    Task {
        instance: String,
        responses: Vec<TaskResponse>,
    },
    Grounding {
        instance: String,
        grounding: Vec<GroundingResponse>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    Task,
    Grounding,
}

impl FromStr for JudgeMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "task" => Ok(JudgeMode::Task),
            "grounding" => Ok(JudgeMode::Grounding),
            _ => Err(format!("unknown judge mode {s:?}; expected task | grounding")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceScore {
    pub instance: String,
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A judged corpus metric: mean over instances that all four judges scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgedMetric {
    pub mode: JudgeMode,
    pub value: Option<f64>,
    pub instances: usize,
    pub failures: usize,
    pub per_instance: Vec<InstanceScore>,
}

fn score_row(row: &ResponseRow, mode: JudgeMode) -> (String, Result<f64>) {
    match (row, mode) {
        (ResponseRow::Task { instance, responses }, JudgeMode::Task) => {
            let result = (|| {
                if responses.len() != JUDGE_POOL_SIZE {
                    return Err(Error::Arity {
                        expected: JUDGE_POOL_SIZE,
                        got: responses.len(),
                    });
                }
                let verdicts = responses
                    .iter()
                    .map(|r| match (&r.text, &r.error) {
                        (_, Some(e)) => Err(Error::Judge {
                            judge_id: r.judge_id.clone(),
                            message: e.clone(),
                        }),
                        (Some(t), None) => JudgeVerdict::parse(&r.judge_id, t, Scale::TenToUnit),
                        (None, None) => Err(Error::Judge {
                            judge_id: r.judge_id.clone(),
                            message: "no response text".into(),
                        }),
                    })
                    .collect::<Result<Vec<_>>>()?;
                task_completion(&verdicts)
            })();
            (instance.clone(), result)
        }
        (ResponseRow::Grounding { instance, grounding }, JudgeMode::Grounding) => {
            let result = (|| {
                if grounding.len() != JUDGE_POOL_SIZE {
                    return Err(Error::Arity {
                        expected: JUDGE_POOL_SIZE,
                        got: grounding.len(),
                    });
                }
                let tables = grounding
                    .iter()
                    .map(|g| {
                        if let Some(e) = &g.error {
                            return Err(Error::Judge {
                                judge_id: g.judge_id.clone(),
                                message: e.clone(),
                            });
                        }
                        let mut table = StepScoreTable::new();
                        for s in &g.steps {
                            let v = parse_boxed_score(&s.text, Scale::Unit)?;
                            if table.insert((s.gt_step, s.pred_step), v).is_some() {
                                return Err(Error::Shape(format!(
                                    "judge {} scored step pair ({}, {}) twice",
                                    g.judge_id, s.gt_step, s.pred_step
                                )));
                            }
                        }
                        Ok(table)
                    })
                    .collect::<Result<Vec<_>>>()?;
                information_grounding(&tables)
            })();
            (instance.clone(), result)
        }
        (ResponseRow::Task { instance, .. }, JudgeMode::Grounding)
        | (ResponseRow::Grounding { instance, .. }, JudgeMode::Task) => (
            instance.clone(),
            Err(Error::Shape(format!("row does not match {mode:?} mode"))),
        ),
    }
}

/// Scores every row; rows that fail are reported and excluded from the mean.
pub fn aggregate_responses(rows: &[ResponseRow], mode: JudgeMode) -> JudgedMetric {
    let mut per_instance = Vec::with_capacity(rows.len());
    let (mut sum, mut scored, mut failures) = (0.0, 0usize, 0usize);
    for row in rows {
        let (instance, result) = score_row(row, mode);
        match result {
            Ok(s) => {
                sum += s;
                scored += 1;
                per_instance.push(InstanceScore {
                    instance,
                    score: Some(s),
                    error_code: None,
                    error: None,
                });
            }
            Err(e) => {
                failures += 1;
                log::warn!("instance {instance}: {e}");
                per_instance.push(InstanceScore {
                    instance,
                    score: None,
                    error_code: Some(e.code().to_string()),
                    error: Some(e.to_string()),
                });
            }
        }
    }
    JudgedMetric {
        mode,
        value: (scored > 0).then(|| sum / scored as f64),
        instances: scored,
        failures,
        per_instance,
    }
}

/// Reads a JSON-lines responses file.
pub fn parse_response_rows(text: &str) -> Result<Vec<ResponseRow>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Schema {
                path: format!("line {}", n + 1),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Outbound judge request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub judge_id: String,
    pub instance_id: String,
    pub prompt: String,
    pub attachments: Vec<String>,
}

/// Something that answers judge prompts with opaque text.
pub trait JudgePort: Send + Sync {
    fn id(&self) -> &str;
    fn submit(&self, instance_id: &str, prompt: &str, attachments: &[String]) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeEndpoint {
    pub id: String,
    pub url: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_timeout_secs() -> u64 {
    120
}

fn default_retries() -> u32 {
    2
}

/// `POST {"judge_id", "instance_id", "prompt", "attachments"}` → `{"text"}`.
pub struct HttpJudge {
    endpoint: JudgeEndpoint,
    agent: ureq::Agent,
}

impl HttpJudge {
    pub fn new(endpoint: JudgeEndpoint) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(endpoint.timeout_secs)))
            .build()
            .into();
        Self { endpoint, agent }
    }
}

#[derive(Deserialize)]
struct JudgeReply {
    text: String,
}

impl JudgePort for HttpJudge {
    fn id(&self) -> &str {
        &self.endpoint.id
    }

    fn submit(&self, instance_id: &str, prompt: &str, attachments: &[String]) -> Result<String> {
        let request = JudgeRequest {
            judge_id: self.endpoint.id.clone(),
            instance_id: instance_id.to_string(),
            prompt: prompt.to_string(),
            attachments: attachments.to_vec(),
        };
        let mut last = String::new();
        for attempt in 0..=self.endpoint.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(200 * u64::from(attempt)));
            }
            let outcome = self
                .agent
                .post(&self.endpoint.url)
                .send_json(&request)
                .map_err(|e| e.to_string())
                .and_then(|mut r| r.body_mut().read_json::<JudgeReply>().map_err(|e| e.to_string()));
            match outcome {
                Ok(reply) => return Ok(reply.text),
                Err(e) => last = e,
            }
        }
        Err(Error::Judge {
            judge_id: self.endpoint.id.clone(),
            message: last,
        })
    }
}

/// Offline judge answering from a script keyed by instance id.
#[derive(Debug, Clone, Default)]
pub struct MockJudge {
    id: String,
    script: BTreeMap<String, String>,
}

impl MockJudge {
    pub fn new(id: impl Into<String>, script: BTreeMap<String, String>) -> Self {
        Self { id: id.into(), script }
    }

    /// Loads `{"<judge_id>": {"<instance_id>": "<response>"}}`.
    pub fn pool_from_fixture(text: &str) -> Result<Vec<MockJudge>> {
        let raw: BTreeMap<String, BTreeMap<String, String>> =
            serde_json::from_str(text).map_err(|e| Error::Schema {
                path: "$".into(),
                message: e.to_string(),
            })?;
        Ok(raw.into_iter().map(|(id, script)| MockJudge::new(id, script)).collect())
    }
}

impl JudgePort for MockJudge {
    fn id(&self) -> &str {
        &self.id
    }

    fn submit(&self, instance_id: &str, _prompt: &str, _attachments: &[String]) -> Result<String> {
        self.script.get(instance_id).cloned().ok_or_else(|| Error::Judge {
            judge_id: self.id.clone(),
            message: format!("no scripted response for instance {instance_id}"),
        })
    }
}

/// Task-completion input: one instance to show every judge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeInstance {
    pub instance: String,
    #[serde(default)]
    pub attachments: Vec<String>,
}

/// Submits the task-completion prompt for each instance to every judge with at
/// most `max_in_flight` concurrent requests. Output rows are in input order.
pub fn collect_task_responses(
    instances: &[JudgeInstance],
    judges: &[&dyn JudgePort],
    max_in_flight: usize,
) -> Result<Vec<ResponseRow>> {
    let prompt = render_prompt(Template::TaskCompletion, &BTreeMap::new())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let jobs: Vec<(usize, usize)> = (0..instances.len())
        .flat_map(|i| (0..judges.len()).map(move |j| (i, j)))
        .collect();
    let answers: Vec<TaskResponse> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, j)| {
                let inst = &instances[i];
                match judges[j].submit(&inst.instance, &prompt, &inst.attachments) {
                    Ok(text) => TaskResponse {
                        judge_id: judges[j].id().to_string(),
                        text: Some(text),
                        error: None,
                    },
                    Err(e) => TaskResponse {
                        judge_id: judges[j].id().to_string(),
                        text: None,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    });
    let mut answers = answers.into_iter();
    Ok(instances
        .iter()
        .map(|inst| ResponseRow::Task {
            instance: inst.instance.clone(),
            responses: answers.by_ref().take(judges.len()).collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn prompt_anchors() {
        let tc = render_prompt(Template::TaskCompletion, &BTreeMap::new()).unwrap();
        assert!(tc.contains("Planning (0-3)"));
        assert!(tc.contains("output only \\boxed{S}"));
        let ig = render_prompt(Template::InformationGrounding, &BTreeMap::new()).unwrap();
        assert!(ig.contains("output only a scalar"));
        assert!(ig.contains("\\boxed{G}"));
    }

    #[test]
    fn stop_template_substitution() {
        let err = render_prompt(Template::Stop, &BTreeMap::new()).unwrap_err();
        assert_eq!(err.code(), "MissingPlaceholderError");
        assert!(err.to_string().contains("last_user"));

        let ctx = BTreeMap::from([("last_user".to_string(), "What is the AQI?".to_string())]);
        let text = render_prompt(Template::Stop, &ctx).unwrap();
        assert!(text.contains("here is the original question: What is the AQI?,"));
        let last = text.lines().last().unwrap();
        assert!(last.starts_with("Answer strictly with 'yes' or 'no'"), "{last}");
    }

    #[test]
    fn process_template_keeps_literal_braces() {
        let ctx = BTreeMap::from([("self.max_concurrent".to_string(), "3".to_string())]);
        let text = render_prompt(Template::Process, &ctx).unwrap();
        assert!(text.contains("containing 1 to 3 items"));
        assert!(text.contains(r#"{"name": "server_name/tool_name", "arguments": { ... }}"#));
    }

    #[test]
    fn every_template_renders_with_its_placeholders() {
        for t in Template::ALL {
            let ctx: BTreeMap<String, String> = t
                .placeholders()
                .iter()
                .map(|p| (p.to_string(), "X".to_string()))
                .collect();
            let text = render_prompt(t, &ctx).unwrap();
            for p in t.placeholders() {
                assert!(!text.contains(&format!("{{{p}}}")));
            }
            assert_eq!(t.name().parse::<Template>().unwrap(), t);
        }
    }

    #[test]
    fn boxed_parsing() {
        assert_eq!(parse_boxed_score("\\boxed{7.5}", Scale::TenToUnit).unwrap(), 0.75);
        assert_eq!(parse_boxed_score("\\boxed{0.9}", Scale::Unit).unwrap(), 0.9);
        assert_eq!(
            parse_boxed_score("text \\boxed{3} more \\boxed{8}", Scale::TenToUnit).unwrap(),
            0.8
        );
        assert_eq!(parse_boxed_score("\\boxed{12}", Scale::TenToUnit).unwrap(), 1.0);
        assert_eq!(parse_boxed_score("\\boxed{-1}", Scale::Unit).unwrap(), 0.0);
        assert_eq!(
            parse_boxed_score("\\boxed{ 0.4 } then \\boxed{S}", Scale::Unit).unwrap(),
            0.4
        );
        assert_eq!(
            parse_boxed_score("score: 7", Scale::TenToUnit).unwrap_err().code(),
            "NoScoreError"
        );
        assert!(parse_boxed_score("\\boxed{S}", Scale::Unit).is_err());
        assert!(parse_boxed_score("\\boxed{7", Scale::Unit).is_err());
    }

    #[test]
    fn trimmed_mean_examples() {
        assert_eq!(trimmed_mean(&[0.2, 0.4, 0.6, 0.8]).unwrap(), 0.5);
        assert_eq!(trimmed_mean(&[0.5; 4]).unwrap(), 0.5);
        assert_eq!(trimmed_mean(&[0.0, 1.0, 0.3, 0.7]).unwrap(), 0.5);
        assert_eq!(trimmed_mean(&[0.1, 0.2]).unwrap_err().code(), "ArityError");
        assert!(trimmed_mean(&[0.1, 0.2, f64::NAN, 0.3]).is_err());
    }

    #[test]
    fn task_completion_over_verdicts() {
        let verdicts: Vec<JudgeVerdict> = ["\\boxed{2}", "\\boxed{4}", "\\boxed{6}", "\\boxed{8}"]
            .iter()
            .enumerate()
            .map(|(i, r)| JudgeVerdict::parse(format!("j{i}"), *r, Scale::TenToUnit).unwrap())
            .collect();
        assert_eq!(task_completion(&verdicts).unwrap(), 0.5);
        assert_eq!(task_completion(&verdicts[..3]).unwrap_err().code(), "ArityError");
    }

    #[test]
    fn grounding_tables() {
        let all_one: Vec<StepScoreTable> = (0..4).map(|_| BTreeMap::from([((0, 0), 1.0), ((1, 1), 1.0)])).collect();
        assert_eq!(information_grounding(&all_one).unwrap(), 1.0);

        let single: Vec<StepScoreTable> = [0.2, 0.4, 0.6, 0.8]
            .iter()
            .map(|&s| BTreeMap::from([((0, 0), s)]))
            .collect();
        assert_eq!(information_grounding(&single).unwrap(), 0.5);

        // (0,0) trims to 0.5, (1,1) trims to 0.4
        let two: Vec<StepScoreTable> = [(0.2, 0.9), (0.4, 0.1), (0.6, 0.3), (0.8, 0.5)]
            .iter()
            .map(|&(a, b)| BTreeMap::from([((0, 0), a), ((1, 1), b)]))
            .collect();
        assert!((information_grounding(&two).unwrap() - 0.45).abs() < 1e-15);

        let mut ragged = two.clone();
        ragged[2].remove(&(1, 1));
        assert_eq!(information_grounding(&ragged).unwrap_err().code(), "ShapeError");
        assert_eq!(information_grounding(&two[..2]).unwrap_err().code(), "ArityError");
    }

    fn task_row(instance: &str, texts: &[&str]) -> ResponseRow {
        ResponseRow::Task {
            instance: instance.into(),
            responses: texts
                .iter()
                .enumerate()
                .map(|(i, t)| TaskResponse {
                    judge_id: format!("j{i}"),
                    text: Some(t.to_string()),
                    error: None,
                })
                .collect(),
        }
    }

    #[test]
    fn corpus_task_completion_with_failures() {
        let rows = vec![
            task_row("a", &["\\boxed{4}", "\\boxed{4}", "\\boxed{4}", "\\boxed{4}"]),
            task_row("b", &["\\boxed{6}", "\\boxed{6}", "\\boxed{6}", "\\boxed{6}"]),
            task_row("c", &["\\boxed{6}", "no verdict", "\\boxed{6}", "\\boxed{6}"]),
            task_row("d", &["\\boxed{6}", "\\boxed{6}"]),
        ];
        let m = aggregate_responses(&rows, JudgeMode::Task);
        assert!((m.value.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!((m.instances, m.failures), (2, 2));
        assert_eq!(m.per_instance[2].error_code.as_deref(), Some("NoScoreError"));
        assert_eq!(m.per_instance[3].error_code.as_deref(), Some("ArityError"));
    }

    #[test]
    fn response_rows_parse_both_modes() {
        let text = concat!(
            r#"{"instance": "x", "responses": [{"judge_id": "a", "text": "\\boxed{5}"}]}"#,
            "\n\n",
            r#"{"instance": "y", "grounding": [{"judge_id": "a", "steps": [{"gt_step": 0, "pred_step": 0, "text": "\\boxed{1}"}]}]}"#,
        );
        let rows = parse_response_rows(text).unwrap();
        assert!(matches!(rows[0], ResponseRow::Task { .. }));
        assert!(matches!(rows[1], ResponseRow::Grounding { .. }));
        assert!(parse_response_rows("{oops").is_err());
    }

    #[test]
    fn mock_pool_collection() {
        let fixture = r#"{
            "g1": {"i1": "\\boxed{2}", "i2": "\\boxed{9}"},
            "g2": {"i1": "\\boxed{4}", "i2": "\\boxed{9}"},
            "g3": {"i1": "\\boxed{6}"},
            "g4": {"i1": "\\boxed{8}", "i2": "\\boxed{9}"}
        }"#;
        let pool = MockJudge::pool_from_fixture(fixture).unwrap();
        let judges: Vec<&dyn JudgePort> = pool.iter().map(|j| j as &dyn JudgePort).collect();
        let instances = vec![
            JudgeInstance {
                instance: "i1".into(),
                attachments: vec![],
            },
            JudgeInstance {
                instance: "i2".into(),
                attachments: vec![],
            },
        ];
        let rows = collect_task_responses(&instances, &judges, 3).unwrap();
        let m = aggregate_responses(&rows, JudgeMode::Task);
        assert_eq!(m.value, Some(0.5));
        assert_eq!(m.failures, 1);
        assert_eq!(m.per_instance[1].error_code.as_deref(), Some("JudgeError"));
    }

    proptest! {
        #[test]
        fn trimmed_mean_bounds_and_symmetry(a in 0.0f64..=1.0, b in 0.0f64..=1.0, c in 0.0f64..=1.0, d in 0.0f64..=1.0, bump in 0.0f64..0.5) {
            let xs = [a, b, c, d];
            let t = trimmed_mean(&xs).unwrap();
            let mut sorted = xs;
            sorted.sort_by(f64::total_cmp);
            prop_assert!(t >= sorted[1] && t <= sorted[2]);
            for perm in [[3, 2, 1, 0], [1, 0, 3, 2], [2, 3, 0, 1]] {
                let p = perm.map(|i| xs[i]);
                prop_assert_eq!(trimmed_mean(&p).unwrap(), t);
            }
            let mut raised = xs;
            raised[0] += bump;
            prop_assert!(trimmed_mean(&raised).unwrap() >= t);
        }

        #[test]
        fn boxed_round_trip(x in 0.0f64..=1.0) {
            let text = format!("reasoning... \\boxed{{{x}}}");
            prop_assert_eq!(parse_boxed_score(&text, Scale::Unit).unwrap(), x);
        }
    }
}
