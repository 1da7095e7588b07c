//! Per-call replay outcomes.
//!
//! Rules apply in order and the first match wins:
//! unparsable request, unknown tool, invalid arguments (status 400 or an error
//! pattern), resource not found (status 404), success.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const DEFAULT_INVALID_ARGUMENT_PATTERN: &str = "invalid argument";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CallLogEntry {
    raw_request: String,
    parsed_name: Option<String>,
    parsed_args: Option<Value>,
    transport_status: Option<u16>,
    tool_error_text: Option<String>,
}

impl CallLogEntry {
    /// Parses `raw_request` as `{"name": <string>, "arguments": <object>}`.
    /// The parsed fields are set only when both are present and well typed.
    pub fn new(raw_request: impl Into<String>, transport_status: Option<u16>, tool_error_text: Option<String>) -> Self {
        let raw_request = raw_request.into();
        let parsed = serde_json::from_str::<Value>(&raw_request).ok().and_then(|v| {
            let name = v.get("name")?.as_str()?.to_string();
            let args = v.get("arguments")?;
            args.is_object().then(|| (name, args.clone()))
        });
        let (parsed_name, parsed_args) = match parsed {
            Some((n, a)) => (Some(n), Some(a)),
            None => (None, None),
        };
        Self {
            raw_request,
            parsed_name,
            parsed_args,
            transport_status,
            tool_error_text,
        }
    }

    pub fn raw_request(&self) -> &str {
        &self.raw_request
    }

    pub fn parsed_name(&self) -> Option<&str> {
        self.parsed_name.as_deref()
    }

    pub fn parsed_args(&self) -> Option<&Value> {
        self.parsed_args.as_ref()
    }

    pub fn transport_status(&self) -> Option<u16> {
        self.transport_status
    }

    pub fn tool_error_text(&self) -> Option<&str> {
        self.tool_error_text.as_deref()
    }
}

/// Log line as stored on disk. `raw_request` may be the request text or the
/// request object itself.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LogLine {
    raw_request: Value,
    #[serde(default)]
    transport_status: Option<u16>,
    #[serde(default)]
    tool_error_text: Option<String>,
    // Accepted for compatibility; always re-derived from `raw_request`.
    #[serde(default)]
    #[allow(dead_code)]
    parsed_name: Option<Value>,
    #[serde(default)]
    #[allow(dead_code)]
    parsed_args: Option<Value>,
}

/// Reads a JSON-lines call log. Blank lines are skipped.
pub fn parse_call_log(text: &str) -> Result<Vec<CallLogEntry>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let raw: LogLine = serde_json::from_str(line).map_err(|e| Error::Schema {
                path: format!("line {}", n + 1),
                message: e.to_string(),
            })?;
            let request = match raw.raw_request {
                Value::String(s) => s,
                other => other.to_string(),
            };
            Ok(CallLogEntry::new(request, raw.transport_status, raw.tool_error_text))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Outcome {
    IllegalFormat,
    UnknownTool,
    InvalidArguments,
    SuccessResourceNotFound,
    Success,
}

impl Outcome {
    pub const ALL: [Outcome; 5] = [
        Outcome::IllegalFormat,
        Outcome::UnknownTool,
        Outcome::InvalidArguments,
        Outcome::SuccessResourceNotFound,
        Outcome::Success,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::IllegalFormat => "IllegalFormat",
            Outcome::UnknownTool => "UnknownTool",
            Outcome::InvalidArguments => "InvalidArguments",
            Outcome::SuccessResourceNotFound => "SuccessResourceNotFound",
            Outcome::Success => "Success",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum RegistryTool {
    Name(String),
    Detailed {
        name: String,
        #[serde(default)]
        invalid_argument_patterns: Vec<String>,
    },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RegistryFile {
    List(Vec<RegistryTool>),
    Object {
        tools: Vec<RegistryTool>,
        invalid_argument_patterns: Vec<String>,
    },
}

/// Known tools plus the error-text patterns that mark invalid arguments.
/// Patterns are case-insensitive substrings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    tools: BTreeSet<String>,
    global_patterns: Vec<String>,
    tool_patterns: BTreeMap<String, Vec<String>>,
}

impl Registry {
    pub fn new<I, S>(tools: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tools: BTreeSet<String> = tools.into_iter().map(Into::into).collect();
        if tools.is_empty() {
            return Err(Error::Config("tool registry is empty".into()));
        }
        Ok(Self {
            tools,
            global_patterns: vec![DEFAULT_INVALID_ARGUMENT_PATTERN.to_string()],
            tool_patterns: BTreeMap::new(),
        })
    }

    /// Accepts a JSON list whose items are tool names or
    /// `{"name", "invalid_argument_patterns"}` objects, or an object
    /// `{"tools": [...], "invalid_argument_patterns": [...]}` that replaces the
    /// default pattern.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: RegistryFile = serde_json::from_str(text).map_err(|e| Error::Schema {
            path: "registry".into(),
            message: e.to_string(),
        })?;
        let (tools, global) = match file {
            RegistryFile::List(tools) => (tools, None),
            RegistryFile::Object {
                tools,
                invalid_argument_patterns,
            } => (tools, Some(invalid_argument_patterns)),
        };
        let mut names = Vec::with_capacity(tools.len());
        let mut per_tool = BTreeMap::new();
        for t in tools {
            match t {
                RegistryTool::Name(n) => names.push(n),
                RegistryTool::Detailed {
                    name,
                    invalid_argument_patterns,
                } => {
                    if !invalid_argument_patterns.is_empty() {
                        per_tool.insert(name.clone(), lowercase_all(invalid_argument_patterns));
                    }
                    names.push(name);
                }
            }
        }
        let mut registry = Registry::new(names)?;
        if let Some(g) = global {
            registry.global_patterns = lowercase_all(g);
        }
        registry.tool_patterns = per_tool;
        Ok(registry)
    }

    pub fn contains(&self, tool: &str) -> bool {
        self.tools.contains(tool)
    }

    pub fn tools(&self) -> impl Iterator<Item = &str> {
        self.tools.iter().map(String::as_str)
    }

    fn marks_invalid_arguments(&self, tool: &str, error_text: &str) -> bool {
        let text = error_text.to_lowercase();
        self.global_patterns
            .iter()
            .chain(self.tool_patterns.get(tool).into_iter().flatten())
            .any(|p| text.contains(p.as_str()))
    }
}

fn lowercase_all(patterns: Vec<String>) -> Vec<String> {
    patterns
        .into_iter()
        .filter(|p| !p.is_empty())
        .map(|p| p.to_lowercase())
        .collect()
}

pub fn classify_call(entry: &CallLogEntry, registry: &Registry) -> Outcome {
    let (Some(name), Some(_)) = (entry.parsed_name(), entry.parsed_args()) else {
        return Outcome::IllegalFormat;
    };
    if !registry.contains(name) {
        return Outcome::UnknownTool;
    }
    let status = entry.transport_status();
    if status == Some(400)
        || entry
            .tool_error_text()
            .is_some_and(|t| registry.marks_invalid_arguments(name, t))
    {
        return Outcome::InvalidArguments;
    }
    if status == Some(404) {
        return Outcome::SuccessResourceNotFound;
    }
    Outcome::Success
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    pub total: usize,
    pub counts: BTreeMap<Outcome, usize>,
    pub fractions: BTreeMap<Outcome, f64>,
}

impl OutcomeDistribution {
    pub fn fraction(&self, outcome: Outcome) -> f64 {
        self.fractions[&outcome]
    }
}

pub fn outcome_distribution(entries: &[CallLogEntry], registry: &Registry) -> Result<OutcomeDistribution> {
    if entries.is_empty() {
        return Err(Error::EmptyLog);
    }
    let outcomes: Vec<Outcome> = entries.par_iter().map(|e| classify_call(e, registry)).collect();
    let mut counts: BTreeMap<Outcome, usize> = Outcome::ALL.iter().map(|&o| (o, 0)).collect();
    for o in outcomes {
        *counts.get_mut(&o).expect("all outcomes seeded") += 1;
    }
    let total = entries.len();
    let fractions = counts.iter().map(|(&o, &c)| (o, c as f64 / total as f64)).collect();
    Ok(OutcomeDistribution {
        total,
        counts,
        fractions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> Registry {
        Registry::new(["weather/forecast", "search/web"]).unwrap()
    }

    fn call(name: &str) -> String {
        format!(r#"{{"name": "{name}", "arguments": {{"q": 1}}}}"#)
    }

    #[test]
    fn parse_fields() {
        let e = CallLogEntry::new(call("search/web"), None, None);
        assert_eq!(e.parsed_name(), Some("search/web"));
        assert!(e.parsed_args().is_some());
        let e = CallLogEntry::new(r#"{"name": "search/web"}"#, None, None);
        assert_eq!((e.parsed_name(), e.parsed_args()), (None, None));
        let e = CallLogEntry::new(r#"{"name": 3, "arguments": {}}"#, None, None);
        assert_eq!(e.parsed_name(), None);
        let e = CallLogEntry::new(r#"{"name": "search/web", "arguments": "q=1"}"#, None, None);
        assert_eq!(e.parsed_args(), None);
    }

    #[test]
    fn single_rules() {
        let r = registry();
        let missing_args = CallLogEntry::new(r#"{"name": "search/web"}"#, None, None);
        assert_eq!(classify_call(&missing_args, &r), Outcome::IllegalFormat);
        let unknown = CallLogEntry::new(call("ocr/perform"), None, Some("Unknown tool: ocr/perform".into()));
        assert_eq!(classify_call(&unknown, &r), Outcome::UnknownTool);
        let bad = CallLogEntry::new(call("search/web"), None, Some("[Tool error] Invalid arguments".into()));
        assert_eq!(classify_call(&bad, &r), Outcome::InvalidArguments);
        let status_400 = CallLogEntry::new(call("search/web"), Some(400), None);
        assert_eq!(classify_call(&status_400, &r), Outcome::InvalidArguments);
        let not_found = CallLogEntry::new(call("search/web"), Some(404), None);
        assert_eq!(classify_call(&not_found, &r), Outcome::SuccessResourceNotFound);
        let ok = CallLogEntry::new(call("search/web"), Some(200), Some("other failure".into()));
        assert_eq!(classify_call(&ok, &r), Outcome::Success);
    }

    #[test]
    fn precedence_collisions() {
        let r = registry();
        let cases = [
            // unparsable + unknown tool
            (
                CallLogEntry::new(r#"{"name": "ocr/perform"}"#, None, None),
                Outcome::IllegalFormat,
            ),
            // unparsable + invalid arguments
            (
                CallLogEntry::new("not json", Some(400), Some("invalid argument".into())),
                Outcome::IllegalFormat,
            ),
            // unparsable + 404
            (CallLogEntry::new("not json", Some(404), None), Outcome::IllegalFormat),
            // unknown tool + invalid arguments
            (
                CallLogEntry::new(call("ocr/perform"), Some(400), Some("Invalid Argument".into())),
                Outcome::UnknownTool,
            ),
            // unknown tool + 404
            (
                CallLogEntry::new(call("ocr/perform"), Some(404), None),
                Outcome::UnknownTool,
            ),
            // invalid arguments (by text) + 404
            (
                CallLogEntry::new(call("search/web"), Some(404), Some("INVALID ARGUMENTS".into())),
                Outcome::InvalidArguments,
            ),
        ];
        for (entry, expected) in cases {
            assert_eq!(classify_call(&entry, &r), expected, "{}", entry.raw_request());
        }
    }

    #[test]
    fn registry_file_forms() {
        let r = Registry::from_json_str(
            r#"["search/web", {"name": "weather/forecast", "invalid_argument_patterns": ["Unknown City"]}]"#,
        )
        .unwrap();
        let city = CallLogEntry::new(call("weather/forecast"), None, Some("unknown city: x".into()));
        assert_eq!(classify_call(&city, &r), Outcome::InvalidArguments);
        let other = CallLogEntry::new(call("search/web"), None, Some("unknown city: x".into()));
        assert_eq!(classify_call(&other, &r), Outcome::Success);

        let r = Registry::from_json_str(r#"{"tools": ["search/web"], "invalid_argument_patterns": ["bad input"]}"#)
            .unwrap();
        let default_text = CallLogEntry::new(call("search/web"), None, Some("invalid argument".into()));
        assert_eq!(classify_call(&default_text, &r), Outcome::Success);
        let custom = CallLogEntry::new(call("search/web"), None, Some("Bad Input here".into()));
        assert_eq!(classify_call(&custom, &r), Outcome::InvalidArguments);

        assert_eq!(Registry::from_json_str("[]").unwrap_err().code(), "ConfigError");
        assert_eq!(Registry::from_json_str("{").unwrap_err().code(), "SchemaError");
    }

    #[test]
    fn distributions() {
        let r = registry();
        let all_ok: Vec<_> = (0..3)
            .map(|_| CallLogEntry::new(call("search/web"), None, None))
            .collect();
        let d = outcome_distribution(&all_ok, &r).unwrap();
        assert_eq!(d.fraction(Outcome::Success), 1.0);

        let mixed = vec![
            CallLogEntry::new("{", None, None),
            CallLogEntry::new("{", None, None),
            CallLogEntry::new(call("search/web"), None, None),
            CallLogEntry::new(call("search/web"), None, None),
        ];
        let d = outcome_distribution(&mixed, &r).unwrap();
        let got: Vec<f64> = Outcome::ALL.iter().map(|&o| d.fraction(o)).collect();
        assert_eq!(got, vec![0.5, 0.0, 0.0, 0.0, 0.5]);
        assert_eq!(outcome_distribution(&[], &r).unwrap_err().code(), "EmptyLogError");
    }

    #[test]
    fn log_lines() {
        let text = concat!(
            r#"{"raw_request": "{\"name\": \"search/web\", \"arguments\": {}}", "transport_status": 404}"#,
            "\n",
            r#"{"raw_request": {"name": "search/web", "arguments": {"q": "x"}}}"#,
            "\n\n",
        );
        let entries = parse_call_log(text).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].transport_status(), Some(404));
        assert_eq!(entries[1].parsed_name(), Some("search/web"));
        assert!(parse_call_log(r#"{"transport_status": 200}"#).is_err());
    }
}
