use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use trajalign::embedding::EncoderSpec;
use trajalign::judge::{
    aggregate_responses, collect_task_responses, parse_response_rows, HttpJudge, JudgeInstance, JudgeMode, JudgePort,
    MockJudge, Template,
};
use trajalign::metrics::{aggregate, JudgeSummary, MetricWeights};
use trajalign::outcome::{classify_call, outcome_distribution, parse_call_log, Registry};
use trajalign::report::{emit, leaderboard_csv, to_json, ErrorRecord, JudgeDocument, OutcomeDocument};
use trajalign::{render_prompt, RunConfig, Scorer};

#[derive(Parser)]
#[command(
    name = "trajalign",
    version,
    about = "Score agent tool-call trajectories against references"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, env = "TRAJALIGN_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    tau_weak: Option<f64>,
    #[arg(long, global = true)]
    tau_strong: Option<f64>,
    #[arg(long, global = true)]
    lambda_pen: Option<f64>,
    /// builtin | builtin:<dim> | exec:<cmd> | http:<url>
    #[arg(long, global = true)]
    encoder: Option<EncoderSpec>,
    /// Eight comma-separated weights in leaderboard column order.
    #[arg(long, global = true)]
    weights: Option<MetricWeights>,
    /// Maximum number of samples scored concurrently (0 = all cores).
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Model label used in the CSV leaderboard.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Fail on unpaired files instead of warning.
    #[arg(long, global = true)]
    strict: bool,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Score one predicted trajectory against its reference.
    Score {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
    },
    /// Score every identically named pair under two directories.
    Batch {
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        ref_dir: PathBuf,
        /// Task-completion judge responses (JSON lines) to fold into the corpus row.
        #[arg(long)]
        task_responses: Option<PathBuf>,
        /// Information-grounding judge responses (JSON lines).
        #[arg(long)]
        grounding_responses: Option<PathBuf>,
    },
    /// Classify replayed tool calls and report the outcome distribution.
    ClassifyCalls {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        registry: PathBuf,
    },
    /// Aggregate four-judge responses into a judged metric.
    JudgeAggregate {
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        mode: JudgeMode,
    },
    /// Send the task-completion prompt to every judge and write response rows.
    JudgeCollect {
        /// JSON list of {"instance", "attachments"} objects.
        #[arg(long)]
        instances: PathBuf,
        /// Scripted offline judges instead of the configured endpoints.
        #[arg(long)]
        mock: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        max_in_flight: usize,
    },
    /// Print a prompt template with its placeholders filled.
    RenderPrompt {
        template: Template,
        /// Placeholder value as name=value; repeatable.
        #[arg(long = "set", value_parser = parse_assignment)]
        set: Vec<(String, String)>,
    },
}

fn parse_assignment(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected name=value, got {s:?}"))
}

fn resolve_config(g: &GlobalArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::resolve(g.config.as_deref())?;
    if let Some(v) = g.tau_weak {
        cfg.tau_weak = v;
    }
    if let Some(v) = g.tau_strong {
        cfg.tau_strong = v;
    }
    if let Some(v) = g.lambda_pen {
        cfg.lambda_pen = v;
    }
    if let Some(v) = &g.encoder {
        cfg.encoder = v.clone();
    }
    if let Some(v) = g.weights {
        cfg.weights = v;
    }
    if let Some(v) = g.parallelism {
        cfg.parallelism = v;
    }
    if let Some(v) = &g.model {
        cfg.model = v.clone();
    }
    cfg.strict |= g.strict;
    cfg.validate()?;
    Ok(cfg)
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_judged(path: &Path, mode: JudgeMode) -> anyhow::Result<trajalign::JudgedMetric> {
    let rows = parse_response_rows(&read(path)?).with_context(|| path.display().to_string())?;
    Ok(aggregate_responses(&rows, mode))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    let out = g.out.as_deref();
    match cli.command {
        Command::Score { pred, reference } => {
            let cfg = resolve_config(g)?;
            let scorer = Scorer::new(cfg)?;
            let doc = scorer.score_files(&pred, &reference)?;
            let text = match g.format {
                Format::Json => to_json(&doc)?,
                Format::Csv => {
                    let corpus = aggregate(vec![doc.report], None, scorer.config().weights)?;
                    leaderboard_csv(&[(&scorer.config().model, &corpus)])?
                }
            };
            emit(&text, out)?;
        }
        Command::Batch {
            pred_dir,
            ref_dir,
            task_responses,
            grounding_responses,
        } => {
            let cfg = resolve_config(g)?;
            let judges = JudgeSummary {
                task_completion: task_responses.map(|p| load_judged(&p, JudgeMode::Task)).transpose()?,
                information_grounding: grounding_responses
                    .map(|p| load_judged(&p, JudgeMode::Grounding))
                    .transpose()?,
            };
            let scorer = Scorer::new(cfg)?;
            let doc = scorer.score_dirs(&pred_dir, &ref_dir, Some(&judges))?;
            let text = match g.format {
                Format::Json => to_json(&doc)?,
                Format::Csv => leaderboard_csv(&[(&doc.config.model, &doc.corpus)])?,
            };
            emit(&text, out)?;
        }
        Command::ClassifyCalls { log, registry } => {
            if g.format == Format::Csv {
                bail!("classify-calls only supports --format json");
            }
            let registry = Registry::from_json_str(&read(&registry)?)?;
            let entries = parse_call_log(&read(&log)?)?;
            let distribution = outcome_distribution(&entries, &registry)?;
            let outcomes = entries
                .iter()
                .map(|e| classify_call(e, &registry).to_string())
                .collect();
            emit(&to_json(&OutcomeDocument { distribution, outcomes })?, out)?;
        }
        Command::JudgeAggregate { responses, mode } => {
            let metric = load_judged(&responses, mode)?;
            emit(&to_json(&JudgeDocument { metric })?, out)?;
        }
        Command::JudgeCollect {
            instances,
            mock,
            max_in_flight,
        } => {
            let instances: Vec<JudgeInstance> =
                serde_json::from_str(&read(&instances)?).context("parsing instances file")?;
            let pool: Vec<Box<dyn JudgePort>> = match mock {
                Some(p) => MockJudge::pool_from_fixture(&read(&p)?)?
                    .into_iter()
                    .map(|j| Box::new(j) as Box<dyn JudgePort>)
                    .collect(),
                None => resolve_config(g)?
                    .judges
                    .into_iter()
                    .map(|e| Box::new(HttpJudge::new(e)) as Box<dyn JudgePort>)
                    .collect(),
            };
            if pool.is_empty() {
                bail!("no judges configured");
            }
            let judges: Vec<&dyn JudgePort> = pool.iter().map(|j| j.as_ref()).collect();
            let rows = collect_task_responses(&instances, &judges, max_in_flight)?;
            let mut text = String::new();
            for row in rows {
                text.push_str(&serde_json::to_string(&row)?);
                text.push('\n');
            }
            emit(&text, out)?;
        }
        Command::RenderPrompt { template, set } => {
            let context: BTreeMap<String, String> = set.into_iter().collect();
            let mut text = render_prompt(template, &context)?;
            text.push('\n');
            emit(&text, out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let record = match err.downcast_ref::<trajalign::Error>() {
                Some(e) => ErrorRecord::from(e),
                None => ErrorRecord {
                    error: "Error".into(),
                    message: format!("{err:#}"),
                },
            };
            eprintln!(
                "{}",
                serde_json::to_string(&record).unwrap_or_else(|_| record.message.clone())
            );
            ExitCode::FAILURE
        }
    }
}
