//! Report documents and the CSV leaderboard.
//!
//! Every document echoes the resolved configuration and the encoder identity.
//! Output is deterministic: maps are ordered and samples are sorted by id.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::judge::JudgedMetric;
use crate::metrics::{CorpusReport, SampleReport, METRIC_NAMES};
use crate::outcome::OutcomeDistribution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDocument {
    pub config: RunConfig,
    pub encoder: String,
    pub report: SampleReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchDocument {
    pub config: RunConfig,
    pub encoder: String,
    /// Relative paths present on only one side, prefixed `pred:` or `ref:`.
    pub unpaired: Vec<String>,
    pub corpus: CorpusReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeDocument {
    pub metric: JudgedMetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDocument {
    pub distribution: OutcomeDistribution,
    pub outcomes: Vec<String>,
}

/// Machine-readable failure record printed by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub error: String,
    pub message: String,
}

impl From<&Error> for ErrorRecord {
    fn from(e: &Error) -> Self {
        Self {
            error: e.code().to_string(),
            message: e.to_string(),
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(doc: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(doc).map_err(|e| Error::Shape(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub const LEADERBOARD_COLUMNS: [&str; 10] = [
    "model",
    "recall",
    "precision",
    "arg_sim",
    "step_coh",
    "ord_cons",
    "merge_pur",
    "task_comp",
    "info_grnd",
    "average_score",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

/// One leaderboard row per model. Absent judge metrics are empty cells.
pub fn leaderboard_csv(rows: &[(&str, &CorpusReport)]) -> Result<String> {
    debug_assert_eq!(&LEADERBOARD_COLUMNS[1..9], &METRIC_NAMES[..]);
    let mut out = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let to_err = |e: csv::Error| Error::Shape(e.to_string());
        w.write_record(LEADERBOARD_COLUMNS).map_err(to_err)?;
        for (model, report) in rows {
            let mut record = vec![model.to_string()];
            record.extend(report.metric_row().iter().map(|v| cell(*v)));
            record.push(cell(Some(report.average_score)));
            w.write_record(&record).map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::Shape(e.to_string()))?;
    }
    String::from_utf8(out).map_err(|e| Error::Shape(e.to_string()))
}

/// Writes `text` to `path`, or stdout when `path` is `None` or `-`.
pub fn emit(text: &str, path: Option<&std::path::Path>) -> Result<()> {
    match path {
        Some(p) if p.as_os_str() != "-" => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        _ => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}
