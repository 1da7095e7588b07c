//! Alignment-based scoring of agent tool-call trajectories.
//!
//! A predicted trajectory is compared with a reference by serializing every
//! call to a canonical signature, embedding the signatures, and solving a
//! one-to-one assignment per tool. The match set feeds recall, precision,
//! argument similarity and three step-structure metrics. Judge scores and
//! replay outcome tallies are handled by [`judge`] and [`outcome`].
//!
//! ```
//! use trajalign::{RunConfig, Scorer, Trajectory};
//!
//! let doc = r#"{"steps": [{"index": 0, "calls": [
//!     {"tool": "weather/forecast", "arguments": {"city": "Paris"}}
//! ]}]}"#;
//! let gt = Trajectory::from_json_str(doc).unwrap();
//! let scorer = Scorer::new(RunConfig::default()).unwrap();
//! let report = scorer.score("demo", &gt, &gt).unwrap();
//! assert_eq!(report.recall, 1.0);
//! assert_eq!(report.arg_sim, Some(1.0));
//! ```

pub mod alignment;
pub mod config;
pub mod embedding;
pub mod error;
pub mod judge;
pub mod metrics;
pub mod outcome;
pub mod report;
pub mod scorer;
pub mod serialize;
pub mod trajectory;

pub use alignment::{align, hungarian, AlignmentConfig, Assignment, Match, MatchSet};
pub use config::RunConfig;
pub use embedding::{cosine, BuiltinEncoder, EncoderPort, EncoderSpec, SimilarityMatrix, Vector};
pub use error::{Error, Result};
pub use judge::{parse_boxed_score, render_prompt, trimmed_mean, JudgedMetric, Scale, Template};
pub use metrics::{aggregate, score_sample, CorpusReport, MetricWeights, SampleReport};
pub use outcome::{classify_call, outcome_distribution, CallLogEntry, Outcome, Registry};
pub use scorer::Scorer;
pub use serialize::{serialize_call, SerializationPolicy};
pub use trajectory::{ToolCall, Trajectory};
