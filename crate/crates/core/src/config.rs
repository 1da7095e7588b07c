//! Run configuration: thresholds, encoder, serialization policy, weights and
//! judge endpoints. Loaded from TOML; command-line flags override file values.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::alignment::{AlignmentConfig, DEFAULT_LAMBDA_PEN, DEFAULT_TAU_STRONG, DEFAULT_TAU_WEAK};
use crate::embedding::{CachedEncoder, EncoderSpec, DEFAULT_EXTERNAL_DIM};
use crate::error::{Error, Result};
use crate::judge::JudgeEndpoint;
use crate::metrics::MetricWeights;
use crate::serialize::SerializationPolicy;

/// Environment variable naming a TOML config file.
pub const CONFIG_ENV: &str = "TRAJALIGN_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub tau_weak: f64,
    pub tau_strong: f64,
    pub lambda_pen: f64,
    pub encoder: EncoderSpec,
    /// Vector width expected from exec and http encoders.
    pub encoder_dim: usize,
    pub encoder_timeout_secs: u64,
    /// Separate policy file (TOML or JSON). Its contents replace `policy` on load.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy_path: Option<PathBuf>,
    pub policy: SerializationPolicy,
    pub weights: MetricWeights,
    pub judges: Vec<JudgeEndpoint>,
    /// Upper bound on concurrently scored samples; 0 uses every core.
    pub parallelism: usize,
    pub strict: bool,
    /// Leaderboard label for the evaluated model.
    pub model: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tau_weak: DEFAULT_TAU_WEAK,
            tau_strong: DEFAULT_TAU_STRONG,
            lambda_pen: DEFAULT_LAMBDA_PEN,
            encoder: EncoderSpec::default(),
            encoder_dim: DEFAULT_EXTERNAL_DIM,
            encoder_timeout_secs: 60,
            policy_path: None,
            policy: SerializationPolicy::default(),
            weights: MetricWeights::default(),
            judges: Vec::new(),
            parallelism: 0,
            strict: false,
            model: "model".to_string(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a TOML config file and any policy file it references. A relative
    /// `policy_path` resolves against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| e.in_file(path))?;
        if let Some(p) = cfg.policy_path.take() {
            let resolved = match path.parent() {
                Some(dir) if p.is_relative() => dir.join(&p),
                _ => p,
            };
            cfg.policy = load_policy(&resolved)?;
            cfg.policy_path = Some(resolved);
        }
        Ok(cfg)
    }

    /// Loads `explicit`, else the file named by [`CONFIG_ENV`], else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn alignment(&self) -> AlignmentConfig {
        AlignmentConfig {
            tau_weak: self.tau_weak,
            tau_strong: self.tau_strong,
            lambda_pen: self.lambda_pen,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.alignment().validate()?;
        self.policy.validate()?;
        if self.encoder_dim == 0 {
            return Err(Error::Config("encoder_dim must be positive".into()));
        }
        let mut ids: Vec<&str> = self.judges.iter().map(|j| j.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("judge ids must be unique".into()));
        }
        Ok(())
    }

    pub fn build_encoder(&self) -> Result<CachedEncoder> {
        self.encoder
            .build(self.encoder_dim, Duration::from_secs(self.encoder_timeout_secs))
    }
}

/// Reads a serialization policy from a `.json` file, or TOML otherwise.
pub fn load_policy(path: &Path) -> Result<SerializationPolicy> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let policy: SerializationPolicy = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    }
    .map_err(|e| e.in_file(path))?;
    policy.validate()?;
    Ok(policy)
}
