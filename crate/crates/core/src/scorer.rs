//! High-level entry points: score one pair, or a directory corpus.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use walkdir::WalkDir;

use crate::config::RunConfig;
use crate::embedding::{CachedEncoder, EncoderPort};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, score_sample, JudgeSummary, SampleReport};
use crate::report::{BatchDocument, ScoreDocument};
use crate::trajectory::Trajectory;

/// A validated configuration bound to its encoder.
pub struct Scorer {
    config: RunConfig,
    encoder: CachedEncoder,
}

impl Scorer {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let encoder = config.build_encoder()?;
        Ok(Self { config, encoder })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn encoder(&self) -> &dyn EncoderPort {
        &self.encoder
    }

    pub fn score(&self, sample_id: &str, gt: &Trajectory, pred: &Trajectory) -> Result<SampleReport> {
        score_sample(
            sample_id,
            gt,
            pred,
            &self.config.alignment(),
            &self.encoder,
            &self.config.policy,
        )
    }

    /// Scores a prediction file against a reference file.
    pub fn score_files(&self, pred_path: &Path, ref_path: &Path) -> Result<ScoreDocument> {
        let pred = load_trajectory(pred_path)?;
        let gt = load_trajectory(ref_path)?;
        let id = sample_id_for(pred_path);
        Ok(ScoreDocument {
            config: self.config.clone(),
            encoder: self.encoder.id(),
            report: self.score(&id, &gt, &pred)?,
        })
    }

    /// Scores every pair of identically named `.json` files under the two
    /// directories. Unpaired files are logged and listed in the document, or
    /// rejected when `config.strict` is set.
    pub fn score_dirs(&self, pred_dir: &Path, ref_dir: &Path, judges: Option<&JudgeSummary>) -> Result<BatchDocument> {
        let pairing = pair_files(pred_dir, ref_dir)?;
        for u in &pairing.unpaired {
            log::warn!("unpaired file {u}");
        }
        if self.config.strict && !pairing.unpaired.is_empty() {
            return Err(Error::Unpaired(pairing.unpaired));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.parallelism)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        let results: Vec<Result<SampleReport>> = pool.install(|| {
            pairing
                .pairs
                .par_iter()
                .map(|(id, pred_path, ref_path)| {
                    let pred = load_trajectory(pred_path)?;
                    let gt = load_trajectory(ref_path)?;
                    self.score(id, &gt, &pred)
                })
                .collect()
        });
        let samples = results.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(BatchDocument {
            config: self.config.clone(),
            encoder: self.encoder.id(),
            unpaired: pairing.unpaired,
            corpus: aggregate(samples, judges, self.config.weights)?,
        })
    }
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Trajectory::from_json_str(&text).map_err(|e| e.in_file(path))
}

fn sample_id_for(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Pairing {
    /// `(sample id, prediction path, reference path)` sorted by id.
    pub pairs: Vec<(String, PathBuf, PathBuf)>,
    pub unpaired: Vec<String>,
}

fn json_files(root: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut files = BTreeMap::new();
    for entry in WalkDir::new(root).follow_links(true) {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(path, e.into())
        })?;
        let path = entry.path();
        if !entry.file_type().is_file() || path.extension().is_none_or(|e| e != "json") {
            continue;
        }
        let rel = path.strip_prefix(root).expect("walkdir yields paths under root");
        let key = rel
            .with_extension("")
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        files.insert(key, path.to_path_buf());
    }
    Ok(files)
}

/// Matches files by relative path without the `.json` extension.
pub fn pair_files(pred_dir: &Path, ref_dir: &Path) -> Result<Pairing> {
    let mut preds = json_files(pred_dir)?;
    let refs = json_files(ref_dir)?;
    let mut pairing = Pairing::default();
    for (id, ref_path) in refs {
        match preds.remove(&id) {
            Some(pred_path) => pairing.pairs.push((id, pred_path, ref_path)),
            None => pairing.unpaired.push(format!("ref:{id}.json")),
        }
    }
    pairing
        .unpaired
        .extend(preds.into_keys().map(|id| format!("pred:{id}.json")));
    pairing.unpaired.sort();
    Ok(pairing)
}
