//! Detection, argument and structure metrics over a match set, plus corpus
//! aggregation.
//!
//! Structural metrics work on the step pair `(gt_step, pred_step)` of each
//! match. Degenerate cases follow fixed conventions:
//!
//! | situation                        | value |
//! |----------------------------------|-------|
//! | no match clears `tau_strong`     | ArgSim undefined (0 in aggregates, flagged) |
//! | zero total step weight           | StepCoh = 0 |
//! | `G_act <= 1` or zero total mass  | MergePur = 1 |
//! | no comparable pair               | OrdCons = 1 |
//! | empty match set (sample level)   | StepCoh = MergePur = OrdCons = 0 |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alignment::{align, AlignmentConfig, MatchSet};
use crate::embedding::{similarity_matrix, EncoderPort};
use crate::error::{Error, Result};
use crate::judge::JudgedMetric;
use crate::serialize::SerializationPolicy;
use crate::trajectory::Trajectory;

/// A match reduced to the step indices of its two calls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMatch {
    pub gt_step: usize,
    pub pred_step: usize,
    pub similarity: f64,
}

pub fn step_pairs(matches: &MatchSet, gt: &Trajectory, pred: &Trajectory) -> Vec<StepMatch> {
    let gt_calls = gt.calls();
    let pred_calls = pred.calls();
    matches
        .iter()
        .map(|m| StepMatch {
            gt_step: gt_calls[m.gt_index].step_index(),
            pred_step: pred_calls[m.pred_index].step_index(),
            similarity: m.similarity,
        })
        .collect()
}

/// Micro-averaged recall and precision over samples.
pub fn recall_precision(samples: &[SampleReport]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let matched: usize = samples.iter().map(|s| s.n_matched).sum();
    let n_gt: usize = samples.iter().map(|s| s.n_gt).sum();
    let n_pred: usize = samples.iter().map(|s| s.n_pred).sum();
    if n_gt == 0 {
        return Err(Error::EmptyCorpus);
    }
    let precision = if n_pred == 0 {
        0.0
    } else {
        matched as f64 / n_pred as f64
    };
    Ok((matched as f64 / n_gt as f64, precision))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ArgSimilarity {
    pub strong_matches: usize,
    pub strong_sum: f64,
}

impl ArgSimilarity {
    pub fn from_matches(matches: &MatchSet, tau_strong: f64) -> Self {
        matches
            .iter()
            .filter(|m| m.similarity >= tau_strong)
            .fold(Self::default(), |acc, m| Self {
                strong_matches: acc.strong_matches + 1,
                strong_sum: acc.strong_sum + m.similarity,
            })
    }

    /// Mean strong similarity, `None` when no match clears the threshold.
    pub fn value(&self) -> Option<f64> {
        (self.strong_matches > 0).then(|| self.strong_sum / self.strong_matches as f64)
    }
}

pub fn arg_similarity(matches: &MatchSet, tau_strong: f64) -> Option<f64> {
    ArgSimilarity::from_matches(matches, tau_strong).value()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTargets {
    pub gt_step: usize,
    /// Distinct predicted steps touched by this step's matches.
    pub pred_steps: Vec<usize>,
    pub weight: usize,
    pub coherence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCoherence {
    pub value: f64,
    pub per_step: Vec<StepTargets>,
}

pub fn step_coherence_from_pairs(pairs: &[StepMatch]) -> StepCoherence {
    let mut touched: BTreeMap<usize, (BTreeSet<usize>, usize)> = BTreeMap::new();
    for p in pairs {
        let e = touched.entry(p.gt_step).or_default();
        e.0.insert(p.pred_step);
        e.1 += 1;
    }
    let per_step: Vec<StepTargets> = touched
        .into_iter()
        .map(|(gt_step, (steps, weight))| StepTargets {
            gt_step,
            coherence: if steps.len() <= 1 {
                1.0
            } else {
                1.0 / steps.len() as f64
            },
            pred_steps: steps.into_iter().collect(),
            weight,
        })
        .collect();
    let total: usize = per_step.iter().map(|s| s.weight).sum();
    let value = if total == 0 {
        0.0
    } else {
        per_step.iter().map(|s| s.weight as f64 * s.coherence).sum::<f64>() / total as f64
    };
    StepCoherence { value, per_step }
}

pub fn step_coherence(matches: &MatchSet, gt: &Trajectory, pred: &Trajectory) -> f64 {
    step_coherence_from_pairs(&step_pairs(matches, gt, pred)).value
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergePurity {
    pub value: f64,
    /// Conditional entropy of ground-truth step given predicted step (nats).
    pub entropy: f64,
    pub active_gt_steps: usize,
    /// Similarity mass between ground-truth step (row) and predicted step (column).
    pub weights: Vec<Vec<f64>>,
}

/// Normalized purity `1 - H(G|P) / ln G_act` of a nonnegative weight table.
pub fn merge_purity_from_weights(weights: Vec<Vec<f64>>) -> MergePurity {
    let n_pred = weights.iter().map(Vec::len).max().unwrap_or(0);
    let col = |b: usize| -> f64 { weights.iter().map(|r| r.get(b).copied().unwrap_or(0.0)).sum() };
    let col_sums: Vec<f64> = (0..n_pred).map(col).collect();
    let total: f64 = col_sums.iter().sum();
    let active = weights.iter().filter(|r| r.iter().sum::<f64>() > 0.0).count();

    if active <= 1 || total <= 0.0 {
        return MergePurity {
            value: 1.0,
            entropy: 0.0,
            active_gt_steps: active,
            weights,
        };
    }

    let mut entropy = 0.0;
    for (b, &sb) in col_sums.iter().enumerate() {
        if sb <= 0.0 {
            continue;
        }
        let mut h_b = 0.0;
        for row in &weights {
            let w = row.get(b).copied().unwrap_or(0.0);
            if w > 0.0 {
                let q = w / sb;
                h_b -= q * q.ln();
            }
        }
        entropy += (sb / total) * h_b;
    }
    let max_entropy = (active as f64).ln();
    assert!(
        entropy >= -1e-12 && entropy <= max_entropy + 1e-12,
        "conditional entropy {entropy} outside [0, ln {active}]"
    );
    // Rounding can leave H a few ulps outside its range.
    let entropy = entropy.clamp(0.0, max_entropy);
    MergePurity {
        value: (1.0 - entropy / max_entropy).clamp(0.0, 1.0),
        entropy,
        active_gt_steps: active,
        weights,
    }
}

pub fn merge_weights(pairs: &[StepMatch], n_gt_steps: usize, n_pred_steps: usize) -> Vec<Vec<f64>> {
    let mut w = vec![vec![0.0; n_pred_steps]; n_gt_steps];
    for p in pairs {
        w[p.gt_step][p.pred_step] += p.similarity;
    }
    w
}

pub fn merge_purity(matches: &MatchSet, gt: &Trajectory, pred: &Trajectory) -> f64 {
    let pairs = step_pairs(matches, gt, pred);
    merge_purity_from_weights(merge_weights(&pairs, gt.num_steps(), pred.num_steps())).value
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderConsistency {
    pub value: f64,
    /// Pairs of matches that differ in both ground-truth and predicted step.
    pub comparable_pairs: u64,
    pub inversions: u64,
}

fn choose2(k: u64) -> u64 {
    k * k.saturating_sub(1) / 2
}

fn tie_count<K>(counts: BTreeMap<K, u64>) -> u64 {
    counts.into_values().map(choose2).sum()
}

/// Inversion rate between ground-truth and predicted step orders, counted in
/// O(n log n): sort by (gt, pred) and count strict inversions of the predicted
/// sequence with a merge sort.
pub fn order_consistency_from_pairs(pairs: &[StepMatch]) -> OrderConsistency {
    let n = pairs.len() as u64;
    let mut keyed: Vec<(usize, usize)> = pairs.iter().map(|p| (p.gt_step, p.pred_step)).collect();
    keyed.sort_unstable();

    let mut by_gt = BTreeMap::new();
    let mut by_pred = BTreeMap::new();
    let mut by_both = BTreeMap::new();
    for &(a, b) in &keyed {
        *by_gt.entry(a).or_insert(0u64) += 1;
        *by_pred.entry(b).or_insert(0u64) += 1;
        *by_both.entry((a, b)).or_insert(0u64) += 1;
    }
    let comparable = choose2(n) + tie_count(by_both) - tie_count(by_gt) - tie_count(by_pred);

    let mut seq: Vec<usize> = keyed.into_iter().map(|(_, b)| b).collect();
    let inversions = count_inversions(&mut seq);

    let value = if comparable == 0 {
        1.0
    } else {
        1.0 - inversions as f64 / comparable as f64
    };
    OrderConsistency {
        value,
        comparable_pairs: comparable,
        inversions,
    }
}

/// Strict inversions (`i < j`, `x[i] > x[j]`); sorts `xs` as a side effect.
fn count_inversions(xs: &mut [usize]) -> u64 {
    let n = xs.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = count_inversions(&mut xs[..mid]) + count_inversions(&mut xs[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if xs[i] <= xs[j] {
            merged.push(xs[i]);
            i += 1;
        } else {
            merged.push(xs[j]);
            count += (mid - i) as u64;
            j += 1;
        }
    }
    merged.extend_from_slice(&xs[i..mid]);
    merged.extend_from_slice(&xs[j..]);
    xs.copy_from_slice(&merged);
    count
}

pub fn order_consistency(matches: &MatchSet, gt: &Trajectory, pred: &Trajectory) -> f64 {
    order_consistency_from_pairs(&step_pairs(matches, gt, pred)).value
}

/// Weights per-sample metrics by recall and reference size:
/// `sum(N_gt * r * F) / sum(N_gt)`.
pub fn recall_covered(per_sample: &[(f64, f64, usize)]) -> Result<f64> {
    let total: usize = per_sample.iter().map(|s| s.2).sum();
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    let num: f64 = per_sample.iter().map(|&(f, r, n)| n as f64 * r * f).sum();
    Ok(num / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchDetail {
    pub gt_index: usize,
    pub pred_index: usize,
    pub gt_step: usize,
    pub pred_step: usize,
    pub tool: String,
    pub similarity: f64,
    pub strong: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub matches: Vec<MatchDetail>,
    pub arg_sim_defined: bool,
    pub strong_matches: usize,
    pub strong_similarity_sum: f64,
    pub step_targets: Vec<StepTargets>,
    pub merge_weights: Vec<Vec<f64>>,
    pub merge_entropy: f64,
    pub active_gt_steps: usize,
    pub order_comparable_pairs: u64,
    pub order_inversions: u64,
    pub zero_norm_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub sample_id: String,
    pub n_gt: usize,
    pub n_pred: usize,
    pub n_matched: usize,
    pub recall: f64,
    pub precision: f64,
    /// `None` when no match clears `tau_strong`.
    pub arg_sim: Option<f64>,
    pub step_coh: f64,
    pub merge_pur: f64,
    pub ord_cons: f64,
    pub diagnostics: Diagnostics,
}

/// Full per-sample pipeline: serialize, embed, align, measure.
pub fn score_sample(
    sample_id: &str,
    gt: &Trajectory,
    pred: &Trajectory,
    cfg: &AlignmentConfig,
    encoder: &dyn EncoderPort,
    policy: &SerializationPolicy,
) -> Result<SampleReport> {
    score_sample_inner(gt, pred, cfg, encoder, policy, sample_id).map_err(|e| e.in_sample(sample_id))
}

fn score_sample_inner(
    gt: &Trajectory,
    pred: &Trajectory,
    cfg: &AlignmentConfig,
    encoder: &dyn EncoderPort,
    policy: &SerializationPolicy,
    sample_id: &str,
) -> Result<SampleReport> {
    cfg.validate()?;
    policy.validate()?;
    let gt_calls = gt.calls();
    let pred_calls = pred.calls();
    if gt_calls.is_empty() {
        return Err(Error::EmptyReference);
    }
    let sim = similarity_matrix(&gt_calls, &pred_calls, encoder, policy)?;
    let matches = align(&gt_calls, &pred_calls, &sim, cfg)?;
    let pairs = step_pairs(&matches, gt, pred);

    let arg = ArgSimilarity::from_matches(&matches, cfg.tau_strong);
    let coherence = step_coherence_from_pairs(&pairs);
    let purity = merge_purity_from_weights(merge_weights(&pairs, gt.num_steps(), pred.num_steps()));
    let order = order_consistency_from_pairs(&pairs);

    let n_gt = gt_calls.len();
    let n_pred = pred_calls.len();
    let n_matched = matches.len();
    let empty = matches.is_empty();
    let details = matches
        .iter()
        .zip(&pairs)
        .map(|(m, p)| MatchDetail {
            gt_index: m.gt_index,
            pred_index: m.pred_index,
            gt_step: p.gt_step,
            pred_step: p.pred_step,
            tool: gt_calls[m.gt_index].tool().to_string(),
            similarity: m.similarity,
            strong: m.similarity >= cfg.tau_strong,
        })
        .collect();

    Ok(SampleReport {
        sample_id: sample_id.to_string(),
        n_gt,
        n_pred,
        n_matched,
        recall: n_matched as f64 / n_gt as f64,
        precision: if n_pred == 0 {
            0.0
        } else {
            n_matched as f64 / n_pred as f64
        },
        arg_sim: arg.value(),
        step_coh: if empty { 0.0 } else { coherence.value },
        merge_pur: if empty { 0.0 } else { purity.value },
        ord_cons: if empty { 0.0 } else { order.value },
        diagnostics: Diagnostics {
            matches: details,
            arg_sim_defined: arg.value().is_some(),
            strong_matches: arg.strong_matches,
            strong_similarity_sum: arg.strong_sum,
            step_targets: coherence.per_step,
            merge_weights: purity.weights,
            merge_entropy: purity.entropy,
            active_gt_steps: purity.active_gt_steps,
            order_comparable_pairs: order.comparable_pairs,
            order_inversions: order.inversions,
            zero_norm_pairs: sim.zero_norm_pairs(),
        },
    })
}

/// Column order of the leaderboard and of [`MetricWeights`].
pub const METRIC_NAMES: [&str; 8] = [
    "recall",
    "precision",
    "arg_sim",
    "step_coh",
    "ord_cons",
    "merge_pur",
    "task_comp",
    "info_grnd",
];

/// Nonnegative weights over the eight metrics in [`METRIC_NAMES`] order, summing to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MetricWeights([f64; 8]);

impl MetricWeights {
    pub fn new(w: [f64; 8]) -> Result<Self> {
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config("metric weights must be finite and nonnegative".into()));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("metric weights sum to {sum}, expected 1")));
        }
        Ok(Self(w))
    }

    pub fn as_array(&self) -> [f64; 8] {
        self.0
    }
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self([0.125; 8])
    }
}

impl TryFrom<Vec<f64>> for MetricWeights {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        let arr: [f64; 8] = v
            .try_into()
            .map_err(|v: Vec<f64>| Error::Config(format!("expected 8 metric weights, got {}", v.len())))?;
        Self::new(arr)
    }
}

impl From<MetricWeights> for Vec<f64> {
    fn from(w: MetricWeights) -> Vec<f64> {
        w.0.to_vec()
    }
}

impl FromStr for MetricWeights {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let values = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("invalid weight {p:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        values.try_into()
    }
}

impl fmt::Display for MetricWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|w| w.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// Judge-based corpus metrics supplied from outside the alignment pipeline.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JudgeSummary {
    pub task_completion: Option<JudgedMetric>,
    pub information_grounding: Option<JudgedMetric>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub n_samples: usize,
    pub recall: f64,
    pub precision: f64,
    pub arg_sim: f64,
    pub arg_sim_defined: bool,
    pub step_coh: f64,
    pub ord_cons: f64,
    pub merge_pur: f64,
    pub task_comp: Option<f64>,
    pub info_grnd: Option<f64>,
    pub judge_failures: usize,
    pub average_score: f64,
    pub weights: MetricWeights,
    pub samples: Vec<SampleReport>,
}

impl CorpusReport {
    /// Metric values in [`METRIC_NAMES`] order; judge metrics may be absent.
    pub fn metric_row(&self) -> [Option<f64>; 8] {
        [
            Some(self.recall),
            Some(self.precision),
            Some(self.arg_sim),
            Some(self.step_coh),
            Some(self.ord_cons),
            Some(self.merge_pur),
            self.task_comp,
            self.info_grnd,
        ]
    }
}

/// Weighted mean over the metrics that are present, renormalizing the weights
/// of absent ones away. Returns 0 when every present metric has weight 0.
pub fn weighted_average(values: &[Option<f64>; 8], weights: &MetricWeights) -> f64 {
    let (num, den) = values
        .iter()
        .zip(weights.0)
        .filter_map(|(v, w)| v.map(|v| (v * w, w)))
        .fold((0.0, 0.0), |(n, d), (x, w)| (n + x, d + w));
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Folds sample reports (sorted by sample id) and optional judge metrics into a
/// corpus row.
pub fn aggregate(
    mut samples: Vec<SampleReport>,
    judges: Option<&JudgeSummary>,
    weights: MetricWeights,
) -> Result<CorpusReport> {
    if samples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    samples.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let (recall, precision) = recall_precision(&samples)?;

    let strong: usize = samples.iter().map(|s| s.diagnostics.strong_matches).sum();
    let strong_sum: f64 = samples.iter().map(|s| s.diagnostics.strong_similarity_sum).sum();
    let arg_sim_defined = strong > 0;
    let arg_sim = if arg_sim_defined {
        strong_sum / strong as f64
    } else {
        0.0
    };

    let covered = |f: fn(&SampleReport) -> f64| {
        let rows: Vec<(f64, f64, usize)> = samples.iter().map(|s| (f(s), s.recall, s.n_gt)).collect();
        recall_covered(&rows)
    };
    let step_coh = covered(|s| s.step_coh)?;
    let ord_cons = covered(|s| s.ord_cons)?;
    let merge_pur = covered(|s| s.merge_pur)?;

    let task = judges.and_then(|j| j.task_completion.as_ref());
    let grounding = judges.and_then(|j| j.information_grounding.as_ref());
    let task_comp = task.and_then(|m| m.value);
    let info_grnd = grounding.and_then(|m| m.value);
    let judge_failures = task.map_or(0, |m| m.failures) + grounding.map_or(0, |m| m.failures);

    let mut report = CorpusReport {
        n_samples: samples.len(),
        recall,
        precision,
        arg_sim,
        arg_sim_defined,
        step_coh,
        ord_cons,
        merge_pur,
        task_comp,
        info_grnd,
        judge_failures,
        average_score: 0.0,
        weights,
        samples,
    };
    report.average_score = weighted_average(&report.metric_row(), &weights);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sm(gt_step: usize, pred_step: usize, similarity: f64) -> StepMatch {
        StepMatch {
            gt_step,
            pred_step,
            similarity,
        }
    }

    fn bare(n_gt: usize, n_pred: usize, n_matched: usize) -> SampleReport {
        SampleReport {
            sample_id: format!("s{n_gt}-{n_pred}-{n_matched}"),
            n_gt,
            n_pred,
            n_matched,
            recall: n_matched as f64 / n_gt as f64,
            precision: 0.0,
            arg_sim: None,
            step_coh: 1.0,
            merge_pur: 1.0,
            ord_cons: 1.0,
            diagnostics: Diagnostics {
                matches: vec![],
                arg_sim_defined: false,
                strong_matches: 0,
                strong_similarity_sum: 0.0,
                step_targets: vec![],
                merge_weights: vec![],
                merge_entropy: 0.0,
                active_gt_steps: 0,
                order_comparable_pairs: 0,
                order_inversions: 0,
                zero_norm_pairs: 0,
            },
        }
    }

    #[test]
    fn recall_precision_examples() {
        assert_eq!(recall_precision(&[bare(3, 3, 3)]).unwrap(), (1.0, 1.0));
        assert_eq!(recall_precision(&[bare(4, 8, 2)]).unwrap(), (0.5, 0.25));
        let (r, p) = recall_precision(&[bare(2, 1, 1), bare(4, 5, 3)]).unwrap();
        assert_eq!((r, p), (4.0 / 6.0, 4.0 / 6.0));
        assert_eq!(recall_precision(&[bare(2, 0, 0)]).unwrap(), (0.0, 0.0));
        assert_eq!(recall_precision(&[]).unwrap_err().code(), "EmptyCorpusError");
    }

    fn ms(sims: &[f64]) -> MatchSet {
        MatchSet {
            matches: sims
                .iter()
                .enumerate()
                .map(|(i, &s)| crate::alignment::Match {
                    gt_index: i,
                    pred_index: i,
                    similarity: s,
                })
                .collect(),
        }
    }

    #[test]
    fn arg_similarity_examples() {
        assert_eq!(arg_similarity(&ms(&[0.9, 0.85]), 0.8), Some(0.875));
        assert_eq!(arg_similarity(&ms(&[0.7]), 0.8), None);
        assert_eq!(arg_similarity(&ms(&[0.95, 0.80, 0.61]), 0.8), Some((0.95 + 0.80) / 2.0));
    }

    #[test]
    fn step_coherence_examples() {
        let coherent = [sm(0, 0, 1.0), sm(0, 0, 1.0), sm(1, 2, 1.0)];
        assert_eq!(step_coherence_from_pairs(&coherent).value, 1.0);
        let split = [sm(0, 0, 1.0), sm(0, 1, 1.0)];
        assert_eq!(step_coherence_from_pairs(&split).value, 0.5);
        let mixed = [
            sm(0, 0, 1.0),
            sm(0, 0, 1.0),
            sm(0, 0, 1.0),
            sm(1, 1, 1.0),
            sm(1, 2, 1.0),
        ];
        let sc = step_coherence_from_pairs(&mixed);
        assert!((sc.value - 0.8).abs() < 1e-15);
        assert_eq!(sc.per_step[1].pred_steps, vec![1, 2]);
        assert_eq!(step_coherence_from_pairs(&[]).value, 0.0);
    }

    #[test]
    fn merge_purity_examples() {
        let diag = merge_purity_from_weights(vec![vec![1.0, 0.0], vec![0.0, 2.0]]);
        assert_eq!(diag.value, 1.0);
        assert_eq!(diag.entropy, 0.0);

        let uniform = merge_purity_from_weights(vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!((uniform.entropy - 2f64.ln()).abs() < 1e-15);
        assert!(uniform.value.abs() < 1e-15);

        // hand evaluation: column 0 pure; column 1 splits 0.1 / 0.8, prior 0.9 / 1.8
        let h1 = -((1.0f64 / 9.0) * (1.0f64 / 9.0).ln() + (8.0f64 / 9.0) * (8.0f64 / 9.0).ln());
        let expected = 1.0 - 0.5 * h1 / 2f64.ln();
        let got = merge_purity_from_weights(vec![vec![0.9, 0.1], vec![0.0, 0.8]]);
        assert!((got.value - expected).abs() < 1e-12, "{} vs {expected}", got.value);
        assert!((got.value - 0.748370).abs() < 1e-6);

        assert_eq!(merge_purity_from_weights(vec![vec![0.5, 0.5]]).value, 1.0);
        assert_eq!(merge_purity_from_weights(vec![vec![0.0], vec![0.0]]).value, 1.0);
        assert_eq!(merge_purity_from_weights(vec![]).value, 1.0);
    }

    #[test]
    fn order_consistency_examples() {
        assert_eq!(order_consistency_from_pairs(&[sm(0, 0, 1.0), sm(1, 1, 1.0)]).value, 1.0);
        assert_eq!(order_consistency_from_pairs(&[sm(0, 1, 1.0), sm(1, 0, 1.0)]).value, 0.0);
        let three = order_consistency_from_pairs(&[sm(0, 0, 1.0), sm(1, 2, 1.0), sm(2, 1, 1.0)]);
        assert_eq!((three.comparable_pairs, three.inversions), (3, 1));
        assert!((three.value - 2.0 / 3.0).abs() < 1e-15);
        // no comparable pairs
        assert_eq!(order_consistency_from_pairs(&[sm(0, 0, 1.0), sm(0, 1, 1.0)]).value, 1.0);
        assert_eq!(order_consistency_from_pairs(&[]).value, 1.0);
    }

    /// Plain O(n^2) pair enumeration.
    fn enumerate_pairs(pairs: &[StepMatch]) -> (u64, u64) {
        let (mut q, mut inv) = (0, 0);
        for u in 0..pairs.len() {
            for v in u + 1..pairs.len() {
                let da = pairs[u].gt_step as i64 - pairs[v].gt_step as i64;
                let db = pairs[u].pred_step as i64 - pairs[v].pred_step as i64;
                if da != 0 && db != 0 {
                    q += 1;
                    if da * db < 0 {
                        inv += 1;
                    }
                }
            }
        }
        (q, inv)
    }

    #[test]
    fn order_consistency_matches_pair_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(17);
        for _ in 0..500 {
            let n = rng.random_range(0..25);
            let pairs: Vec<StepMatch> = (0..n)
                .map(|_| sm(rng.random_range(0..5), rng.random_range(0..5), 1.0))
                .collect();
            let fast = order_consistency_from_pairs(&pairs);
            let (q, inv) = enumerate_pairs(&pairs);
            assert_eq!((fast.comparable_pairs, fast.inversions), (q, inv));
        }
    }

    #[test]
    fn recall_covered_examples() {
        assert_eq!(recall_covered(&[(1.0, 1.0, 3), (1.0, 1.0, 5)]).unwrap(), 1.0);
        assert_eq!(recall_covered(&[(1.0, 0.0, 4)]).unwrap(), 0.0);
        assert_eq!(recall_covered(&[(1.0, 0.5, 4), (0.5, 1.0, 6)]).unwrap(), 0.5);
        assert!(recall_covered(&[]).is_err());
    }

    #[test]
    fn weights_parse_and_validate() {
        let w: MetricWeights = "0.25,0.25,0.1,0.1,0.1,0.2,0,0".parse().unwrap();
        assert_eq!(w.as_array()[5], 0.2);
        assert!("0.5,0.5".parse::<MetricWeights>().is_err());
        assert!("1,1,1,1,1,1,1,1".parse::<MetricWeights>().is_err());
        assert!("-0.125,0.375,0.125,0.125,0.125,0.125,0.125,0.125"
            .parse::<MetricWeights>()
            .is_err());
    }

    #[test]
    fn average_score_weight_algebra() {
        let vals = [
            Some(0.6),
            Some(0.4),
            Some(1.0),
            Some(0.5),
            Some(0.5),
            Some(0.5),
            Some(0.9),
            Some(0.1),
        ];
        assert!((weighted_average(&vals, &MetricWeights::default()) - 4.5 / 8.0).abs() < 1e-15);
        let six = MetricWeights::new([
            1.0 / 6.0,
            1.0 / 6.0,
            1.0 / 6.0,
            1.0 / 6.0,
            1.0 / 6.0,
            1.0 / 6.0,
            0.0,
            0.0,
        ])
        .unwrap();
        assert!((weighted_average(&vals, &six) - 3.5 / 6.0).abs() < 1e-12);
        let missing = [
            Some(0.6),
            Some(0.4),
            Some(1.0),
            Some(0.5),
            Some(0.5),
            Some(0.5),
            None,
            None,
        ];
        assert!((weighted_average(&missing, &MetricWeights::default()) - 3.5 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_weights_give_the_plain_mean_of_a_leaderboard_row() {
        // A leaderboard row listed with average 0.482; the uniform mean is 0.506.
        let row = [0.627, 0.264, 0.583, 0.502, 0.290, 0.453, 0.671, 0.657].map(Some);
        let avg = weighted_average(&row, &MetricWeights::default());
        assert_eq!(format!("{avg:.3}"), "0.506");
        assert!((avg - 0.482).abs() > 0.02);
    }

    #[test]
    fn aggregate_rejects_empty() {
        assert_eq!(
            aggregate(vec![], None, MetricWeights::default()).unwrap_err().code(),
            "EmptyCorpusError"
        );
    }
}
