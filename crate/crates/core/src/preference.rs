//! Comparison pairs from scored samples and a linear reward model trained
//! with the pairwise logistic loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpusio::{Candidate, CandidateSet};
use crate::metrics::{rouge, sari, RougeVariant, SariMode};
use crate::nli::NliClient;
use crate::quality::{measure, QualityError, QualityVerdict};
use crate::textops::tokenize;

#[derive(Debug, Error)]
pub enum PreferenceError {
    #[error("{id}: {candidates} candidates but {verdicts} verdicts")]
    Misaligned {
        id: String,
        candidates: usize,
        verdicts: usize,
    },
    #[error("no training pairs")]
    NoPairs,
    #[error("feature vector {index} has {found} entries, expected {expected}")]
    Dimension {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error(
        "loss became non-finite at epoch {epoch} (loss {loss}, gradient norm {grad_norm}, weights {weights:?})"
    )]
    NonFinite {
        epoch: usize,
        loss: f64,
        grad_norm: f64,
        weights: Vec<f64>,
    },
    #[error(transparent)]
    Features(#[from] QualityError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonPair {
    pub id: String,
    pub instruction: String,
    pub source: String,
    pub t_good: String,
    pub t_bad: String,
    pub good_rank: u32,
    pub bad_rank: u32,
}

fn pair(set: &CandidateSet, id: String, good: &Candidate, bad: &Candidate) -> ComparisonPair {
    ComparisonPair {
        id,
        instruction: set.instruction.clone(),
        source: set.source.clone(),
        t_good: good.text.clone(),
        t_bad: bad.text.clone(),
        good_rank: good.rank,
        bad_rank: bad.rank,
    }
}

/// Pairs the best-ranked good candidate with the best-ranked bad one, or
/// with `all_pairs` every good with every bad (ordered by rank). Sets whose
/// candidates are all good or all bad yield nothing. `verdicts[i]` belongs
/// to `set.candidates[i]`.
pub fn build_pairs(
    set: &CandidateSet,
    verdicts: &[QualityVerdict],
    all_pairs: bool,
) -> Result<Vec<ComparisonPair>, PreferenceError> {
    if verdicts.len() != set.candidates.len() {
        return Err(PreferenceError::Misaligned {
            id: set.id.clone(),
            candidates: set.candidates.len(),
            verdicts: verdicts.len(),
        });
    }
    let mut good: Vec<&Candidate> = Vec::new();
    let mut bad: Vec<&Candidate> = Vec::new();
    for (c, v) in set.candidates.iter().zip(verdicts) {
        if v.score == 1 {
            good.push(c);
        } else {
            bad.push(c);
        }
    }
    good.sort_by_key(|c| c.rank);
    bad.sort_by_key(|c| c.rank);
    if !all_pairs {
        return Ok(match (good.first(), bad.first()) {
            (Some(g), Some(b)) if g.text != b.text => vec![pair(set, set.id.clone(), g, b)],
            _ => Vec::new(),
        });
    }
    Ok(good
        .iter()
        .flat_map(|g| bad.iter().map(move |b| (*g, *b)))
        .filter(|(g, b)| g.text != b.text)
        .map(|(g, b)| pair(set, format!("{}:{}:{}", set.id, g.rank, b.rank), g, b))
        .collect())
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln σ(r_good - r_bad)`.
pub fn pairwise_loss(r_good: f64, r_bad: f64) -> f64 {
    softplus(-(r_good - r_bad))
}

pub const FEATURE_NAMES: [&str; 7] = [
    "edit_ratio",
    "len_ratio",
    "nli_fwd",
    "nli_rev",
    "sari_vs_source",
    "rouge1_vs_source",
    "bias",
];

/// Feature vector of a candidate in [`FEATURE_NAMES`] order; metric
/// features are divided by 100. The instruction is not used by these
/// features.
pub fn reward_features(
    _instruction: &str,
    source: &str,
    candidate: &str,
    nli: &NliClient,
) -> Result<Vec<f64>, QualityError> {
    let m = measure(source, candidate, nli)?;
    let x = tokenize(source);
    let t = tokenize(candidate);
    let sari = sari(&x, &t, &[x.tokens()], SariMode::Canonical).expect("one reference");
    let r1 = rouge(&t, &x, RougeVariant::Rouge1);
    Ok(vec![
        m.edit_ratio,
        m.len_ratio,
        m.nli_fwd,
        m.nli_rev,
        sari.value / 100.0,
        r1.value / 100.0,
        1.0,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRewardModel {
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
}

impl LinearRewardModel {
    pub fn zeros() -> Self {
        Self {
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            weights: vec![0.0; FEATURE_NAMES.len()],
        }
    }

    pub fn score(&self, features: &[f64]) -> f64 {
        dot(&self.weights, features)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Feature difference `f(good) - f(bad)` of one pair.
pub fn pair_difference(p: &ComparisonPair, nli: &NliClient) -> Result<Vec<f64>, QualityError> {
    let g = reward_features(&p.instruction, &p.source, &p.t_good, nli)?;
    let b = reward_features(&p.instruction, &p.source, &p.t_bad, nli)?;
    Ok(g.iter().zip(&b).map(|(x, y)| x - y).collect())
}

/// Mean pairwise loss of linear scores over feature differences.
pub fn mean_loss(weights: &[f64], diffs: &[Vec<f64>]) -> f64 {
    diffs
        .iter()
        .map(|d| softplus(-dot(weights, d)))
        .sum::<f64>()
        / diffs.len() as f64
}

/// Analytic gradient of [`mean_loss`]: mean of `-σ(-w·d) d`.
pub fn gradient(weights: &[f64], diffs: &[Vec<f64>]) -> Vec<f64> {
    let mut g = vec![0.0; weights.len()];
    for d in diffs {
        let s = -sigmoid(-dot(weights, d));
        for (gi, di) in g.iter_mut().zip(d) {
            *gi += s * di;
        }
    }
    let n = diffs.len() as f64;
    g.iter_mut().for_each(|x| *x /= n);
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// Per weight: `|a - n| / max(|a|, |n|, 1e-6)`.
    pub relative_error: Vec<f64>,
    pub max_relative_error: f64,
}

/// Compares the analytic gradient with central finite differences.
pub fn check_gradient(weights: &[f64], diffs: &[Vec<f64>]) -> GradientCheck {
    let analytic = gradient(weights, diffs);
    let numeric: Vec<f64> = (0..weights.len())
        .map(|i| {
            let h = 1e-6 * weights[i].abs().max(1.0);
            let mut w = weights.to_vec();
            w[i] = weights[i] + h;
            let up = mean_loss(&w, diffs);
            w[i] = weights[i] - h;
            let down = mean_loss(&w, diffs);
            (up - down) / (2.0 * h)
        })
        .collect();
    let relative_error: Vec<f64> = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .collect();
    let max_relative_error = relative_error.iter().copied().fold(0.0, f64::max);
    GradientCheck {
        analytic,
        numeric,
        relative_error,
        max_relative_error,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Seed for random initial weights; zeros when absent.
    pub seed: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            epochs: 500,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: LinearRewardModel,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Loss before each update, then after the last one.
    pub history: Vec<f64>,
}

fn initial_weights(n: usize, seed: Option<u64>) -> Vec<f64> {
    match seed {
        None => vec![0.0; n],
        Some(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            (0..n).map(|_| rng.gen_range(-0.01..0.01)).collect()
        }
    }
}

/// Full-batch gradient descent on precomputed feature differences.
pub fn train_on_differences(
    diffs: &[Vec<f64>],
    config: &TrainConfig,
) -> Result<TrainOutcome, PreferenceError> {
    if diffs.is_empty() {
        return Err(PreferenceError::NoPairs);
    }
    let dim = diffs[0].len();
    if let Some(bad) = diffs.iter().position(|d| d.len() != dim) {
        return Err(PreferenceError::Dimension {
            index: bad,
            expected: dim,
            found: diffs[bad].len(),
        });
    }
    let feature_names = if dim == FEATURE_NAMES.len() {
        LinearRewardModel::zeros().feature_names
    } else {
        (0..dim).map(|i| format!("x{i}")).collect()
    };
    let mut model = LinearRewardModel {
        feature_names,
        weights: initial_weights(dim, config.seed),
    };
    let mut history = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..=config.epochs {
        let loss = mean_loss(&model.weights, diffs);
        let grad = gradient(&model.weights, diffs);
        let grad_norm = dot(&grad, &grad).sqrt();
        if !loss.is_finite() || !grad_norm.is_finite() {
            return Err(PreferenceError::NonFinite {
                epoch,
                loss,
                grad_norm,
                weights: model.weights,
            });
        }
        history.push(loss);
        if epoch == config.epochs {
            break;
        }
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w -= config.lr * g;
        }
    }
    Ok(TrainOutcome {
        model,
        initial_loss: history[0],
        final_loss: *history.last().unwrap(),
        history,
    })
}

/// Feature differences for every pair, computed in parallel.
pub fn pair_differences(
    pairs: &[ComparisonPair],
    nli: &NliClient,
) -> Result<Vec<Vec<f64>>, PreferenceError> {
    pairs
        .par_iter()
        .map(|p| pair_difference(p, nli).map_err(PreferenceError::from))
        .collect()
}

pub fn train_linear_reward(
    pairs: &[ComparisonPair],
    nli: &NliClient,
    config: &TrainConfig,
) -> Result<TrainOutcome, PreferenceError> {
    if pairs.is_empty() {
        return Err(PreferenceError::NoPairs);
    }
    train_on_differences(&pair_differences(pairs, nli)?, config)
}
