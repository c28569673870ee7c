//! Pool-level scoring: batch expected-reward prediction, pairwise win
//! probabilities, AUROC and the pairwise logistic comparator.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{empirical_er, PromptRecord, RewardSampleSet};
use crate::linalg::{dot, norm_inf, Cholesky};
use crate::ridge::LinearPredictor;
use crate::rng::Stream;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub id: String,
    pub cost: f64,
}

/// Ordered model pool. The entry order is the model index used by every
/// routing decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPool {
    pub models: Vec<PoolEntry>,
}

impl ModelPool {
    pub fn new(models: Vec<PoolEntry>) -> Result<Self> {
        let pool = Self { models };
        pool.validate()?;
        Ok(pool)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::InvalidArgument("model pool is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for m in &self.models {
            if !seen.insert(m.id.as_str()) {
                return Err(Error::InvalidArgument(alloc::format!("duplicate model id `{}`", m.id)));
            }
            if !(m.cost > 0.0) || !m.cost.is_finite() {
                return Err(Error::InvalidArgument(alloc::format!(
                    "cost of `{}` must be positive and finite, got {}",
                    m.id, m.cost
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.models.iter().map(|m| m.cost).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.models.iter().map(|m| m.id.clone()).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.models.iter().position(|m| m.id == id)
    }

    pub fn min_cost(&self) -> f64 {
        self.models.iter().map(|m| m.cost).fold(f64::INFINITY, f64::min)
    }

    pub fn max_cost(&self) -> f64 {
        self.models.iter().map(|m| m.cost).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Predicted,
    Empirical,
}

/// Prompts x models matrix of expected rewards, columns in pool order.
#[derive(Debug, Clone, PartialEq)]
pub struct ERMatrix {
    pub prompt_ids: Vec<String>,
    pub model_ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl ERMatrix {
    pub fn new(
        prompt_ids: Vec<String>,
        model_ids: Vec<String>,
        values: Vec<Vec<f64>>,
        provenance: Provenance,
    ) -> Result<Self> {
        if values.len() != prompt_ids.len() {
            return Err(Error::LengthMismatch { left: prompt_ids.len(), right: values.len() });
        }
        for row in &values {
            if row.len() != model_ids.len() {
                return Err(Error::LengthMismatch { left: model_ids.len(), right: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("expected-reward matrix".into()));
            }
        }
        Ok(Self { prompt_ids, model_ids, values, provenance })
    }

    /// Empirical expected rewards for `prompts` x pool from stored samples.
    pub fn empirical(
        prompts: &[PromptRecord],
        sample_sets: &[RewardSampleSet],
        pool: &ModelPool,
    ) -> Result<Self> {
        let index: alloc::collections::BTreeMap<(&str, &str), &RewardSampleSet> = sample_sets
            .iter()
            .map(|s| ((s.prompt_id.as_str(), s.model_id.as_str()), s))
            .collect();
        let mut values = Vec::with_capacity(prompts.len());
        for p in prompts {
            let mut row = Vec::with_capacity(pool.len());
            for m in &pool.models {
                let s = index.get(&(p.id.as_str(), m.id.as_str())).ok_or_else(|| {
                    Error::MissingPair { prompt_id: p.id.clone(), model_id: m.id.clone() }
                })?;
                s.validate()?;
                row.push(empirical_er(s));
            }
            values.push(row);
        }
        Self::new(
            prompts.iter().map(|p| p.id.clone()).collect(),
            pool.ids(),
            values,
            Provenance::Empirical,
        )
    }

    pub fn n_prompts(&self) -> usize {
        self.values.len()
    }

    pub fn n_models(&self) -> usize {
        self.model_ids.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[j]).collect()
    }

    /// Rows restricted to `rows` (indices into this matrix).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            prompt_ids: rows.iter().map(|&i| self.prompt_ids[i].clone()).collect(),
            model_ids: self.model_ids.clone(),
            values: rows.iter().map(|&i| self.values[i].clone()).collect(),
            provenance: self.provenance,
        }
    }

    pub fn check_aligned(&self, other: &ERMatrix) -> Result<()> {
        if self.prompt_ids != other.prompt_ids {
            return Err(Error::InvalidArgument("matrices cover different prompts".into()));
        }
        if self.model_ids != other.model_ids {
            return Err(Error::InvalidArgument("matrices cover different models".into()));
        }
        Ok(())
    }
}

/// Predicts every prompt against every model. `predictors` must follow pool
/// order.
pub fn predict_matrix(predictors: &[LinearPredictor], prompts: &[PromptRecord]) -> Result<ERMatrix> {
    for p in predictors {
        p.validate()?;
    }
    let mut values = Vec::with_capacity(prompts.len());
    for prompt in prompts {
        let row = predictors
            .iter()
            .map(|p| p.predict(&prompt.embedding))
            .collect::<Result<Vec<_>>>()?;
        values.push(row);
    }
    ERMatrix::new(
        prompts.iter().map(|p| p.id.clone()).collect(),
        predictors.iter().map(|p| p.model_id.clone()).collect(),
        values,
        Provenance::Predicted,
    )
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Probability that model A beats model B on a prompt: `sigmoid(er_a - er_b)`.
pub fn pairwise_win_score(er_a: f64, er_b: f64) -> f64 {
    sigmoid(er_a - er_b)
}

/// Area under the ROC curve via the Mann-Whitney U statistic with averaged
/// ranks for ties (ties count half).
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch { left: scores.len(), right: labels.len() });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum of positives, so averaged tie ranks stay integral.
    let mut twice_rank_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1..=end+1, average (start + end + 2) / 2
        let twice_avg = (start + end + 2) as u64;
        let pos_in_group = order[start..=end].iter().filter(|&&i| labels[i]).count() as u64;
        twice_rank_sum += twice_avg * pos_in_group;
        start = end + 1;
    }
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// How a ground-truth pairwise label is formed from stored rewards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    /// One uniformly drawn sample per model; label is `draw_a > draw_b`.
    #[default]
    Sample,
    /// Compare empirical means instead of single draws.
    Mean,
}

/// Ground-truth label "A beats B" using `rng` for the per-model draws.
pub fn pairwise_win_label<R: Rng + ?Sized>(
    rng: &mut R,
    samples_a: &RewardSampleSet,
    samples_b: &RewardSampleSet,
    mode: LabelMode,
) -> Result<bool> {
    if samples_a.prompt_id != samples_b.prompt_id {
        return Err(Error::PromptMismatch(samples_a.prompt_id.clone(), samples_b.prompt_id.clone()));
    }
    samples_a.validate()?;
    samples_b.validate()?;
    Ok(match mode {
        LabelMode::Sample => {
            let ra = samples_a.rewards[rng.random_range(0..samples_a.rewards.len())];
            let rb = samples_b.rewards[rng.random_range(0..samples_b.rewards.len())];
            ra > rb
        }
        LabelMode::Mean => empirical_er(samples_a) > empirical_er(samples_b),
    })
}

/// Seeded single-draw label; see [`pairwise_win_label`].
pub fn pairwise_win_labels(
    samples_a: &RewardSampleSet,
    samples_b: &RewardSampleSet,
    seed: u64,
) -> Result<bool> {
    pairwise_win_label(&mut Stream::Labels.rng(seed, 0), samples_a, samples_b, LabelMode::Sample)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl LogisticClassifier {
    pub fn decision(&self, features: &[f64]) -> f64 {
        dot(&self.weights, features) + self.bias
    }

    pub fn probability(&self, features: &[f64]) -> f64 {
        sigmoid(self.decision(features))
    }
}

pub const LOGISTIC_TOLERANCE: f64 = 1e-6;
pub const LOGISTIC_MAX_ITER: usize = 500;

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

fn logistic_loss(features: &[Vec<f64>], labels: &[bool], l2: f64, w: &[f64], b: f64) -> f64 {
    let n = features.len() as f64;
    let data: f64 = features
        .iter()
        .zip(labels)
        .map(|(x, &y)| {
            let z = dot(w, x) + b;
            softplus(z) - if y { z } else { 0.0 }
        })
        .sum();
    data / n + l2 * dot(w, w)
}

/// Fits `P(label | x) = sigmoid(w.x + b)` by minimizing the mean logistic
/// loss plus `l2 * |w|^2` (the bias is not penalized). Damped Newton from
/// zero; stops once the gradient infinity-norm is at most 1e-6.
pub fn fit_pairwise_logistic(
    features: &[Vec<f64>],
    labels: &[bool],
    l2: f64,
) -> Result<LogisticClassifier> {
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch { left: features.len(), right: labels.len() });
    }
    if !(l2 > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("l2 must be > 0, got {l2}")));
    }
    if !labels.iter().any(|&l| l) || labels.iter().all(|&l| l) {
        return Err(Error::DegenerateLabels);
    }
    let dim = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, found: bad.len() });
    }
    let n = features.len() as f64;
    let k = dim + 1;
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut loss = logistic_loss(features, labels, l2, &w, b);
    let mut grad_norm = f64::INFINITY;
    for iter in 0..LOGISTIC_MAX_ITER {
        let mut grad = vec![0.0; k];
        let mut hess = vec![0.0; k * k];
        let mut xt = vec![1.0; k];
        for (x, &y) in features.iter().zip(labels) {
            xt[..dim].copy_from_slice(x);
            let s = sigmoid(dot(&w, x) + b);
            let r = s - if y { 1.0 } else { 0.0 };
            let curv = s * (1.0 - s);
            for i in 0..k {
                grad[i] += r * xt[i] / n;
                for j in 0..=i {
                    hess[i * k + j] += curv * xt[i] * xt[j] / n;
                }
            }
        }
        for i in 0..dim {
            grad[i] += 2.0 * l2 * w[i];
            hess[i * k + i] += 2.0 * l2;
        }
        for i in 0..k {
            for j in 0..i {
                hess[j * k + i] = hess[i * k + j];
            }
        }
        grad_norm = norm_inf(&grad);
        if grad_norm <= LOGISTIC_TOLERANCE {
            return Ok(LogisticClassifier { weights: w, bias: b, iterations: iter, gradient_norm: grad_norm });
        }
        let step = match Cholesky::factor(&hess, k) {
            Ok(c) => c.solve(&grad),
            Err(_) => grad.clone(),
        };
        let slope = dot(&grad, &step);
        let mut t = 1.0;
        loop {
            let w_new: Vec<f64> = w.iter().zip(&step).map(|(wi, si)| wi - t * si).collect();
            let b_new = b - t * step[dim];
            let new_loss = logistic_loss(features, labels, l2, &w_new, b_new);
            if new_loss <= loss - 1e-4 * t * slope || t < 1e-10 {
                w = w_new;
                b = b_new;
                loss = new_loss;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::NoConvergence { iterations: LOGISTIC_MAX_ITER, gradient_norm: grad_norm })
}
