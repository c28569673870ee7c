//! Routing policies: cost-adjusted argmax over predicted rewards (ERP), a
//! linear-softmax Zooter router, and the baselines (fixed model, uniform
//! random, permuted ERP decisions, per-category oracle).

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::PromptRecord;
use crate::erp::{ERMatrix, ModelPool};
use crate::linalg::{dot, norm_inf, power_iteration};
use crate::rng::Stream;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingAssignment {
    pub prompt_ids: Vec<String>,
    pub chosen: Vec<usize>,
    pub policy_name: String,
    pub lambda: f64,
}

impl RoutingAssignment {
    pub fn len(&self) -> usize {
        self.chosen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chosen.is_empty()
    }
}

/// Index maximizing `scores[i] - lambda * costs[i]`. Ties go to the lower
/// cost, then the lower index.
pub fn select(scores: &[f64], costs: &[f64], lambda: f64) -> usize {
    let mut best = 0;
    let mut best_value = scores[0] - lambda * costs[0];
    for i in 1..scores.len() {
        let v = scores[i] - lambda * costs[i];
        if v > best_value || (v == best_value && costs[i] < costs[best]) {
            best = i;
            best_value = v;
        }
    }
    best
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || lambda.is_nan() {
        return Err(Error::InvalidArgument(alloc::format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(())
}

/// Routes every row of `scores` by the cost-adjusted argmax.
pub fn route_scores(
    scores: &ERMatrix,
    pool: &ModelPool,
    lambda: f64,
    policy_name: &str,
) -> Result<RoutingAssignment> {
    check_lambda(lambda)?;
    if scores.model_ids != pool.ids() {
        return Err(Error::InvalidArgument("score columns do not follow pool order".into()));
    }
    let costs = pool.costs();
    Ok(RoutingAssignment {
        prompt_ids: scores.prompt_ids.clone(),
        chosen: scores.values.iter().map(|row| select(row, &costs, lambda)).collect(),
        policy_name: policy_name.into(),
        lambda,
    })
}

/// ERP policy: `argmax_i ER_i(x) - lambda * c(i)`. The budget constant of
/// the Lagrangian is prompt-independent and drops out of the argmax.
pub fn route_erp(er_matrix: &ERMatrix, pool: &ModelPool, lambda: f64) -> Result<RoutingAssignment> {
    route_scores(er_matrix, pool, lambda, "erp")
}

/// Smallest lambda at which every row is guaranteed to route to a
/// cheapest model: score spread divided by the smallest nonzero cost gap.
/// Padded by a relative 1e-9 so float rounding in `score - lambda * cost`
/// cannot flip the decision at the boundary. Zero when all costs agree.
pub fn auto_lambda_max(rows: &[Vec<f64>], costs: &[f64]) -> f64 {
    let mut sorted = costs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let gap = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&g| g > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !gap.is_finite() {
        return 0.0;
    }
    let (lo, hi) = rows
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let spread = if hi >= lo { hi - lo } else { 0.0 };
    let lambda = spread / gap * (1.0 + 1e-9);
    if lambda > 0.0 {
        lambda
    } else {
        f64::MIN_POSITIVE
    }
}

/// `0` followed by `n - 1` log-spaced values from `1e-3 * lambda_max` to
/// `lambda_max` inclusive. Returns `[0]` when `n <= 1` or `lambda_max == 0`.
pub fn auto_lambda_grid(lambda_max: f64, n: usize) -> Vec<f64> {
    if n <= 1 || !(lambda_max > 0.0) {
        return vec![0.0];
    }
    let mut grid = vec![0.0];
    if n == 2 {
        grid.push(lambda_max);
        return grid;
    }
    let lo = libm::log10(lambda_max) - 3.0;
    let hi = libm::log10(lambda_max);
    for k in 0..(n - 1) {
        let t = k as f64 / (n - 2) as f64;
        grid.push(libm::pow(10.0, lo + t * (hi - lo)));
    }
    // pin the top exactly, pow/log round-trips can land one ulp low
    *grid.last_mut().unwrap() = lambda_max;
    grid
}

pub fn route_fixed(pool: &ModelPool, model_index: usize, prompt_ids: &[String]) -> Result<RoutingAssignment> {
    if model_index >= pool.len() {
        return Err(Error::IndexOutOfRange { index: model_index, size: pool.len() });
    }
    Ok(RoutingAssignment {
        prompt_ids: prompt_ids.to_vec(),
        chosen: vec![model_index; prompt_ids.len()],
        policy_name: alloc::format!("fixed:{}", pool.models[model_index].id),
        lambda: 0.0,
    })
}

/// Uniform i.i.d. model choice per prompt.
pub fn route_random(pool: &ModelPool, prompt_ids: &[String], seed: u64) -> RoutingAssignment {
    let mut rng = Stream::RandomRouting.rng(seed, 0);
    RoutingAssignment {
        prompt_ids: prompt_ids.to_vec(),
        chosen: prompt_ids.iter().map(|_| rng.random_range(0..pool.len())).collect(),
        policy_name: "random".into(),
        lambda: 0.0,
    }
}

/// Shuffles the decisions of `assignment` across prompts. The multiset of
/// chosen models, and hence the total cost, is unchanged.
pub fn permute_assignment(assignment: &RoutingAssignment, seed: u64) -> RoutingAssignment {
    let mut chosen = assignment.chosen.clone();
    chosen.shuffle(&mut Stream::Permutation.rng(seed, 0));
    RoutingAssignment {
        prompt_ids: assignment.prompt_ids.clone(),
        chosen,
        policy_name: "permutation".into(),
        lambda: assignment.lambda,
    }
}

/// Best model per category on the training set: maximizes the category mean
/// of empirical expected reward minus `lambda * cost`. `empirical` rows must
/// align with `train_prompts`.
pub fn per_category_oracle(
    train_prompts: &[PromptRecord],
    empirical: &ERMatrix,
    pool: &ModelPool,
    lambda: f64,
) -> Result<BTreeMap<String, usize>> {
    check_lambda(lambda)?;
    if empirical.n_prompts() != train_prompts.len() {
        return Err(Error::LengthMismatch { left: train_prompts.len(), right: empirical.n_prompts() });
    }
    if empirical.model_ids != pool.ids() {
        return Err(Error::InvalidArgument("empirical columns do not follow pool order".into()));
    }
    let mut sums: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
    for ((p, row), id) in train_prompts.iter().zip(&empirical.values).zip(&empirical.prompt_ids) {
        if &p.id != id {
            return Err(Error::PromptMismatch(p.id.clone(), id.clone()));
        }
        let entry = sums.entry(p.category.as_str()).or_insert_with(|| (vec![0.0; pool.len()], 0));
        for (acc, v) in entry.0.iter_mut().zip(row) {
            *acc += v;
        }
        entry.1 += 1;
    }
    let costs = pool.costs();
    Ok(sums
        .into_iter()
        .map(|(cat, (total, n))| {
            let means: Vec<f64> = total.iter().map(|t| t / n as f64).collect();
            (cat.into(), select(&means, &costs, lambda))
        })
        .collect())
}

/// Routes prompts by category label using a table from
/// [`per_category_oracle`].
pub fn route_by_category(
    table: &BTreeMap<String, usize>,
    prompts: &[PromptRecord],
    lambda: f64,
) -> Result<RoutingAssignment> {
    let chosen = prompts
        .iter()
        .map(|p| table.get(&p.category).copied().ok_or_else(|| Error::UnknownCategory(p.category.clone())))
        .collect::<Result<Vec<_>>>()?;
    Ok(RoutingAssignment {
        prompt_ids: prompts.iter().map(|p| p.id.clone()).collect(),
        chosen,
        policy_name: "category_oracle".into(),
        lambda,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZooterConfig {
    /// Temperature of the target distribution `softmax(r / temperature)`.
    pub temperature: f64,
    pub l2: f64,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for ZooterConfig {
    fn default() -> Self {
        Self { temperature: 1.0, l2: 1e-4, max_iter: 5000, tolerance: 1e-4 }
    }
}

/// Linear-softmax router: `p(i | x) = softmax_i(W_i . [x; 1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZooterModel {
    /// One row per pool model, bias in the last column.
    pub weights: Vec<Vec<f64>>,
    pub target_temperature: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl ZooterModel {
    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, |w| w.len() - 1)
    }

    pub fn logits(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        if embedding.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: embedding.len() });
        }
        Ok(self.logits_unchecked(embedding))
    }

    fn logits_unchecked(&self, embedding: &[f64]) -> Vec<f64> {
        let d = embedding.len();
        self.weights.iter().map(|w| dot(&w[..d], embedding) + w[d]).collect()
    }

    pub fn probabilities(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(embedding)?))
    }

    /// Logit matrix over `prompts`, usable as a score matrix for routing.
    pub fn logit_matrix(&self, prompts: &[PromptRecord], pool: &ModelPool) -> Result<ERMatrix> {
        if self.weights.len() != pool.len() {
            return Err(Error::LengthMismatch { left: pool.len(), right: self.weights.len() });
        }
        let values = prompts.iter().map(|p| self.logits(&p.embedding)).collect::<Result<Vec<_>>>()?;
        ERMatrix::new(
            prompts.iter().map(|p| p.id.clone()).collect(),
            pool.ids(),
            values,
            crate::erp::Provenance::Predicted,
        )
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| libm::exp(l - max)).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(logits.iter().map(|l| libm::exp(l - max)).sum::<f64>());
    logits.iter().map(|l| l - lse).collect()
}

/// Fits a [`ZooterModel`] to minimize the mean `KL(softmax(r / T) || p(.|x))`
/// plus `l2 * |W|_F^2`, where `rewards[n]` holds one reward per pool model
/// for prompt `n`.
///
/// Full-batch Nesterov-accelerated gradient descent from zero with the fixed
/// step `1 / L`, where `L = 0.5 * lambda_max(E[x x^T]) + 2 l2` bounds the
/// curvature. Stops when the gradient infinity-norm drops below
/// `config.tolerance` or after `config.max_iter` iterations; the final
/// gradient norm is recorded either way.
pub fn fit_zooter(features: &[Vec<f64>], rewards: &[Vec<f64>], config: &ZooterConfig) -> Result<ZooterModel> {
    if features.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if features.len() != rewards.len() {
        return Err(Error::LengthMismatch { left: features.len(), right: rewards.len() });
    }
    if !(config.temperature > 0.0) {
        return Err(Error::InvalidArgument("temperature must be > 0".into()));
    }
    if !(config.l2 >= 0.0) {
        return Err(Error::InvalidArgument("l2 must be >= 0".into()));
    }
    let d = features[0].len();
    let m = rewards[0].len();
    if m == 0 {
        return Err(Error::InvalidArgument("reward vectors are empty".into()));
    }
    for (x, r) in features.iter().zip(rewards) {
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: x.len() });
        }
        if r.len() != m {
            return Err(Error::LengthMismatch { left: m, right: r.len() });
        }
    }
    let n = features.len() as f64;
    let k = d + 1;
    let targets: Vec<Vec<f64>> = rewards
        .iter()
        .map(|r| softmax(&r.iter().map(|v| v / config.temperature).collect::<Vec<_>>()))
        .collect();
    if targets.iter().flatten().any(|t| !t.is_finite()) {
        return Err(Error::Overflow);
    }

    let mut second_moment = vec![0.0; k * k];
    let mut xt = vec![1.0; k];
    for x in features {
        xt[..d].copy_from_slice(x);
        for i in 0..k {
            for j in 0..k {
                second_moment[i * k + j] += xt[i] * xt[j] / n;
            }
        }
    }
    // power iteration converges from below; pad it
    let lipschitz = 0.5 * 1.05 * power_iteration(&second_moment, k, 100) + 2.0 * config.l2;
    let step = 1.0 / lipschitz;

    let gradient = |w: &[Vec<f64>]| -> Result<(Vec<Vec<f64>>, f64)> {
        let mut grad = vec![vec![0.0; k]; m];
        let mut loss = 0.0;
        for (x, q) in features.iter().zip(&targets) {
            let logits: Vec<f64> = w.iter().map(|wi| dot(&wi[..d], x) + wi[d]).collect();
            let log_p = log_softmax(&logits);
            for i in 0..m {
                let p = libm::exp(log_p[i]);
                if q[i] > 0.0 {
                    loss += q[i] * (libm::log(q[i]) - log_p[i]) / n;
                }
                let r = (p - q[i]) / n;
                for j in 0..d {
                    grad[i][j] += r * x[j];
                }
                grad[i][d] += r;
            }
        }
        for i in 0..m {
            for j in 0..k {
                grad[i][j] += 2.0 * config.l2 * w[i][j];
                loss += config.l2 * w[i][j] * w[i][j];
            }
        }
        if !loss.is_finite() {
            return Err(Error::Overflow);
        }
        Ok((grad, loss))
    };
    let grad_norm = |g: &[Vec<f64>]| g.iter().map(|r| norm_inf(r)).fold(0.0, f64::max);

    let mut w = vec![vec![0.0; k]; m];
    let mut w_prev = w.clone();
    let mut iterations = 0;
    let mut residual = grad_norm(&gradient(&w)?.0);
    while iterations < config.max_iter && residual > config.tolerance {
        let momentum = iterations as f64 / (iterations as f64 + 3.0);
        let look: Vec<Vec<f64>> = w
            .iter()
            .zip(&w_prev)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + momentum * (x - y)).collect())
            .collect();
        let (g, _) = gradient(&look)?;
        w_prev = core::mem::replace(
            &mut w,
            look.iter().zip(&g).map(|(a, gr)| a.iter().zip(gr).map(|(x, y)| x - step * y).collect()).collect(),
        );
        iterations += 1;
        residual = grad_norm(&gradient(&w)?.0);
    }
    Ok(ZooterModel { weights: w, target_temperature: config.temperature, iterations, gradient_norm: residual })
}

/// Zooter routing: `argmax_i logit_i(x) - lambda * c(i)`. Logits are not in
/// reward units, so `lambda` here lives on its own scale.
pub fn route_zooter(
    zooter: &ZooterModel,
    pool: &ModelPool,
    lambda: f64,
    prompts: &[PromptRecord],
) -> Result<RoutingAssignment> {
    let logits = zooter.logit_matrix(prompts, pool)?;
    route_scores(&logits, pool, lambda, "zooter")
}
