//! In-memory pipeline stages shared by the CLI and the acceptance tests:
//! training, the evaluation report and the policy sweep.

use std::collections::BTreeMap;

use erp_core::erp::LabelMode;
use erp_core::eval::evaluate;
use erp_core::{
    auroc, auto_lambda_grid, auto_lambda_max, build_er_dataset, fit_pairwise_logistic, fit_ridge,
    fit_zooter, pairwise_win_label, pairwise_win_score, pareto_frontier, per_category_oracle,
    per_category_r2, permute_assignment, predict_matrix, route_by_category, route_erp, route_fixed,
    route_random, route_zooter, win_rate_table, ERMatrix, LinearPredictor, ModelPool, ParetoPoint,
    PromptRecord, RewardSampleSet, RoutingAssignment, Split, Stream, WinRateTable, ZooterConfig,
    ZooterModel,
};
use rand::Rng;
use serde::Serialize;

use crate::Result;

/// Prompts with split tags, their reward samples and the pool.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub prompts: Vec<PromptRecord>,
    pub reward_sets: Vec<RewardSampleSet>,
    pub pool: ModelPool,
}

impl Corpus {
    pub fn split(&self, split: Split) -> Vec<PromptRecord> {
        self.prompts.iter().filter(|p| p.split == split).cloned().collect()
    }

    pub fn empirical(&self, split: Split) -> Result<ERMatrix> {
        Ok(ERMatrix::empirical(&self.split(split), &self.reward_sets, &self.pool)?)
    }
}

/// One ridge predictor per pool model, trained on the Train split.
pub fn train_predictors(corpus: &Corpus, beta: f64) -> Result<Vec<LinearPredictor>> {
    corpus
        .pool
        .models
        .iter()
        .map(|m| {
            let ds = build_er_dataset(&corpus.prompts, &corpus.reward_sets, &m.id, Some(Split::Train))?;
            Ok(fit_ridge(&ds, beta)?)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PairAuroc {
    pub model_a: String,
    pub model_b: String,
    /// AUROC of `sigmoid(ER_a - ER_b)` on test prompts.
    pub erp: Option<f64>,
    /// AUROC of the pairwise logistic comparator on test prompts.
    pub logistic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WinRates {
    pub ground_truth: Vec<WinRateTable>,
    pub predicted: Vec<WinRateTable>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    /// model id -> category (plus "Aggregate") -> test R^2; `null` where
    /// the category's targets are constant.
    pub r2: BTreeMap<String, BTreeMap<String, Option<f64>>>,
    pub auroc: Vec<PairAuroc>,
    pub win_rates: WinRates,
    #[serde(skip)]
    pub predicted: ERMatrix,
    #[serde(skip)]
    pub empirical: ERMatrix,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalConfig {
    pub seed: u64,
    pub label_mode: LabelMode,
    pub logistic_l2: f64,
}

/// Ground-truth "A beats B" labels for every prompt of the corpus, in
/// prompt order. Each model pair draws from its own label sub-stream.
pub fn pair_labels(corpus: &Corpus, a: usize, b: usize, pair_index: u64, config: &EvalConfig) -> Result<Vec<bool>> {
    let index: BTreeMap<(&str, &str), &RewardSampleSet> = corpus
        .reward_sets
        .iter()
        .map(|s| ((s.prompt_id.as_str(), s.model_id.as_str()), s))
        .collect();
    let (id_a, id_b) = (&corpus.pool.models[a].id, &corpus.pool.models[b].id);
    let mut rng = Stream::Labels.rng(config.seed, pair_index);
    corpus
        .prompts
        .iter()
        .map(|p| {
            let get = |m: &str| {
                index.get(&(p.id.as_str(), m)).copied().ok_or_else(|| erp_core::Error::MissingPair {
                    prompt_id: p.id.clone(),
                    model_id: m.into(),
                })
            };
            Ok(pairwise_win_label(&mut rng, get(id_a)?, get(id_b)?, config.label_mode)?)
        })
        .collect()
}

fn pair_auroc(
    corpus: &Corpus,
    predicted: &ERMatrix,
    test_rows: &[usize],
    a: usize,
    b: usize,
    pair_index: u64,
    config: &EvalConfig,
) -> std::result::Result<(f64, f64), String> {
    let labels = pair_labels(corpus, a, b, pair_index, config).map_err(|e| e.to_string())?;
    let (mut train_x, mut train_y) = (Vec::new(), Vec::new());
    for (p, &l) in corpus.prompts.iter().zip(&labels) {
        if p.split == Split::Train {
            train_x.push(p.embedding.clone());
            train_y.push(l);
        }
    }
    let clf = fit_pairwise_logistic(&train_x, &train_y, config.logistic_l2).map_err(|e| e.to_string())?;
    let test_labels: Vec<bool> = test_rows.iter().map(|&i| labels[i]).collect();
    let erp_scores: Vec<f64> = predicted.values.iter().map(|r| pairwise_win_score(r[a], r[b])).collect();
    let logit_scores: Vec<f64> = test_rows.iter().map(|&i| clf.probability(&corpus.prompts[i].embedding)).collect();
    let erp = auroc(&erp_scores, &test_labels).map_err(|e| e.to_string())?;
    let logistic = auroc(&logit_scores, &test_labels).map_err(|e| e.to_string())?;
    Ok((erp, logistic))
}

pub fn evaluate_report(corpus: &Corpus, predictors: &[LinearPredictor], config: &EvalConfig) -> Result<Report> {
    let test = corpus.split(Split::Test);
    let test_rows: Vec<usize> =
        corpus.prompts.iter().enumerate().filter(|(_, p)| p.split == Split::Test).map(|(i, _)| i).collect();
    let predicted = predict_matrix(predictors, &test)?;
    let empirical = corpus.empirical(Split::Test)?;

    let mut r2 = BTreeMap::new();
    for (j, p) in predictors.iter().enumerate() {
        let per_cat = per_category_r2(p, &test, &empirical.column(j))?;
        r2.insert(p.model_id.clone(), per_cat.into_iter().map(|(k, v)| (k, v.ok())).collect());
    }

    let mut pairs = Vec::new();
    let m = corpus.pool.len();
    let mut pair_index = 0;
    for a in 0..m {
        for b in (a + 1)..m {
            let (erp, logistic, error) = match pair_auroc(corpus, &predicted, &test_rows, a, b, pair_index, config) {
                Ok((e, l)) => (Some(e), Some(l), None),
                Err(msg) => (None, None, Some(msg)),
            };
            pairs.push(PairAuroc {
                model_a: corpus.pool.models[a].id.clone(),
                model_b: corpus.pool.models[b].id.clone(),
                erp,
                logistic,
                error,
            });
            pair_index += 1;
        }
    }

    let categories: Vec<String> = test.iter().map(|p| p.category.clone()).collect();
    let win_rates = WinRates {
        ground_truth: win_rate_table(&empirical, &categories)?,
        predicted: win_rate_table(&predicted, &categories)?,
    };
    Ok(Report { r2, auroc: pairs, win_rates, predicted, empirical })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Policy {
    Erp,
    Zooter,
    Fixed,
    Random,
    Permutation,
    CategoryOracle,
}

impl Policy {
    pub const ALL: [Policy; 6] =
        [Policy::Erp, Policy::Zooter, Policy::Fixed, Policy::Random, Policy::Permutation, Policy::CategoryOracle];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Erp => "erp",
            Policy::Zooter => "zooter",
            Policy::Fixed => "fixed",
            Policy::Random => "random",
            Policy::Permutation => "permutation",
            Policy::CategoryOracle => "category_oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZooterTargets {
    /// Per-model empirical mean reward.
    Mean,
    /// One seeded reward sample per model.
    Sample,
}

/// Either an explicit lambda list shared by all policies, or the automatic
/// grid computed per score scale.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaGrid {
    Auto { points: usize },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub seed: u64,
    pub policies: Vec<Policy>,
    pub grid: LambdaGrid,
    pub zooter: ZooterConfig,
    pub zooter_targets: ZooterTargets,
}

#[derive(Debug, Clone, Serialize)]
pub struct ZooterFit {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub points: Vec<ParetoPoint>,
    pub assignments: Vec<RoutingAssignment>,
    /// Reward-denominated grid (ERP, permutation, category oracle).
    pub reward_grid: Vec<f64>,
    /// Grid applied to Zooter logits.
    pub zooter_grid: Vec<f64>,
    pub zooter: Option<ZooterModel>,
}

impl SweepOutput {
    pub fn points_for(&self, policy: &str) -> Vec<ParetoPoint> {
        self.points.iter().filter(|p| p.policy_name == policy).cloned().collect()
    }

    /// Frontier of each distinct policy name, in first-appearance order.
    pub fn frontiers(&self) -> Vec<(String, Vec<ParetoPoint>)> {
        let mut names: Vec<String> = Vec::new();
        for p in &self.points {
            if !names.contains(&p.policy_name) {
                names.push(p.policy_name.clone());
            }
        }
        names.into_iter().map(|n| (n.clone(), pareto_frontier(&self.points_for(&n)))).collect()
    }
}

fn zooter_targets(corpus: &Corpus, train: &[PromptRecord], mode: ZooterTargets, seed: u64) -> Result<Vec<Vec<f64>>> {
    match mode {
        ZooterTargets::Mean => Ok(ERMatrix::empirical(train, &corpus.reward_sets, &corpus.pool)?.values),
        ZooterTargets::Sample => {
            let index: BTreeMap<(&str, &str), &RewardSampleSet> = corpus
                .reward_sets
                .iter()
                .map(|s| ((s.prompt_id.as_str(), s.model_id.as_str()), s))
                .collect();
            let mut rng = Stream::Labels.rng(seed, u64::MAX);
            train
                .iter()
                .map(|p| {
                    corpus
                        .pool
                        .models
                        .iter()
                        .map(|m| {
                            let s = index.get(&(p.id.as_str(), m.id.as_str())).ok_or_else(|| {
                                erp_core::Error::MissingPair { prompt_id: p.id.clone(), model_id: m.id.clone() }
                            })?;
                            s.validate()?;
                            Ok(s.rewards[rng.random_range(0..s.rewards.len())])
                        })
                        .collect()
                })
                .collect()
        }
    }
}

/// Runs the requested policies over the lambda grid on the Test split and
/// scores each configuration against empirical expected rewards.
pub fn sweep_policies(corpus: &Corpus, predictors: &[LinearPredictor], config: &SweepConfig) -> Result<SweepOutput> {
    let train = corpus.split(Split::Train);
    let test = corpus.split(Split::Test);
    let pool = &corpus.pool;
    let empirical = corpus.empirical(Split::Test)?;
    let predicted = predict_matrix(predictors, &test)?;
    let test_ids = empirical.prompt_ids.clone();
    let wants = |p: Policy| config.policies.contains(&p);

    let grid_for = |values: &[Vec<f64>]| match &config.grid {
        LambdaGrid::Auto { points } => auto_lambda_grid(auto_lambda_max(values, &pool.costs()), *points),
        LambdaGrid::Explicit(list) => list.clone(),
    };
    let reward_grid = grid_for(&predicted.values);

    let mut points = Vec::new();
    let mut assignments = Vec::new();
    let mut record = |a: RoutingAssignment, points: &mut Vec<ParetoPoint>| -> Result<()> {
        points.push(evaluate(&empirical, &a, pool)?);
        assignments.push(a);
        Ok(())
    };

    if wants(Policy::Erp) || wants(Policy::Permutation) {
        for (k, &lambda) in reward_grid.iter().enumerate() {
            let a = route_erp(&predicted, pool, lambda)?;
            let permuted = permute_assignment(&a, config.seed.wrapping_add(k as u64));
            if wants(Policy::Erp) {
                record(a, &mut points)?;
            }
            if wants(Policy::Permutation) {
                record(permuted, &mut points)?;
            }
        }
    }

    let mut zooter = None;
    let mut zooter_grid = Vec::new();
    if wants(Policy::Zooter) {
        let features: Vec<Vec<f64>> = train.iter().map(|p| p.embedding.clone()).collect();
        let targets = zooter_targets(corpus, &train, config.zooter_targets, config.seed)?;
        let model = fit_zooter(&features, &targets, &config.zooter)?;
        let logits = model.logit_matrix(&test, pool)?;
        zooter_grid = grid_for(&logits.values);
        for &lambda in &zooter_grid {
            record(route_zooter(&model, pool, lambda, &test)?, &mut points)?;
        }
        zooter = Some(model);
    }

    if wants(Policy::CategoryOracle) {
        let train_emp = ERMatrix::empirical(&train, &corpus.reward_sets, pool)?;
        for &lambda in &reward_grid {
            let table = per_category_oracle(&train, &train_emp, pool, lambda)?;
            record(route_by_category(&table, &test, lambda)?, &mut points)?;
        }
    }

    if wants(Policy::Fixed) {
        for i in 0..pool.len() {
            record(route_fixed(pool, i, &test_ids)?, &mut points)?;
        }
    }
    if wants(Policy::Random) {
        record(route_random(pool, &test_ids, config.seed), &mut points)?;
    }

    Ok(SweepOutput { points, assignments, reward_grid, zooter_grid, zooter })
}
