//! Regret and cost of routing decisions, lambda sweeps, Pareto frontiers,
//! win-rate tables, per-category R^2 and the subgaussian win-rate bound.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::PromptRecord;
use crate::erp::{ERMatrix, ModelPool, Provenance};
use crate::ridge::{r_squared, LinearPredictor};
use crate::routing::RoutingAssignment;
use crate::rng::Stream;
use crate::{Error, Result};

/// Key of the all-prompts entry in per-category reports.
pub const AGGREGATE: &str = "Aggregate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub policy_name: String,
    pub lambda: f64,
    pub mean_cost: f64,
    pub mean_regret: f64,
}

fn check_assignment(empirical: &ERMatrix, assignment: &RoutingAssignment) -> Result<()> {
    if empirical.prompt_ids != assignment.prompt_ids {
        return Err(Error::InvalidArgument("assignment and matrix cover different prompts".into()));
    }
    if let Some(&bad) = assignment.chosen.iter().find(|&&c| c >= empirical.n_models()) {
        return Err(Error::IndexOutOfRange { index: bad, size: empirical.n_models() });
    }
    Ok(())
}

/// Per-prompt regret: best empirical expected reward minus the routed
/// model's.
pub fn regret(empirical: &ERMatrix, assignment: &RoutingAssignment) -> Result<Vec<f64>> {
    check_assignment(empirical, assignment)?;
    Ok(empirical
        .values
        .iter()
        .zip(&assignment.chosen)
        .map(|(row, &c)| row.iter().copied().fold(f64::NEG_INFINITY, f64::max) - row[c])
        .collect())
}

pub fn mean_regret(empirical: &ERMatrix, assignment: &RoutingAssignment) -> Result<f64> {
    let r = regret(empirical, assignment)?;
    if r.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(r.iter().sum::<f64>() / r.len() as f64)
}

pub fn mean_cost(assignment: &RoutingAssignment, pool: &ModelPool) -> Result<f64> {
    if assignment.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for &c in &assignment.chosen {
        total += pool.models.get(c).ok_or(Error::IndexOutOfRange { index: c, size: pool.len() })?.cost;
    }
    Ok(total / assignment.len() as f64)
}

pub fn evaluate(empirical: &ERMatrix, assignment: &RoutingAssignment, pool: &ModelPool) -> Result<ParetoPoint> {
    Ok(ParetoPoint {
        policy_name: assignment.policy_name.clone(),
        lambda: assignment.lambda,
        mean_cost: mean_cost(assignment, pool)?,
        mean_regret: mean_regret(empirical, assignment)?,
    })
}

/// One point per lambda for the policy family `route`.
pub fn sweep<F>(lambdas: &[f64], empirical: &ERMatrix, pool: &ModelPool, mut route: F) -> Result<Vec<ParetoPoint>>
where
    F: FnMut(f64) -> Result<RoutingAssignment>,
{
    lambdas.iter().map(|&l| evaluate(empirical, &route(l)?, pool)).collect()
}

/// Non-dominated points sorted by cost. A point is dominated when another
/// has cost and regret no larger, one strictly smaller; exact duplicates
/// collapse to the first occurrence.
pub fn pareto_frontier(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut sorted: Vec<&ParetoPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.mean_cost.total_cmp(&b.mean_cost).then(a.mean_regret.total_cmp(&b.mean_regret)));
    let mut out: Vec<ParetoPoint> = Vec::new();
    let mut best_regret = f64::INFINITY;
    for p in sorted {
        if p.mean_regret < best_regret {
            best_regret = p.mean_regret;
            out.push(p.clone());
        }
    }
    out
}

/// `true` when `a` weakly dominates `b`: no worse on both axes.
pub fn weakly_dominates(a: &ParetoPoint, b: &ParetoPoint) -> bool {
    a.mean_cost <= b.mean_cost && a.mean_regret <= b.mean_regret
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRateTable {
    pub category: String,
    /// Fraction of prompts each model wins, pool order.
    pub fractions: Vec<f64>,
    pub provenance: Provenance,
}

/// Per-category share of prompts on which each model attains the row
/// maximum. Tied maxima split the prompt's credit equally.
pub fn win_rate_table(matrix: &ERMatrix, categories: &[String]) -> Result<Vec<WinRateTable>> {
    if categories.len() != matrix.n_prompts() {
        return Err(Error::LengthMismatch { left: matrix.n_prompts(), right: categories.len() });
    }
    let m = matrix.n_models();
    let mut counts: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
    for (row, cat) in matrix.values.iter().zip(categories) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let winners = row.iter().filter(|&&v| v == max).count() as f64;
        let entry = counts.entry(cat.as_str()).or_insert_with(|| (vec![0.0; m], 0));
        for (acc, &v) in entry.0.iter_mut().zip(row) {
            if v == max {
                *acc += 1.0 / winners;
            }
        }
        entry.1 += 1;
    }
    Ok(counts
        .into_iter()
        .map(|(cat, (wins, n))| WinRateTable {
            category: cat.into(),
            fractions: wins.into_iter().map(|w| w / n as f64).collect(),
            provenance: matrix.provenance,
        })
        .collect())
}

/// R^2 of `predictor` within each category of `prompts`, plus
/// [`AGGREGATE`] over all of them. Categories whose targets are constant
/// carry an error instead of a value.
pub fn per_category_r2(
    predictor: &LinearPredictor,
    prompts: &[PromptRecord],
    targets: &[f64],
) -> Result<BTreeMap<String, Result<f64>>> {
    if prompts.len() != targets.len() {
        return Err(Error::LengthMismatch { left: prompts.len(), right: targets.len() });
    }
    let predictions = prompts.iter().map(|p| predictor.predict(&p.embedding)).collect::<Result<Vec<_>>>()?;
    let mut groups: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((p, &pred), &t) in prompts.iter().zip(&predictions).zip(targets) {
        let g = groups.entry(p.category.clone()).or_default();
        g.0.push(pred);
        g.1.push(t);
    }
    let mut out: BTreeMap<String, Result<f64>> =
        groups.into_iter().map(|(cat, (pred, tgt))| (cat, r_squared(&pred, &tgt))).collect();
    out.insert(AGGREGATE.into(), r_squared(&predictions, targets));
    Ok(out)
}

/// Lower bound on `P(r1 > r0)` for two `sigma^2`-subgaussian reward
/// distributions whose means differ by `er_gap`:
/// `1 - exp(-er_gap^2 / (4 sigma^2))`.
pub fn prop1_bound(er_gap: f64, sigma: f64) -> f64 {
    1.0 - libm::exp(-(er_gap * er_gap) / (4.0 * sigma * sigma))
}

/// Reward noise family for the Monte-Carlo check. Each variant is
/// `sigma^2`-subgaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardFamily {
    #[default]
    Gaussian,
    /// Uniform on `[mu - sigma, mu + sigma]`.
    Uniform,
    /// `mu +/- sigma` with equal probability.
    Rademacher,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloOutcome {
    pub empirical: f64,
    pub bound: f64,
    /// Allowed Monte-Carlo shortfall, `4 * sqrt(0.25 / n)`.
    pub slack: f64,
    pub satisfied: bool,
}

/// Draws `n` independent reward pairs `(r0, r1)` with means `mu0`, `mu1`
/// and reports the fraction with `r1 > r0` next to [`prop1_bound`].
pub fn prop1_monte_carlo(
    mu0: f64,
    mu1: f64,
    sigma: f64,
    n: usize,
    seed: u64,
    family: RewardFamily,
) -> Result<MonteCarloOutcome> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!("sigma must be positive, got {sigma}")));
    }
    if !mu0.is_finite() || !mu1.is_finite() {
        return Err(Error::NonFinite("means".into()));
    }
    let mut rng = Stream::MonteCarlo.rng(seed, 0);
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(alloc::format!("{e}")))?;
    let draw = |mu: f64, rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
        match family {
            RewardFamily::Gaussian => mu + noise.sample(rng),
            RewardFamily::Uniform => mu + rng.random_range(-sigma..=sigma),
            RewardFamily::Rademacher => {
                if rng.random::<bool>() {
                    mu + sigma
                } else {
                    mu - sigma
                }
            }
        }
    };
    let mut wins = 0usize;
    for _ in 0..n {
        let r0 = draw(mu0, &mut rng);
        let r1 = draw(mu1, &mut rng);
        if r1 > r0 {
            wins += 1;
        }
    }
    let empirical = wins as f64 / n as f64;
    let bound = prop1_bound(mu1 - mu0, sigma);
    let slack = 4.0 * libm::sqrt(0.25 / n as f64);
    Ok(MonteCarloOutcome { empirical, bound, slack, satisfied: empirical >= bound - slack })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::erp::PoolEntry;
    use alloc::format;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    fn emp(rows: Vec<Vec<f64>>) -> ERMatrix {
        let m = rows[0].len();
        ERMatrix::new(ids(rows.len()), (0..m).map(|i| format!("m{i}")).collect(), rows, Provenance::Empirical).unwrap()
    }

    fn assign(chosen: Vec<usize>) -> RoutingAssignment {
        RoutingAssignment { prompt_ids: ids(chosen.len()), chosen, policy_name: "t".into(), lambda: 0.0 }
    }

    fn pool(costs: &[f64]) -> ModelPool {
        ModelPool::new(costs.iter().enumerate().map(|(i, &c)| PoolEntry { id: format!("m{i}"), cost: c }).collect()).unwrap()
    }

    fn pt(c: f64, r: f64) -> ParetoPoint {
        ParetoPoint { policy_name: "x".into(), lambda: 0.0, mean_cost: c, mean_regret: r }
    }

    #[test]
    fn regret_examples() {
        let m = emp(vec![vec![0.9, 0.4], vec![0.1, 0.3]]);
        assert_eq!(regret(&m, &assign(vec![0, 1])).unwrap(), vec![0.0, 0.0]);
        assert_eq!(regret(&m, &assign(vec![1, 1])).unwrap()[0], 0.5);
        assert_eq!(mean_regret(&emp(vec![vec![0.3], vec![-1.0]]), &assign(vec![0, 0])).unwrap(), 0.0);
        assert!(regret(&m, &assign(vec![0])).is_err());
        assert!(regret(&m, &assign(vec![0, 2])).is_err());
    }

    #[test]
    fn cost_examples() {
        let p = pool(&[7.0, 70.0]);
        assert_eq!(mean_cost(&assign(vec![0, 0, 0]), &p).unwrap(), 7.0);
        assert_eq!(mean_cost(&assign(vec![0, 1]), &p).unwrap(), 38.5);
        assert_eq!(mean_cost(&assign(vec![]), &p), Err(Error::EmptyDataset));
    }

    #[test]
    fn frontier_examples() {
        assert_eq!(pareto_frontier(&[pt(1.0, 1.0), pt(2.0, 2.0)]), vec![pt(1.0, 1.0)]);
        assert_eq!(pareto_frontier(&[pt(2.0, 1.0), pt(1.0, 2.0)]), vec![pt(1.0, 2.0), pt(2.0, 1.0)]);
        assert_eq!(pareto_frontier(&[pt(1.0, 1.0), pt(1.0, 1.0)]), vec![pt(1.0, 1.0)]);
        assert_eq!(pareto_frontier(&[pt(1.0, 2.0), pt(1.0, 1.0)]), vec![pt(1.0, 1.0)]);
    }

    #[test]
    fn win_rate_examples() {
        let cats = vec!["a".to_string(); 3];
        let t = win_rate_table(&emp(vec![vec![1.0, 0.0]; 3]), &cats).unwrap();
        assert_eq!(t[0].fractions, vec![1.0, 0.0]);
        let t = win_rate_table(&emp(vec![vec![0.5, 0.5]; 3]), &cats).unwrap();
        assert_eq!(t[0].fractions, vec![0.5, 0.5]);
        let t = win_rate_table(&emp(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.2, 0.3]]), &cats).unwrap();
        assert!((t[0].fractions[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((t[0].fractions[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn per_category_r2_examples() {
        let prompts = vec![
            PromptRecord::new("a", "x", vec![1.0]),
            PromptRecord::new("b", "x", vec![2.0]),
            PromptRecord::new("c", "y", vec![3.0]),
            PromptRecord::new("d", "y", vec![4.0]),
        ];
        let p = LinearPredictor { model_id: "m".into(), beta: 1.0, dim: 1, bias: 0.0, weights: vec![1.0] };
        let r = per_category_r2(&p, &prompts, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(r["x"], Ok(1.0));
        assert_eq!(r["y"], Ok(1.0));
        assert_eq!(r[AGGREGATE], Ok(1.0));
        let flat = LinearPredictor { weights: vec![0.0], bias: 1.5, ..p.clone() };
        let r = per_category_r2(&flat, &prompts[..2], &[1.0, 2.0]).unwrap();
        assert_eq!(r["x"], Ok(0.0));
        let r = per_category_r2(&p, &prompts, &[1.0, 2.0, 5.0, 5.0]).unwrap();
        assert_eq!(r["y"], Err(Error::UndefinedRSquared));
        assert!(r["x"].is_ok());
    }

    #[test]
    fn bound_examples() {
        assert_eq!(prop1_bound(0.0, 1.0), 0.0);
        assert_eq!(prop1_bound(1e3, 1.0), 1.0);
        // 1 - e^-1
        assert!((prop1_bound(2.0, 1.0) - 0.6321205588285577).abs() < 1e-15);
    }

    #[test]
    fn monte_carlo_examples() {
        let n = 100_000;
        let mc_sigma = libm::sqrt(0.25 / n as f64);
        let equal = prop1_monte_carlo(0.0, 0.0, 1.0, n, 1, RewardFamily::Gaussian).unwrap();
        assert!((equal.empirical - 0.5).abs() < 4.0 * mc_sigma);
        assert!(equal.satisfied);
        let wide = prop1_monte_carlo(0.0, 4.0, 1.0, n, 2, RewardFamily::Gaussian).unwrap();
        assert!(wide.empirical >= wide.bound - 3.0 * mc_sigma);
        let sharp = prop1_monte_carlo(0.0, 0.1, 1e-9, 1000, 3, RewardFamily::Gaussian).unwrap();
        assert_eq!(sharp.empirical, 1.0);
        assert!(prop1_monte_carlo(0.0, 1.0, 1.0, 0, 0, RewardFamily::Gaussian).is_err());
        for family in [RewardFamily::Uniform, RewardFamily::Rademacher] {
            assert!(prop1_monte_carlo(0.0, 1.5, 1.0, 20_000, 4, family).unwrap().satisfied);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn frontier_is_minimal_and_covering(raw in proptest::collection::vec((0u8..10, 0u8..10), 1..40)) {
            let pts: Vec<ParetoPoint> = raw.iter().map(|&(c, r)| pt(c as f64, r as f64)).collect();
            let front = pareto_frontier(&pts);
            for a in &front {
                for b in &front {
                    if a != b {
                        prop_assert!(!weakly_dominates(a, b));
                    }
                }
            }
            for p in &pts {
                prop_assert!(front.iter().any(|f| weakly_dominates(f, p)));
            }
            prop_assert!(front.windows(2).all(|w| w[0].mean_cost < w[1].mean_cost));
        }

        #[test]
        fn regret_and_cost_bounds(
            rows in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 3), 1..30),
            seed in any::<u64>(),
        ) {
            let m = emp(rows);
            let p = pool(&[1.0, 3.0, 10.0]);
            let a = crate::routing::route_random(&p, &m.prompt_ids, seed);
            let point = evaluate(&m, &a, &p).unwrap();
            prop_assert!(point.mean_regret >= 0.0);
            prop_assert!(point.mean_cost >= p.min_cost() && point.mean_cost <= p.max_cost());
            let oracle = crate::routing::route_erp(&ERMatrix { provenance: Provenance::Predicted, ..m.clone() }, &p, 0.0).unwrap();
            prop_assert_eq!(mean_regret(&m, &oracle).unwrap(), 0.0);
        }

        #[test]
        fn order_preserving_predictions_share_win_rates(
            rows in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 3), 1..30),
            scale in 0.1f64..5.0, offset in -3.0f64..3.0,
        ) {
            let truth = emp(rows.clone());
            let pred = ERMatrix::new(truth.prompt_ids.clone(), truth.model_ids.clone(),
                rows.iter().map(|r| r.iter().map(|v| libm::exp(scale * v) + offset).collect()).collect(),
                Provenance::Predicted).unwrap();
            let cats: Vec<String> = (0..rows.len()).map(|i| format!("c{}", i % 3)).collect();
            let a = win_rate_table(&truth, &cats).unwrap();
            let b = win_rate_table(&pred, &cats).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(&x.fractions, &y.fractions);
                prop_assert!((x.fractions.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn bound_holds_for_gaussians(gap in 0.0f64..5.0, sigma in 0.2f64..3.0, seed in any::<u64>()) {
            let out = prop1_monte_carlo(0.0, gap, sigma, 4000, seed, RewardFamily::Gaussian).unwrap();
            prop_assert!(out.empirical >= out.bound - out.slack);
        }
    }
}
