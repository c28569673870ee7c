//! Expected-reward prediction (ERP) and cost-aware model routing.
//!
//! The pipeline this crate covers:
//!
//! 1. Per-prompt empirical expected reward: the mean of K sampled reward
//!    scores for a (prompt, model) pair ([`dataset`]).
//! 2. One ridge-regularized linear predictor per model on prompt embeddings
//!    ([`ridge`]).
//! 3. Pool-level scoring, pairwise win probabilities and AUROC ([`erp`]).
//! 4. Routing policies that maximize predicted reward minus `lambda * cost`,
//!    together with the baselines they are compared against ([`routing`]).
//! 5. Regret/cost evaluation, lambda sweeps, Pareto frontiers, win-rate
//!    tables and the subgaussian win-rate bound ([`eval`]).
//! 6. A seeded synthetic generator with linear ground truth ([`synth`]).
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! the HTTP service live in the `erp` crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod dataset;
pub mod erp;
mod error;
pub mod eval;
pub mod linalg;
pub mod ridge;
pub mod rng;
pub mod routing;
pub mod synth;

pub use dataset::{
    build_er_dataset, empirical_er, stratified_split, validate_prompts, validate_reward_sets,
    ERDataset, ERRow, PromptRecord, RewardSampleSet, Split,
};
pub use erp::{
    auroc, fit_pairwise_logistic, pairwise_win_label, pairwise_win_labels, pairwise_win_score,
    predict_matrix, ERMatrix, LogisticClassifier, ModelPool, PoolEntry, Provenance,
};
pub use error::{Error, Result};
pub use eval::{
    mean_cost, mean_regret, pareto_frontier, per_category_r2, prop1_bound, prop1_monte_carlo,
    regret, win_rate_table, MonteCarloOutcome, ParetoPoint, RewardFamily, WinRateTable,
    AGGREGATE,
};
pub use ridge::{fit_ridge, r_squared, LinearPredictor};
pub use rng::Stream;
pub use routing::{
    auto_lambda_grid, auto_lambda_max, fit_zooter, per_category_oracle, permute_assignment,
    route_by_category, route_erp, route_fixed, route_random, route_scores, route_zooter,
    RoutingAssignment, ZooterConfig, ZooterModel,
};
pub use synth::{generate, SynthConfig, SynthData};
