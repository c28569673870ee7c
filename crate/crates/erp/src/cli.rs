//! Command-line entry points: `synth`, `train`, `eval`, `sweep`, `prop1`
//! and `serve`.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use erp_core::erp::LabelMode;
use erp_core::{
    generate, prop1_monte_carlo, stratified_split, MonteCarloOutcome, PoolEntry,
    RewardFamily, Split, SynthConfig, ZooterConfig,
};
use serde::{Deserialize, Serialize};

use crate::io::{self, write_bytes, write_json, write_json_lines};
use crate::manifest::RunManifest;
use crate::pipeline::{self, Corpus, EvalConfig, LambdaGrid, Policy, SweepConfig, ZooterTargets};
use crate::serve::{self, ServeConfig};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "erp", version, about = "Expected-reward prediction and cost-aware model routing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with known linear ground truth.
    Synth(SynthArgs),
    /// Split prompts and fit one ridge predictor per model.
    Train(TrainArgs),
    /// R^2, pairwise AUROC and win-rate report on the test split.
    Eval(EvalArgs),
    /// Sweep routing policies over lambda and write Pareto CSVs.
    Sweep(SweepArgs),
    /// Monte-Carlo check of the subgaussian win-rate bound.
    Prop1(Prop1Args),
    /// Serve routing decisions over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub n_categories: usize,
    #[arg(long, default_value_t = 250)]
    pub prompts_per_category: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 5)]
    pub n_models: usize,
    #[arg(long, default_value_t = 32)]
    pub samples_per_prompt: usize,
    #[arg(long, default_value_t = 0.5)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub cluster_spread: f64,
    #[arg(long, default_value_t = 0.5)]
    pub quality_step: f64,
    /// Comma-separated pool costs; defaults to 1,2,4,...
    #[arg(long, value_delimiter = ',')]
    pub costs: Vec<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long)]
    pub rewards: PathBuf,
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub train_fraction: f64,
}

#[derive(Debug, Args, Clone)]
pub struct TrainedArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Defaults to `<out-dir>/predictors`.
    #[arg(long)]
    pub predictors_dir: Option<PathBuf>,
    /// Split manifest written by `train`; defaults to `<out-dir>/split.json`.
    #[arg(long)]
    pub split: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LabelModeArg {
    Sample,
    Mean,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub trained: TrainedArgs,
    #[arg(long, value_enum, default_value_t = LabelModeArg::Sample)]
    pub label_mode: LabelModeArg,
    #[arg(long, default_value_t = 1e-3)]
    pub logistic_l2: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ZooterTargetsArg {
    Mean,
    Sample,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub trained: TrainedArgs,
    /// Comma-separated lambdas, or `auto`.
    #[arg(long, default_value = "auto")]
    pub lambda_grid: String,
    /// Number of points in the automatic grid.
    #[arg(long, default_value_t = 20)]
    pub grid_size: usize,
    #[arg(long, default_value_t = 1.0)]
    pub zooter_temperature: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub zooter_l2: f64,
    #[arg(long, default_value_t = 5000)]
    pub zooter_max_iter: usize,
    #[arg(long, value_enum, default_value_t = ZooterTargetsArg::Mean)]
    pub zooter_targets: ZooterTargetsArg,
    /// Comma-separated subset of erp,zooter,fixed,random,permutation,category_oracle.
    #[arg(long, default_value = "erp,zooter,fixed,random,permutation,category_oracle")]
    pub policies: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Gaussian,
    Uniform,
    Rademacher,
}

#[derive(Debug, Args)]
pub struct Prop1Args {
    #[arg(long, default_value_t = 0.0)]
    pub mu0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mu1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = FamilyArg::Gaussian)]
    pub family: FamilyArg,
    /// Also write the result JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub predictors_dir: PathBuf,
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    #[arg(long, default_value_t = 0.0)]
    pub default_lambda: f64,
}

pub const PROMPTS_FILE: &str = "prompts.jsonl";
pub const REWARDS_FILE: &str = "rewards.jsonl";
pub const POOL_FILE: &str = "pool.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const SPLIT_FILE: &str = "split.json";
pub const PREDICTORS_DIR: &str = "predictors";

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Prop1(a) => {
            let out = cmd_prop1(&a)?;
            if out.satisfied {
                Ok(())
            } else {
                Err(Error::Numerical(format!(
                    "empirical win rate {} is below bound {} minus slack {}",
                    out.empirical, out.bound, out.slack
                )))
            }
        }
        Command::Serve(a) => {
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
            runtime.block_on(serve::serve(ServeConfig {
                predictors_dir: a.predictors_dir,
                pool: a.pool,
                bind: a.bind,
                default_lambda: a.default_lambda,
            }))
        }
    }
}

#[derive(Serialize)]
struct PoolDocument<'a> {
    models: &'a [PoolEntry],
    manifest: &'a RunManifest,
}

#[derive(Serialize, Deserialize)]
pub struct GroundTruth {
    pub manifest: RunManifest,
    pub predictors: Vec<erp_core::LinearPredictor>,
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let config = SynthConfig {
        n_categories: args.n_categories,
        prompts_per_category: args.prompts_per_category,
        dim: args.dim,
        n_models: args.n_models,
        samples_per_prompt: args.samples_per_prompt,
        noise_sigma: args.noise_sigma,
        cluster_spread: args.cluster_spread,
        quality_step: args.quality_step,
        model_costs: args.costs.clone(),
        seed: args.seed,
    };
    config.validate().map_err(|e| Error::Usage(e.to_string()))?;
    let data = generate(&config)?;
    let manifest = RunManifest::new("synth", args.seed)
        .param("config", &config)
        .output(PROMPTS_FILE)
        .output(REWARDS_FILE)
        .output(POOL_FILE)
        .output(GROUND_TRUTH_FILE);
    let dir = &args.out_dir;
    write_json_lines(&dir.join(PROMPTS_FILE), &data.prompts)?;
    write_json_lines(&dir.join(REWARDS_FILE), &data.reward_sets)?;
    write_json(&dir.join(POOL_FILE), &PoolDocument { models: &data.pool.models, manifest: &manifest })?;
    write_json(&dir.join(GROUND_TRUTH_FILE), &GroundTruth { manifest, predictors: data.truth })?;
    tracing::info!(dir = %dir.display(), prompts = data.prompts.len(), "synthetic corpus written");
    Ok(())
}

fn load_corpus(data: &DataArgs) -> Result<Corpus> {
    let prompts = io::load_prompts(&data.prompts)?;
    let reward_sets = io::load_rewards(&data.rewards)?;
    let pool = io::load_pool(&data.pool)?;
    Ok(Corpus { prompts, reward_sets, pool })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SplitManifest {
    pub manifest: RunManifest,
    pub train_fraction: f64,
    pub models: Vec<String>,
    pub splits: BTreeMap<String, Split>,
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    if !(args.beta >= 0.0) {
        return Err(Error::Usage(format!("--beta must be >= 0, got {}", args.beta)));
    }
    if !(args.train_fraction > 0.0 && args.train_fraction < 1.0) {
        return Err(Error::Usage(format!("--train-fraction must be in (0, 1), got {}", args.train_fraction)));
    }
    let d = &args.data;
    let mut corpus = load_corpus(d)?;
    corpus.prompts = stratified_split(&corpus.prompts, d.seed, args.train_fraction)?;
    let predictors = pipeline::train_predictors(&corpus, args.beta)?;

    let mut manifest = RunManifest::new("train", d.seed)
        .input("prompts", &d.prompts)
        .input("rewards", &d.rewards)
        .input("pool", &d.pool)
        .param("beta", args.beta)
        .param("train_fraction", args.train_fraction)
        .output(SPLIT_FILE);
    let pred_dir = d.out_dir.join(PREDICTORS_DIR);
    for p in &predictors {
        io::write_predictor(&pred_dir, p)?;
        manifest = manifest.output(format!("{PREDICTORS_DIR}/{}", io::predictor_file_name(&p.model_id)));
    }
    let split = SplitManifest {
        manifest,
        train_fraction: args.train_fraction,
        models: corpus.pool.ids(),
        splits: corpus.prompts.iter().map(|p| (p.id.clone(), p.split)).collect(),
    };
    write_json(&d.out_dir.join(SPLIT_FILE), &split)?;
    tracing::info!(models = predictors.len(), "predictors written");
    Ok(())
}

/// Corpus with the split from `train` applied, plus pool-ordered predictors.
fn load_trained(args: &TrainedArgs) -> Result<(Corpus, Vec<erp_core::LinearPredictor>, PathBuf, PathBuf)> {
    let mut corpus = load_corpus(&args.data)?;
    let split_path = args.split.clone().unwrap_or_else(|| args.data.out_dir.join(SPLIT_FILE));
    let pred_dir = args.predictors_dir.clone().unwrap_or_else(|| args.data.out_dir.join(PREDICTORS_DIR));
    let split: SplitManifest = io::load_json(&split_path)?;
    if split.splits.len() != corpus.prompts.len() {
        return Err(Error::Data(format!(
            "split manifest covers {} prompts but the prompts file has {}",
            split.splits.len(),
            corpus.prompts.len()
        )));
    }
    for p in &mut corpus.prompts {
        p.split = *split.splits.get(&p.id).ok_or_else(|| {
            Error::Data(format!("prompt `{}` is not in the split manifest {}", p.id, split_path.display()))
        })?;
    }
    for m in corpus.pool.ids() {
        if !split.models.contains(&m) {
            return Err(Error::Data(format!("split manifest was not trained for model `{m}`")));
        }
    }
    let predictors = io::load_predictors_for_pool(&pred_dir, &corpus.pool)?;
    Ok((corpus, predictors, split_path, pred_dir))
}

fn trained_manifest(name: &str, args: &TrainedArgs, split: &Path, preds: &Path) -> RunManifest {
    RunManifest::new(name, args.data.seed)
        .input("prompts", &args.data.prompts)
        .input("rewards", &args.data.rewards)
        .input("pool", &args.data.pool)
        .input("split", split)
        .input("predictors_dir", preds)
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    manifest: RunManifest,
    #[serde(flatten)]
    report: &'a pipeline::Report,
}

pub const REPORT_FILE: &str = "report.json";
pub const SCATTER_FILE: &str = "scatter.csv";
pub const PREDICTED_FILE: &str = "er_predicted.csv";
pub const EMPIRICAL_FILE: &str = "er_empirical.csv";

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let (corpus, predictors, split, preds) = load_trained(&args.trained)?;
    let label_mode = match args.label_mode {
        LabelModeArg::Sample => LabelMode::Sample,
        LabelModeArg::Mean => LabelMode::Mean,
    };
    let config = EvalConfig { seed: args.trained.data.seed, label_mode, logistic_l2: args.logistic_l2 };
    let report = pipeline::evaluate_report(&corpus, &predictors, &config)?;
    let out = &args.trained.data.out_dir;

    let test = corpus.split(Split::Test);
    let mut scatter = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut scatter);
        w.write_record(["prompt_id", "category", "model_id", "predicted_er", "empirical_er"]).expect("in-memory");
        for (i, p) in test.iter().enumerate() {
            for (j, m) in corpus.pool.models.iter().enumerate() {
                w.write_record([
                    p.id.as_str(),
                    p.category.as_str(),
                    m.id.as_str(),
                    &io::sig17(report.predicted.values[i][j]),
                    &io::sig17(report.empirical.values[i][j]),
                ])
                .expect("in-memory");
            }
        }
        w.flush().expect("in-memory");
    }
    write_bytes(&out.join(SCATTER_FILE), &scatter)?;
    write_bytes(&out.join(PREDICTED_FILE), &io::er_matrix_csv(&report.predicted))?;
    write_bytes(&out.join(EMPIRICAL_FILE), &io::er_matrix_csv(&report.empirical))?;

    let manifest = trained_manifest("eval", &args.trained, &split, &preds)
        .param("label_mode", format!("{:?}", args.label_mode).to_lowercase())
        .param("logistic_l2", args.logistic_l2)
        .output(REPORT_FILE)
        .output(SCATTER_FILE)
        .output(PREDICTED_FILE)
        .output(EMPIRICAL_FILE);
    write_json(&out.join(REPORT_FILE), &ReportDocument { manifest, report: &report })?;
    Ok(())
}

pub fn parse_lambda_grid(text: &str, grid_size: usize) -> Result<LambdaGrid> {
    if text.trim() == "auto" {
        if grid_size == 0 {
            return Err(Error::Usage("--grid-size must be >= 1".into()));
        }
        return Ok(LambdaGrid::Auto { points: grid_size });
    }
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Usage(format!("bad lambda `{s}`: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() || values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Usage("lambdas must be finite and >= 0".into()));
    }
    Ok(LambdaGrid::Explicit(values))
}

pub fn parse_policies(text: &str) -> Result<Vec<Policy>> {
    let mut out = Vec::new();
    for name in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let p = Policy::parse(name).ok_or_else(|| Error::Usage(format!("unknown policy `{name}`")))?;
        if !out.contains(&p) {
            out.push(p);
        }
    }
    if out.is_empty() {
        return Err(Error::Usage("no policies selected".into()));
    }
    Ok(out)
}

pub const PARETO_FILE: &str = "pareto.csv";
pub const ASSIGNMENTS_FILE: &str = "assignments.csv";
pub const SWEEP_FILE: &str = "sweep.json";

#[derive(Serialize)]
struct SweepDocument<'a> {
    manifest: RunManifest,
    reward_lambda_grid: &'a [f64],
    /// Applied to Zooter logits, which are not in reward units.
    zooter_lambda_grid: &'a [f64],
    zooter_fit: Option<pipeline::ZooterFit>,
}

pub fn frontier_file_name(policy: &str) -> String {
    let safe: String = policy.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect();
    format!("frontier_{safe}.csv")
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let grid = parse_lambda_grid(&args.lambda_grid, args.grid_size)?;
    let policies = parse_policies(&args.policies)?;
    if !(args.zooter_temperature > 0.0) {
        return Err(Error::Usage("--zooter-temperature must be > 0".into()));
    }
    let (corpus, predictors, split, preds) = load_trained(&args.trained)?;
    let config = SweepConfig {
        seed: args.trained.data.seed,
        policies: policies.clone(),
        grid,
        zooter: ZooterConfig {
            temperature: args.zooter_temperature,
            l2: args.zooter_l2,
            max_iter: args.zooter_max_iter,
            ..ZooterConfig::default()
        },
        zooter_targets: match args.zooter_targets {
            ZooterTargetsArg::Mean => ZooterTargets::Mean,
            ZooterTargetsArg::Sample => ZooterTargets::Sample,
        },
    };
    let output = pipeline::sweep_policies(&corpus, &predictors, &config)?;
    let out = &args.trained.data.out_dir;

    write_bytes(&out.join(PARETO_FILE), &io::pareto_csv(&output.points))?;
    write_bytes(&out.join(ASSIGNMENTS_FILE), &io::assignments_csv(&output.assignments, &corpus.pool))?;
    let mut manifest = trained_manifest("sweep", &args.trained, &split, &preds)
        .param("lambda_grid", &args.lambda_grid)
        .param("grid_size", args.grid_size)
        .param("policies", policies.iter().map(|p| p.name()).collect::<Vec<_>>())
        .param("zooter", config.zooter)
        .param("zooter_targets", format!("{:?}", args.zooter_targets).to_lowercase())
        .output(PARETO_FILE)
        .output(ASSIGNMENTS_FILE);
    for (policy, frontier) in output.frontiers() {
        let name = frontier_file_name(&policy);
        write_bytes(&out.join(&name), &io::pareto_csv(&frontier))?;
        manifest = manifest.output(name);
    }
    let doc = SweepDocument {
        manifest: manifest.output(SWEEP_FILE),
        reward_lambda_grid: &output.reward_grid,
        zooter_lambda_grid: &output.zooter_grid,
        zooter_fit: output.zooter.as_ref().map(|z| pipeline::ZooterFit {
            iterations: z.iterations,
            gradient_norm: z.gradient_norm,
            temperature: z.target_temperature,
        }),
    };
    if let Some(z) = &doc.zooter_fit {
        if z.gradient_norm > config.zooter.tolerance {
            tracing::warn!(residual = z.gradient_norm, "zooter stopped at the iteration cap");
        }
    }
    write_json(&out.join(SWEEP_FILE), &doc)?;
    Ok(())
}

#[derive(Serialize)]
struct Prop1Document {
    manifest: RunManifest,
    mu0: f64,
    mu1: f64,
    sigma: f64,
    n: usize,
    #[serde(flatten)]
    outcome: MonteCarloOutcome,
}

pub fn cmd_prop1(args: &Prop1Args) -> Result<MonteCarloOutcome> {
    if args.n == 0 {
        return Err(Error::Usage("--n must be >= 1".into()));
    }
    let family = match args.family {
        FamilyArg::Gaussian => RewardFamily::Gaussian,
        FamilyArg::Uniform => RewardFamily::Uniform,
        FamilyArg::Rademacher => RewardFamily::Rademacher,
    };
    let outcome = prop1_monte_carlo(args.mu0, args.mu1, args.sigma, args.n, args.seed, family)?;
    let doc = Prop1Document {
        manifest: RunManifest::new("prop1", args.seed).param("family", format!("{family:?}").to_lowercase()),
        mu0: args.mu0,
        mu1: args.mu1,
        sigma: args.sigma,
        n: args.n,
        outcome,
    };
    let text = serde_json::to_string_pretty(&doc).expect("serializable");
    println!("{text}");
    if let Some(path) = &args.out {
        write_json(path, &doc)?;
    }
    Ok(outcome)
}
