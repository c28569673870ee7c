//! Seeded synthetic benchmark with linear ground truth.
//!
//! Each category owns a Gaussian cluster of embeddings; each model owns a
//! true linear expected-reward function; each stored reward is the true
//! expected reward plus Gaussian noise. Everything downstream can therefore
//! be checked against known answers.

use alloc::format;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{PromptRecord, RewardSampleSet};
use crate::erp::{ModelPool, PoolEntry};
use crate::ridge::LinearPredictor;
use crate::rng::Stream;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_categories: usize,
    pub prompts_per_category: usize,
    pub dim: usize,
    pub n_models: usize,
    pub samples_per_prompt: usize,
    pub noise_sigma: f64,
    pub cluster_spread: f64,
    /// Gap in true bias between the cheapest and the most expensive model,
    /// so larger models are better on average but not everywhere.
    pub quality_step: f64,
    /// Pool costs; empty means `1, 2, 4, ...`.
    #[serde(default)]
    pub model_costs: Vec<f64>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_categories: 4,
            prompts_per_category: 250,
            dim: 16,
            n_models: 5,
            samples_per_prompt: 32,
            noise_sigma: 0.5,
            cluster_spread: 1.0,
            quality_step: 0.5,
            model_costs: Vec::new(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_categories", self.n_categories),
            ("prompts_per_category", self.prompts_per_category),
            ("dim", self.dim),
            ("n_models", self.n_models),
            ("samples_per_prompt", self.samples_per_prompt),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::InvalidArgument("noise_sigma must be >= 0".into()));
        }
        if !(self.cluster_spread > 0.0) || !self.cluster_spread.is_finite() {
            return Err(Error::InvalidArgument("cluster_spread must be > 0".into()));
        }
        if !self.quality_step.is_finite() {
            return Err(Error::InvalidArgument("quality_step must be finite".into()));
        }
        if !self.model_costs.is_empty() && self.model_costs.len() != self.n_models {
            return Err(Error::LengthMismatch { left: self.n_models, right: self.model_costs.len() });
        }
        Ok(())
    }

    fn costs(&self) -> Vec<f64> {
        if self.model_costs.is_empty() {
            (0..self.n_models).map(|m| libm::pow(2.0, m as f64)).collect()
        } else {
            self.model_costs.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub prompts: Vec<PromptRecord>,
    pub reward_sets: Vec<RewardSampleSet>,
    pub pool: ModelPool,
    /// True expected-reward functions, pool order.
    pub truth: Vec<LinearPredictor>,
}

impl SynthData {
    /// True expected reward of every prompt for every model.
    pub fn true_er(&self) -> Vec<Vec<f64>> {
        self.prompts
            .iter()
            .map(|p| self.truth.iter().map(|t| t.predict_unchecked(&p.embedding)).collect())
            .collect()
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let mut rng = Stream::Synth.rng(config.seed, 0);
    let d = config.dim;
    let mut gauss = |scale: f64| -> f64 {
        let z: f64 = StandardNormal.sample(&mut rng);
        scale * z
    };

    let centers: Vec<Vec<f64>> = (0..config.n_categories).map(|_| (0..d).map(|_| gauss(1.0)).collect()).collect();
    let weight_scale = 1.0 / libm::sqrt(d as f64);
    let costs = config.costs();
    let truth: Vec<LinearPredictor> = (0..config.n_models)
        .map(|m| {
            let weights = (0..d).map(|_| gauss(weight_scale)).collect();
            let bias = if config.n_models > 1 {
                config.quality_step * m as f64 / (config.n_models - 1) as f64
            } else {
                0.0
            };
            LinearPredictor { model_id: format!("m{m}"), beta: 0.0, dim: d, bias, weights }
        })
        .collect();

    let mut prompts = Vec::with_capacity(config.n_categories * config.prompts_per_category);
    for (c, center) in centers.iter().enumerate() {
        for i in 0..config.prompts_per_category {
            let embedding = center.iter().map(|mu| mu + gauss(config.cluster_spread)).collect();
            prompts.push(PromptRecord::new(format!("c{c}-p{i:05}"), format!("cat{c}"), embedding));
        }
    }

    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::InvalidArgument(format!("{e}")))?;
    let mut reward_sets = Vec::with_capacity(prompts.len() * config.n_models);
    for p in &prompts {
        for t in &truth {
            let er = t.predict_unchecked(&p.embedding);
            let rewards = (0..config.samples_per_prompt).map(|_| er + noise.sample(&mut rng)).collect();
            reward_sets.push(RewardSampleSet { prompt_id: p.id.clone(), model_id: t.model_id.clone(), rewards });
        }
    }

    let pool = ModelPool::new(
        truth.iter().zip(&costs).map(|(t, &cost)| PoolEntry { id: t.model_id.clone(), cost }).collect(),
    )?;
    Ok(SynthData { prompts, reward_sets, pool, truth })
}
