//! Prompts, reward samples and the per-model regression datasets built from
//! them.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::Stream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    #[default]
    Unassigned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub category: String,
    pub embedding: Vec<f64>,
    #[serde(default, skip_serializing)]
    pub split: Split,
}

impl PromptRecord {
    pub fn new(id: impl Into<String>, category: impl Into<String>, embedding: Vec<f64>) -> Self {
        Self { id: id.into(), category: category.into(), embedding, split: Split::Unassigned }
    }
}

/// The K sampled rewards for one (prompt, model) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSampleSet {
    pub prompt_id: String,
    pub model_id: String,
    pub rewards: Vec<f64>,
}

impl RewardSampleSet {
    pub fn validate(&self) -> Result<()> {
        if self.rewards.is_empty() {
            return Err(Error::EmptyRewards {
                prompt_id: self.prompt_id.clone(),
                model_id: self.model_id.clone(),
            });
        }
        if self.rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite(format!("rewards of {}/{}", self.prompt_id, self.model_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ERRow {
    pub prompt_id: String,
    pub embedding: Vec<f64>,
    pub target: f64,
}

/// Regression data for one model: embeddings paired with empirical expected
/// rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct ERDataset {
    pub model_id: String,
    pub rows: Vec<ERRow>,
}

impl ERDataset {
    pub fn dim(&self) -> Option<usize> {
        self.rows.first().map(|r| r.embedding.len())
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.target).collect()
    }
}

/// Mean of the sampled rewards. The caller guarantees at least one sample.
pub fn empirical_er(samples: &RewardSampleSet) -> f64 {
    mean(&samples.rewards)
}

/// Mean with Neumaier-compensated summation and a corrected division, so
/// that small inputs give the correctly rounded mean: `[1.0, 0.2, 0.0]`
/// yields exactly `0.4` where the naive `sum / n` yields
/// `0.39999999999999997`.
pub(crate) fn mean(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    let n = values.len() as f64;
    let quotient = sum / n;
    let remainder = libm::fma(-quotient, n, sum);
    quotient + (remainder + comp) / n
}

/// Checks id uniqueness, a shared embedding dimension and finiteness.
/// Returns the dimension, or `None` for an empty list.
pub fn validate_prompts(prompts: &[PromptRecord]) -> Result<Option<usize>> {
    let mut seen = BTreeSet::new();
    let dim = prompts.first().map(|p| p.embedding.len());
    for p in prompts {
        if !seen.insert(p.id.as_str()) {
            return Err(Error::DuplicatePrompt(p.id.clone()));
        }
        if let Some(d) = dim {
            if p.embedding.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: p.embedding.len() });
            }
        }
        if p.embedding.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding of {}", p.id)));
        }
    }
    Ok(dim)
}

pub fn validate_reward_sets(sets: &[RewardSampleSet]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for s in sets {
        s.validate()?;
        if !seen.insert((s.prompt_id.as_str(), s.model_id.as_str())) {
            return Err(Error::DuplicateRewardSet {
                prompt_id: s.prompt_id.clone(),
                model_id: s.model_id.clone(),
            });
        }
    }
    Ok(())
}

/// Assigns Train/Test per category: `floor(n * train_fraction)` prompts go
/// to Train, the rest to Test. Ids are sorted inside each category before a
/// seeded shuffle, so the result does not depend on input order.
pub fn stratified_split(
    prompts: &[PromptRecord],
    seed: u64,
    train_fraction: f64,
) -> Result<Vec<PromptRecord>> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_category: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for p in prompts {
        by_category.entry(p.category.as_str()).or_default().push(p.id.as_str());
    }
    let mut rng = Stream::Split.rng(seed, 0);
    let mut assignment: BTreeMap<&str, Split> = BTreeMap::new();
    for ids in by_category.values_mut() {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let n_train = libm::floor(ids.len() as f64 * train_fraction) as usize;
        for (i, id) in ids.iter().enumerate() {
            assignment.insert(id, if i < n_train { Split::Train } else { Split::Test });
        }
    }
    Ok(prompts
        .iter()
        .map(|p| PromptRecord { split: assignment[p.id.as_str()], ..p.clone() })
        .collect())
}

/// Joins prompts (optionally restricted to one split) with their reward sets
/// for `model_id`. Every selected prompt must be covered.
pub fn build_er_dataset(
    prompts: &[PromptRecord],
    sample_sets: &[RewardSampleSet],
    model_id: &str,
    split_filter: Option<Split>,
) -> Result<ERDataset> {
    let index: BTreeMap<&str, &RewardSampleSet> = sample_sets
        .iter()
        .filter(|s| s.model_id == model_id)
        .map(|s| (s.prompt_id.as_str(), s))
        .collect();
    let mut rows = Vec::new();
    for p in prompts.iter().filter(|p| split_filter.map_or(true, |s| p.split == s)) {
        let samples = index.get(p.id.as_str()).ok_or_else(|| Error::MissingPair {
            prompt_id: p.id.clone(),
            model_id: model_id.into(),
        })?;
        samples.validate()?;
        rows.push(ERRow {
            prompt_id: p.id.clone(),
            embedding: p.embedding.clone(),
            target: empirical_er(samples),
        });
    }
    Ok(ERDataset { model_id: model_id.into(), rows })
}
