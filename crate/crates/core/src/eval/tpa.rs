//! Test preference accuracy: reward models trained on an embedding from `M`
//! labeled pairs per test user, scored on held-out pairs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RewardConfig;
use crate::env::FeatureVector;
use crate::error::{Error, Result};
use crate::oracle::{answer_preference, sample_preference_queries, sample_rewards, GroundTruthReward, PreferenceLabel};
use crate::representation::EmbeddingModel;
use crate::reward::train_reward;
use crate::tensor::Matrix;
use crate::train::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TpaConfig {
    /// Number of sampled test users.
    pub rewards: usize,
    /// Labeled pairs drawn per test user before the split.
    pub pairs_per_reward: usize,
    pub train_fraction: f64,
    pub reward: RewardConfig,
}

impl TpaConfig {
    pub fn new(reward: RewardConfig) -> Self {
        Self {
            rewards: 20,
            pairs_per_reward: 1000,
            train_fraction: 0.8,
            reward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpaReport {
    pub method: String,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub frozen: bool,
    /// One accuracy per test reward, in sampling order.
    pub accuracies: Vec<f64>,
    pub mean: f64,
}

/// Test users for an evaluation seed; shared by every method evaluated with
/// that seed so comparisons are paired.
pub fn test_rewards(count: usize, seed: u64) -> Result<Vec<GroundTruthReward>> {
    sample_rewards(count, derive_seed(seed, "tpa-rewards"))
}

/// Noise-free labeled pairs for one test user, split into train and test.
pub fn labeled_pairs(
    features: &[FeatureVector],
    reward: &GroundTruthReward,
    count: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<PreferenceLabel>, Vec<PreferenceLabel>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<PreferenceLabel> = sample_preference_queries(features.len(), count, &mut rng)?
        .into_iter()
        .map(|q| PreferenceLabel {
            query_id: q.id,
            a: q.a,
            b: q.b,
            label: answer_preference(reward, &features[q.a], &features[q.b]),
            responder: String::new(),
            response_ms: None,
        })
        .collect();
    let cut = (count as f64 * train_fraction).round() as usize;
    let test = pairs.split_off(cut);
    Ok((pairs, test))
}

/// Mean accuracy over the test users of reward models trained on the first
/// `m` training pairs of each.
pub fn tpa(
    embedding: &EmbeddingModel,
    inputs: &Matrix,
    features: &[FeatureVector],
    m: usize,
    config: &TpaConfig,
    frozen: bool,
    seed: u64,
) -> Result<TpaReport> {
    if m == 0 {
        return Err(Error::invalid("M must be at least 1"));
    }
    if features.len() != inputs.rows() {
        return Err(Error::shape("features and inputs describe different pools"));
    }
    let rewards = test_rewards(config.rewards, seed)?;
    let accuracies = rewards
        .par_iter()
        .enumerate()
        .map(|(i, reward)| {
            let (train, test) = labeled_pairs(
                features,
                reward,
                config.pairs_per_reward,
                config.train_fraction,
                derive_seed(seed, &format!("tpa-pairs-{i}")),
            )?;
            if train.len() < m || test.is_empty() {
                return Err(Error::invalid(format!(
                    "M={m} needs more than {} pairs per test user",
                    config.pairs_per_reward
                )));
            }
            let (model, _) = train_reward(
                embedding,
                inputs,
                &train[..m],
                &config.reward,
                frozen,
                derive_seed(seed, &format!("tpa-model-{i}")),
            )?;
            model.accuracy(inputs, &test)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    Ok(TpaReport {
        method: embedding.provenance.to_string(),
        n: embedding.budget,
        m,
        seed,
        frozen,
        accuracies,
        mean,
    })
}
