//! Leave-one-responder-out evaluation: a similarity embedding trained without
//! a person's answers, scored on that person's own preferences.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::split::train_test_split;
use crate::config::{RewardConfig, SirlConfig};
use crate::env::EnvKind;
use crate::error::{Error, Result};
use crate::oracle::{PreferenceLabel, SimilarityAnswer};
use crate::representation::{train_sirl, EmbeddingModel, Pretrain};
use crate::reward::train_reward;
use crate::tensor::Matrix;
use crate::train::derive_seed;

/// Everything one labeler contributed.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponderData {
    pub responder: String,
    pub similarity: Vec<SimilarityAnswer>,
    pub preferences: Vec<PreferenceLabel>,
}

impl ResponderData {
    /// Groups answers and labels by their `responder` field, in order of
    /// first appearance.
    pub fn group(similarity: &[SimilarityAnswer], preferences: &[PreferenceLabel]) -> Vec<ResponderData> {
        let mut out: Vec<ResponderData> = Vec::new();
        let slot = |out: &mut Vec<ResponderData>, who: &str| -> usize {
            match out.iter().position(|r| r.responder == who) {
                Some(i) => i,
                None => {
                    out.push(ResponderData {
                        responder: who.to_owned(),
                        similarity: Vec::new(),
                        preferences: Vec::new(),
                    });
                    out.len() - 1
                }
            }
        };
        for a in similarity {
            let i = slot(&mut out, &a.responder);
            out[i].similarity.push(a.clone());
        }
        for p in preferences {
            let i = slot(&mut out, &p.responder);
            out[i].preferences.push(p.clone());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeldoutConfig {
    /// Cross-validation splits of each responder's preferences.
    pub splits: usize,
    pub train_fraction: f64,
    pub hidden: usize,
    pub embedding_dim: usize,
    pub sirl: SirlConfig,
    pub reward: RewardConfig,
    pub frozen: bool,
}

impl HeldoutConfig {
    pub fn new(hidden: usize, embedding_dim: usize, sirl: SirlConfig, reward: RewardConfig) -> Self {
        Self {
            splits: 50,
            train_fraction: 0.7,
            hidden,
            embedding_dim,
            sirl,
            reward,
            frozen: true,
        }
    }
}

/// Cross-validated accuracy on one responder's preferences, for an embedding
/// trained without them (`heldout`) and with everyone (`pooled`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldoutReport {
    pub responder: String,
    pub heldout: f64,
    pub pooled: f64,
    pub heldout_splits: Vec<f64>,
    pub pooled_splits: Vec<f64>,
}

fn sirl_on(
    env: EnvKind,
    inputs: &Matrix,
    answers: impl Iterator<Item = [usize; 3]>,
    config: &HeldoutConfig,
    seed: u64,
) -> Result<EmbeddingModel> {
    let triplets: Vec<[usize; 3]> = answers.collect();
    Ok(train_sirl(
        env,
        inputs,
        &triplets,
        config.hidden,
        config.embedding_dim,
        &config.sirl,
        Pretrain::None,
        seed,
    )?
    .0)
}

/// Accuracy per split of reward models trained on `train_fraction` of the
/// labels and tested on the rest.
pub fn cross_validated_accuracy(
    embedding: &EmbeddingModel,
    inputs: &Matrix,
    labels: &[PreferenceLabel],
    config: &HeldoutConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    (0..config.splits)
        .into_par_iter()
        .map(|s| {
            let (train, test) = train_test_split(labels.len(), config.train_fraction, derive_seed(seed, &format!("cv-{s}")));
            if train.is_empty() || test.is_empty() {
                return Err(Error::invalid("too few preference labels to split"));
            }
            let pick = |idx: &[usize]| idx.iter().map(|&i| labels[i].clone()).collect::<Vec<_>>();
            let test = pick(&test);
            let (model, _) = train_reward(
                embedding,
                inputs,
                &pick(&train),
                &config.reward,
                config.frozen,
                derive_seed(seed, &format!("cv-model-{s}")),
            )?;
            model.accuracy(inputs, &test)
        })
        .collect()
}

/// Leaves each responder out in turn. The pooled embedding is trained once on
/// every responder's similarity answers; both embeddings are scored with the
/// same splits and reward seeds.
pub fn heldout_eval(
    env: EnvKind,
    inputs: &Matrix,
    responders: &[ResponderData],
    config: &HeldoutConfig,
    seed: u64,
) -> Result<Vec<HeldoutReport>> {
    if responders.len() < 2 {
        return Err(Error::invalid("held-out evaluation needs at least two responders"));
    }
    if let Some(r) = responders.iter().find(|r| r.similarity.is_empty() || r.preferences.is_empty()) {
        return Err(Error::invalid(format!("responder `{}` has no data", r.responder)));
    }
    let sirl_seed = derive_seed(seed, "heldout-sirl");
    let pooled = sirl_on(
        env,
        inputs,
        responders.iter().flat_map(|r| r.similarity.iter().map(SimilarityAnswer::triplet)),
        config,
        sirl_seed,
    )?;
    responders
        .iter()
        .enumerate()
        .map(|(i, who)| {
            let others = responders
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .flat_map(|(_, r)| r.similarity.iter().map(SimilarityAnswer::triplet));
            let heldout_emb = sirl_on(env, inputs, others, config, sirl_seed)?;
            let cv_seed = derive_seed(seed, "heldout-cv");
            let heldout_splits = cross_validated_accuracy(&heldout_emb, inputs, &who.preferences, config, cv_seed)?;
            let pooled_splits = cross_validated_accuracy(&pooled, inputs, &who.preferences, config, cv_seed)?;
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            Ok(HeldoutReport {
                responder: who.responder.clone(),
                heldout: mean(&heldout_splits),
                pooled: mean(&pooled_splits),
                heldout_splits,
                pooled_splits,
            })
        })
        .collect()
}
