//! Building an embedding for any method from a pool and a query budget.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::Hyperparameters;
use crate::env::{EnvKind, FeatureVector};
use crate::error::{Error, Result};
use crate::oracle::simulate_similarity;
use crate::representation::{
    train_pref_representation, train_sirl, train_vae, EmbeddingModel, PrefMode, Pretrain, Provenance,
};
use crate::tensor::Matrix;
use crate::train::derive_seed;

/// A representation method together with its downstream freezing mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Method {
    pub kind: Provenance,
    pub frozen: bool,
}

impl Method {
    /// SIRL variants default to a frozen embedding, every baseline to an
    /// unfrozen one.
    pub fn with_default_freezing(kind: Provenance) -> Self {
        Self {
            kind,
            frozen: matches!(kind, Provenance::Sirl | Provenance::SirlVae),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = if self.frozen { "frozen" } else { "unfrozen" };
        write!(f, "{}/{mode}", self.kind)
    }
}

/// Accepts `sirl`, `multipref-10`, or an explicit `vae/frozen`.
impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, mode) = match s.split_once('/') {
            Some((k, m)) => (k, Some(m)),
            None => (s, None),
        };
        let kind: Provenance = kind.parse()?;
        if kind == Provenance::Fixture {
            return Err(Error::invalid("the fixture embedding is not a trainable method"));
        }
        let mut method = Self::with_default_freezing(kind);
        match mode {
            None => {}
            Some("frozen") => method.frozen = true,
            Some("unfrozen") => method.frozen = false,
            Some(other) => return Err(Error::invalid(format!("unknown freezing mode `{other}`"))),
        }
        Ok(method)
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Trains (or draws) the embedding for `kind` with a budget of `n` simulated
/// queries on the pool. VAE ignores `n` and learns from the pool itself.
pub fn build_embedding(
    kind: Provenance,
    env: EnvKind,
    inputs: &Matrix,
    features: &[FeatureVector],
    n: usize,
    hp: &Hyperparameters,
    seed: u64,
) -> Result<EmbeddingModel> {
    let (hidden, dim) = (hp.hidden, hp.embedding_dim);
    let similarity = || -> Result<Vec<[usize; 3]>> {
        let answers = simulate_similarity(features, n, derive_seed(seed, "similarity"), "oracle")?;
        Ok(answers.iter().map(|a| a.triplet()).collect())
    };
    let vae = || train_vae(env, inputs, hidden, dim, &hp.vae, derive_seed(seed, "vae"));
    let model = match kind {
        Provenance::Sirl => train_sirl(env, inputs, &similarity()?, hidden, dim, &hp.sirl, Pretrain::None, seed)?.0,
        Provenance::SirlVae => {
            let (warm, _, _) = vae()?;
            train_sirl(env, inputs, &similarity()?, hidden, dim, &hp.sirl, Pretrain::Vae(warm), seed)?.0
        }
        Provenance::Vae => {
            let mut m = vae()?.0;
            m.seed = seed;
            m
        }
        Provenance::SinglePref => {
            train_pref_representation(env, inputs, features, PrefMode::Single, n, hidden, dim, &hp.pref_rep, seed)?.embedding
        }
        Provenance::MultiPref(k) => {
            train_pref_representation(env, inputs, features, PrefMode::Multi(k), n, hidden, dim, &hp.pref_rep, seed)?
                .embedding
        }
        Provenance::Random => EmbeddingModel::random(env, hidden, dim, seed)?,
        Provenance::Fixture => return Err(Error::invalid("the fixture embedding is not a trainable method")),
    };
    Ok(model)
}
