//! Training hyperparameters. `Hyperparameters::published` holds the published
//! training setup; `desk` shortens every schedule for single-core runs.

use serde::{Deserialize, Serialize};

use crate::env::EnvKind;

pub const EMBEDDING_DIM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SirlConfig {
    pub alpha: f64,
    pub epochs: usize,
    pub lr: f64,
    pub decay: f64,
    pub batch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub decay: f64,
    pub batch: usize,
    pub kl_weight: f64,
}

/// SinglePref / MultiPref representation pretraining.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrefRepConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub reward_l2: f64,
}

/// Downstream reward networks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub reward_l2: f64,
    pub hidden: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    /// Hidden width of embedding networks.
    pub hidden: usize,
    pub embedding_dim: usize,
    pub sirl: SirlConfig,
    pub vae: VaeConfig,
    pub pref_rep: PrefRepConfig,
    pub reward: RewardConfig,
}

impl Hyperparameters {
    pub fn published(env: EnvKind) -> Self {
        let hidden = env.hidden_width();
        let (pref_lr, reward_l2, reward_epochs) = match env {
            EnvKind::GridRobot => (0.01, 10.0, 500),
            EnvKind::ArmLite => (0.001, 1.0, 1000),
        };
        Self {
            hidden,
            embedding_dim: EMBEDDING_DIM,
            sirl: SirlConfig {
                alpha: 1.0,
                epochs: 3000,
                lr: 0.004,
                decay: 0.99999,
                batch: 64,
            },
            vae: VaeConfig {
                epochs: 2000,
                lr: 0.01,
                decay: 0.99999,
                batch: 32,
                kl_weight: 0.01,
            },
            pref_rep: PrefRepConfig {
                epochs: 5000,
                lr: pref_lr,
                batch: 32,
                reward_l2,
            },
            reward: RewardConfig {
                epochs: reward_epochs,
                lr: 0.001,
                batch: 64,
                reward_l2,
                hidden,
            },
        }
    }

    /// Shorter representation schedules; reward training is unchanged.
    pub fn desk(env: EnvKind) -> Self {
        let mut h = Self::published(env);
        h.sirl.epochs = 300;
        h.vae.epochs = 300;
        h.pref_rep.epochs = 300;
        h
    }
}
