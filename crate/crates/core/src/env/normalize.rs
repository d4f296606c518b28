//! Per-dimension min-max feature scaling fit on a trajectory pool.

use serde::{Deserialize, Serialize};

use super::{FeatureVector, NUM_FEATURES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub min: FeatureVector,
    pub max: FeatureVector,
    /// Dimensions with zero range; they normalize to 0.
    pub degenerate: [bool; NUM_FEATURES],
}

impl FeatureNormalizer {
    pub fn fit(pool: &[FeatureVector]) -> Result<Self> {
        if pool.len() < 2 {
            return Err(Error::invalid("normalization needs at least two feature vectors"));
        }
        let mut min = [f64::INFINITY; NUM_FEATURES];
        let mut max = [f64::NEG_INFINITY; NUM_FEATURES];
        for f in pool {
            for k in 0..NUM_FEATURES {
                if !f[k].is_finite() {
                    return Err(Error::NonFinite("feature vector".into()));
                }
                min[k] = min[k].min(f[k]);
                max[k] = max[k].max(f[k]);
            }
        }
        let degenerate = std::array::from_fn(|k| max[k] == min[k]);
        for (k, d) in degenerate.iter().enumerate() {
            if *d {
                log::warn!("feature {k} is constant over the pool; normalizing it to 0");
            }
        }
        Ok(Self {
            min,
            max,
            degenerate,
        })
    }

    pub fn apply(&self, f: &FeatureVector) -> FeatureVector {
        std::array::from_fn(|k| {
            if self.degenerate[k] {
                0.0
            } else {
                (f[k] - self.min[k]) / (self.max[k] - self.min[k])
            }
        })
    }

    pub fn apply_all(&self, pool: &[FeatureVector]) -> Vec<FeatureVector> {
        pool.iter().map(|f| self.apply(f)).collect()
    }

    pub fn any_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }
}
