//! Per-responder query plans.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sirl_core::train::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    PracticeSimilarity,
    Similarity,
    PracticePreference,
    Preference,
}

impl Phase {
    /// Practice answers are logged but never exported.
    pub fn is_practice(self) -> bool {
        matches!(self, Phase::PracticeSimilarity | Phase::PracticePreference)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QueryKind {
    Similarity { trajectories: [usize; 3] },
    Preference { trajectories: [usize; 2] },
}

impl QueryKind {
    pub fn trajectories(&self) -> &[usize] {
        match self {
            QueryKind::Similarity { trajectories } => trajectories,
            QueryKind::Preference { trajectories } => trajectories,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedQuery {
    /// Position in the session, unique per responder.
    pub id: u64,
    pub phase: Phase,
    pub query: QueryKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    /// Practice queries at the start of each phase.
    pub practice: usize,
    /// Recorded queries per phase.
    pub recorded: usize,
    pub seed: u64,
    /// Shown with every preference query.
    pub scenario: String,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            practice: 5,
            recorded: 100,
            seed: 0,
            scenario: "Pick the trajectory you would rather see the robot execute.".into(),
        }
    }
}

/// The full query list for `responder`, a pure function of the seed, the
/// responder id, and the pool size.
pub fn plan(config: &ServiceConfig, responder: &str, pool_len: usize) -> Vec<PlannedQuery> {
    assert!(pool_len >= 3, "similarity queries need three trajectories");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("session/{responder}")));
    let phases = [
        (Phase::PracticeSimilarity, config.practice),
        (Phase::Similarity, config.recorded),
        (Phase::PracticePreference, config.practice),
        (Phase::Preference, config.recorded),
    ];
    let mut out = Vec::new();
    for (phase, count) in phases {
        for _ in 0..count {
            let query = match phase {
                Phase::PracticeSimilarity | Phase::Similarity => {
                    let i = sample(&mut rng, pool_len, 3);
                    QueryKind::Similarity {
                        trajectories: [i.index(0), i.index(1), i.index(2)],
                    }
                }
                Phase::PracticePreference | Phase::Preference => {
                    let i = sample(&mut rng, pool_len, 2);
                    QueryKind::Preference {
                        trajectories: [i.index(0), i.index(1)],
                    }
                }
            };
            out.push(PlannedQuery {
                id: out.len() as u64,
                phase,
                query,
            });
        }
    }
    out
}
