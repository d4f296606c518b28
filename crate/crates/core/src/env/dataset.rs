//! Trajectory pools on disk: a text manifest plus a binary payload with one
//! row per trajectory.

use std::path::Path;

use super::{grid, EnvKind, FeatureNormalizer, FeatureVector, Scene, Trajectory};
use super::arm::ArmSampler;
use crate::error::{Error, Result};
use crate::manifest::{join_list, read_pair, write_pair, Manifest};
use crate::tensor::Matrix;

pub const FORMAT: &str = "sirl-trajectories/1";

/// A trajectory pool with its scene and the normalizer fit on it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub scene: Scene,
    pub seed: u64,
    pub normalizer: FeatureNormalizer,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectorySet {
    /// Enumerates GridRobot or samples `count` ArmLite trajectories.
    pub fn generate(scene: Scene, count: usize, seed: u64) -> Result<Self> {
        let trajectories = match &scene {
            Scene::GridRobot(s) => grid::enumerate(s)?,
            Scene::ArmLite(s) => ArmSampler::new(s.clone()).sample(count, seed)?,
        };
        Self::from_trajectories(scene, trajectories, seed)
    }

    pub fn from_trajectories(scene: Scene, trajectories: Vec<Trajectory>, seed: u64) -> Result<Self> {
        let raw = trajectories
            .iter()
            .map(|t| scene.features(t))
            .collect::<Result<Vec<_>>>()?;
        let normalizer = FeatureNormalizer::fit(&raw)?;
        Ok(Self {
            scene,
            seed,
            normalizer,
            trajectories,
        })
    }

    pub fn env(&self) -> EnvKind {
        self.scene.env()
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Normalized ground-truth features, one per trajectory.
    pub fn features(&self) -> Result<Vec<FeatureVector>> {
        self.trajectories
            .iter()
            .map(|t| Ok(self.normalizer.apply(&self.scene.features(t)?)))
            .collect()
    }

    /// Network inputs, one row per trajectory.
    pub fn inputs(&self) -> Result<Matrix> {
        super::input_matrix(&self.trajectories)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let env = self.env();
        let mut m = Manifest::new();
        m.set("format", FORMAT)
            .set("env", env)
            .set("horizon", env.num_states() - 1)
            .set("state_dim", env.state_dim())
            .set("count", self.len())
            .set("seed", self.seed)
            .set(
                "scene",
                serde_json::to_string(&self.scene).expect("scenes serialize"),
            )
            .set("normalizer.min", join_list(&self.normalizer.min))
            .set("normalizer.max", join_list(&self.normalizer.max))
            .set("normalizer.degenerate", join_list(&self.normalizer.degenerate));
        let payload: Vec<f64> = self.trajectories.iter().flat_map(|t| t.payload()).collect();
        write_pair(path, &mut m, &payload)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (m, payload) = read_pair(path)?;
        if m.require("format")? != FORMAT {
            return Err(Error::format(format!("{} is not a trajectory set", path.display())));
        }
        let env: EnvKind = m.require("env")?.parse()?;
        let scene: Scene = serde_json::from_str(m.require("scene")?)
            .map_err(|e| Error::format(format!("scene: {e}")))?;
        if scene.env() != env {
            return Err(Error::format("scene and env disagree"));
        }
        if m.parse::<usize>("horizon")? + 1 != env.num_states()
            || m.parse::<usize>("state_dim")? != env.state_dim()
        {
            return Err(Error::format("horizon or state_dim differ from the environment"));
        }
        let count: usize = m.parse("count")?;
        let width = env.num_states() * env.state_dim() + usize::from(env == EnvKind::GridRobot);
        if payload.len() != count * width {
            return Err(Error::format("payload size differs from count"));
        }
        let trajectories = payload
            .chunks_exact(width)
            .map(|row| Trajectory::from_payload(env, row))
            .collect::<Result<Vec<_>>>()?;
        let to_array = |key: &str| -> Result<FeatureVector> {
            let v: Vec<f64> = m.parse_list(key)?;
            v.try_into()
                .map_err(|_| Error::format(format!("`{key}` needs 4 values")))
        };
        let degenerate: Vec<bool> = m.parse_list("normalizer.degenerate")?;
        let normalizer = FeatureNormalizer {
            min: to_array("normalizer.min")?,
            max: to_array("normalizer.max")?,
            degenerate: degenerate
                .try_into()
                .map_err(|_| Error::format("`normalizer.degenerate` needs 4 values"))?,
        };
        Ok(Self {
            scene,
            seed: m.parse("seed")?,
            normalizer,
            trajectories,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.traj");
        let set = TrajectorySet::generate(Scene::default_for(EnvKind::GridRobot), 0, 0).unwrap();
        assert_eq!(set.len(), 490);
        set.save(&path).unwrap();
        let back = TrajectorySet::load(&path).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.features().unwrap(), set.features().unwrap());
    }

    #[test]
    fn arm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("arm.traj");
        let set = TrajectorySet::generate(Scene::default_for(EnvKind::ArmLite), 25, 5).unwrap();
        set.save(&path).unwrap();
        assert_eq!(TrajectorySet::load(&path).unwrap(), set);
        assert!(set.features().unwrap().iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }
}
