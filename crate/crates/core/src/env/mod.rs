//! Environments: raw trajectory encodings, ground-truth features, and the
//! trajectory pools every query is drawn from.

pub mod arm;
pub mod dataset;
pub mod deform;
pub mod grid;
pub mod normalize;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub use arm::{ArmLiteScene, ArmSampler};
pub use dataset::TrajectorySet;
pub use deform::{DeformationNorm, DeformationSpec};
pub use grid::GridScene;
pub use normalize::FeatureNormalizer;

/// Number of ground-truth features in both environments.
pub const NUM_FEATURES: usize = 4;

pub type FeatureVector = [f64; NUM_FEATURES];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    GridRobot,
    ArmLite,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::GridRobot => "gridrobot",
            EnvKind::ArmLite => "armlite",
        }
    }

    pub fn num_states(self) -> usize {
        match self {
            EnvKind::GridRobot => grid::NUM_STATES,
            EnvKind::ArmLite => arm::NUM_STATES,
        }
    }

    pub fn state_dim(self) -> usize {
        match self {
            EnvKind::GridRobot => 2,
            EnvKind::ArmLite => arm::STATE_DIM,
        }
    }

    /// Width of the flattened network input.
    pub fn input_width(self) -> usize {
        match self {
            EnvKind::GridRobot => grid::NUM_STATES * 2 + 1,
            EnvKind::ArmLite => arm::NUM_STATES * arm::STATE_DIM,
        }
    }

    /// Hidden width of embedding and reward networks.
    pub fn hidden_width(self) -> usize {
        match self {
            EnvKind::GridRobot => 128,
            EnvKind::ArmLite => 1024,
        }
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gridrobot" | "grid" => Ok(EnvKind::GridRobot),
            "armlite" | "arm" | "jaco" => Ok(EnvKind::ArmLite),
            other => Err(Error::invalid(format!("unknown environment `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "env", rename_all = "lowercase")]
pub enum Scene {
    GridRobot(GridScene),
    ArmLite(ArmLiteScene),
}

impl Scene {
    pub fn default_for(env: EnvKind) -> Self {
        match env {
            EnvKind::GridRobot => Scene::GridRobot(GridScene::default()),
            EnvKind::ArmLite => Scene::ArmLite(ArmLiteScene::default()),
        }
    }

    pub fn env(&self) -> EnvKind {
        match self {
            Scene::GridRobot(_) => EnvKind::GridRobot,
            Scene::ArmLite(_) => EnvKind::ArmLite,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Scene::GridRobot(s) => s.validate(),
            Scene::ArmLite(s) => s.validate(),
        }
    }

    /// Unnormalized ground-truth features.
    pub fn features(&self, traj: &Trajectory) -> Result<FeatureVector> {
        if traj.env() != self.env() {
            return Err(Error::invalid(format!(
                "{} trajectory in a {} scene",
                traj.env(),
                self.env()
            )));
        }
        match self {
            Scene::GridRobot(s) => s.features(traj),
            Scene::ArmLite(s) => s.features(traj),
        }
    }

    /// Reads a scene description (TOML).
    pub fn from_toml(text: &str) -> Result<Self> {
        let scene: Scene =
            toml::from_str(text).map_err(|e| Error::format(format!("scene file: {e}")))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenes serialize")
    }
}

/// Fixed-length sequence of raw states.
///
/// GridRobot trajectories also carry the end-state angle in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    env: EnvKind,
    states: Vec<f64>,
    end_angle_deg: Option<f64>,
}

impl Trajectory {
    pub fn new(env: EnvKind, states: Vec<f64>, end_angle_deg: Option<f64>) -> Result<Self> {
        let expected = env.num_states() * env.state_dim();
        if states.len() != expected {
            return Err(Error::shape(format!(
                "{env} trajectory needs {expected} state values, got {}",
                states.len()
            )));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trajectory state".into()));
        }
        match (env, end_angle_deg) {
            (EnvKind::GridRobot, None) => {
                return Err(Error::invalid("GridRobot trajectories need an end angle"))
            }
            (EnvKind::ArmLite, Some(_)) => {
                return Err(Error::invalid("ArmLite trajectories carry no end angle"))
            }
            _ => {}
        }
        Ok(Self {
            env,
            states,
            end_angle_deg,
        })
    }

    pub fn env(&self) -> EnvKind {
        self.env
    }

    pub fn num_states(&self) -> usize {
        self.env.num_states()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        let n = self.env.state_dim();
        &self.states[i * n..(i + 1) * n]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.env.state_dim())
    }

    pub fn end_angle_deg(&self) -> Option<f64> {
        self.end_angle_deg
    }

    /// Flattened network input. The GridRobot end angle is appended in
    /// radians so it shares the scale of the grid coordinates.
    pub fn input(&self) -> Vec<f64> {
        let mut v = self.states.clone();
        if let Some(a) = self.end_angle_deg {
            v.push(a.to_radians());
        }
        v
    }

    /// Values written to dataset payloads: states, then the angle in degrees.
    pub(crate) fn payload(&self) -> Vec<f64> {
        let mut v = self.states.clone();
        if let Some(a) = self.end_angle_deg {
            v.push(a);
        }
        v
    }

    pub(crate) fn from_payload(env: EnvKind, row: &[f64]) -> Result<Self> {
        let n = env.num_states() * env.state_dim();
        match env {
            EnvKind::GridRobot => {
                if row.len() != n + 1 {
                    return Err(Error::format("GridRobot payload row width"));
                }
                Self::new(env, row[..n].to_vec(), Some(row[n]))
            }
            EnvKind::ArmLite => Self::new(env, row.to_vec(), None),
        }
    }
}

/// Stacks trajectory inputs into a batch, one row per trajectory.
pub fn input_matrix(trajs: &[Trajectory]) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = trajs.iter().map(Trajectory::input).collect();
    Matrix::from_rows(&rows)
}
