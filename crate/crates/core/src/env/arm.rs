//! ArmLite: a geometric stand-in for a tabletop arm.
//!
//! Each state is the end-effector position (3), its rotation matrix (9,
//! row-major) and the laptop and human positions (3 each). The end effector's
//! orientation is a single tilt about the world x axis.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::deform::{DeformationNorm, DeformationSpec};
use super::{EnvKind, FeatureVector, Trajectory};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const NUM_STATES: usize = 21;
pub const STATE_DIM: usize = 18;

/// Offset of the rotation matrix entry `R[2][2]` inside a state.
const R22: usize = 3 + 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmLiteScene {
    pub workspace_min: [f64; 3],
    pub workspace_max: [f64; 3],
    pub table_z: f64,
    pub laptop: [f64; 3],
    pub human: [f64; 3],
    /// Direction the human faces in the xy plane, radians from +x.
    pub human_facing: f64,
    /// Proxemic ellipse semi-axis in front of the human.
    pub proxemic_front: f64,
    /// Semi-axis to the side of (and behind) the human.
    pub proxemic_side: f64,
}

impl Default for ArmLiteScene {
    fn default() -> Self {
        Self {
            workspace_min: [-0.6, -0.6, 0.0],
            workspace_max: [0.6, 0.6, 0.8],
            table_z: 0.0,
            laptop: [0.3, -0.2, 0.0],
            human: [0.0, 0.55, 0.0],
            human_facing: -std::f64::consts::FRAC_PI_2,
            proxemic_front: 2.0,
            proxemic_side: 1.0,
        }
    }
}

impl ArmLiteScene {
    pub fn validate(&self) -> Result<()> {
        for k in 0..3 {
            if !(self.workspace_min[k] < self.workspace_max[k]) {
                return Err(Error::invalid("workspace box has no volume"));
            }
        }
        for (name, p) in [("laptop", self.laptop), ("human", self.human)] {
            if !self.contains(p) {
                return Err(Error::invalid(format!("{name} {p:?} is outside the workspace")));
            }
        }
        if !(self.proxemic_front > 0.0 && self.proxemic_side > 0.0) {
            return Err(Error::invalid("proxemic semi-axes must be positive"));
        }
        Ok(())
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|k| p[k] >= self.workspace_min[k] && p[k] <= self.workspace_max[k])
    }

    pub fn extent(&self) -> [f64; 3] {
        std::array::from_fn(|k| self.workspace_max[k] - self.workspace_min[k])
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    pub fn clamp(&self, p: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|k| p[k].clamp(self.workspace_min[k], self.workspace_max[k]))
    }

    /// Direction-weighted xy distance to the human: displacement in front of
    /// the human is divided by the (larger) front semi-axis, so frontal
    /// positions count as closer.
    pub fn proxemic_distance(&self, ee: &[f64]) -> f64 {
        let (dx, dy) = (ee[0] - self.human[0], ee[1] - self.human[1]);
        let (c, s) = (self.human_facing.cos(), self.human_facing.sin());
        let front = dx * c + dy * s;
        let side = -dx * s + dy * c;
        let front_axis = if front > 0.0 {
            self.proxemic_front
        } else {
            self.proxemic_side
        };
        ((front / front_axis).powi(2) + (side / self.proxemic_side).powi(2)).sqrt()
    }

    /// Per-state means of: height above the table, tilt of the end-effector
    /// up axis from world z, xy distance to the laptop, proxemic distance.
    pub fn features(&self, traj: &Trajectory) -> Result<FeatureVector> {
        let mut sums = [0.0; 4];
        for s in traj.states() {
            sums[0] += s[2] - self.table_z;
            sums[1] += s[R22].clamp(-1.0, 1.0).acos();
            sums[2] += ((s[0] - self.laptop[0]).powi(2) + (s[1] - self.laptop[1]).powi(2)).sqrt();
            sums[3] += self.proxemic_distance(s);
        }
        let n = traj.num_states() as f64;
        Ok(sums.map(|v| v / n))
    }

    /// Full 18-value state for an end-effector pose.
    pub fn state(&self, ee: [f64; 3], tilt: f64) -> [f64; STATE_DIM] {
        let r = tilt_rotation(tilt);
        let mut s = [0.0; STATE_DIM];
        s[..3].copy_from_slice(&ee);
        s[3..12].copy_from_slice(&r);
        s[12..15].copy_from_slice(&self.laptop);
        s[15..18].copy_from_slice(&self.human);
        s
    }

    /// Builds a trajectory from per-waypoint `[x, y, z, tilt]` rows.
    pub fn trajectory_from_poses(&self, poses: &Matrix) -> Result<Trajectory> {
        if poses.shape() != (NUM_STATES, 4) {
            return Err(Error::shape(format!(
                "pose matrix {:?}, expected ({NUM_STATES}, 4)",
                poses.shape()
            )));
        }
        let mut states = Vec::with_capacity(NUM_STATES * STATE_DIM);
        for row in poses.iter_rows() {
            states.extend_from_slice(&self.state([row[0], row[1], row[2]], row[3]));
        }
        Trajectory::new(EnvKind::ArmLite, states, None)
    }
}

/// Rotation about the world x axis, row-major.
pub fn tilt_rotation(tilt: f64) -> [f64; 9] {
    let (s, c) = tilt.sin_cos();
    [1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c]
}

/// Random start-goal pairs joined by straight lines, then smoothly deformed.
#[derive(Debug, Clone)]
pub struct ArmSampler {
    pub scene: ArmLiteScene,
    /// Minimum start-goal separation as a fraction of the workspace diagonal.
    pub min_separation: f64,
    /// Start and goal tilts are drawn from `[-max_tilt, max_tilt]`.
    pub max_tilt: f64,
    pub magnitude_range: (f64, f64),
    /// Direction entries are uniform in `±direction_scale · extent` per channel.
    pub direction_scale: f64,
    /// Deformations per trajectory are drawn uniformly from this range.
    pub deformations: (usize, usize),
}

impl ArmSampler {
    pub fn new(scene: ArmLiteScene) -> Self {
        Self {
            scene,
            min_separation: 0.25,
            max_tilt: std::f64::consts::FRAC_PI_2,
            magnitude_range: (0.5, 2.0),
            direction_scale: 0.2,
            deformations: (1, 3),
        }
    }

    pub fn without_deformations(mut self) -> Self {
        self.deformations = (0, 0);
        self
    }

    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<Trajectory>> {
        if count == 0 {
            return Err(Error::invalid("sample count must be positive"));
        }
        self.scene.validate()?;
        let norm = DeformationNorm::new(NUM_STATES)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| self.sample_one(&norm, &mut rng))
            .collect()
    }

    fn sample_one<R: Rng>(&self, norm: &DeformationNorm, rng: &mut R) -> Result<Trajectory> {
        let scene = &self.scene;
        let min_sep = self.min_separation * scene.diagonal();
        let (start, goal) = loop {
            let a = self.uniform_point(rng);
            let b = self.uniform_point(rng);
            let d = (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt();
            if d >= min_sep {
                break (a, b);
            }
        };
        let tilt_start = rng.gen_range(-self.max_tilt..=self.max_tilt);
        let tilt_goal = rng.gen_range(-self.max_tilt..=self.max_tilt);
        let mut poses = straight_line(start, goal, tilt_start, tilt_goal);

        let count = rng.gen_range(self.deformations.0..=self.deformations.1);
        let extent = scene.extent();
        let channel_extent = [extent[0], extent[1], extent[2], 2.0 * self.max_tilt];
        for _ in 0..count {
            let spec = DeformationSpec {
                magnitude: rng.gen_range(self.magnitude_range.0..=self.magnitude_range.1),
                waypoint: rng.gen_range(1..NUM_STATES - 1),
                direction: channel_extent
                    .iter()
                    .map(|e| rng.gen_range(-1.0..=1.0) * self.direction_scale * e)
                    .collect(),
            };
            poses = norm.deform(&poses, &[0, 1, 2, 3], &spec)?;
        }
        for i in 0..NUM_STATES {
            let p = scene.clamp([poses[(i, 0)], poses[(i, 1)], poses[(i, 2)]]);
            poses.row_mut(i)[..3].copy_from_slice(&p);
            poses[(i, 3)] = poses[(i, 3)].clamp(-self.max_tilt, self.max_tilt);
        }
        scene.trajectory_from_poses(&poses)
    }

    fn uniform_point<R: Rng>(&self, rng: &mut R) -> [f64; 3] {
        let s = &self.scene;
        std::array::from_fn(|k| rng.gen_range(s.workspace_min[k]..=s.workspace_max[k]))
    }
}

/// Linear interpolation of position and tilt over all waypoints.
pub fn straight_line(start: [f64; 3], goal: [f64; 3], tilt_start: f64, tilt_goal: f64) -> Matrix {
    let mut poses = Matrix::zeros(NUM_STATES, 4);
    for i in 0..NUM_STATES {
        let a = i as f64 / (NUM_STATES - 1) as f64;
        for k in 0..3 {
            poses[(i, k)] = start[k] + a * (goal[k] - start[k]);
        }
        poses[(i, 3)] = tilt_start + a * (tilt_goal - tilt_start);
    }
    poses
}
