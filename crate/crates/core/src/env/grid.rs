//! GridRobot: corner-to-corner shortest paths on a 5x5 grid with an end-state
//! orientation.

use serde::{Deserialize, Serialize};

use super::{EnvKind, FeatureVector, Trajectory};
use crate::error::{Error, Result};

pub const SIZE: i32 = 5;
pub const NUM_STATES: usize = 9;
pub const END_ANGLES_DEG: [f64; 7] = [-90.0, -60.0, -30.0, 0.0, 30.0, 60.0, 90.0];

pub type Cell = [i32; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScene {
    pub obstacles: [Cell; 2],
    pub laptop: Cell,
}

impl Default for GridScene {
    fn default() -> Self {
        Self {
            obstacles: [[1, 3], [3, 2]],
            laptop: [2, 1],
        }
    }
}

impl GridScene {
    pub fn validate(&self) -> Result<()> {
        for c in self.obstacles.iter().chain(std::iter::once(&self.laptop)) {
            if !in_grid(*c) {
                return Err(Error::invalid(format!("object cell {c:?} is off the grid")));
            }
        }
        Ok(())
    }

    /// Mean Euclidean distance of the states to each object, then |end angle|
    /// in degrees.
    pub fn features(&self, traj: &Trajectory) -> Result<FeatureVector> {
        let angle = traj
            .end_angle_deg()
            .ok_or_else(|| Error::invalid("GridRobot trajectory without end angle"))?;
        let mean_dist = |target: Cell| {
            let (tx, ty) = (target[0] as f64, target[1] as f64);
            traj.states()
                .map(|s| ((s[0] - tx).powi(2) + (s[1] - ty).powi(2)).sqrt())
                .sum::<f64>()
                / traj.num_states() as f64
        };
        Ok([
            mean_dist(self.obstacles[0]),
            mean_dist(self.obstacles[1]),
            mean_dist(self.laptop),
            angle.abs(),
        ])
    }
}

fn in_grid(c: Cell) -> bool {
    (0..SIZE).contains(&c[0]) && (0..SIZE).contains(&c[1])
}

/// Every shortest path from (0,0) to (4,4), right moves explored before up
/// moves.
pub fn lattice_paths() -> Vec<Vec<Cell>> {
    fn extend(path: &mut Vec<Cell>, out: &mut Vec<Vec<Cell>>) {
        let [x, y] = *path.last().expect("path starts at the origin");
        if x == SIZE - 1 && y == SIZE - 1 {
            out.push(path.clone());
            return;
        }
        if x < SIZE - 1 {
            path.push([x + 1, y]);
            extend(path, out);
            path.pop();
        }
        if y < SIZE - 1 {
            path.push([x, y + 1]);
            extend(path, out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    extend(&mut vec![[0, 0]], &mut out);
    out
}

pub fn trajectory(path: &[Cell], end_angle_deg: f64) -> Result<Trajectory> {
    if path.len() != NUM_STATES {
        return Err(Error::shape(format!("grid path of length {}", path.len())));
    }
    if path[0] != [0, 0] || path[NUM_STATES - 1] != [SIZE - 1, SIZE - 1] {
        return Err(Error::invalid("grid paths run from (0,0) to (4,4)"));
    }
    for w in path.windows(2) {
        let step = (w[1][0] - w[0][0]).abs() + (w[1][1] - w[0][1]).abs();
        if step != 1 || !in_grid(w[1]) {
            return Err(Error::invalid(format!("{:?} -> {:?} is not a grid step", w[0], w[1])));
        }
    }
    if !END_ANGLES_DEG.contains(&end_angle_deg) {
        return Err(Error::invalid(format!("end angle {end_angle_deg} is not allowed")));
    }
    let states = path
        .iter()
        .flat_map(|c| [c[0] as f64, c[1] as f64])
        .collect();
    Trajectory::new(EnvKind::GridRobot, states, Some(end_angle_deg))
}

/// The full trajectory space: every lattice path with every end angle,
/// path-major.
pub fn enumerate(scene: &GridScene) -> Result<Vec<Trajectory>> {
    scene.validate()?;
    let mut out = Vec::with_capacity(70 * END_ANGLES_DEG.len());
    for path in lattice_paths() {
        for &angle in &END_ANGLES_DEG {
            out.push(trajectory(&path, angle)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    /// Independent enumerator: choose which 4 of the 8 moves go up.
    fn paths_by_combination() -> HashSet<Vec<Cell>> {
        let mut out = HashSet::new();
        for mask in 0u32..256 {
            if mask.count_ones() != 4 {
                continue;
            }
            let mut cell = [0, 0];
            let mut path = vec![cell];
            for bit in 0..8 {
                if mask & (1 << bit) != 0 {
                    cell[1] += 1;
                } else {
                    cell[0] += 1;
                }
                path.push(cell);
            }
            out.insert(path);
        }
        out
    }

    #[test]
    fn enumerates_490_unique_trajectories() {
        let all = enumerate(&GridScene::default()).unwrap();
        assert_eq!(all.len(), 490);
        let paths = lattice_paths();
        assert_eq!(paths.len(), 70);
        let set: HashSet<Vec<Cell>> = paths.into_iter().collect();
        assert_eq!(set, paths_by_combination());
        for t in &all {
            assert_eq!(t.num_states(), 9);
            assert_eq!(t.input().len(), 19);
        }
    }

    #[test]
    fn right_then_up_path_once_per_angle() {
        let all = enumerate(&GridScene::default()).unwrap();
        let target: Vec<f64> = (0..=4)
            .map(|x| [x as f64, 0.0])
            .chain((1..=4).map(|y| [4.0, y as f64]))
            .flatten()
            .collect();
        for &a in &END_ANGLES_DEG {
            let n = all
                .iter()
                .filter(|t| t.end_angle_deg() == Some(a) && t.states().flatten().copied().eq(target.iter().copied()))
                .count();
            assert_eq!(n, 1);
        }
    }

    #[test]
    fn angle_feature_is_absolute() {
        let scene = GridScene::default();
        let path = &lattice_paths()[0];
        let f0 = scene.features(&trajectory(path, 0.0).unwrap()).unwrap();
        let f60 = scene.features(&trajectory(path, -60.0).unwrap()).unwrap();
        assert_eq!(f0[3], 0.0);
        assert_eq!(f60[3], 60.0);
    }

    #[test]
    fn hand_computed_laptop_distance() {
        let scene = GridScene {
            obstacles: [[0, 4], [4, 0]],
            laptop: [2, 2],
        };
        // right along y=0 then up along x=4
        let path: Vec<Cell> = (0..=4)
            .map(|x| [x, 0])
            .chain((1..=4).map(|y| [4, y]))
            .collect();
        let t = trajectory(&path, 30.0).unwrap();
        let f = scene.features(&t).unwrap();
        // distances to (2,2): (0,0) √8, (1,0) √5, (2,0) 2, (3,0) √5, (4,0) √8,
        // (4,1) √5, (4,2) 2, (4,3) √5, (4,4) √8
        let expect = (3.0 * 8f64.sqrt() + 4.0 * 5f64.sqrt() + 4.0) / 9.0;
        assert!((f[2] - expect).abs() < 1e-12);
        // obstacle at (4,0) is on the path
        let to_corner = [4.0, 3.0, 2.0, 1.0, 0.0, 1.0, 2.0, 3.0, 4.0];
        assert!((f[1] - to_corner.iter().sum::<f64>() / 9.0).abs() < 1e-12);
        assert_eq!(f[3], 30.0);
    }

    #[test]
    fn passing_through_laptop_contributes_zero() {
        let scene = GridScene {
            obstacles: [[0, 4], [4, 0]],
            laptop: [1, 0],
        };
        let path: Vec<Cell> = (0..=4)
            .map(|x| [x, 0])
            .chain((1..=4).map(|y| [4, y]))
            .collect();
        let t = trajectory(&path, 0.0).unwrap();
        let per_state: f64 = t
            .states()
            .map(|s| ((s[0] - 1.0).powi(2) + s[1].powi(2)).sqrt())
            .sum();
        let f = scene.features(&t).unwrap();
        assert!((f[2] - per_state / 9.0).abs() < 1e-12);
        assert_eq!(((t.state(1)[0] - 1.0).powi(2) + t.state(1)[1].powi(2)).sqrt(), 0.0);
    }

    #[test]
    fn invalid_paths_rejected() {
        let mut path = lattice_paths()[0].clone();
        path[3] = [3, 3];
        assert!(trajectory(&path, 0.0).is_err());
        assert!(trajectory(&lattice_paths()[0], 45.0).is_err());
        assert!(GridScene {
            obstacles: [[5, 0], [0, 0]],
            laptop: [1, 1]
        }
        .validate()
        .is_err());
    }
}
