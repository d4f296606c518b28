//! Trajectories as drawable polylines.

use serde::{Deserialize, Serialize};
use sirl_core::env::{Scene, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub label: String,
    pub position: [f64; 3],
}

/// World-frame waypoints (one per state) with an orientation marker in
/// degrees for each: the end-state angle on GridRobot's final waypoint
/// (zero elsewhere), the end-effector tilt on ArmLite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderableTrajectory {
    pub id: usize,
    pub waypoints: Vec<[f64; 3]>,
    pub orientations: Vec<f64>,
    pub objects: Vec<SceneObject>,
}

fn object(label: &str, position: [f64; 3]) -> SceneObject {
    SceneObject {
        label: label.into(),
        position,
    }
}

pub fn scene_objects(scene: &Scene) -> Vec<SceneObject> {
    match scene {
        Scene::GridRobot(s) => {
            let cell = |c: [i32; 2]| [f64::from(c[0]), f64::from(c[1]), 0.0];
            vec![
                object("obstacle", cell(s.obstacles[0])),
                object("obstacle", cell(s.obstacles[1])),
                object("laptop", cell(s.laptop)),
            ]
        }
        Scene::ArmLite(s) => vec![
            object("laptop", s.laptop),
            object("human", s.human),
            object("table", [0.0, 0.0, s.table_z]),
        ],
    }
}

pub fn render(id: usize, traj: &Trajectory, scene: &Scene) -> RenderableTrajectory {
    let n = traj.num_states();
    let mut waypoints = Vec::with_capacity(n);
    let mut orientations = Vec::with_capacity(n);
    for (i, s) in traj.states().enumerate() {
        match scene {
            Scene::GridRobot(_) => {
                waypoints.push([s[0], s[1], 0.0]);
                let end = if i + 1 == n { traj.end_angle_deg().unwrap_or(0.0) } else { 0.0 };
                orientations.push(end);
            }
            Scene::ArmLite(_) => {
                waypoints.push([s[0], s[1], s[2]]);
                // rotation about x by the tilt: R[2][1] = sin, R[2][2] = cos
                orientations.push(s[3 + 7].atan2(s[3 + 8]).to_degrees());
            }
        }
    }
    RenderableTrajectory {
        id,
        waypoints,
        orientations,
        objects: scene_objects(scene),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sirl_core::env::arm::{ArmLiteScene, ArmSampler};
    use sirl_core::env::{grid, EnvKind};

    #[test]
    fn grid_polyline_has_one_waypoint_per_state() {
        let scene = Scene::default_for(EnvKind::GridRobot);
        let Scene::GridRobot(s) = &scene else { unreachable!() };
        let t = &grid::enumerate(s).unwrap()[3];
        let r = render(3, t, &scene);
        assert_eq!(r.waypoints.len(), 9);
        assert_eq!(r.waypoints[0], [0.0, 0.0, 0.0]);
        assert_eq!(r.waypoints[8], [4.0, 4.0, 0.0]);
        assert_eq!(r.orientations[8], t.end_angle_deg().unwrap());
        assert_eq!(r.objects.len(), 3);
    }

    #[test]
    fn arm_tilt_is_recovered() {
        let s = ArmLiteScene::default();
        let t = &ArmSampler::new(s.clone()).sample(1, 4).unwrap()[0];
        let r = render(0, t, &Scene::ArmLite(s));
        assert_eq!(r.waypoints.len(), 21);
        assert!(r.waypoints.iter().flatten().chain(&r.orientations).all(|v| v.is_finite()));
        for (w, st) in r.waypoints.iter().zip(t.states()) {
            assert_eq!(w[..], st[..3]);
        }
    }
}
