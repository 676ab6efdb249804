//! 2D worlds: obstacle scenes, exact signed distances, the dense collision
//! oracle used as ground truth for every success metric, procedural scene
//! and problem generation, expert demonstrations, and dataset files.

mod dataset;
mod expert;
mod gen;

pub use dataset::{read_dataset, write_dataset, Dataset, DATASET_MAGIC};
pub use expert::{generate_expert, ExpertConfig, ExpertSample};
pub use gen::{generate_problem, generate_scene, Difficulty, SceneGenConfig};

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Point2};

pub const SCENE_SCHEMA_VERSION: u32 = 1;

/// Axis-aligned workspace bounds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Workspace {
    pub min: Point2,
    pub max: Point2,
}

impl Workspace {
    pub fn unit() -> Self {
        Workspace { min: [0.0, 0.0], max: [1.0, 1.0] }
    }

    pub fn contains(&self, p: Point2) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    pub fn extent(&self) -> Point2 {
        geom::sub(self.max, self.min)
    }
}

/// A static obstacle. Signed distance is negative inside, zero on the
/// boundary, positive outside.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Obstacle {
    Circle { center: Point2, radius: f64 },
    Box { min: Point2, max: Point2 },
}

impl Obstacle {
    pub fn signed_distance(&self, p: Point2) -> f64 {
        match self {
            Obstacle::Circle { center, radius } => geom::dist(p, *center) - radius,
            Obstacle::Box { min, max } => {
                let dx = (min[0] - p[0]).max(p[0] - max[0]);
                let dy = (min[1] - p[1]).max(p[1] - max[1]);
                if dx > 0.0 || dy > 0.0 {
                    // Outside: distance to the nearest corner/edge.
                    geom::norm([dx.max(0.0), dy.max(0.0)])
                } else {
                    // Inside: negative distance to the nearest face.
                    dx.max(dy)
                }
            }
        }
    }

    /// Gradient of the signed distance. Unit norm almost everywhere; at
    /// non-differentiable points a fixed subgradient is chosen: zero at a
    /// circle center, first face in (left, right, bottom, top) order for
    /// interior box ties.
    pub fn sd_gradient(&self, p: Point2) -> Point2 {
        match self {
            Obstacle::Circle { center, .. } => {
                let d = geom::sub(p, *center);
                let n = geom::norm(d);
                if n == 0.0 {
                    [0.0, 0.0]
                } else {
                    geom::scale(d, 1.0 / n)
                }
            }
            Obstacle::Box { min, max } => {
                let dx = (min[0] - p[0]).max(p[0] - max[0]);
                let dy = (min[1] - p[1]).max(p[1] - max[1]);
                if dx > 0.0 || dy > 0.0 {
                    let qx = dx.max(0.0) * if p[0] > max[0] { 1.0 } else { -1.0 };
                    let qy = dy.max(0.0) * if p[1] > max[1] { 1.0 } else { -1.0 };
                    let q = [qx, qy];
                    let n = geom::norm(q);
                    if n == 0.0 {
                        [0.0, 0.0]
                    } else {
                        geom::scale(q, 1.0 / n)
                    }
                }
                else {
                    // Interior: move toward the nearest face.
                    let faces = [
                        (p[0] - min[0], [-1.0, 0.0]),
                        (max[0] - p[0], [1.0, 0.0]),
                        (p[1] - min[1], [0.0, -1.0]),
                        (max[1] - p[1], [0.0, 1.0]),
                    ];
                    let mut best = faces[0];
                    for f in &faces[1..] {
                        if f.0 < best.0 {
                            best = *f;
                        }
                    }
                    best.1
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Obstacle::Circle { center, radius } => {
                if !geom::is_finite(*center) || !radius.is_finite() || *radius <= 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "circle obstacle has invalid center {center:?} or radius {radius}"
                    )));
                }
            }
            Obstacle::Box { min, max } => {
                if !geom::is_finite(*min) || !geom::is_finite(*max) || min[0] >= max[0] || min[1] >= max[1] {
                    return Err(Error::InvalidConfig(format!(
                        "box obstacle has invalid bounds min {min:?} max {max:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A planning scene: workspace bounds, the robot's disc radius, and a list
/// of obstacles. `seed` records the generator seed for provenance.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub version: u32,
    pub seed: u64,
    pub workspace: Workspace,
    pub robot_radius: f64,
    pub obstacles: Vec<Obstacle>,
}

impl Scene {
    pub fn empty(robot_radius: f64) -> Self {
        Scene {
            version: SCENE_SCHEMA_VERSION,
            seed: 0,
            workspace: Workspace::unit(),
            robot_radius,
            obstacles: Vec::new(),
        }
    }

    /// Minimum signed distance over all obstacles. Empty scenes return
    /// +infinity. Ties keep the lowest obstacle index.
    pub fn signed_distance(&self, p: Point2) -> f64 {
        let mut best = f64::INFINITY;
        for obs in &self.obstacles {
            let d = obs.signed_distance(p);
            if d < best {
                best = d;
            }
        }
        best
    }

    /// Signed distance together with the subgradient of the active
    /// (minimal, lowest-index on ties) obstacle. Empty scenes return
    /// `(inf, [0, 0])`.
    pub fn sd_with_gradient(&self, p: Point2) -> (f64, Point2) {
        let mut best = f64::INFINITY;
        let mut active = None;
        for (i, obs) in self.obstacles.iter().enumerate() {
            let d = obs.signed_distance(p);
            if d < best {
                best = d;
                active = Some(i);
            }
        }
        match active {
            Some(i) => (best, self.obstacles[i].sd_gradient(p)),
            None => (f64::INFINITY, [0.0, 0.0]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCENE_SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported scene version {}, expected {SCENE_SCHEMA_VERSION}",
                self.version
            )));
        }
        if !self.robot_radius.is_finite() || self.robot_radius <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "robot radius must be positive, got {}",
                self.robot_radius
            )));
        }
        let ws = &self.workspace;
        if !geom::is_finite(ws.min) || !geom::is_finite(ws.max) || ws.min[0] >= ws.max[0] || ws.min[1] >= ws.max[1] {
            return Err(Error::InvalidConfig(format!(
                "workspace bounds are invalid: min {:?} max {:?}",
                ws.min, ws.max
            )));
        }
        for obs in &self.obstacles {
            obs.validate()?;
        }
        Ok(())
    }
}

/// A planning query: a scene plus start and goal positions.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PlanningProblem {
    pub scene: Scene,
    pub start: Point2,
    pub goal: Point2,
}

/// Ground-truth collision oracle. A trajectory of shape `(2, H)` is free
/// iff the signed distance is at least the robot radius at every waypoint
/// and at interpolated points spaced at most `resolution` apart along each
/// segment. Non-finite coordinates are never free.
pub fn is_collision_free(scene: &Scene, traj: &Array2<f64>, resolution: f64) -> bool {
    assert!(resolution > 0.0, "oracle resolution must be positive");
    let h = traj.ncols();
    if traj.nrows() != 2 || h == 0 {
        return false;
    }
    let r = scene.robot_radius;
    let point = |k: usize| [traj[[0, k]], traj[[1, k]]];
    let free = |p: Point2| geom::is_finite(p) && scene.signed_distance(p) >= r;
    if !free(point(0)) {
        return false;
    }
    for k in 0..h.saturating_sub(1) {
        let a = point(k);
        let b = point(k + 1);
        if !geom::is_finite(a) || !geom::is_finite(b) {
            return false;
        }
        let d = geom::dist(a, b);
        let steps = (d / resolution).ceil().max(1.0) as usize;
        for i in 1..=steps {
            let p = geom::lerp(a, b, i as f64 / steps as f64);
            if !free(p) {
                return false;
            }
        }
    }
    true
}

/// Minimum clearance (signed distance) along the densely sampled
/// trajectory. Infinity for empty scenes.
pub fn min_clearance(scene: &Scene, traj: &Array2<f64>, resolution: f64) -> f64 {
    assert!(resolution > 0.0);
    let h = traj.ncols();
    let mut best = f64::INFINITY;
    if h == 0 || traj.nrows() != 2 {
        return f64::NAN;
    }
    let point = |k: usize| [traj[[0, k]], traj[[1, k]]];
    best = best.min(scene.signed_distance(point(0)));
    for k in 0..h - 1 {
        let a = point(k);
        let b = point(k + 1);
        let d = geom::dist(a, b);
        let steps = (d / resolution).ceil().max(1.0) as usize;
        for i in 1..=steps {
            best = best.min(scene.signed_distance(geom::lerp(a, b, i as f64 / steps as f64)));
        }
    }
    best
}

/// Converts a polyline of points into the `(2, H)` trajectory layout.
pub fn path_to_trajectory(path: &[Point2]) -> Array2<f64> {
    let mut traj = Array2::<f64>::zeros((2, path.len()));
    for (k, p) in path.iter().enumerate() {
        traj[[0, k]] = p[0];
        traj[[1, k]] = p[1];
    }
    traj
}

/// Extracts waypoint `k` of a `(2, H)` trajectory.
pub fn waypoint(traj: &Array2<f64>, k: usize) -> Point2 {
    [traj[[0, k]], traj[[1, k]]]
}

/// Serializes a scene to pretty JSON (stable field order, trailing newline).
pub fn scene_to_json(scene: &Scene) -> Result<String> {
    let mut s = serde_json::to_string_pretty(scene)
        .map_err(|e| Error::Numerical(format!("scene serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn write_scene(path: &Path, scene: &Scene) -> Result<()> {
    scene.validate()?;
    let json = scene_to_json(scene)?;
    fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let scene: Scene = serde_json::from_str(&text)
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    scene
        .validate()
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    Ok(scene)
}
