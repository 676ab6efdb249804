//! Trajectory stitching: walk the best pooled trajectory window by window,
//! and when a window collides, jump to a collision-free waypoint further
//! along some other pooled trajectory, bridging the gap with a local
//! sampling planner.
//!
//! Progress is measured as waypoint index fraction, and every stitch moves
//! strictly forward on a trajectory not visited before, so the walk
//! terminates. A stitch budget bounds the worst case anyway.

use std::collections::HashSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Point2};
use crate::rng::derive_rng;
use crate::rrt::{densify, rrt_connect, RrtConfig};
use crate::world::{is_collision_free, waypoint, Scene};

const TAG_BRIDGE: u64 = 0x57c4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StitchConfig {
    /// Number of edges validated per window.
    pub window: usize,
    /// Collision-check spacing for windows and the final path.
    pub resolution: f64,
    /// Local planner used to bridge stitch gaps.
    pub bridge: RrtConfig,
    /// Bridge attempts per stitch before giving up.
    pub bridge_attempts: usize,
    /// Hard cap on stitches per query.
    pub max_stitches: usize,
}

impl Default for StitchConfig {
    fn default() -> Self {
        StitchConfig {
            window: 12,
            resolution: 0.025,
            // The bridge is deliberately short-leashed: it should close
            // small gaps between good pool segments, not plan around the
            // scene on its own.
            bridge: RrtConfig { step: 0.08, max_nodes: 15, resolution: 0.025 },
            bridge_attempts: 2,
            max_stitches: 2,
        }
    }
}

impl StitchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidConfig("stitch window must be at least 1".into()));
        }
        if !(self.resolution > 0.0) {
            return Err(Error::InvalidConfig("stitch resolution must be positive".into()));
        }
        if self.bridge_attempts == 0 || self.max_stitches == 0 {
            return Err(Error::InvalidConfig("stitch budgets must be at least 1".into()));
        }
        self.bridge.validate()
    }
}

/// Candidate trajectories to stitch between, with a selection cost each.
/// All trajectories share the `(2, H)` layout and the same endpoints.
pub struct StitchPool {
    pub trajectories: Vec<Array2<f64>>,
    pub costs: Vec<f64>,
}

impl StitchPool {
    pub fn new(trajectories: Vec<Array2<f64>>, costs: Vec<f64>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::InvalidConfig("stitch pool is empty".into()));
        }
        if trajectories.len() != costs.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} trajectories but {} costs",
                trajectories.len(),
                costs.len()
            )));
        }
        let h = trajectories[0].ncols();
        for t in &trajectories {
            if t.nrows() != 2 || t.ncols() != h {
                return Err(Error::ShapeMismatch(format!(
                    "pool trajectory is {}x{}, expected 2x{h}",
                    t.nrows(),
                    t.ncols()
                )));
            }
        }
        Ok(StitchPool { trajectories, costs })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.trajectories[0].ncols()
    }

    fn best(&self) -> usize {
        let mut best = 0;
        for (i, c) in self.costs.iter().enumerate() {
            if *c < self.costs[best] {
                best = i;
            }
        }
        best
    }
}

/// Where a piece of the stitched path came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SegmentSource {
    /// Waypoints `from..=to` of pool trajectory `pool`.
    Pool { pool: usize, from: usize, to: usize },
    /// A locally planned bridge between two stitch points.
    Bridge { points: usize },
}

#[derive(Debug, Clone)]
pub struct StitchResult {
    /// Assembled waypoints, `(2, n)`.
    pub waypoints: Array2<f64>,
    pub stitches: usize,
    pub segments: Vec<SegmentSource>,
}

/// True if every edge of `traj` between waypoint `from` and `to` keeps
/// clearance at the oracle resolution.
fn span_is_free(scene: &Scene, traj: &Array2<f64>, from: usize, to: usize, resolution: f64) -> bool {
    let view = traj.slice(ndarray::s![.., from..=to]).to_owned();
    is_collision_free(scene, &view, resolution)
}

/// Content fingerprint of a trajectory. Bridge planner randomness is
/// seeded per (stitch seed, target trajectory, target waypoint), so the
/// attempt toward a given target does not depend on what else happens to
/// be in the pool.
fn fingerprint(traj: &Array2<f64>) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for v in traj.iter() {
        h ^= v.to_bits();
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Finds the best stitch target from `current`: the nearest waypoint among
/// unvisited pool trajectories that lies strictly past `progress` (as an
/// index fraction) and whose outgoing window is collision-free. Candidates
/// are returned nearest first, at most `limit` of them.
pub fn find_stitch_targets(
    scene: &Scene,
    pool: &StitchPool,
    current: Point2,
    progress: f64,
    visited: &HashSet<usize>,
    cfg: &StitchConfig,
    limit: usize,
) -> Vec<(usize, usize)> {
    let h = pool.horizon();
    let denom = (h - 1).max(1) as f64;
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (e, traj) in pool.trajectories.iter().enumerate() {
        if visited.contains(&e) {
            continue;
        }
        for j in 0..h {
            let frac = j as f64 / denom;
            if frac <= progress + 1e-12 {
                continue;
            }
            let d = geom::dist(current, waypoint(traj, j));
            candidates.push((d, e, j));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    // Window check is the expensive part, so run it lazily in distance order.
    let mut out = Vec::new();
    for (_, e, j) in candidates {
        let end = (j + cfg.window).min(h - 1);
        if span_is_free(scene, &pool.trajectories[e], j, end, cfg.resolution) {
            out.push((e, j));
            if out.len() >= limit {
                break;
            }
        }
    }
    out
}

fn push_span(out: &mut Vec<Point2>, traj: &Array2<f64>, from: usize, to: usize) {
    for j in from..=to {
        out.push(waypoint(traj, j));
    }
}

/// Walks the lowest-cost pool trajectory from start to goal, stitching
/// through the pool wherever a window collides. The returned path starts
/// and ends exactly where the pool trajectories do. Deterministic in
/// `seed`.
pub fn stitch(
    scene: &Scene,
    pool: &StitchPool,
    cfg: &StitchConfig,
    seed: u64,
) -> Result<StitchResult> {
    cfg.validate()?;
    let h = pool.horizon();
    if h < 2 {
        return Err(Error::InvalidConfig("pool trajectories need at least 2 waypoints".into()));
    }
    let denom = (h - 1) as f64;
    let mut visited: HashSet<usize> = HashSet::new();
    let mut cur = pool.best();
    visited.insert(cur);
    let mut idx = 0usize;
    let mut stitches = 0usize;
    let mut segments: Vec<SegmentSource> = Vec::new();
    let mut points: Vec<Point2> = vec![waypoint(&pool.trajectories[cur], 0)];
    let mut seg_start = 0usize;
    while idx < h - 1 {
        let end = (idx + cfg.window).min(h - 1);
        if span_is_free(scene, &pool.trajectories[cur], idx, end, cfg.resolution) {
            push_span(&mut points, &pool.trajectories[cur], idx + 1, end);
            idx = end;
            continue;
        }
        // Window collides: close the clean prefix of this trajectory and
        // look for somewhere to jump.
        if stitches >= cfg.max_stitches {
            return Err(Error::PlanFailed(format!(
                "stitch budget of {} exhausted",
                cfg.max_stitches
            )));
        }
        let here = waypoint(&pool.trajectories[cur], idx);
        let progress = idx as f64 / denom;
        let targets =
            find_stitch_targets(scene, pool, here, progress, &visited, cfg, cfg.bridge_attempts);
        if targets.is_empty() {
            return Err(Error::PlanFailed(format!(
                "no stitch target past progress {progress:.2} with a free window"
            )));
        }
        let mut bridged = None;
        for (e, j) in targets {
            let to = waypoint(&pool.trajectories[e], j);
            let mut rng =
                derive_rng(seed, &[TAG_BRIDGE, fingerprint(&pool.trajectories[e]), j as u64]);
            match rrt_connect(scene, here, to, &cfg.bridge, &mut rng) {
                Ok(path) => {
                    bridged = Some((e, j, path));
                    break;
                }
                Err(Error::PlanFailed(_)) => continue,
                Err(other) => return Err(other),
            }
        }
        let Some((e, j, path)) = bridged else {
            return Err(Error::PlanFailed("no stitch target could be bridged".into()));
        };
        if idx > seg_start {
            segments.push(SegmentSource::Pool { pool: cur, from: seg_start, to: idx });
        }
        let bridge = densify(&path, cfg.bridge.step);
        // Skip the bridge's first point: it is the current waypoint.
        for p in bridge.iter().skip(1) {
            points.push(*p);
        }
        segments.push(SegmentSource::Bridge { points: bridge.len() });
        points.push(waypoint(&pool.trajectories[e], j));
        cur = e;
        visited.insert(cur);
        idx = j;
        seg_start = j;
        stitches += 1;
    }
    if idx >= seg_start {
        segments.push(SegmentSource::Pool { pool: cur, from: seg_start, to: idx });
    }
    let mut waypoints = Array2::zeros((2, points.len()));
    for (k, p) in points.iter().enumerate() {
        waypoints[[0, k]] = p[0];
        waypoints[[1, k]] = p[1];
    }
    if !is_collision_free(scene, &waypoints, cfg.resolution) {
        return Err(Error::PlanFailed("stitched path failed final validation".into()));
    }
    Ok(StitchResult { waypoints, stitches, segments })
}

/// Largest gap between consecutive waypoints of a path, used to verify
/// stitched paths keep bounded steps.
pub fn max_step(path: &Array2<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 1..path.ncols() {
        let a = [path[[0, k - 1]], path[[1, k - 1]]];
        let b = [path[[0, k]], path[[1, k]]];
        worst = worst.max(geom::dist(a, b));
    }
    worst
}

/// Sum of edge lengths.
pub fn path_length(path: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    for k in 1..path.ncols() {
        let a = [path[[0, k - 1]], path[[1, k - 1]]];
        let b = [path[[0, k]], path[[1, k]]];
        total += geom::dist(a, b);
    }
    total
}
