//! Bidirectional RRT-Connect over the 2D disc robot, plus shortcut
//! smoothing and arc-length resampling. Used three ways: expert
//! demonstrations, local bridging during stitching, and (with a larger
//! budget) the sampling-planner baseline.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{self, Point2};
use crate::world::Scene;

/// Planner parameters. `step` is the maximum extension length, `max_nodes`
/// bounds the total tree size (the planner gives up deterministically once
/// reached), `resolution` is the collision-check spacing along edges.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RrtConfig {
    pub step: f64,
    pub max_nodes: usize,
    pub resolution: f64,
}

impl Default for RrtConfig {
    fn default() -> Self {
        RrtConfig { step: 0.08, max_nodes: 2000, resolution: 0.025 }
    }
}

impl RrtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.resolution > 0.0) || self.max_nodes < 2 {
            return Err(Error::InvalidConfig(format!(
                "rrt config must have positive step/resolution and max_nodes >= 2: {self:?}"
            )));
        }
        Ok(())
    }
}

struct Tree {
    nodes: Vec<Point2>,
    parents: Vec<usize>,
}

impl Tree {
    fn new(root: Point2) -> Self {
        Tree { nodes: vec![root], parents: vec![usize::MAX] }
    }

    fn nearest(&self, p: Point2) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = geom::dist(*n, p);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    fn add(&mut self, p: Point2, parent: usize) -> usize {
        self.nodes.push(p);
        self.parents.push(parent);
        self.nodes.len() - 1
    }

    fn path_to_root(&self, mut idx: usize) -> Vec<Point2> {
        let mut path = Vec::new();
        while idx != usize::MAX {
            path.push(self.nodes[idx]);
            idx = self.parents[idx];
        }
        path
    }
}

/// True iff the straight segment keeps clearance `scene.robot_radius` when
/// sampled every `resolution` along its length (endpoints included).
pub fn segment_is_free(scene: &Scene, a: Point2, b: Point2, resolution: f64) -> bool {
    let r = scene.robot_radius;
    if scene.signed_distance(a) < r {
        return false;
    }
    let d = geom::dist(a, b);
    let steps = (d / resolution).ceil().max(1.0) as usize;
    for i in 1..=steps {
        let p = geom::lerp(a, b, i as f64 / steps as f64);
        if scene.signed_distance(p) < r {
            return false;
        }
    }
    true
}

enum ExtendOutcome {
    Trapped,
    Advanced(usize),
    Reached(usize),
}

fn extend(tree: &mut Tree, target: Point2, scene: &Scene, cfg: &RrtConfig) -> ExtendOutcome {
    let near_idx = tree.nearest(target);
    let near = tree.nodes[near_idx];
    let d = geom::dist(near, target);
    if d == 0.0 {
        return ExtendOutcome::Reached(near_idx);
    }
    let reached = d <= cfg.step;
    let new = if reached {
        target
    } else {
        geom::lerp(near, target, cfg.step / d)
    };
    if !segment_is_free(scene, near, new, cfg.resolution) {
        return ExtendOutcome::Trapped;
    }
    let idx = tree.add(new, near_idx);
    if reached {
        ExtendOutcome::Reached(idx)
    } else {
        ExtendOutcome::Advanced(idx)
    }
}

/// Greedily extends `tree` toward `target` until it reaches it or gets
/// stuck. Returns the index of the final node if the target was reached.
fn connect(tree: &mut Tree, target: Point2, scene: &Scene, cfg: &RrtConfig, budget: &mut usize) -> Option<usize> {
    loop {
        if *budget == 0 {
            return None;
        }
        match extend(tree, target, scene, cfg) {
            ExtendOutcome::Trapped => return None,
            ExtendOutcome::Advanced(_) => {
                *budget -= 1;
            }
            ExtendOutcome::Reached(idx) => {
                *budget -= 1;
                return Some(idx);
            }
        }
    }
}

/// Plans a collision-free polyline from `start` to `goal` with clearance
/// `scene.robot_radius`. The returned path begins exactly at `start`, ends
/// exactly at `goal`, and has consecutive waypoints at most `step` apart.
///
/// Fails if an endpoint violates clearance or the node budget runs out.
pub fn rrt_connect(
    scene: &Scene,
    start: Point2,
    goal: Point2,
    cfg: &RrtConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Point2>> {
    cfg.validate()?;
    let r = scene.robot_radius;
    if !geom::is_finite(start) || scene.signed_distance(start) < r {
        return Err(Error::PlanFailed(format!("start {start:?} violates clearance")));
    }
    if !geom::is_finite(goal) || scene.signed_distance(goal) < r {
        return Err(Error::PlanFailed(format!("goal {goal:?} violates clearance")));
    }
    if start == goal {
        return Ok(vec![start]);
    }
    // Straight-line connect is both the common case in light scenes and the
    // cheapest to verify.
    if segment_is_free(scene, start, goal, cfg.resolution) {
        return Ok(densify(&[start, goal], cfg.step));
    }

    let ws = &scene.workspace;
    let mut tree_a = Tree::new(start);
    let mut tree_b = Tree::new(goal);
    // True while `tree_a` is the tree rooted at the start.
    let mut a_is_start = true;
    let mut budget = cfg.max_nodes.saturating_sub(2);
    // Trapped extensions consume no node budget, so cap raw iterations to
    // guarantee termination even when both trees are walled in.
    let mut iters_left = cfg.max_nodes.saturating_mul(16);

    while budget > 0 && iters_left > 0 {
        iters_left -= 1;
        let sample = [
            rng.random_range(ws.min[0]..=ws.max[0]),
            rng.random_range(ws.min[1]..=ws.max[1]),
        ];
        let advanced = match extend(&mut tree_a, sample, scene, cfg) {
            ExtendOutcome::Trapped => None,
            ExtendOutcome::Advanced(i) | ExtendOutcome::Reached(i) => {
                budget -= 1;
                Some(i)
            }
        };
        if let Some(new_idx) = advanced {
            let target = tree_a.nodes[new_idx];
            if let Some(meet_idx) = connect(&mut tree_b, target, scene, cfg, &mut budget) {
                let mut half_a = tree_a.path_to_root(new_idx);
                half_a.reverse();
                let half_b = tree_b.path_to_root(meet_idx);
                // half_a ends at the meeting point, half_b starts there.
                let mut path = half_a;
                path.extend_from_slice(&half_b[1..]);
                if !a_is_start {
                    path.reverse();
                }
                debug_assert_eq!(path[0], start);
                debug_assert_eq!(*path.last().unwrap(), goal);
                return Ok(densify(&path, cfg.step));
            }
        }
        std::mem::swap(&mut tree_a, &mut tree_b);
        a_is_start = !a_is_start;
    }
    Err(Error::PlanFailed(format!(
        "no path within {} nodes (trees grew to {} + {})",
        cfg.max_nodes,
        tree_a.nodes.len(),
        tree_b.nodes.len()
    )))
}

/// Shortcut smoothing: repeatedly tries to replace a random sub-path with a
/// straight segment. Never increases path length, keeps endpoints fixed,
/// and re-densifies to `step` spacing at the end.
pub fn shortcut_path(
    scene: &Scene,
    path: &[Point2],
    iters: usize,
    cfg: &RrtConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Point2> {
    let mut path = path.to_vec();
    for _ in 0..iters {
        if path.len() < 3 {
            break;
        }
        let i = rng.random_range(0..path.len() - 2);
        let j = rng.random_range(i + 2..path.len());
        if segment_is_free(scene, path[i], path[j], cfg.resolution) {
            path.drain(i + 1..j);
        }
    }
    densify(&path, cfg.step)
}

/// Inserts points so consecutive waypoints are at most `step` apart.
pub fn densify(path: &[Point2], step: f64) -> Vec<Point2> {
    let mut out = Vec::with_capacity(path.len());
    if path.is_empty() {
        return out;
    }
    out.push(path[0]);
    for w in path.windows(2) {
        let d = geom::dist(w[0], w[1]);
        let n = (d / step).ceil().max(1.0) as usize;
        for i in 1..=n {
            out.push(geom::lerp(w[0], w[1], i as f64 / n as f64));
        }
    }
    out
}

/// Resamples a polyline to exactly `count` points uniformly spaced by arc
/// length. Endpoints are preserved exactly. A zero-length path repeats its
/// single location.
pub fn resample_arclength(path: &[Point2], count: usize) -> Result<Vec<Point2>> {
    if path.is_empty() || count < 2 {
        return Err(Error::InvalidConfig(format!(
            "resample needs a nonempty path and count >= 2 (path {}, count {count})",
            path.len()
        )));
    }
    let mut cum = Vec::with_capacity(path.len());
    cum.push(0.0);
    for w in path.windows(2) {
        cum.push(cum.last().unwrap() + geom::dist(w[0], w[1]));
    }
    let total = *cum.last().unwrap();
    if total == 0.0 {
        return Ok(vec![path[0]; count]);
    }
    let mut out = Vec::with_capacity(count);
    out.push(path[0]);
    let mut seg = 0;
    for i in 1..count - 1 {
        let target = total * i as f64 / (count - 1) as f64;
        while seg + 1 < cum.len() - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let t = if span > 0.0 { (target - cum[seg]) / span } else { 0.0 };
        out.push(geom::lerp(path[seg], path[seg + 1], t));
    }
    out.push(*path.last().unwrap());
    Ok(out)
}
