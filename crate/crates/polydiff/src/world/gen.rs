//! Procedural scenes and planning problems, deterministic in their seed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Point2};
use crate::rng::{derive_rng, derive_seed};
use crate::world::{Obstacle, PlanningProblem, Scene, Workspace, SCENE_SCHEMA_VERSION};

/// Scene difficulty classes. `Empty` generates no obstacles and exists for
/// calibration runs and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Difficulty {
    Empty,
    Sparse,
    Cluttered,
    NarrowPassage,
}

impl Difficulty {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "empty" => Ok(Difficulty::Empty),
            "sparse" => Ok(Difficulty::Sparse),
            "cluttered" => Ok(Difficulty::Cluttered),
            "narrow-passage" => Ok(Difficulty::NarrowPassage),
            other => Err(Error::InvalidConfig(format!(
                "unknown difficulty '{other}', expected one of: empty, sparse, cluttered, narrow-passage"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Difficulty::Empty => "empty",
            Difficulty::Sparse => "sparse",
            Difficulty::Cluttered => "cluttered",
            Difficulty::NarrowPassage => "narrow-passage",
        }
    }
}

/// Parameters of the procedural generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneGenConfig {
    pub workspace: Workspace,
    pub robot_radius: f64,
    /// Inclusive obstacle count range for sparse scenes.
    pub sparse_count: [usize; 2],
    /// Inclusive obstacle count range for cluttered scenes.
    pub cluttered_count: [usize; 2],
    /// Probability that an obstacle is a circle rather than a box.
    pub circle_fraction: f64,
    pub sparse_circle_radius: [f64; 2],
    pub sparse_box_extent: [f64; 2],
    pub cluttered_circle_radius: [f64; 2],
    pub cluttered_box_extent: [f64; 2],
    /// Passage gap width as a multiple of the robot radius.
    pub passage_gap_factor: [f64; 2],
    pub wall_thickness: f64,
    /// Extra circle obstacles added beside the wall in passage scenes.
    pub passage_extra_obstacles: [usize; 2],
    /// Minimum start-goal distance for non-passage problems.
    pub min_separation: f64,
    /// Start/goal clearance requirement as a multiple of the robot radius.
    pub endpoint_clearance_factor: f64,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        SceneGenConfig {
            workspace: Workspace::unit(),
            robot_radius: 0.05,
            sparse_count: [3, 6],
            cluttered_count: [8, 15],
            circle_fraction: 0.5,
            sparse_circle_radius: [0.06, 0.13],
            sparse_box_extent: [0.10, 0.22],
            cluttered_circle_radius: [0.075, 0.155],
            cluttered_box_extent: [0.11, 0.24],
            passage_gap_factor: [2.5, 4.0],
            wall_thickness: 0.06,
            passage_extra_obstacles: [0, 2],
            min_separation: 0.5,
            endpoint_clearance_factor: 1.5,
        }
    }
}

impl SceneGenConfig {
    pub fn validate(&self) -> Result<()> {
        let ws = &self.workspace;
        if ws.min[0] >= ws.max[0] || ws.min[1] >= ws.max[1] {
            return Err(Error::InvalidConfig("workspace bounds are inverted".into()));
        }
        if !(self.robot_radius > 0.0) {
            return Err(Error::InvalidConfig("robot radius must be positive".into()));
        }
        for (name, range) in [
            ("sparse_count", &self.sparse_count.map(|v| v as f64)),
            ("cluttered_count", &self.cluttered_count.map(|v| v as f64)),
        ] {
            if range[0] > range[1] {
                return Err(Error::InvalidConfig(format!("{name} range is inverted")));
            }
        }
        for (name, range) in [
            ("sparse_circle_radius", &self.sparse_circle_radius),
            ("sparse_box_extent", &self.sparse_box_extent),
            ("cluttered_circle_radius", &self.cluttered_circle_radius),
            ("cluttered_box_extent", &self.cluttered_box_extent),
            ("passage_gap_factor", &self.passage_gap_factor),
        ] {
            if !(range[0] > 0.0) || range[0] > range[1] {
                return Err(Error::InvalidConfig(format!("{name} range is invalid: {range:?}")));
            }
        }
        if self.passage_gap_factor[0] < 2.0 {
            return Err(Error::InvalidConfig(
                "passage gap must be at least 2 robot radii to be traversable".into(),
            ));
        }
        if !(self.circle_fraction >= 0.0 && self.circle_fraction <= 1.0) {
            return Err(Error::InvalidConfig("circle_fraction must lie in [0, 1]".into()));
        }
        if !(self.endpoint_clearance_factor >= 1.0) {
            return Err(Error::InvalidConfig(
                "endpoint_clearance_factor must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Geometry of the passage in a narrow-passage scene: the wall blocks
/// `axis` over the slab `[lo, hi]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PassageInfo {
    pub axis: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Generates a scene deterministically from `(seed, difficulty, cfg)`.
pub fn generate_scene(seed: u64, difficulty: Difficulty, cfg: &SceneGenConfig) -> Result<Scene> {
    generate_scene_inner(seed, difficulty, cfg).map(|(scene, _)| scene)
}

const TAG_SCENE: u64 = 0x5c3e;
const TAG_PROBLEM: u64 = 0x9707;

pub(crate) fn generate_scene_inner(
    seed: u64,
    difficulty: Difficulty,
    cfg: &SceneGenConfig,
) -> Result<(Scene, Option<PassageInfo>)> {
    cfg.validate()?;
    let mut rng = derive_rng(seed, &[TAG_SCENE, difficulty as u64]);
    let ws = cfg.workspace;
    let mut scene = Scene {
        version: SCENE_SCHEMA_VERSION,
        seed,
        workspace: ws,
        robot_radius: cfg.robot_radius,
        obstacles: Vec::new(),
    };
    let mut passage = None;
    match difficulty {
        Difficulty::Empty => {}
        Difficulty::Sparse => {
            let n = rng.random_range(cfg.sparse_count[0]..=cfg.sparse_count[1]);
            for _ in 0..n {
                scene.obstacles.push(random_obstacle(
                    &mut rng,
                    &ws,
                    cfg.circle_fraction,
                    cfg.sparse_circle_radius,
                    cfg.sparse_box_extent,
                ));
            }
        }
        Difficulty::Cluttered => {
            let n = rng.random_range(cfg.cluttered_count[0]..=cfg.cluttered_count[1]);
            for _ in 0..n {
                scene.obstacles.push(random_obstacle(
                    &mut rng,
                    &ws,
                    cfg.circle_fraction,
                    cfg.cluttered_circle_radius,
                    cfg.cluttered_box_extent,
                ));
            }
        }
        Difficulty::NarrowPassage => {
            let r = cfg.robot_radius;
            let axis = if rng.random_range(0.0..1.0) < 0.5 { 0 } else { 1 };
            let across = 1 - axis;
            let span = ws.max[axis] - ws.min[axis];
            let wall_mid = ws.min[axis] + span * rng.random_range(0.40..0.60);
            let half = cfg.wall_thickness * 0.5;
            let gap_w = r * rng.random_range(cfg.passage_gap_factor[0]..=cfg.passage_gap_factor[1]);
            let across_span = ws.max[across] - ws.min[across];
            let gap_mid = ws.min[across]
                + across_span * rng.random_range(0.25..0.75);
            let gap_lo = (gap_mid - gap_w * 0.5).max(ws.min[across] + gap_w);
            let gap_hi = gap_lo + gap_w;
            // Two wall segments spanning the workspace except the gap.
            let mut part = |a_lo: f64, a_hi: f64| {
                if a_hi - a_lo <= 1e-9 {
                    return;
                }
                let (min, max) = if axis == 0 {
                    ([wall_mid - half, a_lo], [wall_mid + half, a_hi])
                } else {
                    ([a_lo, wall_mid - half], [a_hi, wall_mid + half])
                };
                scene.obstacles.push(Obstacle::Box { min, max });
            };
            part(ws.min[across], gap_lo);
            part(gap_hi, ws.max[across]);
            passage = Some(PassageInfo { axis, lo: wall_mid - half, hi: wall_mid + half });
            // A few side obstacles, kept away from the wall slab so they
            // cannot seal the passage.
            let extra = rng.random_range(cfg.passage_extra_obstacles[0]..=cfg.passage_extra_obstacles[1]);
            let mut placed = 0;
            let mut tries = 0;
            while placed < extra && tries < 200 {
                tries += 1;
                let radius = rng
                    .random_range(cfg.cluttered_circle_radius[0]..=cfg.cluttered_circle_radius[1]);
                let center = random_point_in(&mut rng, &ws, radius);
                if (center[axis] - wall_mid).abs() < half + radius + 3.0 * r {
                    continue;
                }
                scene.obstacles.push(Obstacle::Circle { center, radius });
                placed += 1;
            }
        }
    }
    Ok((scene, passage))
}

fn random_point_in(rng: &mut ChaCha8Rng, ws: &Workspace, inset: f64) -> Point2 {
    [
        rng.random_range(ws.min[0] + inset..=ws.max[0] - inset),
        rng.random_range(ws.min[1] + inset..=ws.max[1] - inset),
    ]
}

fn random_obstacle(
    rng: &mut ChaCha8Rng,
    ws: &Workspace,
    circle_fraction: f64,
    circle_radius: [f64; 2],
    box_extent: [f64; 2],
) -> Obstacle {
    if rng.random_range(0.0..1.0) < circle_fraction {
        let radius = rng.random_range(circle_radius[0]..=circle_radius[1]);
        Obstacle::Circle { center: random_point_in(rng, ws, radius), radius }
    } else {
        let ex = rng.random_range(box_extent[0]..=box_extent[1]);
        let ey = rng.random_range(box_extent[0]..=box_extent[1]);
        let min = [
            rng.random_range(ws.min[0]..=ws.max[0] - ex),
            rng.random_range(ws.min[1]..=ws.max[1] - ey),
        ];
        Obstacle::Box { min, max: [min[0] + ex, min[1] + ey] }
    }
}

/// Generates a planning problem: a scene plus start/goal positions with
/// clearance `endpoint_clearance_factor * robot_radius`. Non-passage
/// problems also enforce the start-goal separation floor; passage problems
/// place start and goal on opposite sides of the wall. Deterministic in
/// `(seed, difficulty, cfg)`.
pub fn generate_problem(
    seed: u64,
    difficulty: Difficulty,
    cfg: &SceneGenConfig,
) -> Result<PlanningProblem> {
    cfg.validate()?;
    for attempt in 0..32u64 {
        let scene_seed = if attempt == 0 { seed } else { derive_seed(seed, &[TAG_SCENE, attempt]) };
        let (scene, passage) = generate_scene_inner(scene_seed, difficulty, cfg)?;
        let mut rng = derive_rng(seed, &[TAG_PROBLEM, attempt]);
        let clearance = cfg.robot_radius * cfg.endpoint_clearance_factor;
        let sample_side = |rng: &mut ChaCha8Rng, side: i64| -> Option<Point2> {
            for _ in 0..500 {
                let p = random_point_in(rng, &scene.workspace, cfg.robot_radius);
                if scene.signed_distance(p) < clearance {
                    continue;
                }
                if let Some(info) = &passage {
                    let ok = if side < 0 {
                        p[info.axis] < info.lo - clearance
                    } else {
                        p[info.axis] > info.hi + clearance
                    };
                    if !ok {
                        continue;
                    }
                }
                return Some(p);
            }
            None
        };
        let start = match sample_side(&mut rng, -1) {
            Some(p) => p,
            None => continue,
        };
        let mut goal = None;
        for _ in 0..500 {
            let g = match sample_side(&mut rng, 1) {
                Some(g) => g,
                None => break,
            };
            if passage.is_none() && geom::dist(start, g) < cfg.min_separation {
                continue;
            }
            goal = Some(g);
            break;
        }
        if let Some(goal) = goal {
            return Ok(PlanningProblem { scene, start, goal });
        }
    }
    Err(Error::PlanFailed(format!(
        "could not sample start/goal for seed {seed} ({})",
        difficulty.as_str()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::scene_to_json;

    #[test]
    fn scenes_are_deterministic_in_seed() {
        let cfg = SceneGenConfig::default();
        let a = generate_scene(12, Difficulty::Cluttered, &cfg).unwrap();
        let b = generate_scene(12, Difficulty::Cluttered, &cfg).unwrap();
        assert_eq!(scene_to_json(&a).unwrap(), scene_to_json(&b).unwrap());
        let c = generate_scene(13, Difficulty::Cluttered, &cfg).unwrap();
        assert_ne!(scene_to_json(&a).unwrap(), scene_to_json(&c).unwrap());
    }

    #[test]
    fn sparse_and_cluttered_obstacle_counts_stay_in_range() {
        let cfg = SceneGenConfig::default();
        for seed in 0..50 {
            let s = generate_scene(seed, Difficulty::Sparse, &cfg).unwrap();
            assert!((3..=6).contains(&s.obstacles.len()), "sparse count {}", s.obstacles.len());
            let c = generate_scene(seed, Difficulty::Cluttered, &cfg).unwrap();
            assert!((8..=15).contains(&c.obstacles.len()), "cluttered count {}", c.obstacles.len());
        }
    }

    #[test]
    fn empty_difficulty_has_no_obstacles() {
        let s = generate_scene(5, Difficulty::Empty, &SceneGenConfig::default()).unwrap();
        assert!(s.obstacles.is_empty());
    }

    #[test]
    fn obstacles_stay_inside_workspace() {
        let cfg = SceneGenConfig::default();
        for seed in 0..30 {
            let s = generate_scene(seed, Difficulty::Cluttered, &cfg).unwrap();
            for obs in &s.obstacles {
                match obs {
                    Obstacle::Circle { center, radius } => {
                        assert!(center[0] - radius >= -1e-9 && center[0] + radius <= 1.0 + 1e-9);
                        assert!(center[1] - radius >= -1e-9 && center[1] + radius <= 1.0 + 1e-9);
                    }
                    Obstacle::Box { min, max } => {
                        assert!(min[0] >= -1e-9 && min[1] >= -1e-9);
                        assert!(max[0] <= 1.0 + 1e-9 && max[1] <= 1.0 + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn narrow_passage_has_traversable_gap() {
        let cfg = SceneGenConfig::default();
        for seed in 0..30 {
            let (scene, passage) = generate_scene_inner(seed, Difficulty::NarrowPassage, &cfg).unwrap();
            let info = passage.expect("passage geometry");
            // Walk along the wall mid-line and find the widest clear band.
            let mid = 0.5 * (info.lo + info.hi);
            let across = 1 - info.axis;
            let n = 2000;
            let mut best_run = 0usize;
            let mut run = 0usize;
            for i in 0..=n {
                let t = i as f64 / n as f64;
                let mut p = [0.0, 0.0];
                p[info.axis] = mid;
                p[across] = scene.workspace.min[across]
                    + t * (scene.workspace.max[across] - scene.workspace.min[across]);
                if scene.signed_distance(p) >= scene.robot_radius {
                    run += 1;
                    best_run = best_run.max(run);
                } else {
                    run = 0;
                }
            }
            let band = best_run as f64 / n as f64;
            // Gap of at least 2.5 r leaves a clear band of >= 0.5 r for the
            // disc center; the sampled band must be nonempty.
            assert!(band > 0.0, "seed {seed}: passage is sealed");
        }
    }

    #[test]
    fn problems_respect_clearance_and_separation() {
        let cfg = SceneGenConfig::default();
        for seed in 0..25 {
            let p = generate_problem(seed, Difficulty::Cluttered, &cfg).unwrap();
            let clearance = cfg.robot_radius * cfg.endpoint_clearance_factor;
            assert!(p.scene.signed_distance(p.start) >= clearance);
            assert!(p.scene.signed_distance(p.goal) >= clearance);
            assert!(geom::dist(p.start, p.goal) >= cfg.min_separation);
        }
    }

    #[test]
    fn passage_problems_straddle_the_wall() {
        let cfg = SceneGenConfig::default();
        for seed in 0..25 {
            let p = generate_problem(seed, Difficulty::NarrowPassage, &cfg).unwrap();
            // Start and goal on opposite sides: the segment between them
            // must cross the wall slab, so it cannot be collision-free
            // unless it goes through the gap.
            let (scene, passage) =
                generate_scene_inner(p.scene.seed, Difficulty::NarrowPassage, &cfg).unwrap();
            assert_eq!(scene.obstacles, p.scene.obstacles);
            let info = passage.unwrap();
            let (a, b) = (p.start[info.axis], p.goal[info.axis]);
            assert!(
                (a < info.lo && b > info.hi) || (b < info.lo && a > info.hi),
                "seed {seed}: endpoints do not straddle the wall"
            );
        }
    }

    #[test]
    fn problems_are_deterministic() {
        let cfg = SceneGenConfig::default();
        let a = generate_problem(77, Difficulty::Sparse, &cfg).unwrap();
        let b = generate_problem(77, Difficulty::Sparse, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = SceneGenConfig { passage_gap_factor: [1.0, 4.0], ..Default::default() };
        assert!(generate_scene(0, Difficulty::Sparse, &cfg).is_err());
        let cfg = SceneGenConfig { robot_radius: 0.0, ..Default::default() };
        assert!(generate_problem(0, Difficulty::Sparse, &cfg).is_err());
    }
}
