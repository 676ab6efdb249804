//! Expert demonstrations: sampling-based plans smoothed, resampled, and
//! compressed into polynomial control points.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bernstein::{BernsteinTransform, ControlPoints};
use crate::error::{Error, Result};
use crate::rrt::{resample_arclength, rrt_connect, shortcut_path, RrtConfig};
use crate::world::{is_collision_free, path_to_trajectory, PlanningProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertConfig {
    pub rrt: RrtConfig,
    /// Shortcut smoothing iterations applied to the raw plan.
    pub shortcut_iters: usize,
    /// Planning retries (fresh randomness) before giving up on a problem.
    pub attempts: usize,
    /// Accept a fit only if `max |fitted - resampled|` is below this bound.
    pub fit_threshold: f64,
    /// Extra clearance used while planning so the fitted curve, which can
    /// deviate from the polyline by up to the fit threshold, keeps the true
    /// clearance. Annealed toward zero over retries so tight passages stay
    /// reachable.
    pub clearance_margin: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        ExpertConfig {
            rrt: RrtConfig::default(),
            shortcut_iters: 200,
            attempts: 3,
            fit_threshold: 0.03,
            clearance_margin: 0.02,
        }
    }
}

impl ExpertConfig {
    pub fn validate(&self) -> Result<()> {
        self.rrt.validate()?;
        if self.attempts == 0 {
            return Err(Error::InvalidConfig("expert attempts must be at least 1".into()));
        }
        if !(self.fit_threshold > 0.0) {
            return Err(Error::InvalidConfig("fit threshold must be positive".into()));
        }
        if self.clearance_margin < 0.0 {
            return Err(Error::InvalidConfig("clearance margin cannot be negative".into()));
        }
        Ok(())
    }
}

/// A demonstration: control points whose decoded trajectory solves the
/// problem, plus the sup-norm fit residual against the smoothed plan.
#[derive(Debug, Clone)]
pub struct ExpertSample {
    pub alpha: ControlPoints,
    pub residual: f64,
}

/// Plans with RRT-Connect, smooths with random shortcuts, resamples to the
/// transform's horizon, and fits control points. The fitted curve must stay
/// within `fit_threshold` of the resampled plan and pass the dense
/// collision oracle; otherwise the attempt is retried with fresh
/// randomness and a smaller planning margin.
pub fn generate_expert(
    problem: &PlanningProblem,
    transform: &BernsteinTransform,
    cfg: &ExpertConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ExpertSample> {
    cfg.validate()?;
    problem.scene.validate()?;
    let h = transform.horizon();
    let mut last_err = None;
    for attempt in 0..cfg.attempts {
        // Full margin first, annealed linearly to zero on the last attempt.
        let margin = if cfg.attempts == 1 {
            cfg.clearance_margin
        } else {
            cfg.clearance_margin * (cfg.attempts - 1 - attempt) as f64
                / (cfg.attempts - 1) as f64
        };
        let mut padded = problem.scene.clone();
        padded.robot_radius += margin;
        let path = match rrt_connect(&padded, problem.start, problem.goal, &cfg.rrt, rng) {
            Ok(p) => p,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let smoothed = shortcut_path(&padded, &path, cfg.shortcut_iters, &cfg.rrt, rng);
        let resampled = resample_arclength(&smoothed, h)?;
        let tau = path_to_trajectory(&resampled);
        let mut alpha = transform.fit(&tau)?;
        snap_endpoints(&mut alpha, problem.start, problem.goal);
        let fitted = transform.evaluate(&alpha)?;
        let residual = (&fitted - &tau).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if residual > cfg.fit_threshold {
            last_err = Some(Error::PlanFailed(format!(
                "fit residual {residual:.4} exceeds threshold {:.4}",
                cfg.fit_threshold
            )));
            continue;
        }
        if !is_collision_free(&problem.scene, &fitted, cfg.rrt.resolution) {
            last_err = Some(Error::PlanFailed("fitted curve failed the collision oracle".into()));
            continue;
        }
        return Ok(ExpertSample { alpha, residual });
    }
    Err(last_err.unwrap_or_else(|| Error::PlanFailed("no expert attempts were made".into())))
}

/// Overwrites the first and last control point with the exact endpoints.
/// Decoded curves then interpolate the query endpoints exactly, matching
/// what endpoint conditioning enforces at sampling time.
pub fn snap_endpoints(alpha: &mut Array2<f64>, start: [f64; 2], goal: [f64; 2]) {
    let last = alpha.ncols() - 1;
    for dim in 0..2 {
        alpha[[dim, 0]] = start[dim];
        alpha[[dim, last]] = goal[dim];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom;
    use crate::rng::derive_rng;
    use crate::world::{generate_problem, Difficulty, Scene, SceneGenConfig};

    fn transform() -> BernsteinTransform {
        BernsteinTransform::new(7, 50).unwrap()
    }

    #[test]
    fn empty_scene_gives_colinear_control_points() {
        let problem = PlanningProblem {
            scene: Scene::empty(0.05),
            start: [0.1, 0.2],
            goal: [0.9, 0.8],
        };
        let t = transform();
        let mut rng = derive_rng(1, &[0]);
        let sample = generate_expert(&problem, &t, &ExpertConfig::default(), &mut rng).unwrap();
        assert!(sample.residual < 1e-6);
        // All control points on the start-goal line.
        let dir = geom::sub(problem.goal, problem.start);
        for j in 0..t.degree() + 1 {
            let p = [sample.alpha[[0, j]], sample.alpha[[1, j]]];
            let off = geom::cross(dir, geom::sub(p, problem.start));
            assert!(off.abs() < 1e-6, "control point {j} off the line by {off:.2e}");
        }
        assert_eq!(sample.alpha[[0, 0]], 0.1);
        assert_eq!(sample.alpha[[1, 7]], 0.8);
    }

    #[test]
    fn blocked_problem_fails_after_attempts() {
        let mut scene = Scene::empty(0.05);
        scene.obstacles.push(crate::world::Obstacle::Circle { center: [0.2, 0.2], radius: 0.15 });
        let problem = PlanningProblem { scene, start: [0.2, 0.2], goal: [0.9, 0.9] };
        let mut rng = derive_rng(1, &[0]);
        let res = generate_expert(&problem, &transform(), &ExpertConfig::default(), &mut rng);
        assert!(matches!(res, Err(Error::PlanFailed(_))));
    }

    #[test]
    fn experts_on_generated_problems_validate_and_interpolate() {
        let cfg = SceneGenConfig::default();
        let t = transform();
        let expert_cfg = ExpertConfig::default();
        let mut solved = 0;
        for seed in 0..20 {
            let problem = generate_problem(seed, Difficulty::Sparse, &cfg).unwrap();
            let mut rng = derive_rng(seed, &[42]);
            if let Ok(sample) = generate_expert(&problem, &t, &expert_cfg, &mut rng) {
                solved += 1;
                let fitted = t.evaluate(&sample.alpha).unwrap();
                assert!(is_collision_free(&problem.scene, &fitted, 0.025));
                assert!((fitted[[0, 0]] - problem.start[0]).abs() < 1e-12);
                assert!((fitted[[1, 49]] - problem.goal[1]).abs() < 1e-12);
                assert!(sample.residual <= expert_cfg.fit_threshold);
            }
        }
        assert!(solved >= 14, "only {solved}/20 sparse experts succeeded");
    }

    #[test]
    fn expert_generation_is_deterministic() {
        let cfg = SceneGenConfig::default();
        let problem = generate_problem(3, Difficulty::Cluttered, &cfg).unwrap();
        let t = transform();
        let a = generate_expert(&problem, &t, &ExpertConfig::default(), &mut derive_rng(5, &[1]));
        let b = generate_expert(&problem, &t, &ExpertConfig::default(), &mut derive_rng(5, &[1]));
        match (a, b) {
            (Ok(x), Ok(y)) => assert_eq!(x.alpha, y.alpha),
            (Err(_), Err(_)) => {}
            _ => panic!("determinism broken"),
        }
    }
}
