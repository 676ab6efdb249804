//! Cost functions over decoded trajectories and the machinery that turns
//! their gradients into per-step mean shifts for the sampler.
//!
//! Costs are differentiated with respect to waypoints, then preconditioned
//! through the curve basis into control-point space. All gradients here are
//! exact for the implemented costs; finite differences are used as the test
//! oracle only.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::bernstein::BernsteinTransform;
use crate::diffusion::{sample, DenoiserParams, Endpoints, SampleOutput};
use crate::error::{Error, Result};
use crate::geom::{self, Point2};
use crate::world::Scene;

/// Hinge-squared clearance penalty, summed over every waypoint and every
/// obstacle: `sum max(0, margin + r - sd)^2` where `r` is the robot radius.
/// Returns the cost and its gradient with respect to waypoints `(2, H)`.
pub fn collision_cost(scene: &Scene, traj: &Array2<f64>, margin: f64) -> (f64, Array2<f64>) {
    let h = traj.ncols();
    let r = scene.robot_radius;
    let mut cost = 0.0;
    let mut grad = Array2::<f64>::zeros((2, h));
    for k in 0..h {
        let p = [traj[[0, k]], traj[[1, k]]];
        for obs in &scene.obstacles {
            let sd = obs.signed_distance(p);
            let v = margin + r - sd;
            if v > 0.0 {
                cost += v * v;
                let g = obs.sd_gradient(p);
                grad[[0, k]] -= 2.0 * v * g[0];
                grad[[1, k]] -= 2.0 * v * g[1];
            }
        }
    }
    (cost, grad)
}

/// Smoothness penalty: acceleration term `w_accel * sum ||second diff||^2`
/// plus a turning term `w_curv * sum c_k^2` where `c_k` is the normalized
/// cross product of consecutive segments (a curvature proxy that vanishes
/// on straight uniform trajectories). Gradient support of a single
/// waypoint spans five neighbors.
pub fn curvature_accel_cost(traj: &Array2<f64>, w_accel: f64, w_curv: f64) -> (f64, Array2<f64>) {
    const EPS: f64 = 1e-8;
    let h = traj.ncols();
    let mut cost = 0.0;
    let mut grad = Array2::<f64>::zeros((2, h));
    let p = |k: usize| -> Point2 { [traj[[0, k]], traj[[1, k]]] };
    let add = |g: &mut Array2<f64>, k: usize, v: Point2| {
        g[[0, k]] += v[0];
        g[[1, k]] += v[1];
    };
    for k in 1..h.saturating_sub(1) {
        let (a, b, c) = (p(k - 1), p(k), p(k + 1));
        // Acceleration: s = a - 2b + c.
        let s = geom::add(geom::sub(a, b), geom::sub(c, b));
        cost += w_accel * geom::dot(s, s);
        let two = geom::scale(s, 2.0 * w_accel);
        add(&mut grad, k - 1, two);
        add(&mut grad, k + 1, two);
        add(&mut grad, k, geom::scale(s, -4.0 * w_accel));
        // Turning proxy: u = cross(d1, d2), D = |d1||d2| + eps, c = u / D.
        let d1 = geom::sub(b, a);
        let d2 = geom::sub(c, b);
        let u = geom::cross(d1, d2);
        let (n1, n2) = (geom::norm(d1), geom::norm(d2));
        let dd = n1 * n2 + EPS;
        let ck = u / dd;
        cost += w_curv * ck * ck;
        let du_d1 = [d2[1], -d2[0]];
        let du_d2 = [-d1[1], d1[0]];
        let dd_d1 = if n1 > EPS { geom::scale(d1, n2 / n1) } else { [0.0, 0.0] };
        let dd_d2 = if n2 > EPS { geom::scale(d2, n1 / n2) } else { [0.0, 0.0] };
        let common = 2.0 * w_curv * ck / dd;
        let dc_d1 = geom::scale(geom::sub(du_d1, geom::scale(dd_d1, ck)), common);
        let dc_d2 = geom::scale(geom::sub(du_d2, geom::scale(dd_d2, ck)), common);
        add(&mut grad, k - 1, geom::scale(dc_d1, -1.0));
        add(&mut grad, k, geom::sub(dc_d1, dc_d2));
        add(&mut grad, k + 1, dc_d2);
    }
    (cost, grad)
}

/// Which objective a guide descends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    Collision,
    CollisionSmoothness,
    CurvatureAccel,
}

/// A per-timestep scalar schedule. `Linear` interpolates from the noisiest
/// step (t = T - 1) to the final step (t = 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleSpec {
    Constant(f64),
    Linear { from: f64, to: f64 },
    Explicit(Vec<f64>),
}

impl ScheduleSpec {
    /// Resolves to a vector indexed by timestep `t` in `0..timesteps`.
    pub fn resolve(&self, timesteps: usize) -> Result<Vec<f64>> {
        let out = match self {
            ScheduleSpec::Constant(v) => vec![*v; timesteps],
            ScheduleSpec::Linear { from, to } => (0..timesteps)
                .map(|t| to + (from - to) * t as f64 / (timesteps - 1).max(1) as f64)
                .collect(),
            ScheduleSpec::Explicit(v) => {
                if v.len() != timesteps {
                    return Err(Error::InvalidConfig(format!(
                        "explicit schedule has {} entries for {timesteps} timesteps",
                        v.len()
                    )));
                }
                v.clone()
            }
        };
        if out.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidConfig("schedule values must be finite and nonnegative".into()));
        }
        Ok(out)
    }
}

/// Configuration of a single guide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GuideConfig {
    pub cost: CostKind,
    /// Base safety margin added to the robot radius inside the hinge.
    pub eps_safe: f64,
    /// Margin multiplier schedule (wide early, tight late).
    pub margin_mult: ScheduleSpec,
    /// Guidance strength schedule.
    pub lambda: ScheduleSpec,
    pub accel_weight: f64,
    pub curv_weight: f64,
    /// L2 cap on the preconditioned gradient before scaling by lambda.
    pub grad_clip: f64,
}

impl Default for GuideConfig {
    fn default() -> Self {
        GuideConfig {
            cost: CostKind::CollisionSmoothness,
            eps_safe: 0.03,
            margin_mult: ScheduleSpec::Linear { from: 2.0, to: 1.0 },
            lambda: ScheduleSpec::Constant(0.08),
            accel_weight: 5.0,
            curv_weight: 2e-3,
            grad_clip: 1.0,
        }
    }
}

impl GuideConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_safe >= 0.0) {
            return Err(Error::InvalidConfig("eps_safe cannot be negative".into()));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::InvalidConfig("grad_clip must be positive".into()));
        }
        if self.accel_weight < 0.0 || self.curv_weight < 0.0 {
            return Err(Error::InvalidConfig("smoothness weights cannot be negative".into()));
        }
        Ok(())
    }

    /// Cost and waypoint gradient of this guide's objective at margin
    /// multiplier `mult`.
    pub fn cost_and_grad(&self, scene: &Scene, traj: &Array2<f64>, mult: f64) -> (f64, Array2<f64>) {
        match self.cost {
            CostKind::Collision => collision_cost(scene, traj, self.eps_safe * mult),
            CostKind::CollisionSmoothness => {
                let (c1, g1) = collision_cost(scene, traj, self.eps_safe * mult);
                let (c2, g2) = curvature_accel_cost(traj, self.accel_weight, self.curv_weight);
                (c1 + c2, g1 + g2)
            }
            CostKind::CurvatureAccel => curvature_accel_cost(traj, self.accel_weight, self.curv_weight),
        }
    }

    /// The selection objective used to rank finished samples: the guide
    /// cost at final margins.
    pub fn selection_cost(&self, scene: &Scene, traj: &Array2<f64>) -> f64 {
        self.cost_and_grad(scene, traj, 1.0).0
    }
}

/// Reads a guide portfolio (JSON list of guide configurations).
pub fn read_portfolio(path: &std::path::Path) -> Result<Vec<GuideConfig>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let list: Vec<GuideConfig> = serde_json::from_str(&text)
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    if list.is_empty() {
        return Err(Error::format(path.display().to_string(), "portfolio must not be empty"));
    }
    for g in &list {
        g.validate().map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    }
    Ok(list)
}

/// A default portfolio of `n` guides: the base guide plus variations that
/// scan the margin and strength around it.
pub fn default_portfolio(base: &GuideConfig, n: usize) -> Vec<GuideConfig> {
    let lambda_base = match base.lambda {
        ScheduleSpec::Constant(v) => v,
        _ => 0.08,
    };
    (0..n.max(1))
        .map(|i| {
            let f = 1.0 + 0.5 * (i as f64 / n.max(1) as f64);
            let mut g = base.clone();
            g.eps_safe = base.eps_safe * (0.7 + 0.3 * f);
            g.lambda = ScheduleSpec::Constant(lambda_base * f);
            if i % 2 == 1 {
                g.cost = CostKind::Collision;
            }
            g
        })
        .collect()
}

/// Precomputed guide state bound to one scene and transform.
pub struct Guide<'a> {
    cfg: &'a GuideConfig,
    scene: &'a Scene,
    transform: &'a BernsteinTransform,
    lambdas: Vec<f64>,
    margins: Vec<f64>,
}

impl<'a> Guide<'a> {
    pub fn new(
        cfg: &'a GuideConfig,
        scene: &'a Scene,
        transform: &'a BernsteinTransform,
        timesteps: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(Guide {
            cfg,
            scene,
            transform,
            lambdas: cfg.lambda.resolve(timesteps)?,
            margins: cfg.margin_mult.resolve(timesteps)?,
        })
    }

    /// Guidance term for one batch of decoded physical coefficient rows:
    /// per lane, evaluate the curve, differentiate the cost with respect to
    /// waypoints, precondition through the basis, clip, and scale by the
    /// per-step strength. The result is the shift applied to the posterior
    /// mean in physical units.
    pub fn term(&self, decoded: &Array2<f64>, t: usize) -> Array2<f64> {
        let cols = self.transform.degree() + 1;
        let m = decoded.ncols() / cols;
        let mut out = Array2::<f64>::zeros(decoded.dim());
        let lambda = self.lambdas[t];
        if lambda == 0.0 {
            return out;
        }
        let mult = self.margins[t];
        for (lane, row) in decoded.axis_iter(Axis(0)).enumerate() {
            let alpha = row
                .to_owned()
                .into_shape_with_order((m, cols))
                .expect("decoded row reshapes to control points");
            let traj = match self.transform.evaluate(&alpha) {
                Ok(t) => t,
                Err(_) => continue,
            };
            let (_, grad_q) = self.cfg.cost_and_grad(self.scene, &traj, mult);
            let mut grad_alpha = match self.transform.precondition_gradient(&grad_q) {
                Ok(g) => g,
                Err(_) => continue,
            };
            let norm = grad_alpha.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > self.cfg.grad_clip {
                grad_alpha *= self.cfg.grad_clip / norm;
            }
            let mut out_row = out.row_mut(lane);
            for dim in 0..m {
                for j in 0..cols {
                    out_row[dim * cols + j] = lambda * grad_alpha[[dim, j]];
                }
            }
        }
        out
    }
}

/// Samples with a single guide steering every lane.
pub fn sample_guided(
    params: &DenoiserParams,
    transform: &BernsteinTransform,
    scene: &Scene,
    guide_cfg: &GuideConfig,
    endpoints: &Endpoints,
    lanes: usize,
    master_seed: u64,
    guide_tag: u64,
    record_last: usize,
) -> Result<SampleOutput> {
    let guide = Guide::new(guide_cfg, scene, transform, params.schedule.timesteps())?;
    let mut hook = |decoded: &Array2<f64>, t: usize| guide.term(decoded, t);
    sample(params, endpoints, lanes, master_seed, guide_tag, record_last, Some(&mut hook))
}
