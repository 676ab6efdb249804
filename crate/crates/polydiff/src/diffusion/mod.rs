//! Denoising diffusion over flattened control-point vectors, with endpoint
//! conditioning and an optional guidance hook applied at every step.
//!
//! State convention: a batch is `(lanes, d)` where `d = m * (degree + 1)`
//! and slot `dim * (degree + 1) + j` is control point `j` of dimension
//! `dim`. The sampler works in normalized model space; decoded outputs are
//! physical control points whose endpoint columns are overwritten bitwise
//! with the query endpoints.

mod checkpoint;
pub mod net;
pub mod schedule;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use net::{coeff_dim, standard_normal, DenoiserParams, MlpConfig};
pub use schedule::{NoiseSchedule, ScheduleKind};
pub use train::{resume, train, TrainConfig, TrainRun};

use ndarray::{Array2, Axis};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bernstein::ControlPoints;
use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::rng::derive_rng;

/// Sampling process configuration: step count, schedule family, net shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionConfig {
    pub timesteps: usize,
    pub schedule: ScheduleKind,
    pub mlp: MlpConfig,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            timesteps: 64,
            schedule: ScheduleKind::Cosine,
            mlp: MlpConfig::default(),
        }
    }
}

/// Planning query endpoints, used for conditioning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Endpoints {
    pub start: Point2,
    pub goal: Point2,
}

/// One recorded intermediate state: lane index, timestep, and the decoded
/// physical control points.
#[derive(Debug, Clone)]
pub struct PoolEntry {
    pub lane: usize,
    pub t: usize,
    pub alpha: ControlPoints,
}

/// Result of a sampling run.
#[derive(Debug, Clone)]
pub struct SampleOutput {
    /// Final denoised control points, one per lane.
    pub finals: Vec<ControlPoints>,
    /// Decoded states of the last `record_last` steps (including t = 0),
    /// ordered by descending t, then lane.
    pub pool: Vec<PoolEntry>,
    /// Lanes-steps where the guidance term was non-finite and dropped.
    pub guide_incidents: usize,
}

/// Guidance callback: receives decoded physical coefficients `(lanes, d)`
/// and the timestep, returns the mean-shift term in physical coefficient
/// units (already scaled by the guidance strength for that step).
pub type GuideFn<'a> = &'a mut dyn FnMut(&Array2<f64>, usize) -> Array2<f64>;

const TAG_SAMPLE: u64 = 0xd1ff;

/// Forward marginal: `x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps` with fresh
/// standard normal noise. Returns `(x_t, eps)`.
pub fn forward_marginal(
    schedule: &NoiseSchedule,
    x0: &Array2<f64>,
    ts: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if ts.len() != x0.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} timesteps for {} rows",
            ts.len(),
            x0.nrows()
        )));
    }
    let t_max = schedule.timesteps();
    if let Some(&bad) = ts.iter().find(|&&t| t >= t_max) {
        return Err(Error::InvalidConfig(format!("timestep {bad} out of range 0..{t_max}")));
    }
    let eps = net::standard_normal(rng, x0.nrows(), x0.ncols());
    let mut xt = x0.clone();
    for (row, &t) in ts.iter().enumerate() {
        let ab = schedule.alpha_bar[t];
        let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
        let e = eps.row(row);
        let mut x = xt.row_mut(row);
        x.zip_mut_with(&e, |xv, ev| *xv = sa * *xv + sn * *ev);
    }
    Ok((xt, eps))
}

/// Posterior mean of the reverse step given the predicted noise:
/// `(x - beta_t / sqrt(1 - ab_t) * eps_hat) / sqrt(alpha_t)`.
pub fn posterior_mean(
    schedule: &NoiseSchedule,
    x: &Array2<f64>,
    eps_hat: &Array2<f64>,
    t: usize,
) -> Array2<f64> {
    let coef = schedule.betas[t] / (1.0 - schedule.alpha_bar[t]).sqrt();
    (x - &(eps_hat * coef)) / schedule.alphas[t].sqrt()
}

/// One unguided reverse step for a batch, drawing per-lane noise from the
/// matching generator. At `t = 0` the step is deterministic and consumes
/// no randomness.
pub fn reverse_step(
    params: &DenoiserParams,
    x: &Array2<f64>,
    t: usize,
    rngs: &mut [ChaCha8Rng],
) -> Result<Array2<f64>> {
    if rngs.len() != x.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} generators for {} lanes",
            rngs.len(),
            x.nrows()
        )));
    }
    let eps_hat = params.forward(x, &vec![t; x.nrows()])?;
    let mut out = posterior_mean(&params.schedule, x, &eps_hat, t);
    if t > 0 {
        let sd = params.schedule.posterior_var[t].sqrt();
        for (lane, rng) in rngs.iter_mut().enumerate() {
            let z = net::standard_normal(rng, 1, x.ncols());
            let mut row = out.row_mut(lane);
            row.zip_mut_with(&z.row(0), |o, zv| *o += sd * *zv);
        }
    }
    Ok(out)
}

/// Normalized-space endpoint slots for the conditioning columns.
fn normalized_endpoints(params: &DenoiserParams, endpoints: &Endpoints) -> Result<Vec<(usize, f64)>> {
    if params.m != 2 {
        return Err(Error::InvalidConfig(format!(
            "endpoint conditioning requires 2-dimensional trajectories, model has m = {}",
            params.m
        )));
    }
    let cols = params.degree + 1;
    let mut slots = Vec::with_capacity(4);
    for dim in 0..2 {
        let s0 = dim * cols;
        let s1 = dim * cols + params.degree;
        slots.push((s0, (endpoints.start[dim] - params.norm_shift[s0]) / params.norm_scale[s0]));
        slots.push((s1, (endpoints.goal[dim] - params.norm_shift[s1]) / params.norm_scale[s1]));
    }
    Ok(slots)
}

/// Overwrites the endpoint slots of every lane in normalized space.
/// Idempotent; interior slots are untouched.
pub fn condition_rows(x: &mut Array2<f64>, slots: &[(usize, f64)]) {
    for mut row in x.axis_iter_mut(Axis(0)) {
        for &(slot, v) in slots {
            row[slot] = v;
        }
    }
}

/// Decodes one normalized row into physical control points with the
/// endpoint columns set bitwise to the query endpoints.
pub fn decode_row(
    params: &DenoiserParams,
    row: ndarray::ArrayView1<f64>,
    endpoints: &Endpoints,
) -> ControlPoints {
    let cols = params.degree + 1;
    let mut alpha = Array2::<f64>::zeros((params.m, cols));
    for dim in 0..params.m {
        for j in 0..cols {
            let slot = dim * cols + j;
            alpha[[dim, j]] = row[slot] * params.norm_scale[slot] + params.norm_shift[slot];
        }
    }
    for dim in 0..2.min(params.m) {
        alpha[[dim, 0]] = endpoints.start[dim];
        alpha[[dim, cols - 1]] = endpoints.goal[dim];
    }
    alpha
}

/// Decodes every lane of a normalized batch into physical coefficients,
/// flattened back into `(lanes, d)` rows (endpoint columns exact).
pub fn decode_rows(params: &DenoiserParams, x: &Array2<f64>, endpoints: &Endpoints) -> Array2<f64> {
    let mut out = params.denormalize(x);
    let cols = params.degree + 1;
    for mut row in out.axis_iter_mut(Axis(0)) {
        for dim in 0..2.min(params.m) {
            row[dim * cols] = endpoints.start[dim];
            row[dim * cols + params.degree] = endpoints.goal[dim];
        }
    }
    out
}

/// Runs the full reverse process for `lanes` parallel samples.
///
/// Each lane draws from its own generator derived from
/// `(master_seed, tag, lane)`, so results are independent of lane batching
/// and of whether guidance is active: a guide returning zeros yields
/// bitwise-identical output to no guide. The last `record_last` states
/// (t < record_last, including the final t = 0) are decoded into the pool.
pub fn sample(
    params: &DenoiserParams,
    endpoints: &Endpoints,
    lanes: usize,
    master_seed: u64,
    tag: u64,
    record_last: usize,
    mut guide: Option<GuideFn<'_>>,
) -> Result<SampleOutput> {
    if lanes == 0 {
        return Err(Error::InvalidConfig("need at least one sampling lane".into()));
    }
    let d = params.coeff_dim();
    let t_count = params.schedule.timesteps();
    let slots = normalized_endpoints(params, endpoints)?;

    let mut rngs: Vec<ChaCha8Rng> = (0..lanes)
        .map(|l| derive_rng(master_seed, &[TAG_SAMPLE, tag, l as u64]))
        .collect();
    let mut x = Array2::<f64>::zeros((lanes, d));
    for (lane, rng) in rngs.iter_mut().enumerate() {
        let z = net::standard_normal(rng, 1, d);
        x.row_mut(lane).assign(&z.row(0));
    }
    condition_rows(&mut x, &slots);

    let mut pool = Vec::new();
    let mut incidents = 0usize;
    let ts_buf: Vec<Vec<usize>> = (0..t_count).map(|t| vec![t; lanes]).collect();

    for t in (0..t_count).rev() {
        let eps_hat = params.forward(&x, &ts_buf[t])?;
        let mut mean = posterior_mean(&params.schedule, &x, &eps_hat, t);
        if let Some(hook) = guide.as_mut() {
            let decoded = decode_rows(params, &x, endpoints);
            let mut term = hook(&decoded, t);
            if term.dim() != (lanes, d) {
                return Err(Error::ShapeMismatch(format!(
                    "guide term shape {:?}, expected ({lanes}, {d})",
                    term.dim()
                )));
            }
            for lane in 0..lanes {
                if !term.row(lane).iter().all(|v| v.is_finite()) {
                    term.row_mut(lane).fill(0.0);
                    incidents += 1;
                    log::warn!("dropping non-finite guidance term at t={t} lane={lane}");
                }
            }
            // Chain rule into normalized space: x_norm = (x - shift)/scale,
            // so a physical-space shift divides by scale... the term is a
            // displacement of the physical mean, and the normalized mean
            // moves by term/scale.
            mean -= &(&term / &params.norm_scale);
        }
        if t > 0 {
            let sd = params.schedule.posterior_var[t].sqrt();
            for (lane, rng) in rngs.iter_mut().enumerate() {
                let z = net::standard_normal(rng, 1, d);
                let mut row = mean.row_mut(lane);
                row.zip_mut_with(&z.row(0), |o, zv| *o += sd * *zv);
            }
        }
        x = mean;
        condition_rows(&mut x, &slots);
        if t < record_last {
            for lane in 0..lanes {
                pool.push(PoolEntry {
                    lane,
                    t,
                    alpha: decode_row(params, x.row(lane), endpoints),
                });
            }
        }
    }

    let finals = (0..lanes).map(|lane| decode_row(params, x.row(lane), endpoints)).collect();
    Ok(SampleOutput { finals, pool, guide_incidents: incidents })
}
