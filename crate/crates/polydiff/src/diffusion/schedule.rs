//! Variance schedules for the denoising process.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_TIMESTEPS: usize = 10_000;

/// Schedule family. Cosine is the default; linear endpoints are scaled by
/// `1/T` so the terminal signal level stays near zero for any step count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Cosine,
    Linear,
}

/// Precomputed per-step quantities: `betas[t]` is the forward noise rate,
/// `alpha_bar[t]` the cumulative signal retention, `posterior_var[t]` the
/// fixed reverse-step variance (zero at the final step).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    pub posterior_var: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(kind: ScheduleKind, timesteps: usize) -> Result<Self> {
        if !(2..=MAX_TIMESTEPS).contains(&timesteps) {
            return Err(Error::InvalidConfig(format!(
                "timesteps must lie in [2, {MAX_TIMESTEPS}], got {timesteps}"
            )));
        }
        let betas = match kind {
            ScheduleKind::Cosine => cosine_betas(timesteps),
            ScheduleKind::Linear => linear_betas(timesteps),
        };
        Self::from_betas(kind, betas)
    }

    /// Rebuilds derived quantities from raw betas (also the checkpoint
    /// loading path). Validates every invariant.
    pub fn from_betas(kind: ScheduleKind, betas: Vec<f64>) -> Result<Self> {
        if betas.len() < 2 {
            return Err(Error::InvalidConfig("schedule needs at least 2 steps".into()));
        }
        for (t, &b) in betas.iter().enumerate() {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "beta[{t}] = {b} is outside (0, 1)"
                )));
            }
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(betas.len());
        let mut prod = 1.0;
        for a in &alphas {
            prod *= a;
            alpha_bar.push(prod);
        }
        let mut posterior_var = Vec::with_capacity(betas.len());
        for t in 0..betas.len() {
            let prev = if t == 0 { 1.0 } else { alpha_bar[t - 1] };
            posterior_var.push(betas[t] * (1.0 - prev) / (1.0 - alpha_bar[t]));
        }
        Ok(NoiseSchedule { kind, betas, alphas, alpha_bar, posterior_var })
    }

    pub fn timesteps(&self) -> usize {
        self.betas.len()
    }
}

/// Cosine schedule: betas derived from the squared-cosine signal curve,
/// clipped to 0.999 so the last steps stay numerically sane.
fn cosine_betas(timesteps: usize) -> Vec<f64> {
    const S: f64 = 0.008;
    let f = |u: f64| ((u + S) / (1.0 + S) * std::f64::consts::FRAC_PI_2).cos().powi(2);
    let f0 = f(0.0);
    let t = timesteps as f64;
    (0..timesteps)
        .map(|i| {
            let ab_hi = f((i + 1) as f64 / t) / f0;
            let ab_lo = f(i as f64 / t) / f0;
            (1.0 - ab_hi / ab_lo).clamp(1e-8, 0.999)
        })
        .collect()
}

/// Linear schedule with endpoints scaled by `1/T`, so the total injected
/// noise is step-count independent: beta ramps from `0.1/T` to `20/T`.
fn linear_betas(timesteps: usize) -> Vec<f64> {
    let t = timesteps as f64;
    let b0 = (0.1 / t).min(0.999);
    let b1 = (20.0 / t).min(0.999);
    (0..timesteps)
        .map(|i| b0 + (b1 - b0) * i as f64 / (timesteps - 1) as f64)
        .collect()
}
