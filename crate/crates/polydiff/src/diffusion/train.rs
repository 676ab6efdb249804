//! Noise-prediction training over an expert coefficient dataset.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::diffusion::net::{Adam, DenoiserParams};
use crate::diffusion::{forward_marginal, DiffusionConfig};
use crate::error::{Error, Result};
use crate::rng::derive_rng;
use crate::world::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Optional exponential-moving-average decay for the returned weights.
    pub ema: Option<f64>,
    /// Steps between loss log lines.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 150, batch: 128, lr: 1e-3, seed: 0, ema: Some(0.999), log_every: 200 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("training needs at least one epoch".into()));
        }
        if self.batch == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {}", self.lr)));
        }
        if let Some(d) = self.ema {
            if !(0.0..1.0).contains(&d) {
                return Err(Error::InvalidConfig(format!("ema decay must lie in [0, 1), got {d}")));
            }
        }
        Ok(())
    }
}

const TAG_INIT: u64 = 0x1217;
const TAG_TRAIN: u64 = 0x7ea1;

/// Trained weights plus the per-epoch mean loss, in epoch order.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub params: DenoiserParams,
    pub epoch_losses: Vec<f64>,
}

/// Per-slot normalization: shift to the midrange, scale by the half-span,
/// so every dataset value maps into [-1, 1].
fn fit_normalization(samples: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
    let d = samples.ncols();
    let mut shift = Array1::<f64>::zeros(d);
    let mut scale = Array1::<f64>::ones(d);
    for (j, col) in samples.axis_iter(Axis(1)).enumerate() {
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        shift[j] = 0.5 * (hi + lo);
        scale[j] = (0.5 * (hi - lo)).max(1e-6);
    }
    (shift, scale)
}

/// Trains a denoiser on the dataset. Fully deterministic in
/// `(dataset, diffusion, cfg)`: shuffles, timestep draws, and noise all
/// come from one seeded stream consumed in a fixed order.
pub fn train(dataset: &Dataset, diffusion: &DiffusionConfig, cfg: &TrainConfig) -> Result<TrainRun> {
    cfg.validate()?;
    if dataset.count() == 0 {
        return Err(Error::InvalidConfig("cannot train on an empty dataset".into()));
    }
    let schedule = crate::diffusion::NoiseSchedule::new(diffusion.schedule, diffusion.timesteps)?;
    let mut params = DenoiserParams::init(
        dataset.m,
        dataset.degree,
        dataset.horizon,
        diffusion.mlp,
        schedule,
        &mut derive_rng(cfg.seed, &[TAG_INIT]),
    )?;
    let (shift, scale) = fit_normalization(&dataset.samples);
    params.norm_shift = shift;
    params.norm_scale = scale;
    resume(dataset, cfg, params)
}

/// Continues training from existing weights (also the `train` entry point
/// after initialization). Normalization and schedule stay as stored.
pub fn resume(dataset: &Dataset, cfg: &TrainConfig, mut params: DenoiserParams) -> Result<TrainRun> {
    cfg.validate()?;
    if dataset.count() == 0 {
        return Err(Error::InvalidConfig("cannot train on an empty dataset".into()));
    }
    if dataset.coeff_dim() != params.coeff_dim() || dataset.m != params.m || dataset.degree != params.degree {
        return Err(Error::ShapeMismatch(format!(
            "dataset ({}, degree {}) does not match model ({}, degree {})",
            dataset.m, dataset.degree, params.m, params.degree
        )));
    }
    let x0_all = params.normalize(&dataset.samples);
    let n = x0_all.nrows();
    let d = x0_all.ncols();
    let t_count = params.schedule.timesteps();
    let mut rng = derive_rng(cfg.seed, &[TAG_TRAIN]);
    let mut opt = Adam::new(&params, cfg.lr);
    let mut ema = cfg.ema.map(|_| params.clone());
    let mut indices: Vec<usize> = (0..n).collect();
    let mut step = 0usize;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        // Fisher-Yates shuffle from the training stream.
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            indices.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut epoch_batches = 0usize;
        for chunk in indices.chunks(cfg.batch) {
            let mut x0 = Array2::<f64>::zeros((chunk.len(), d));
            for (row, &idx) in chunk.iter().enumerate() {
                x0.row_mut(row).assign(&x0_all.row(idx));
            }
            let ts: Vec<usize> = (0..chunk.len()).map(|_| rng.random_range(0..t_count)).collect();
            let (xt, eps) = forward_marginal(&params.schedule, &x0, &ts, &mut rng)?;
            let cache = params.forward_cached(&xt, &ts)?;
            let (loss, grads) = params.backward(&cache, &eps)?;
            opt.step(&mut params, &grads);
            if let (Some(e), Some(decay)) = (ema.as_mut(), cfg.ema) {
                e.ema_from(&params, decay);
            }
            epoch_loss += loss;
            epoch_batches += 1;
            step += 1;
            if cfg.log_every > 0 && step % cfg.log_every == 0 {
                log::info!("train step {step}: loss {loss:.6}");
            }
        }
        let mean = epoch_loss / epoch_batches.max(1) as f64;
        epoch_losses.push(mean);
        log::debug!("epoch {}/{}: mean loss {:.6}", epoch + 1, cfg.epochs, mean);
    }
    Ok(TrainRun { params: ema.unwrap_or(params), epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::net::MlpConfig;
    use crate::diffusion::ScheduleKind;
    use ndarray::array;

    fn toy_dataset() -> Dataset {
        let mut ds = Dataset::new(2, 3, 20);
        for i in 0..8 {
            let t = i as f64 / 7.0;
            ds.push(&array![
                [0.1, 0.3 + 0.1 * t, 0.6 - 0.1 * t, 0.9],
                [0.2, 0.4 * t, 1.0 - 0.4 * t, 0.8]
            ])
            .unwrap();
        }
        ds
    }

    fn small_diffusion() -> DiffusionConfig {
        DiffusionConfig {
            timesteps: 8,
            schedule: ScheduleKind::Cosine,
            mlp: MlpConfig { hidden: 16, blocks: 2, embed_dim: 8 },
        }
    }

    #[test]
    fn rejects_empty_dataset_and_bad_config() {
        let empty = Dataset::new(2, 7, 50);
        assert!(train(&empty, &DiffusionConfig::default(), &TrainConfig::default()).is_err());
        let ds = toy_dataset();
        let bad = TrainConfig { epochs: 0, ..Default::default() };
        assert!(train(&ds, &small_diffusion(), &bad).is_err());
        let bad = TrainConfig { batch: 0, ..Default::default() };
        assert!(train(&ds, &small_diffusion(), &bad).is_err());
        let bad = TrainConfig { lr: -1.0, ..Default::default() };
        assert!(train(&ds, &small_diffusion(), &bad).is_err());
    }

    #[test]
    fn normalization_maps_dataset_into_unit_box() {
        let ds = toy_dataset();
        let (shift, scale) = fit_normalization(&ds.samples);
        let normed = (&ds.samples - &shift) / &scale;
        for v in normed.iter() {
            assert!(v.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let ds = toy_dataset();
        let cfg = TrainConfig { epochs: 2, batch: 4, ..Default::default() };
        let a = train(&ds, &small_diffusion(), &cfg).unwrap().params;
        let b = train(&ds, &small_diffusion(), &cfg).unwrap().params;
        assert_eq!(a.w_in, b.w_in);
        assert_eq!(a.w_out, b.w_out);
        assert_eq!(a.blocks[0].0, b.blocks[0].0);
        let c = train(&ds, &small_diffusion(), &TrainConfig { seed: 1, ..cfg }).unwrap().params;
        assert_ne!(a.w_in, c.w_in);
    }

    #[test]
    fn loss_decreases_on_a_small_dataset() {
        let ds = toy_dataset();
        let diffusion = small_diffusion();
        // Measure the mean loss of fresh batches before and after training.
        let probe = |params: &DenoiserParams| {
            let x0 = params.normalize(&ds.samples);
            let mut rng = derive_rng(999, &[0]);
            let mut total = 0.0;
            for rep in 0..20 {
                let ts: Vec<usize> = (0..x0.nrows()).map(|i| (i + rep) % 8).collect();
                let (xt, eps) = forward_marginal(&params.schedule, &x0, &ts, &mut rng).unwrap();
                let out = params.forward(&xt, &ts).unwrap();
                let diff = &out - &eps;
                total += diff.iter().map(|v| v * v).sum::<f64>() / (diff.len() as f64);
            }
            total / 20.0
        };
        let init = train(&ds, &diffusion, &TrainConfig { epochs: 1, batch: 8, lr: 1e-12, ..Default::default() })
            .unwrap()
            .params;
        let trained = train(&ds, &diffusion, &TrainConfig { epochs: 150, batch: 8, lr: 3e-3, ..Default::default() })
            .unwrap()
            .params;
        let before = probe(&init);
        let after = probe(&trained);
        assert!(
            after < before * 0.55,
            "training barely helped: {before:.4} -> {after:.4}"
        );
    }

    #[test]
    fn ema_weights_differ_from_raw_but_stay_close() {
        let ds = toy_dataset();
        let cfg = TrainConfig { epochs: 3, batch: 4, ema: Some(0.95), ..Default::default() };
        let ema = train(&ds, &small_diffusion(), &cfg).unwrap().params;
        let raw = train(&ds, &small_diffusion(), &TrainConfig { ema: None, ..cfg }).unwrap().params;
        assert_ne!(ema.w_in, raw.w_in);
        let max_diff = ema
            .w_in
            .iter()
            .zip(raw.w_in.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff < 0.5, "ema drifted too far: {max_diff}");
    }

    #[test]
    fn run_reports_one_positive_loss_per_epoch() {
        let ds = toy_dataset();
        let cfg = TrainConfig { epochs: 5, batch: 4, ..Default::default() };
        let run = train(&ds, &small_diffusion(), &cfg).unwrap();
        assert_eq!(run.epoch_losses.len(), 5);
        assert!(run.epoch_losses.iter().all(|l| l.is_finite() && *l > 0.0));
    }

    #[test]
    fn resume_rejects_mismatched_dataset() {
        let ds = toy_dataset();
        let params = train(&ds, &small_diffusion(), &TrainConfig { epochs: 1, batch: 4, ..Default::default() })
            .unwrap()
            .params;
        let other = Dataset::new(2, 7, 50);
        assert!(resume(&other, &TrainConfig::default(), params).is_err());
    }
}
