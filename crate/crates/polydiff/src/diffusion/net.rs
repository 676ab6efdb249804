//! The noise-prediction network: a residual MLP over flattened control
//! points plus a sinusoidal timestep embedding, with hand-written
//! backpropagation and an Adam optimizer. Everything is f64 and fully
//! deterministic given a seeded generator.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffusion::schedule::NoiseSchedule;
use crate::error::{Error, Result};

/// Network shape. `hidden` is the width, `blocks` the number of residual
/// layers, `embed_dim` the (even) sinusoidal embedding width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub blocks: usize,
    pub embed_dim: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig { hidden: 256, blocks: 4, embed_dim: 32 }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.embed_dim == 0 || self.embed_dim % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "mlp needs hidden > 0 and a positive even embed_dim, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// All learned and fixed state of the denoiser: layer weights, the fixed
/// timestep embedding table, the noise schedule, and the normalization that
/// maps physical coefficients into model space.
#[derive(Debug, Clone)]
pub struct DenoiserParams {
    pub m: usize,
    pub degree: usize,
    pub horizon: usize,
    pub mlp: MlpConfig,
    pub schedule: NoiseSchedule,
    /// `(T, embed_dim)` sinusoidal table, fixed (not trained).
    pub embed: Array2<f64>,
    pub w_in: Array2<f64>,
    pub b_in: Array1<f64>,
    pub blocks: Vec<(Array2<f64>, Array1<f64>)>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
    /// Per-slot shift/scale: model space is `(x - shift) / scale`.
    pub norm_shift: Array1<f64>,
    pub norm_scale: Array1<f64>,
}

/// Flattened coefficient dimension: `m * (degree + 1)`.
pub fn coeff_dim(m: usize, degree: usize) -> usize {
    m * (degree + 1)
}

/// Standard sinusoidal embedding table for integer timesteps `0..T`.
pub fn embedding_table(timesteps: usize, embed_dim: usize) -> Array2<f64> {
    let half = embed_dim / 2;
    Array2::from_shape_fn((timesteps, embed_dim), |(t, i)| {
        let pair = i / 2;
        let freq = (10_000.0f64).powf(-(pair as f64) / half as f64);
        let angle = t as f64 * freq;
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

impl DenoiserParams {
    /// Random initialization: uniform Xavier weights, zero biases, a small
    /// output layer so the initial prediction is near zero, identity
    /// normalization.
    pub fn init(
        m: usize,
        degree: usize,
        horizon: usize,
        mlp: MlpConfig,
        schedule: NoiseSchedule,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        mlp.validate()?;
        if m == 0 || degree == 0 || horizon < 2 {
            return Err(Error::InvalidConfig(format!(
                "denoiser needs m >= 1, degree >= 1, horizon >= 2 (got {m}, {degree}, {horizon})"
            )));
        }
        let d = coeff_dim(m, degree);
        let d_in = d + mlp.embed_dim;
        let h = mlp.hidden;
        let mut xavier = |rows: usize, cols: usize, gain: f64| {
            let bound = gain * (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
        };
        let w_in = xavier(h, d_in, 1.0);
        let blocks = (0..mlp.blocks).map(|_| (xavier(h, h, 1.0), Array1::zeros(h))).collect();
        let w_out = xavier(d, h, 0.1);
        let embed = embedding_table(schedule.timesteps(), mlp.embed_dim);
        Ok(DenoiserParams {
            m,
            degree,
            horizon,
            mlp,
            schedule,
            embed,
            w_in,
            b_in: Array1::zeros(h),
            blocks,
            w_out,
            b_out: Array1::zeros(d),
            norm_shift: Array1::zeros(d),
            norm_scale: Array1::ones(d),
        })
    }

    pub fn coeff_dim(&self) -> usize {
        coeff_dim(self.m, self.degree)
    }

    /// Maps physical coefficient vectors into model space.
    pub fn normalize(&self, rows: &Array2<f64>) -> Array2<f64> {
        (rows - &self.norm_shift) / &self.norm_scale
    }

    /// Maps model-space vectors back to physical coefficients.
    pub fn denormalize(&self, rows: &Array2<f64>) -> Array2<f64> {
        rows * &self.norm_scale + &self.norm_shift
    }

    /// Predicts the noise component for each row of `x` (model space,
    /// shape `(n, d)`) at per-row timesteps `ts`.
    pub fn forward(&self, x: &Array2<f64>, ts: &[usize]) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x, ts)?.output)
    }

    fn check_forward_inputs(&self, x: &Array2<f64>, ts: &[usize]) -> Result<()> {
        let d = self.coeff_dim();
        if x.ncols() != d {
            return Err(Error::ShapeMismatch(format!(
                "denoiser input has {} columns, expected {d}",
                x.ncols()
            )));
        }
        if ts.len() != x.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} timesteps for {} rows",
                ts.len(),
                x.nrows()
            )));
        }
        let t_max = self.schedule.timesteps();
        if let Some(&bad) = ts.iter().find(|&&t| t >= t_max) {
            return Err(Error::InvalidConfig(format!(
                "timestep {bad} out of range 0..{t_max}"
            )));
        }
        Ok(())
    }

    /// Forward pass retaining every intermediate needed by `backward`.
    pub fn forward_cached(&self, x: &Array2<f64>, ts: &[usize]) -> Result<ForwardCache> {
        self.check_forward_inputs(x, ts)?;
        let n = x.nrows();
        let d = self.coeff_dim();
        let d_in = d + self.mlp.embed_dim;
        let mut input = Array2::<f64>::zeros((n, d_in));
        input.slice_mut(ndarray::s![.., ..d]).assign(x);
        for (row, &t) in ts.iter().enumerate() {
            input
                .slice_mut(ndarray::s![row, d..])
                .assign(&self.embed.row(t));
        }
        let a_in = input.dot(&self.w_in.t()) + &self.b_in;
        let h0 = a_in.mapv(silu);
        let mut hs = vec![h0];
        let mut pre = vec![a_in];
        for (w, b) in &self.blocks {
            let h_prev = hs.last().unwrap();
            let a = h_prev.dot(&w.t()) + b;
            let h = h_prev + &a.mapv(silu);
            pre.push(a);
            hs.push(h);
        }
        let output = hs.last().unwrap().dot(&self.w_out.t()) + &self.b_out;
        Ok(ForwardCache { input, pre, hs, output })
    }

    /// Mean-squared-error loss against `target` plus gradients for every
    /// trainable tensor, matching `forward` exactly.
    pub fn backward(&self, cache: &ForwardCache, target: &Array2<f64>) -> Result<(f64, Gradients)> {
        let out = &cache.output;
        if target.dim() != out.dim() {
            return Err(Error::ShapeMismatch(format!(
                "target shape {:?} does not match output {:?}",
                target.dim(),
                out.dim()
            )));
        }
        let n_total = (out.nrows() * out.ncols()) as f64;
        let diff = out - target;
        let loss = diff.iter().map(|v| v * v).sum::<f64>() / n_total;
        let d_out = diff.mapv(|v| 2.0 * v / n_total);

        let h_last = cache.hs.last().unwrap();
        let g_w_out = d_out.t().dot(h_last);
        let g_b_out = d_out.sum_axis(Axis(0));
        let mut d_h = d_out.dot(&self.w_out);

        let mut g_blocks: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(self.blocks.len());
        for (k, (w, _)) in self.blocks.iter().enumerate().rev() {
            let a = &cache.pre[k + 1];
            let h_prev = &cache.hs[k];
            let d_a = &d_h * &a.mapv(silu_prime);
            let g_w = d_a.t().dot(h_prev);
            let g_b = d_a.sum_axis(Axis(0));
            d_h = d_h + d_a.dot(w);
            g_blocks.push((g_w, g_b));
        }
        g_blocks.reverse();

        let d_a_in = &d_h * &cache.pre[0].mapv(silu_prime);
        let g_w_in = d_a_in.t().dot(&cache.input);
        let g_b_in = d_a_in.sum_axis(Axis(0));

        Ok((
            loss,
            Gradients { w_in: g_w_in, b_in: g_b_in, blocks: g_blocks, w_out: g_w_out, b_out: g_b_out },
        ))
    }

    /// Exponential moving average update: `self = decay * self + (1 - decay) * src`.
    pub fn ema_from(&mut self, src: &DenoiserParams, decay: f64) {
        let blend = |dst: &mut f64, s: f64| *dst = decay * *dst + (1.0 - decay) * s;
        for (p, s) in self.w_in.iter_mut().zip(src.w_in.iter()) {
            blend(p, *s);
        }
        for (p, s) in self.b_in.iter_mut().zip(src.b_in.iter()) {
            blend(p, *s);
        }
        for ((pw, pb), (sw, sb)) in self.blocks.iter_mut().zip(src.blocks.iter()) {
            for (p, s) in pw.iter_mut().zip(sw.iter()) {
                blend(p, *s);
            }
            for (p, s) in pb.iter_mut().zip(sb.iter()) {
                blend(p, *s);
            }
        }
        for (p, s) in self.w_out.iter_mut().zip(src.w_out.iter()) {
            blend(p, *s);
        }
        for (p, s) in self.b_out.iter_mut().zip(src.b_out.iter()) {
            blend(p, *s);
        }
    }
}

/// Intermediates of one forward pass.
pub struct ForwardCache {
    input: Array2<f64>,
    /// Pre-activations: `pre[0]` for the input layer, then one per block.
    pre: Vec<Array2<f64>>,
    /// Hidden states: `hs[0]` after the input layer, then one per block.
    hs: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

/// Gradients mirroring the trainable tensors of `DenoiserParams`.
pub struct Gradients {
    pub w_in: Array2<f64>,
    pub b_in: Array1<f64>,
    pub blocks: Vec<(Array2<f64>, Array1<f64>)>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

impl Gradients {
    pub fn zeros_like(p: &DenoiserParams) -> Self {
        Gradients {
            w_in: Array2::zeros(p.w_in.dim()),
            b_in: Array1::zeros(p.b_in.dim()),
            blocks: p
                .blocks
                .iter()
                .map(|(w, b)| (Array2::zeros(w.dim()), Array1::zeros(b.dim())))
                .collect(),
            w_out: Array2::zeros(p.w_out.dim()),
            b_out: Array1::zeros(p.b_out.dim()),
        }
    }
}

#[inline]
fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

#[inline]
fn silu_prime(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

/// Adam optimizer state (first/second moment accumulators).
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(params: &DenoiserParams, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
        }
    }

    pub fn step(&mut self, params: &mut DenoiserParams, grads: &Gradients) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);

        // Update moments in place, then apply the parameter step.
        let upd = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };

        for ((p, g), (m, v)) in params
            .w_in
            .iter_mut()
            .zip(grads.w_in.iter())
            .zip(self.m.w_in.iter_mut().zip(self.v.w_in.iter_mut()))
        {
            upd(p, *g, m, v);
        }
        for ((p, g), (m, v)) in params
            .b_in
            .iter_mut()
            .zip(grads.b_in.iter())
            .zip(self.m.b_in.iter_mut().zip(self.v.b_in.iter_mut()))
        {
            upd(p, *g, m, v);
        }
        for (k, (pw, pb)) in params.blocks.iter_mut().enumerate() {
            let (gw, gb) = &grads.blocks[k];
            let (mw, mb) = &mut self.m.blocks[k];
            let (vw, vb) = &mut self.v.blocks[k];
            for ((p, g), (m, v)) in pw.iter_mut().zip(gw.iter()).zip(mw.iter_mut().zip(vw.iter_mut())) {
                upd(p, *g, m, v);
            }
            for ((p, g), (m, v)) in pb.iter_mut().zip(gb.iter()).zip(mb.iter_mut().zip(vb.iter_mut())) {
                upd(p, *g, m, v);
            }
        }
        for ((p, g), (m, v)) in params
            .w_out
            .iter_mut()
            .zip(grads.w_out.iter())
            .zip(self.m.w_out.iter_mut().zip(self.v.w_out.iter_mut()))
        {
            upd(p, *g, m, v);
        }
        for ((p, g), (m, v)) in params
            .b_out
            .iter_mut()
            .zip(grads.b_out.iter())
            .zip(self.m.b_out.iter_mut().zip(self.v.b_out.iter_mut()))
        {
            upd(p, *g, m, v);
        }
    }
}

/// Fills an array with standard normal draws from `rng` in row-major order.
pub fn standard_normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}
