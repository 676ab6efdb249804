//! Model checkpoint files.
//!
//! Layout (integers little-endian):
//!   magic     4 bytes  "PDMW"
//!   version   u32      currently 1
//!   m         u32      trajectory dimensions
//!   c         u32      curve degree
//!   T         u32      diffusion timesteps
//!   h         u32      waypoint horizon
//!   embed_dim u32      timestep embedding width
//!   hidden    u32      MLP width
//!   blocks    u32      residual block count
//!   kind      u32      schedule family (0 cosine, 1 linear)
//! then f64 little-endian payload in order: betas[T], norm_shift[d],
//! norm_scale[d], w_in, b_in, per block (w, b), w_out, b_out; matrices
//! row-major. The embedding table is recomputed on load.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::diffusion::net::{coeff_dim, embedding_table, DenoiserParams, MlpConfig};
use crate::diffusion::schedule::{NoiseSchedule, ScheduleKind};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"PDMW";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint(path: &Path, params: &DenoiserParams) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let file = File::create(&tmp).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| Error::io(tmp.display().to_string(), e);
        w.write_all(&CHECKPOINT_MAGIC).map_err(io_err)?;
        for v in [
            CHECKPOINT_VERSION,
            params.m as u32,
            params.degree as u32,
            params.schedule.timesteps() as u32,
            params.horizon as u32,
            params.mlp.embed_dim as u32,
            params.mlp.hidden as u32,
            params.mlp.blocks as u32,
            match params.schedule.kind {
                ScheduleKind::Cosine => 0,
                ScheduleKind::Linear => 1,
            },
        ] {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
        let mut write_f64s = |vals: &mut dyn Iterator<Item = f64>| -> Result<()> {
            for v in vals {
                w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(tmp.display().to_string(), e))?;
            }
            Ok(())
        };
        write_f64s(&mut params.schedule.betas.iter().copied())?;
        write_f64s(&mut params.norm_shift.iter().copied())?;
        write_f64s(&mut params.norm_scale.iter().copied())?;
        write_f64s(&mut params.w_in.iter().copied())?;
        write_f64s(&mut params.b_in.iter().copied())?;
        for (bw, bb) in &params.blocks {
            write_f64s(&mut bw.iter().copied())?;
            write_f64s(&mut bb.iter().copied())?;
        }
        write_f64s(&mut params.w_out.iter().copied())?;
        write_f64s(&mut params.b_out.iter().copied())?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_checkpoint(path: &Path) -> Result<DenoiserParams> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let p = || path.display().to_string();

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format(p(), "truncated while reading magic"))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::format(p(), format!("bad magic {magic:?}, expected \"PDMW\"")));
    }
    let mut header = [0u32; 9];
    for slot in header.iter_mut() {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)
            .map_err(|_| Error::format(p(), "truncated while reading header"))?;
        *slot = u32::from_le_bytes(b);
    }
    let [version, m, degree, timesteps, horizon, embed_dim, hidden, blocks, kind] = header;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            p(),
            format!("unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let kind = match kind {
        0 => ScheduleKind::Cosine,
        1 => ScheduleKind::Linear,
        other => return Err(Error::format(p(), format!("unknown schedule kind {other}"))),
    };
    let (m, degree, timesteps, horizon) =
        (m as usize, degree as usize, timesteps as usize, horizon as usize);
    let mlp = MlpConfig { hidden: hidden as usize, blocks: blocks as usize, embed_dim: embed_dim as usize };
    if m == 0 || degree == 0 || horizon < 2 || !(2..=10_000).contains(&timesteps) {
        return Err(Error::format(p(), format!("implausible header dims: {header:?}")));
    }
    mlp.validate().map_err(|e| Error::format(p(), e.to_string()))?;
    let d = coeff_dim(m, degree);
    if d > 1_000_000 || mlp.hidden > 65_536 || mlp.blocks > 1024 {
        return Err(Error::format(p(), "header dimensions exceed sanity bounds"));
    }

    let mut read_f64s = |count: usize, what: &str| -> Result<Vec<f64>> {
        let mut out = vec![0.0f64; count];
        let mut b = [0u8; 8];
        for slot in out.iter_mut() {
            r.read_exact(&mut b)
                .map_err(|_| Error::format(p(), format!("truncated while reading {what}")))?;
            *slot = f64::from_le_bytes(b);
        }
        Ok(out)
    };

    let betas = read_f64s(timesteps, "schedule")?;
    let schedule =
        NoiseSchedule::from_betas(kind, betas).map_err(|e| Error::format(p(), e.to_string()))?;
    let norm_shift = Array1::from_vec(read_f64s(d, "normalization shift")?);
    let norm_scale = Array1::from_vec(read_f64s(d, "normalization scale")?);
    if norm_scale.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::format(p(), "normalization scales must be positive"));
    }
    let d_in = d + mlp.embed_dim;
    let h = mlp.hidden;
    let to_mat = |v: Vec<f64>, rows: usize, cols: usize| {
        Array2::from_shape_vec((rows, cols), v).expect("sized read")
    };
    let w_in = to_mat(read_f64s(h * d_in, "input weights")?, h, d_in);
    let b_in = Array1::from_vec(read_f64s(h, "input bias")?);
    let mut block_params = Vec::with_capacity(mlp.blocks);
    for k in 0..mlp.blocks {
        let w = to_mat(read_f64s(h * h, &format!("block {k} weights"))?, h, h);
        let b = Array1::from_vec(read_f64s(h, &format!("block {k} bias"))?);
        block_params.push((w, b));
    }
    let w_out = to_mat(read_f64s(d * h, "output weights")?, d, h);
    let b_out = Array1::from_vec(read_f64s(d, "output bias")?);

    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| Error::io(p(), e))? != 0 {
        return Err(Error::format(p(), "trailing bytes after expected payload"));
    }

    let embed = embedding_table(timesteps, mlp.embed_dim);
    Ok(DenoiserParams {
        m,
        degree,
        horizon,
        mlp,
        schedule,
        embed,
        w_in,
        b_in,
        blocks: block_params,
        w_out,
        b_out,
        norm_shift,
        norm_scale,
    })
}
