//! Binary dataset files holding expert control points.
//!
//! Layout (all integers little-endian):
//!   magic   4 bytes  "PDIF"
//!   version u32      currently 1
//!   m       u32      trajectory dimensions
//!   c       u32      curve degree
//!   h       u32      waypoint horizon the fits were computed on
//!   count   u64      number of samples
//! followed by `count` records of `m * (c + 1)` f64 values (little-endian),
//! row-major over `(m, c + 1)`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::bernstein::ControlPoints;
use crate::error::{Error, Result};

pub const DATASET_MAGIC: [u8; 4] = *b"PDIF";
pub const DATASET_VERSION: u32 = 1;

/// A set of expert coefficient samples with shared dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub m: usize,
    pub degree: usize,
    pub horizon: usize,
    /// One flattened coefficient row per sample: `(count, m * (degree + 1))`.
    pub samples: Array2<f64>,
}

impl Dataset {
    pub fn new(m: usize, degree: usize, horizon: usize) -> Self {
        Dataset { m, degree, horizon, samples: Array2::zeros((0, m * (degree + 1))) }
    }

    pub fn count(&self) -> usize {
        self.samples.nrows()
    }

    pub fn coeff_dim(&self) -> usize {
        self.m * (self.degree + 1)
    }

    pub fn push(&mut self, alpha: &ControlPoints) -> Result<()> {
        if alpha.nrows() != self.m || alpha.ncols() != self.degree + 1 {
            return Err(Error::ShapeMismatch(format!(
                "sample shape ({}, {}) does not match dataset ({}, {})",
                alpha.nrows(),
                alpha.ncols(),
                self.m,
                self.degree + 1
            )));
        }
        let flat: Vec<f64> = alpha.iter().copied().collect();
        self.samples
            .push_row(ndarray::ArrayView1::from(&flat))
            .map_err(|e| Error::ShapeMismatch(e.to_string()))
    }

    /// Sample `i` reshaped to `(m, degree + 1)` control points.
    pub fn coeffs(&self, i: usize) -> ControlPoints {
        self.samples
            .row(i)
            .to_owned()
            .into_shape_with_order((self.m, self.degree + 1))
            .expect("row length matches dataset dims")
    }
}

/// Writes atomically: the file appears complete or not at all.
pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let file = File::create(&tmp).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| Error::io(tmp.display().to_string(), e);
        w.write_all(&DATASET_MAGIC).map_err(io_err)?;
        w.write_all(&DATASET_VERSION.to_le_bytes()).map_err(io_err)?;
        w.write_all(&(ds.m as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(&(ds.degree as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(&(ds.horizon as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(&(ds.count() as u64).to_le_bytes()).map_err(io_err)?;
        for v in ds.samples.iter() {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let p = || path.display().to_string();

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, path, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(Error::format(p(), format!("bad magic {magic:?}, expected \"PDIF\"")));
    }
    let version = read_u32(&mut r, path, "version")?;
    if version != DATASET_VERSION {
        return Err(Error::format(
            p(),
            format!("unsupported dataset version {version}, expected {DATASET_VERSION}"),
        ));
    }
    let m = read_u32(&mut r, path, "m")? as usize;
    let degree = read_u32(&mut r, path, "degree")? as usize;
    let horizon = read_u32(&mut r, path, "horizon")? as usize;
    let count = read_u64(&mut r, path, "count")? as usize;
    if m == 0 || degree == 0 || horizon < 2 {
        return Err(Error::format(
            p(),
            format!("implausible dimensions m={m} c={degree} h={horizon}"),
        ));
    }
    let dim = m
        .checked_mul(degree + 1)
        .filter(|&d| d <= 1_000_000)
        .ok_or_else(|| Error::format(p(), "coefficient dimension overflows sanity bound"))?;
    let mut data = vec![0.0f64; count * dim];
    let mut buf = [0u8; 8];
    for (i, slot) in data.iter_mut().enumerate() {
        read_exact(&mut r, &mut buf, path, "sample payload").map_err(|_| {
            Error::format(
                p(),
                format!("truncated payload at value {i} of {}", count * dim),
            )
        })?;
        *slot = f64::from_le_bytes(buf);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| Error::io(p(), e))? != 0 {
        return Err(Error::format(p(), "trailing bytes after expected payload"));
    }
    let samples = Array2::from_shape_vec((count, dim), data)
        .map_err(|e| Error::format(p(), e.to_string()))?;
    Ok(Dataset { m, degree, horizon, samples })
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|_| {
        Error::format(path.display().to_string(), format!("truncated while reading {what}"))
    })
}

fn read_u32(r: &mut impl Read, path: &Path, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, path, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, path: &Path, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, path, what)?;
    Ok(u64::from_le_bytes(b))
}
