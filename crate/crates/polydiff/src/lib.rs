//! Guided diffusion over polynomial trajectory coefficients for 2D motion
//! planning: a denoising model over Bernstein control points, cost-gradient
//! guidance at sampling time, and trajectory stitching for hard scenes.

pub mod bench;
pub mod bernstein;
pub mod cli;
pub mod config;
pub mod diffusion;
pub mod error;
pub mod geom;
pub mod guidance;
mod linalg;
pub mod rng;
pub mod rrt;
pub mod stitching;
pub mod world;

pub use error::{Error, Result};
