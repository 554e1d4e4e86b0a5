//! CT inverse problems: discrete Radon operators, classical baselines,
//! measurement noise models, TV priors, a small reverse-mode autodiff engine
//! and the DIP / PnP-DIP / MCDIP-ADMM reconstruction loops.
//!
//! Everything is `f64` and single-threaded per call; the only shared state is
//! what callers hand in.

pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod neural;
pub mod noise;
pub mod phantom;
pub mod priors;
pub mod rng;
pub mod solvers;
pub mod tomography;

pub use error::{Error, Result};
pub use image::{Image, Sinogram};
