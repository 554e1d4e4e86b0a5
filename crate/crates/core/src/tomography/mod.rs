//! Discrete Radon transforms (parallel and fan beam), their exact adjoints,
//! and the FBP / CGNE baselines.
//!
//! Rays are traced with Siddon's method: each ray contributes the exact
//! intersection length with every pixel it crosses, and the adjoint scatters
//! the same weights back, so `<Ax, y> = <x, A^T y>` holds to rounding.

mod cgne;
mod fbp;
mod geometry;
mod projector;
mod siddon;

pub use cgne::{cgne, CgneResult};
pub use fbp::{backproject_unfiltered, fbp, fbp_fan, RampFilter};
pub use geometry::{FanGeometry, Geometry, ParallelGeometry};
pub use projector::{LinearOperator, Projector};
pub use siddon::{trace_ray, GridBox};

use crate::error::Result;
use crate::image::{Image, Sinogram};

/// Parallel-beam line integrals of `image`.
pub fn radon_parallel(image: &Image, geom: &ParallelGeometry) -> Result<Sinogram> {
    Projector::for_image(image, &Geometry::Parallel(geom.clone()))?.forward(image)
}

/// Fan-beam line integrals along source -> detector-pixel rays.
pub fn radon_fan(image: &Image, geom: &FanGeometry) -> Result<Sinogram> {
    Projector::for_image(image, &Geometry::Fan(geom.clone()))?.forward(image)
}

/// Adjoint of [`radon_parallel`] / [`radon_fan`] onto a `width x height` grid
/// with the given physical extent.
pub fn radon_adjoint(
    sino: &Sinogram,
    geom: &Geometry,
    width: usize,
    height: usize,
    extent: f64,
) -> Result<Image> {
    Projector::new(geom, width, height, extent)?.adjoint(sino)
}
