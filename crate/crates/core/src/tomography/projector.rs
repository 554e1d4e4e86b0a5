use super::geometry::Geometry;
use super::siddon::{trace_ray, GridBox};
use crate::error::{Error, Result};
use crate::image::{Image, Sinogram};

/// A linear map from images to sinograms together with its adjoint.
pub trait LinearOperator {
    fn forward(&self, image: &Image) -> Result<Sinogram>;
    fn adjoint(&self, sino: &Sinogram) -> Result<Image>;
}

/// Precomputed Siddon system matrix in CSR form, one row per ray
/// (angle-major). Forward sums each row in stored order and the adjoint
/// scatters rows in order, so results do not depend on scheduling.
#[derive(Debug, Clone)]
pub struct Projector {
    geometry: Geometry,
    width: usize,
    height: usize,
    extent: f64,
    scale: f64,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    weights: Vec<f64>,
}

impl Projector {
    pub fn new(geometry: &Geometry, width: usize, height: usize, extent: f64) -> Result<Self> {
        geometry.validate()?;
        if width == 0 || height == 0 {
            return Err(Error::dim("empty image grid"));
        }
        let grid = GridBox::new(width, height, extent);
        let mut row_ptr = Vec::with_capacity(geometry.num_angles() * geometry.num_detectors() + 1);
        let mut entries: Vec<(u32, f64)> = Vec::new();
        row_ptr.push(0);

        match geometry {
            Geometry::Parallel(g) => {
                let ps = grid.pixel_size;
                let diag = ps * ((width * width + height * height) as f64).sqrt();
                if g.span() < diag * (1.0 - 1e-9) {
                    return Err(Error::Geometry(format!(
                        "detector span {:.6} does not cover the image diagonal {:.6}",
                        g.span(),
                        diag
                    )));
                }
                for &phi in &g.angles {
                    let (s, c) = phi.sin_cos();
                    for &offset in &g.detector_offsets {
                        trace_ray(
                            &grid,
                            (offset * c, offset * s),
                            (-s, c),
                            f64::NEG_INFINITY,
                            f64::INFINITY,
                            &mut entries,
                        );
                        row_ptr.push(entries.len());
                    }
                }
            }
            Geometry::Fan(g) => {
                let offsets = g.detector_offsets();
                for &beta in &g.angles {
                    for &u in &offsets {
                        let (src, pix) = g.ray_endpoints(beta, u);
                        let (dx, dy) = (pix.0 - src.0, pix.1 - src.1);
                        let len = (dx * dx + dy * dy).sqrt();
                        trace_ray(&grid, src, (dx / len, dy / len), 0.0, len, &mut entries);
                        row_ptr.push(entries.len());
                    }
                }
                if entries.is_empty() {
                    return Err(Error::Geometry(
                        "no fan-beam ray intersects the image support".into(),
                    ));
                }
            }
        }

        let (cols, weights) = entries.into_iter().unzip();
        Ok(Self {
            geometry: geometry.clone(),
            width,
            height,
            extent,
            scale: 1.0,
            row_ptr,
            cols,
            weights,
        })
    }

    pub fn for_image(image: &Image, geometry: &Geometry) -> Result<Self> {
        Self::new(geometry, image.width(), image.height(), image.extent())
    }

    /// The same operator multiplied by `scale` (used to put forward
    /// projections on a photon-count scale).
    pub fn scaled(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::arg(format!("operator scale must be positive, got {scale}")));
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn num_rays(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.weights.len()
    }

    /// Pixel indices and weights of one ray.
    pub fn ray(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[row], self.row_ptr[row + 1]);
        self.cols[a..b]
            .iter()
            .zip(&self.weights[a..b])
            .map(move |(&c, &w)| (c as usize, w * self.scale))
    }

    pub fn zero_image(&self) -> Image {
        Image::zeros(self.width, self.height)
            .with_extent(self.extent)
            .expect("extent validated at construction")
    }

    pub fn zero_sinogram(&self) -> Sinogram {
        Sinogram::zeros(self.geometry.num_angles(), self.geometry.num_detectors())
    }

    fn check_image(&self, image: &Image) -> Result<()> {
        if image.width() != self.width || image.height() != self.height {
            return Err(Error::dim(format!(
                "projector expects {}x{} images, got {}x{}",
                self.width,
                self.height,
                image.width(),
                image.height()
            )));
        }
        Ok(())
    }

    fn check_sino(&self, sino: &Sinogram) -> Result<()> {
        let (na, nd) = (self.geometry.num_angles(), self.geometry.num_detectors());
        if sino.num_angles() != na || sino.num_detectors() != nd {
            return Err(Error::dim(format!(
                "projector expects {na}x{nd} sinograms, got {}x{}",
                sino.num_angles(),
                sino.num_detectors()
            )));
        }
        Ok(())
    }

    /// `out = A x` without allocating.
    pub fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut acc = 0.0;
            for k in a..b {
                acc += self.weights[k] * x[self.cols[k] as usize];
            }
            *o = acc * self.scale;
        }
    }

    /// `out = A^T y` without allocating.
    pub fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            let v = yr * self.scale;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[self.cols[k] as usize] += self.weights[k] * v;
            }
        }
    }
}

impl LinearOperator for Projector {
    fn forward(&self, image: &Image) -> Result<Sinogram> {
        self.check_image(image)?;
        let mut sino = self.zero_sinogram();
        self.forward_into(image.as_slice(), sino.as_mut_slice());
        Ok(sino)
    }

    fn adjoint(&self, sino: &Sinogram) -> Result<Image> {
        self.check_sino(sino)?;
        let mut img = self.zero_image();
        self.adjoint_into(sino.as_slice(), img.as_mut_slice());
        Ok(img)
    }
}
