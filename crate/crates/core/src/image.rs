//! Pixel images and sinograms.
//!
//! Images are row-major with row 0 at the top. The support is centred on the
//! origin; pixels are square with side `extent / width`, so a `w x h` image
//! covers `[-extent/2, extent/2] x [-h*ps/2, h*ps/2]`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    extent: f64,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "image dims must be positive");
        Self {
            width,
            height,
            extent: 1.0,
            data: vec![0.0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        let mut img = Self::zeros(width, height);
        img.data.fill(value);
        img
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::dim(format!("image dims {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::dim(format!(
                "{} values for a {width}x{height} image",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("image values must be finite"));
        }
        Ok(Self {
            width,
            height,
            extent: 1.0,
            data,
        })
    }

    pub fn with_extent(mut self, extent: f64) -> Result<Self> {
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::arg(format!("extent must be positive, got {extent}")));
        }
        self.extent = extent;
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn pixel_size(&self) -> f64 {
        self.extent / self.width as f64
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    /// Centre of pixel `(row, col)` in physical coordinates.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        let ps = self.pixel_size();
        let x = -0.5 * self.width as f64 * ps + (col as f64 + 0.5) * ps;
        let y = 0.5 * self.height as f64 * ps - (row as f64 + 0.5) * ps;
        (x, y)
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::dim(format!(
                "{}x{} vs {}x{} image",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn dot(&self, other: &Image) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same grid, values transformed elementwise.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Same grid, values from `f(self[i], other[i])`. Panics on shape mismatch.
    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Image {
        assert!(self.same_shape(other), "zip_map on mismatched images");
        Image {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            ..self.clone()
        }
    }
}

/// Angle x detector measurement array, row-major by angle.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    num_angles: usize,
    num_detectors: usize,
    data: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(num_angles: usize, num_detectors: usize) -> Self {
        Self {
            num_angles,
            num_detectors,
            data: vec![0.0; num_angles * num_detectors],
        }
    }

    pub fn from_vec(num_angles: usize, num_detectors: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != num_angles * num_detectors {
            return Err(Error::dim(format!(
                "{} values for a {num_angles}x{num_detectors} sinogram",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("sinogram values must be finite"));
        }
        Ok(Self {
            num_angles,
            num_detectors,
            data,
        })
    }

    pub fn num_angles(&self) -> usize {
        self.num_angles
    }

    pub fn num_detectors(&self) -> usize {
        self.num_detectors
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, angle: usize) -> &[f64] {
        let n = self.num_detectors;
        &self.data[angle * n..(angle + 1) * n]
    }

    pub fn row_mut(&mut self, angle: usize) -> &mut [f64] {
        let n = self.num_detectors;
        &mut self.data[angle * n..(angle + 1) * n]
    }

    pub fn get(&self, angle: usize, detector: usize) -> f64 {
        self.data[angle * self.num_detectors + detector]
    }

    pub fn set(&mut self, angle: usize, detector: usize, value: f64) {
        self.data[angle * self.num_detectors + detector] = value;
    }

    pub fn same_shape(&self, other: &Sinogram) -> bool {
        self.num_angles == other.num_angles && self.num_detectors == other.num_detectors
    }

    pub fn check_same_shape(&self, other: &Sinogram) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::dim(format!(
                "{}x{} vs {}x{} sinogram",
                self.num_angles, self.num_detectors, other.num_angles, other.num_detectors
            )))
        }
    }

    pub fn dot(&self, other: &Sinogram) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Sinogram {
        Sinogram {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dims_and_values() {
        assert!(Image::from_vec(0, 3, vec![]).is_err());
        assert!(Image::from_vec(2, 2, vec![0.0; 3]).is_err());
        assert!(Image::from_vec(1, 1, vec![f64::NAN]).is_err());
        assert!(Sinogram::from_vec(2, 2, vec![0.0; 5]).is_err());
    }

    #[test]
    fn pixel_centers_are_symmetric() {
        let img = Image::zeros(4, 4);
        let (x0, y0) = img.pixel_center(0, 0);
        let (x1, y1) = img.pixel_center(3, 3);
        assert_eq!(x0, -x1);
        assert_eq!(y0, -y1);
        assert!(y0 > 0.0 && x0 < 0.0);
        assert_eq!(x0, -0.375);
    }
}
