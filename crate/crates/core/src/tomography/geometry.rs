use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelGeometry {
    pub angles: Vec<f64>,
    /// Signed detector offsets from the rotation centre, uniformly spaced and
    /// symmetric about zero.
    pub detector_offsets: Vec<f64>,
    pub detector_spacing: f64,
}

impl ParallelGeometry {
    /// `num_angles` equispaced angles over `[0, pi)` and `num_detectors` bins
    /// centred on the origin.
    pub fn new(num_angles: usize, num_detectors: usize, detector_spacing: f64) -> Result<Self> {
        let geom = Self {
            angles: equispaced(num_angles, PI),
            detector_offsets: centered_offsets(num_detectors, detector_spacing),
            detector_spacing,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// Detector count covers the image diagonal in pixels (rounded up to an
    /// odd count so a central bin exists); spacing is one pixel.
    pub fn for_image(num_angles: usize, width: usize, height: usize, extent: f64) -> Result<Self> {
        let ps = extent / width as f64;
        let diag = ((width * width + height * height) as f64).sqrt();
        let mut n = diag.ceil() as usize;
        if n.is_multiple_of(2) {
            n += 1;
        }
        Self::new(num_angles, n, ps)
    }

    pub fn num_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn num_detectors(&self) -> usize {
        self.detector_offsets.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.angles.is_empty() || self.detector_offsets.is_empty() {
            return Err(Error::Geometry("need at least one angle and one detector".into()));
        }
        check_angles(&self.angles, PI)?;
        if !(self.detector_spacing > 0.0 && self.detector_spacing.is_finite()) {
            return Err(Error::Geometry(format!(
                "detector spacing must be positive, got {}",
                self.detector_spacing
            )));
        }
        let expected = centered_offsets(self.detector_offsets.len(), self.detector_spacing);
        let tol = 1e-9 * self.detector_spacing;
        if self
            .detector_offsets
            .iter()
            .zip(&expected)
            .any(|(a, b)| (a - b).abs() > tol)
        {
            return Err(Error::Geometry(
                "detector offsets must be uniform and symmetric about 0".into(),
            ));
        }
        Ok(())
    }

    /// Total detector width.
    pub fn span(&self) -> f64 {
        self.detector_offsets.len() as f64 * self.detector_spacing
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FanGeometry {
    pub angles: Vec<f64>,
    pub source_distance: f64,
    pub detector_distance: f64,
    pub num_detector_pixels: usize,
    pub detector_pixel_spacing: f64,
}

impl FanGeometry {
    pub fn new(
        num_angles: usize,
        source_distance: f64,
        detector_distance: f64,
        num_detector_pixels: usize,
        detector_pixel_spacing: f64,
    ) -> Result<Self> {
        let geom = Self {
            angles: equispaced(num_angles, 2.0 * PI),
            source_distance,
            detector_distance,
            num_detector_pixels,
            detector_pixel_spacing,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// Desk-scale counterpart of a 512-pixel setup with source and detector
    /// both 512 units from the centre and a 2-unit pixel pitch: distances
    /// equal the image side, pitch is two image pixels, and the pixel count is
    /// widened until the fan covers the whole image (plus one pixel margin).
    pub fn for_image(num_angles: usize, width: usize, height: usize, extent: f64) -> Result<Self> {
        let ps = extent / width as f64;
        let side = extent.max(height as f64 * ps);
        let source = side;
        let detector = side;
        let spacing = 2.0 * ps;
        let radius = 0.5 * ps * ((width * width + height * height) as f64).sqrt() + ps;
        if radius >= source {
            return Err(Error::Geometry("source inside the image support".into()));
        }
        let half_angle = (radius / source).asin();
        let half_width = (source + detector) * half_angle.tan();
        let mut n = (2.0 * half_width / spacing).ceil() as usize;
        if n.is_multiple_of(2) {
            n += 1;
        }
        Self::new(num_angles, source, detector, n, spacing)
    }

    pub fn num_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn num_detectors(&self) -> usize {
        self.num_detector_pixels
    }

    pub fn detector_offsets(&self) -> Vec<f64> {
        centered_offsets(self.num_detector_pixels, self.detector_pixel_spacing)
    }

    pub fn validate(&self) -> Result<()> {
        if self.angles.is_empty() || self.num_detector_pixels == 0 {
            return Err(Error::Geometry("need at least one angle and one detector".into()));
        }
        check_angles(&self.angles, 2.0 * PI)?;
        for (name, v) in [
            ("source distance", self.source_distance),
            ("detector distance", self.detector_distance),
            ("detector pixel spacing", self.detector_pixel_spacing),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Geometry(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Source position and detector-pixel position for ray `(angle, pixel)`.
    pub fn ray_endpoints(&self, angle: f64, offset: f64) -> ((f64, f64), (f64, f64)) {
        let (s, c) = angle.sin_cos();
        let source = (self.source_distance * c, self.source_distance * s);
        let pixel = (
            -self.detector_distance * c - offset * s,
            -self.detector_distance * s + offset * c,
        );
        (source, pixel)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Parallel(ParallelGeometry),
    Fan(FanGeometry),
}

impl Geometry {
    pub fn num_angles(&self) -> usize {
        match self {
            Geometry::Parallel(g) => g.num_angles(),
            Geometry::Fan(g) => g.num_angles(),
        }
    }

    pub fn num_detectors(&self) -> usize {
        match self {
            Geometry::Parallel(g) => g.num_detectors(),
            Geometry::Fan(g) => g.num_detectors(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Geometry::Parallel(g) => g.validate(),
            Geometry::Fan(g) => g.validate(),
        }
    }
}

fn equispaced(n: usize, range: f64) -> Vec<f64> {
    (0..n).map(|i| range * i as f64 / n as f64).collect()
}

fn centered_offsets(n: usize, spacing: f64) -> Vec<f64> {
    let mid = 0.5 * (n as f64 - 1.0);
    (0..n).map(|j| (j as f64 - mid) * spacing).collect()
}

fn check_angles(angles: &[f64], upper: f64) -> Result<()> {
    if angles.iter().any(|a| !(0.0..upper).contains(a)) {
        return Err(Error::Geometry(format!("angles must lie in [0, {upper})")));
    }
    if angles.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Geometry("angles must be strictly increasing".into()));
    }
    Ok(())
}
