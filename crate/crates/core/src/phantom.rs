//! Analytic ellipse phantoms.
//!
//! Ellipse parameters live on the normalised square `[-1, 1]^2` that spans
//! the whole image, `y` pointing up.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: (f64, f64),
    /// Semi-axes along the ellipse's own x and y directions.
    pub axes: (f64, f64),
    /// Counter-clockwise rotation in radians.
    pub angle: f64,
    pub intensity: f64,
}

impl Ellipse {
    pub fn new(center: (f64, f64), axes: (f64, f64), angle_deg: f64, intensity: f64) -> Self {
        Self {
            center,
            axes,
            angle: angle_deg.to_radians(),
            intensity,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (s, c) = self.angle.sin_cos();
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.axes.0).powi(2) + (v / self.axes.1).powi(2) <= 1.0
    }
}

/// Sum of the intensities of every ellipse containing each pixel centre,
/// clamped to `[0, 1]`.
pub fn ellipse_phantom(ellipses: &[Ellipse], size: usize) -> Result<Image> {
    if size == 0 {
        return Err(Error::arg("phantom size must be positive"));
    }
    if let Some(e) = ellipses.iter().find(|e| !(e.axes.0 > 0.0 && e.axes.1 > 0.0)) {
        return Err(Error::arg(format!("ellipse axes must be positive: {e:?}")));
    }
    let mut img = Image::zeros(size, size);
    let step = 2.0 / size as f64;
    for row in 0..size {
        let y = 1.0 - (row as f64 + 0.5) * step;
        for col in 0..size {
            let x = -1.0 + (col as f64 + 0.5) * step;
            let v: f64 = ellipses
                .iter()
                .filter(|e| e.contains(x, y))
                .map(|e| e.intensity)
                .sum();
            img.set(row, col, v.clamp(0.0, 1.0));
        }
    }
    Ok(img)
}

/// The ten Shepp-Logan ellipses with the higher-contrast intensities that
/// keep every value inside `[0, 1]`.
pub fn shepp_logan_ellipses() -> Vec<Ellipse> {
    vec![
        Ellipse::new((0.0, 0.0), (0.69, 0.92), 0.0, 1.0),
        Ellipse::new((0.0, -0.0184), (0.6624, 0.874), 0.0, -0.8),
        Ellipse::new((0.22, 0.0), (0.11, 0.31), -18.0, -0.2),
        Ellipse::new((-0.22, 0.0), (0.16, 0.41), 18.0, -0.2),
        Ellipse::new((0.0, 0.35), (0.21, 0.25), 0.0, 0.1),
        Ellipse::new((0.0, 0.1), (0.046, 0.046), 0.0, 0.1),
        Ellipse::new((0.0, -0.1), (0.046, 0.046), 0.0, 0.1),
        Ellipse::new((-0.08, -0.605), (0.046, 0.023), 0.0, 0.1),
        Ellipse::new((0.0, -0.605), (0.023, 0.023), 0.0, 0.1),
        Ellipse::new((0.06, -0.605), (0.023, 0.046), 0.0, 0.1),
    ]
}

pub fn shepp_logan(size: usize) -> Result<Image> {
    if size < 16 {
        return Err(Error::arg(format!("Shepp-Logan needs size >= 16, got {size}")));
    }
    ellipse_phantom(&shepp_logan_ellipses(), size)
}

/// Shepp-Logan-like layout that is invariant under a 180 degree rotation.
pub fn symmetric_shepp_logan_ellipses() -> Vec<Ellipse> {
    vec![
        Ellipse::new((0.0, 0.0), (0.69, 0.92), 0.0, 1.0),
        Ellipse::new((0.0, 0.0), (0.6624, 0.874), 0.0, -0.8),
        Ellipse::new((0.22, 0.0), (0.11, 0.31), -18.0, -0.2),
        Ellipse::new((-0.22, 0.0), (0.11, 0.31), -18.0, -0.2),
        Ellipse::new((0.0, 0.45), (0.21, 0.18), 0.0, 0.1),
        Ellipse::new((0.0, -0.45), (0.21, 0.18), 0.0, 0.1),
        Ellipse::new((0.0, 0.1), (0.046, 0.046), 0.0, 0.1),
        Ellipse::new((0.0, -0.1), (0.046, 0.046), 0.0, 0.1),
    ]
}

pub fn symmetric_shepp_logan(size: usize) -> Result<Image> {
    if size < 16 {
        return Err(Error::arg(format!("phantom needs size >= 16, got {size}")));
    }
    ellipse_phantom(&symmetric_shepp_logan_ellipses(), size)
}

/// Chest-like cross-section: body outline, two lungs, heart, spine.
pub fn thorax_ellipses() -> Vec<Ellipse> {
    vec![
        Ellipse::new((0.0, 0.0), (0.88, 0.62), 0.0, 0.55),
        Ellipse::new((-0.38, 0.05), (0.26, 0.42), 8.0, -0.45),
        Ellipse::new((0.38, 0.05), (0.24, 0.40), -8.0, -0.45),
        Ellipse::new((0.08, -0.05), (0.2, 0.17), 25.0, 0.15),
        Ellipse::new((0.0, -0.45), (0.09, 0.08), 0.0, 0.4),
        Ellipse::new((-0.32, 0.2), (0.04, 0.04), 0.0, 0.3),
        Ellipse::new((0.42, -0.12), (0.03, 0.05), 0.0, 0.3),
    ]
}

/// Abdomen-like cross-section with organs of graded contrast.
pub fn abdomen_ellipses() -> Vec<Ellipse> {
    vec![
        Ellipse::new((0.0, 0.0), (0.85, 0.7), 0.0, 0.45),
        Ellipse::new((-0.35, 0.15), (0.32, 0.26), -20.0, 0.12),
        Ellipse::new((0.4, 0.1), (0.14, 0.2), 10.0, 0.2),
        Ellipse::new((0.0, -0.5), (0.1, 0.09), 0.0, 0.43),
        Ellipse::new((0.2, 0.35), (0.15, 0.08), 0.0, -0.25),
        Ellipse::new((-0.1, -0.2), (0.05, 0.05), 0.0, 0.3),
        Ellipse::new((0.15, -0.22), (0.06, 0.04), 30.0, -0.15),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PhantomSpec {
    SheppLogan { size: usize },
    SymmetricSheppLogan { size: usize },
    Thorax { size: usize },
    Abdomen { size: usize },
    Ellipses { size: usize, ellipses: Vec<Ellipse> },
}

impl PhantomSpec {
    /// The three distinct test images used for comparison tables.
    pub fn presets(size: usize) -> [PhantomSpec; 3] {
        [
            PhantomSpec::SheppLogan { size },
            PhantomSpec::Thorax { size },
            PhantomSpec::Abdomen { size },
        ]
    }

    pub fn size(&self) -> usize {
        match self {
            PhantomSpec::SheppLogan { size }
            | PhantomSpec::SymmetricSheppLogan { size }
            | PhantomSpec::Thorax { size }
            | PhantomSpec::Abdomen { size }
            | PhantomSpec::Ellipses { size, .. } => *size,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PhantomSpec::SheppLogan { .. } => "shepp-logan",
            PhantomSpec::SymmetricSheppLogan { .. } => "symmetric-shepp-logan",
            PhantomSpec::Thorax { .. } => "thorax",
            PhantomSpec::Abdomen { .. } => "abdomen",
            PhantomSpec::Ellipses { .. } => "ellipses",
        }
    }

    /// Rasterises onto an image of physical side `extent`.
    pub fn render(&self, extent: f64) -> Result<Image> {
        let img = match self {
            PhantomSpec::SheppLogan { size } => shepp_logan(*size)?,
            PhantomSpec::SymmetricSheppLogan { size } => symmetric_shepp_logan(*size)?,
            PhantomSpec::Thorax { size } => ellipse_phantom(&thorax_ellipses(), *size)?,
            PhantomSpec::Abdomen { size } => ellipse_phantom(&abdomen_ellipses(), *size)?,
            PhantomSpec::Ellipses { size, ellipses } => ellipse_phantom(ellipses, *size)?,
        };
        img.with_extent(extent)
    }
}
