//! PSNR and SSIM with the dynamic range taken from the reference image.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// `10 log10(L^2 / MSE)` with `L = max(x) - min(x)` of the reference `x`.
/// Identical images give `f64::INFINITY`.
pub fn psnr(xhat: &Image, x: &Image) -> Result<f64> {
    xhat.check_same_shape(x)?;
    let range = dynamic_range(x)?;
    let mse = xhat
        .as_slice()
        .iter()
        .zip(x.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (range * range / mse).log10())
}

pub fn dynamic_range(x: &Image) -> Result<f64> {
    let range = x.max() - x.min();
    if range > 0.0 {
        Ok(range)
    } else {
        Err(Error::arg("reference image is constant; PSNR/SSIM range is zero"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimSpec {
    /// Side of the square uniform window.
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    pub stride: usize,
}

impl Default for SsimSpec {
    fn default() -> Self {
        Self {
            window: 7,
            k1: 0.01,
            k2: 0.03,
            stride: 1,
        }
    }
}

impl SsimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::arg(format!("SSIM window must be odd and >= 3, got {}", self.window)));
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0) || self.stride == 0 {
            return Err(Error::arg("SSIM constants and stride must be positive"));
        }
        Ok(())
    }
}

/// Mean SSIM over all valid window positions (no padding).
pub fn ssim(xhat: &Image, x: &Image, spec: &SsimSpec) -> Result<f64> {
    ssim_with_range(xhat, x, spec, dynamic_range(x)?)
}

/// SSIM with an explicit dynamic range `L`.
pub fn ssim_with_range(xhat: &Image, x: &Image, spec: &SsimSpec, range: f64) -> Result<f64> {
    Ok(ssim_components(xhat, x, spec, range)?.0)
}

/// Returns `(ssim, mean contrast-structure term)`; the second factor
/// `(2 cov + C2) / (var_a + var_b + C2)` alone, averaged over windows.
pub fn ssim_components(xhat: &Image, x: &Image, spec: &SsimSpec, range: f64) -> Result<(f64, f64)> {
    spec.validate()?;
    xhat.check_same_shape(x)?;
    let (w, h) = (x.width(), x.height());
    if spec.window > w || spec.window > h {
        return Err(Error::arg(format!(
            "SSIM window {} larger than {w}x{h} image",
            spec.window
        )));
    }
    let c1 = (spec.k1 * range).powi(2);
    let c2 = (spec.k2 * range).powi(2);
    let n = (spec.window * spec.window) as f64;
    let (a, b) = (xhat.as_slice(), x.as_slice());

    let mut total = 0.0;
    let mut total_cs = 0.0;
    let mut count = 0usize;
    for r0 in (0..=h - spec.window).step_by(spec.stride) {
        for c0 in (0..=w - spec.window).step_by(spec.stride) {
            let idx = |i: usize| (r0 + i / spec.window) * w + c0 + i % spec.window;
            let m = spec.window * spec.window;
            let mu_a = (0..m).map(|i| a[idx(i)]).sum::<f64>() / n;
            let mu_b = (0..m).map(|i| b[idx(i)]).sum::<f64>() / n;
            let moment = |p: &[f64], mp: f64, q: &[f64], mq: f64| {
                (0..m).map(|i| (p[idx(i)] - mp) * (q[idx(i)] - mq)).sum::<f64>() / n
            };
            let var_a = moment(a, mu_a, a, mu_a);
            let var_b = moment(b, mu_b, b, mu_b);
            let cov = moment(a, mu_a, b, mu_b);
            let cs = (2.0 * cov + c2) / (var_a + var_b + c2);
            let lum = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1);
            total += lum * cs;
            total_cs += cs;
            count += 1;
        }
    }
    Ok((total / count as f64, total_cs / count as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checkerboard(n: usize) -> Image {
        let v = (0..n * n).map(|i| ((i / n + i % n) % 2) as f64).collect();
        Image::from_vec(n, n, v).unwrap()
    }

    #[test]
    fn psnr_hand_case() {
        let x = checkerboard(8);
        let xhat = x.map(|v| v + 0.1);
        assert!((psnr(&xhat, &x).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_identical_is_infinite() {
        let x = checkerboard(4);
        assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_constant_reference_errors() {
        let x = Image::filled(4, 4, 0.5);
        assert!(psnr(&checkerboard(4), &x).is_err());
    }

    #[test]
    fn ssim_identical_is_one() {
        let x = checkerboard(9).map(|v| 0.3 + 0.5 * v);
        assert_eq!(ssim(&x, &x, &SsimSpec::default()).unwrap(), 1.0);
    }

    #[test]
    fn ssim_window_must_fit_and_be_odd() {
        let x = checkerboard(5);
        assert!(ssim(&x, &x, &SsimSpec::default()).is_err());
        let spec = SsimSpec {
            window: 4,
            ..Default::default()
        };
        assert!(ssim(&x, &x, &spec).is_err());
    }
}
