use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::geometry::{FanGeometry, ParallelGeometry};
use crate::error::{Error, Result};
use crate::image::{Image, Sinogram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RampFilter {
    #[default]
    Ramp,
    /// Ramp apodised by a Hann window reaching zero at Nyquist.
    Hann,
}

/// Parallel-beam filtered backprojection onto a `width x height` grid.
pub fn fbp(
    sino: &Sinogram,
    geom: &ParallelGeometry,
    width: usize,
    height: usize,
    extent: f64,
    filter: RampFilter,
) -> Result<Image> {
    check_parallel(sino, geom)?;
    let filtered = filter_rows(sino, geom.detector_spacing, filter, 1.0)?;
    backproject_parallel(&filtered, geom, width, height, extent)
}

/// Plain backprojection with the same angular weighting as [`fbp`] but no
/// ramp filter.
pub fn backproject_unfiltered(
    sino: &Sinogram,
    geom: &ParallelGeometry,
    width: usize,
    height: usize,
    extent: f64,
) -> Result<Image> {
    check_parallel(sino, geom)?;
    backproject_parallel(sino, geom, width, height, extent)
}

/// Flat-detector fan-beam FBP: cosine pre-weighting on the detector rescaled
/// to the rotation centre, half ramp filter (the full 2*pi scan sees every
/// line twice), and distance-weighted backprojection.
pub fn fbp_fan(
    sino: &Sinogram,
    geom: &FanGeometry,
    width: usize,
    height: usize,
    extent: f64,
    filter: RampFilter,
) -> Result<Image> {
    geom.validate()?;
    if sino.num_angles() != geom.num_angles() || sino.num_detectors() != geom.num_detectors() {
        return Err(Error::dim("sinogram does not match fan geometry"));
    }
    if geom.num_detectors() < 2 {
        return Err(Error::arg("FBP needs at least two detectors"));
    }
    let d = geom.source_distance;
    let mag = (geom.source_distance + geom.detector_distance) / d;
    let spacing = geom.detector_pixel_spacing / mag;
    let offsets: Vec<f64> = geom.detector_offsets().iter().map(|u| u / mag).collect();

    let mut weighted = sino.clone();
    for a in 0..sino.num_angles() {
        for (v, s) in weighted.row_mut(a).iter_mut().zip(&offsets) {
            *v *= d / (d * d + s * s).sqrt();
        }
    }
    let filtered = filter_rows(&weighted, spacing, filter, 0.5)?;

    let mut img = Image::zeros(width, height).with_extent(extent)?;
    let d_beta = 2.0 * PI / geom.num_angles() as f64;
    let s0 = offsets[0];
    let trig: Vec<(f64, f64)> = geom.angles.iter().map(|b| b.sin_cos()).collect();
    for row in 0..height {
        for col in 0..width {
            let (x, y) = img.pixel_center(row, col);
            let mut acc = 0.0;
            for (a, &(sb, cb)) in trig.iter().enumerate() {
                let along = x * cb + y * sb;
                let across = -x * sb + y * cb;
                let u = (d - along) / d;
                let s = d * across / (d - along);
                acc += interp(filtered.row(a), (s - s0) / spacing) / (u * u);
            }
            img.set(row, col, acc * d_beta);
        }
    }
    Ok(img)
}

fn check_parallel(sino: &Sinogram, geom: &ParallelGeometry) -> Result<()> {
    geom.validate()?;
    if sino.num_angles() != geom.num_angles() || sino.num_detectors() != geom.num_detectors() {
        return Err(Error::dim("sinogram does not match parallel geometry"));
    }
    if geom.num_detectors() < 2 {
        return Err(Error::arg("FBP needs at least two detectors"));
    }
    Ok(())
}

fn backproject_parallel(
    sino: &Sinogram,
    geom: &ParallelGeometry,
    width: usize,
    height: usize,
    extent: f64,
) -> Result<Image> {
    let mut img = Image::zeros(width, height).with_extent(extent)?;
    let weight = PI / geom.num_angles() as f64;
    let s0 = geom.detector_offsets[0];
    let trig: Vec<(f64, f64)> = geom.angles.iter().map(|p| p.sin_cos()).collect();
    for row in 0..height {
        for col in 0..width {
            let (x, y) = img.pixel_center(row, col);
            let acc: f64 = trig
                .iter()
                .enumerate()
                .map(|(a, &(s, c))| interp(sino.row(a), (x * c + y * s - s0) / geom.detector_spacing))
                .sum();
            img.set(row, col, acc * weight);
        }
    }
    Ok(img)
}

/// Linear interpolation at fractional index `pos`; zero outside the detector.
fn interp(row: &[f64], pos: f64) -> f64 {
    if pos < 0.0 || pos > (row.len() - 1) as f64 {
        return 0.0;
    }
    let i = pos.floor() as usize;
    if i + 1 >= row.len() {
        return row[row.len() - 1];
    }
    let f = pos - i as f64;
    row[i] * (1.0 - f) + row[i + 1] * f
}

/// Convolves every row with the band-limited ramp kernel (sampled in the
/// spatial domain so the DC response is exact), via zero-padded FFTs.
fn filter_rows(sino: &Sinogram, spacing: f64, filter: RampFilter, gain: f64) -> Result<Sinogram> {
    let n = sino.num_detectors();
    let padded = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(padded);
    let inv = planner.plan_fft_inverse(padded);

    let mut kernel = vec![Complex::new(0.0, 0.0); padded];
    let ramlak = |k: usize| -> f64 {
        if k == 0 {
            0.25 / (spacing * spacing)
        } else if k.is_multiple_of(2) {
            0.0
        } else {
            -1.0 / ((k * k) as f64 * PI * PI * spacing * spacing)
        }
    };
    for k in 0..n {
        kernel[k].re = ramlak(k);
        if k > 0 {
            kernel[padded - k].re = ramlak(k);
        }
    }
    fwd.process(&mut kernel);
    let response: Vec<f64> = kernel
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let window = match filter {
                RampFilter::Ramp => 1.0,
                RampFilter::Hann => {
                    let f = k.min(padded - k) as f64 / (padded / 2) as f64;
                    0.5 * (1.0 + (PI * f).cos())
                }
            };
            h.re * window * spacing * gain / padded as f64
        })
        .collect();

    let mut out = sino.clone();
    let mut buf = vec![Complex::new(0.0, 0.0); padded];
    for a in 0..sino.num_angles() {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (b, &v) in buf.iter_mut().zip(sino.row(a)) {
            b.re = v;
        }
        fwd.process(&mut buf);
        for (b, &r) in buf.iter_mut().zip(&response) {
            *b *= r;
        }
        inv.process(&mut buf);
        for (o, b) in out.row_mut(a).iter_mut().zip(&buf) {
            *o = b.re;
        }
    }
    Ok(out)
}
