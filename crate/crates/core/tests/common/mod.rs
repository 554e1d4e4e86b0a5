#![allow(dead_code)]

use ctrecon::rng::{self, streams, Rng};
use ctrecon::{Image, Sinogram};
use rand::Rng as _;

pub fn test_rng(seed: u64) -> Rng {
    rng::stream(seed, streams::TEST_DATA)
}

pub fn uniform_vec(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_image(rng: &mut Rng, w: usize, h: usize) -> Image {
    Image::from_vec(w, h, uniform_vec(rng, w * h, 0.0, 1.0)).unwrap()
}

pub fn random_sinogram(rng: &mut Rng, angles: usize, dets: usize) -> Sinogram {
    Sinogram::from_vec(angles, dets, uniform_vec(rng, angles * dets, -1.0, 1.0)).unwrap()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
