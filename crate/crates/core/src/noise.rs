//! Measurement noise and the two data-fidelity losses.
//!
//! Sampling draws each bin from its own ChaCha8 stream derived from
//! `(seed, bin index)`, so results do not depend on evaluation order.

use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Sinogram;
use crate::rng;

/// Floor applied to `Ax` before the log in the Poisson loss.
pub const POISSON_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseSpec {
    Gaussian { sigma: f64, seed: u64 },
    /// `mean_counts` sets the photon scale: the forward model is rescaled so
    /// that the clean sinogram has this mean before sampling.
    Poisson { mean_counts: f64, seed: u64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::Gaussian { sigma, .. } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::arg(format!("gaussian sigma must be positive, got {sigma}")))
            }
            NoiseSpec::Poisson { mean_counts, .. } if !(mean_counts > 0.0 && mean_counts.is_finite()) => {
                Err(Error::arg(format!("mean counts must be positive, got {mean_counts}")))
            }
            _ => Ok(()),
        }
    }

    pub fn seed(&self) -> u64 {
        match *self {
            NoiseSpec::Gaussian { seed, .. } | NoiseSpec::Poisson { seed, .. } => seed,
        }
    }
}

/// `y = f + eps`, `eps ~ N(0, sigma^2)` i.i.d.
pub fn add_gaussian_noise(f: &Sinogram, sigma: f64, seed: u64) -> Result<Sinogram> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::arg(format!("sigma must be positive, got {sigma}")));
    }
    let mut y = f.clone();
    for (i, v) in y.as_mut_slice().iter_mut().enumerate() {
        let z: f64 = StandardNormal.sample(&mut rng::bin_stream(seed, i));
        *v += sigma * z;
    }
    Ok(y)
}

/// `y_i ~ Poisson(f_i)` independently. Rates must be non-negative.
pub fn sample_poisson(f: &Sinogram, seed: u64) -> Result<Sinogram> {
    let mut y = f.clone();
    for (i, v) in y.as_mut_slice().iter_mut().enumerate() {
        let rate = *v;
        if !(rate >= 0.0) {
            return Err(Error::arg(format!("negative Poisson rate {rate} at bin {i}")));
        }
        *v = if rate == 0.0 {
            0.0
        } else {
            let dist = Poisson::new(rate).map_err(|e| Error::arg(e.to_string()))?;
            dist.sample(&mut rng::bin_stream(seed, i))
        };
    }
    Ok(y)
}

/// Realised signal-to-noise ratio `10 log10(||f||^2 / ||y - f||^2)` in dB.
pub fn realized_snr_db(clean: &Sinogram, noisy: &Sinogram) -> Result<f64> {
    clean.check_same_shape(noisy)?;
    let signal = clean.dot(clean);
    let noise: f64 = clean
        .as_slice()
        .iter()
        .zip(noisy.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(10.0 * (signal / noise).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Fidelity {
    /// `1/2 ||Ax - y||^2`
    #[default]
    L2,
    /// `<1, Ax> - <y, log Ax>`
    Poisson,
}

#[derive(Debug, Clone)]
pub struct FidelityEval {
    pub value: f64,
    /// Gradient with respect to `Ax`.
    pub grad: Sinogram,
}

impl Fidelity {
    pub fn value(&self, ax: &Sinogram, y: &Sinogram) -> Result<f64> {
        ax.check_same_shape(y)?;
        match self {
            Fidelity::L2 => Ok(l2_value(ax.as_slice(), y.as_slice())),
            Fidelity::Poisson => poisson_value(ax.as_slice(), y.as_slice()),
        }
    }

    pub fn eval(&self, ax: &Sinogram, y: &Sinogram) -> Result<FidelityEval> {
        match self {
            Fidelity::L2 => l2_fidelity(ax, y),
            Fidelity::Poisson => poisson_fidelity(ax, y),
        }
    }
}

pub fn l2_fidelity(ax: &Sinogram, y: &Sinogram) -> Result<FidelityEval> {
    ax.check_same_shape(y)?;
    let mut grad = ax.clone();
    for (g, &yi) in grad.as_mut_slice().iter_mut().zip(y.as_slice()) {
        *g -= yi;
    }
    Ok(FidelityEval {
        value: l2_value(ax.as_slice(), y.as_slice()),
        grad,
    })
}

/// Poisson regression loss with `Ax` floored at [`POISSON_FLOOR`] inside the
/// log. Below the floor the log term is constant, so its gradient is zero
/// there and only the linear term contributes.
pub fn poisson_fidelity(ax: &Sinogram, y: &Sinogram) -> Result<FidelityEval> {
    ax.check_same_shape(y)?;
    let value = poisson_value(ax.as_slice(), y.as_slice())?;
    let mut grad = ax.clone();
    for (g, (&a, &yi)) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(ax.as_slice().iter().zip(y.as_slice()))
    {
        *g = if a > POISSON_FLOOR { 1.0 - yi / a } else { 1.0 };
    }
    Ok(FidelityEval { value, grad })
}

fn l2_value(ax: &[f64], y: &[f64]) -> f64 {
    0.5 * ax.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

fn poisson_value(ax: &[f64], y: &[f64]) -> Result<f64> {
    let mut value = 0.0;
    for (i, (&a, &yi)) in ax.iter().zip(y).enumerate() {
        let floored = a.max(POISSON_FLOOR);
        if !a.is_finite() {
            return Err(Error::arg(format!("non-finite projection {a} at bin {i}")));
        }
        value += a - if yi == 0.0 { 0.0 } else { yi * floored.ln() };
    }
    Ok(value)
}
