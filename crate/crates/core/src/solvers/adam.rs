use serde::{Deserialize, Serialize};

use crate::neural::{GeneratorParams, Gradients};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// `base * 0.5^floor(t / period)`.
pub fn learning_rate(base: f64, period: usize, t: usize) -> f64 {
    let halvings = if period == 0 { 0 } else { t / period };
    base * 0.5f64.powi(halvings.min(i32::MAX as usize) as i32)
}

/// One bias-corrected Adam update of `param` in place; `t` is 1-based.
pub fn adam_step(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: usize,
    lr: f64,
    hyper: &AdamHyper,
) {
    assert!(t >= 1, "Adam step counter is 1-based");
    debug_assert!(param.len() == grad.len() && m.len() == grad.len() && v.len() == grad.len());
    let c1 = 1.0 - hyper.beta1.powi(t as i32);
    let c2 = 1.0 - hyper.beta2.powi(t as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
        v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        param[i] -= lr * mhat / (vhat.sqrt() + hyper.eps);
    }
}

/// Adam moments for every tensor of a [`GeneratorParams`].
#[derive(Debug, Clone)]
pub struct Adam {
    hyper: AdamHyper,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &GeneratorParams, hyper: AdamHyper) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().map(|t| vec![0.0; t.len()]).collect();
        Self {
            hyper,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Updates every tensor; channel weights are skipped when `freeze_alphas`.
    pub fn step(&mut self, params: &mut GeneratorParams, grads: &Gradients, t: usize, lr: f64, freeze_alphas: bool) {
        let num_conv = params.weights.len() + params.biases.len();
        for (i, ((p, g), (m, v))) in params
            .tensors_mut()
            .zip(grads.slices())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .enumerate()
        {
            if freeze_alphas && i >= num_conv {
                continue;
            }
            adam_step(p.as_mut_slice(), g, m, v, t, lr, &self.hyper);
        }
    }
}
