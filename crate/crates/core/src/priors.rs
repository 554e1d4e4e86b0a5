//! Classical image priors: truncated Gaussian, positive l1 and total
//! variation. Provides TV evaluation, its proximal operator and samplers used
//! to visualise each prior.

use rand::Rng as _;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{self, streams, Rng};

/// Anisotropic TV over 4-connected neighbours with a uniform edge length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvSpec {
    pub edge_length: f64,
    /// Weight of TV in the prior density `exp(-alpha TV(x))`.
    pub alpha: f64,
}

impl Default for TvSpec {
    fn default() -> Self {
        Self {
            edge_length: 1.0,
            alpha: 1.0,
        }
    }
}

impl TvSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.edge_length > 0.0 && self.alpha > 0.0) {
            return Err(Error::arg("TV edge length and alpha must be positive"));
        }
        Ok(())
    }
}

/// Sum over unordered neighbour pairs of `l_ij |x_i - x_j|`.
pub fn tv(image: &Image, spec: &TvSpec) -> f64 {
    spec.edge_length * tv_unit(image.as_slice(), image.width(), image.height())
}

fn tv_unit(x: &[f64], w: usize, h: usize) -> f64 {
    let mut total = 0.0;
    for r in 0..h {
        for c in 0..w {
            let v = x[r * w + c];
            if c + 1 < w {
                total += (x[r * w + c + 1] - v).abs();
            }
            if r + 1 < h {
                total += (x[(r + 1) * w + c] - v).abs();
            }
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxTvOptions {
    pub max_iter: usize,
    /// Stop once the duality gap falls below this.
    pub gap_tol: f64,
}

impl Default for ProxTvOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            gap_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProxTvResult {
    pub image: Image,
    pub iterations: usize,
    pub gap: f64,
}

/// `argmin_x 1/2 ||x - v||^2 + weight * TV(x)` with default options.
pub fn prox_tv(v: &Image, weight: f64) -> Result<Image> {
    Ok(prox_tv_with(v, weight, &ProxTvOptions::default())?.image)
}

/// Fast projected gradient on the dual: the dual variable lives on edges,
/// boxed to `[-weight, weight]`, and the primal iterate is
/// `x = v - D^T q`. The returned gap is `TV_w(x) - <q, Dx>`, an upper bound
/// on the primal suboptimality of the returned image.
pub fn prox_tv_with(v: &Image, weight: f64, opts: &ProxTvOptions) -> Result<ProxTvResult> {
    prox_tv_warm(v, weight, opts, &mut Vec::new())
}

/// [`prox_tv_with`] starting from the edge dual `dual` (clipped to the box)
/// and leaving the final dual there. An empty vector starts from zero.
/// Repeated calls on slowly changing inputs converge in far fewer steps.
pub fn prox_tv_warm(v: &Image, weight: f64, opts: &ProxTvOptions, dual: &mut Vec<f64>) -> Result<ProxTvResult> {
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(Error::arg(format!("prox weight must be >= 0, got {weight}")));
    }
    if weight == 0.0 || v.len() == 1 {
        return Ok(ProxTvResult {
            image: v.clone(),
            iterations: 0,
            gap: 0.0,
        });
    }
    let (w, h) = (v.width(), v.height());
    let ops = EdgeOps { w, h };
    let ne = ops.num_edges();
    let vs = v.as_slice();

    // ||D||^2 <= 8 for the 4-neighbour difference operator.
    let step = 1.0 / 8.0;
    if dual.len() != ne {
        dual.clear();
        dual.resize(ne, 0.0);
    }
    let mut q: Vec<f64> = dual.iter().map(|d| d.clamp(-weight, weight)).collect();
    let mut q_prev = q.clone();
    let mut r = q.clone();
    let mut x = vs.to_vec();
    let mut dx = vec![0.0; ne];
    let mut t = 1.0f64;
    let mut gap = f64::INFINITY;
    let mut iterations = 0;

    for it in 0..opts.max_iter {
        iterations = it + 1;
        // Gradient step from the extrapolated point r.
        ops.primal_from_dual(vs, &r, &mut x);
        ops.diff(&x, &mut dx);
        std::mem::swap(&mut q, &mut q_prev);
        for ((qi, ri), di) in q.iter_mut().zip(&r).zip(&dx) {
            *qi = (ri + step * di).clamp(-weight, weight);
        }
        ops.primal_from_dual(vs, &q, &mut x);
        ops.diff(&x, &mut dx);
        gap = dx
            .iter()
            .zip(&q)
            .map(|(d, qi)| weight * d.abs() - qi * d)
            .sum::<f64>();
        if gap <= opts.gap_tol {
            break;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        for ((ri, qi), qp) in r.iter_mut().zip(&q).zip(&q_prev) {
            *ri = qi + momentum * (qi - qp);
        }
        t = t_next;
    }
    dual.copy_from_slice(&q);
    let image = Image::from_vec(w, h, x)?.with_extent(v.extent())?;
    Ok(ProxTvResult {
        image,
        iterations,
        gap,
    })
}

/// `1/2 ||x - v||^2 + weight * TV(x)`.
pub fn prox_tv_objective(x: &Image, v: &Image, weight: f64) -> f64 {
    let fit: f64 = x
        .as_slice()
        .iter()
        .zip(v.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    0.5 * fit + weight * tv_unit(x.as_slice(), x.width(), x.height())
}

/// Forward differences on the edge list: all horizontal edges (row-major),
/// then all vertical edges.
struct EdgeOps {
    w: usize,
    h: usize,
}

impl EdgeOps {
    fn num_horizontal(&self) -> usize {
        (self.w - 1) * self.h
    }

    fn num_edges(&self) -> usize {
        self.num_horizontal() + self.w * (self.h - 1)
    }

    fn diff(&self, x: &[f64], out: &mut [f64]) {
        let (w, h) = (self.w, self.h);
        let mut e = 0;
        for r in 0..h {
            for c in 0..w - 1 {
                out[e] = x[r * w + c + 1] - x[r * w + c];
                e += 1;
            }
        }
        for r in 0..h - 1 {
            for c in 0..w {
                out[e] = x[(r + 1) * w + c] - x[r * w + c];
                e += 1;
            }
        }
    }

    /// `x = v - D^T q`.
    fn primal_from_dual(&self, v: &[f64], q: &[f64], x: &mut [f64]) {
        let (w, h) = (self.w, self.h);
        x.copy_from_slice(v);
        let mut e = 0;
        for r in 0..h {
            for c in 0..w - 1 {
                x[r * w + c + 1] -= q[e];
                x[r * w + c] += q[e];
                e += 1;
            }
        }
        for r in 0..h - 1 {
            for c in 0..w {
                x[(r + 1) * w + c] -= q[e];
                x[r * w + c] += q[e];
                e += 1;
            }
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::arg(format!("prior alpha must be positive, got {alpha}")))
    }
}

/// Draw from `pi_+(x) exp(-||x||^2 / (2 alpha^2))`: i.i.d. half-normal pixels.
pub fn sample_truncated_gaussian(alpha: f64, width: usize, height: usize, seed: u64) -> Result<Image> {
    check_alpha(alpha)?;
    let mut rng = rng::stream(seed, streams::PRIOR_SAMPLE);
    let data = (0..width * height)
        .map(|_| {
            // |z| is zero with probability zero but guard anyway: the
            // support is strictly positive.
            loop {
                let z: f64 = StandardNormal.sample(&mut rng);
                if z != 0.0 {
                    break alpha * z.abs();
                }
            }
        })
        .collect();
    Image::from_vec(width, height, data)
}

/// Draw from `alpha^n pi_+(x) exp(-alpha ||x||_1)`: i.i.d. exponential
/// pixels with rate `alpha`.
pub fn sample_l1(alpha: f64, width: usize, height: usize, seed: u64) -> Result<Image> {
    check_alpha(alpha)?;
    let mut rng = rng::stream(seed, streams::PRIOR_SAMPLE);
    let exp = Exp::new(alpha).map_err(|e| Error::arg(e.to_string()))?;
    let data = (0..width * height)
        .map(|_| loop {
            let v: f64 = exp.sample(&mut rng);
            if v > 0.0 {
                break v;
            }
        })
        .collect();
    Image::from_vec(width, height, data)
}

/// Random-walk Metropolis chain targeting `exp(-alpha TV(x))` restricted to
/// `[0, 1]^n`. One sweep proposes a uniform move of half-width `step` at
/// every pixel in raster order; proposals leaving `[0, 1]` are rejected.
#[derive(Debug, Clone)]
pub struct TvChain {
    alpha: f64,
    step: f64,
    image: Image,
    rng: Rng,
    proposed: u64,
    accepted: u64,
}

impl TvChain {
    pub const DEFAULT_STEP: f64 = 0.5;

    pub fn new(alpha: f64, width: usize, height: usize, seed: u64) -> Result<Self> {
        check_alpha(alpha)?;
        let mut rng = rng::stream(seed, streams::PRIOR_SAMPLE);
        let data = (0..width * height).map(|_| rng.random::<f64>()).collect();
        Ok(Self {
            alpha,
            step: Self::DEFAULT_STEP,
            image: Image::from_vec(width, height, data)?,
            rng,
            proposed: 0,
            accepted: 0,
        })
    }

    pub fn sweep(&mut self) {
        let (w, h) = (self.image.width(), self.image.height());
        let x = self.image.as_mut_slice();
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                let old = x[i];
                let new = old + self.step * (2.0 * self.rng.random::<f64>() - 1.0);
                let u: f64 = self.rng.random();
                self.proposed += 1;
                if !(0.0..=1.0).contains(&new) {
                    continue;
                }
                let mut delta = 0.0;
                let mut nb = |j: usize| delta += (new - x[j]).abs() - (old - x[j]).abs();
                if c > 0 {
                    nb(i - 1);
                }
                if c + 1 < w {
                    nb(i + 1);
                }
                if r > 0 {
                    nb(i - w);
                }
                if r + 1 < h {
                    nb(i + w);
                }
                if u < (-self.alpha * delta).exp() {
                    x[i] = new;
                    self.accepted += 1;
                }
            }
        }
    }

    pub fn image(&self) -> &Image {
        &self.image
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct TvSample {
    pub image: Image,
    pub acceptance_rate: f64,
}

/// Final state of a [`TvChain`] after `sweeps` sweeps.
pub fn sample_tv_prior(alpha: f64, width: usize, height: usize, seed: u64, sweeps: usize) -> Result<TvSample> {
    if sweeps == 0 {
        return Err(Error::arg("TV prior sampling needs at least one sweep"));
    }
    let mut chain = TvChain::new(alpha, width, height, seed)?;
    for _ in 0..sweeps {
        chain.sweep();
    }
    Ok(TvSample {
        acceptance_rate: chain.acceptance_rate(),
        image: chain.image,
    })
}
