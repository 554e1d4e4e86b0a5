use super::projector::LinearOperator;
use crate::error::{Error, Result};
use crate::image::{dot, Image, Sinogram};

#[derive(Debug, Clone)]
pub struct CgneResult {
    pub image: Image,
    /// `||A x_k - y||` for k = 0..=iterations.
    pub residual_norms: Vec<f64>,
    /// `||A^T (A x_k - y)||` for k = 0..=iterations.
    pub normal_residual_norms: Vec<f64>,
}

/// Conjugate gradients on `A^T A x = A^T y` from `x_0 = 0`, in the CGLS
/// arrangement (the residual `y - A x` is updated directly, never `A^T A`).
/// Stops early if the normal residual vanishes.
pub fn cgne<A: LinearOperator + ?Sized>(
    op: &A,
    y: &Sinogram,
    zero: &Image,
    iterations: usize,
) -> Result<CgneResult> {
    if iterations == 0 {
        return Err(Error::arg("cgne needs at least one iteration"));
    }
    let mut x = zero.map(|_| 0.0);
    let mut r = y.clone();
    let mut s = op.adjoint(&r)?;
    x.check_same_shape(&s)?;
    let mut p = s.clone();
    let mut gamma = s.dot(&s);
    let mut residual_norms = vec![r.norm()];
    let mut normal_residual_norms = vec![gamma.sqrt()];

    for _ in 0..iterations {
        if gamma == 0.0 {
            break;
        }
        let q = op.forward(&p)?;
        let qq = q.dot(&q);
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        axpy(alpha, p.as_slice(), x.as_mut_slice());
        axpy(-alpha, q.as_slice(), r.as_mut_slice());
        s = op.adjoint(&r)?;
        let gamma_next = dot(s.as_slice(), s.as_slice());
        let beta = gamma_next / gamma;
        for (pi, si) in p.as_mut_slice().iter_mut().zip(s.as_slice()) {
            *pi = si + beta * *pi;
        }
        gamma = gamma_next;
        residual_norms.push(r.norm());
        normal_residual_norms.push(gamma.sqrt());
    }
    Ok(CgneResult {
        image: x,
        residual_norms,
        normal_residual_norms,
    })
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
