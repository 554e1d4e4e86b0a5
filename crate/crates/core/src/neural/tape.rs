use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: usize,
        weight: usize,
        bias: usize,
        /// im2col matrix of the input, `[cin*k*k, h*w]`.
        cols: Vec<f64>,
        kernel: usize,
    },
    Upsample {
        input: usize,
        factor: usize,
    },
    LeakyRelu {
        input: usize,
        slope: f64,
    },
    Sigmoid {
        input: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    Scale {
        input: usize,
        factor: f64,
    },
    ChannelMul {
        input: usize,
        alpha: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Define-by-run tape. Ops append nodes; [`Tape::backward`] walks them in
/// reverse and accumulates gradients into every node that requires one.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient, or `None` if nothing flowed into `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[usize], what: &str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                what: what.to_string(),
                iteration: 0,
            });
        }
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Same-padded, stride-1 convolution. `weight` is `[cout, cin, k, k]`
    /// with odd `k`, `bias` is `[cout]`.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (cin, h, w) = self.value(input).chw()?;
        let wshape = self.value(weight).shape().to_vec();
        let [cout, wcin, k, k2] = wshape[..] else {
            return Err(Error::dim(format!("conv weight must be rank 4, got {wshape:?}")));
        };
        if wcin != cin || k != k2 || k % 2 == 0 {
            return Err(Error::dim(format!(
                "conv weight {wshape:?} incompatible with {cin}-channel input"
            )));
        }
        if self.value(bias).shape() != [cout] {
            return Err(Error::dim(format!(
                "conv bias must be [{cout}], got {:?}",
                self.value(bias).shape()
            )));
        }
        let cols = im2col(self.value(input).as_slice(), cin, h, w, k);
        let kk = cin * k * k;
        let hw = h * w;
        let mut out = vec![0.0; cout * hw];
        let bvals = self.value(bias).as_slice();
        for (co, row) in out.chunks_mut(hw).enumerate() {
            row.fill(bvals[co]);
        }
        gemm(
            cout,
            kk,
            hw,
            self.value(weight).as_slice(),
            (kk as isize, 1),
            &cols,
            (hw as isize, 1),
            &mut out,
            1.0,
        );
        let value = Tensor::from_vec(&[cout, h, w], out)?;
        self.push(
            value,
            Op::Conv2d {
                input: input.0,
                weight: weight.0,
                bias: bias.0,
                cols,
                kernel: k,
            },
            &[input.0, weight.0, bias.0],
            "conv2d",
        )
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample_nearest(&mut self, input: Var, factor: usize) -> Result<Var> {
        if factor == 0 {
            return Err(Error::arg("upsample factor must be >= 1"));
        }
        let (c, h, w) = self.value(input).chw()?;
        let (oh, ow) = (h * factor, w * factor);
        let src = self.value(input).as_slice();
        let mut out = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                let srow = &src[(ch * h + y / factor) * w..][..w];
                let drow = &mut out[(ch * oh + y) * ow..][..ow];
                for (x, d) in drow.iter_mut().enumerate() {
                    *d = srow[x / factor];
                }
            }
        }
        let value = Tensor::from_vec(&[c, oh, ow], out)?;
        self.push(value, Op::Upsample { input: input.0, factor }, &[input.0], "upsample")
    }

    pub fn leaky_relu(&mut self, input: Var, slope: f64) -> Result<Var> {
        let x = self.value(input);
        let data = x.as_slice().iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect();
        let value = Tensor::from_vec(x.shape(), data)?;
        self.push(value, Op::LeakyRelu { input: input.0, slope }, &[input.0], "leaky_relu")
    }

    pub fn sigmoid(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let data = x.as_slice().iter().map(|&v| sigmoid(v)).collect();
        let value = Tensor::from_vec(x.shape(), data)?;
        self.push(value, Op::Sigmoid { input: input.0 }, &[input.0], "sigmoid")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::dim(format!("add: {:?} vs {:?}", x.shape(), y.shape())));
        }
        let data = x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| p + q).collect();
        let value = Tensor::from_vec(x.shape(), data)?;
        self.push(value, Op::Add { a: a.0, b: b.0 }, &[a.0, b.0], "add")
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Result<Var> {
        let x = self.value(input);
        let data = x.as_slice().iter().map(|v| v * factor).collect();
        let value = Tensor::from_vec(x.shape(), data)?;
        self.push(value, Op::Scale { input: input.0, factor }, &[input.0], "scale")
    }

    /// `out[c, i, j] = input[c, i, j] * alpha[c]`.
    pub fn channel_mul(&mut self, input: Var, alpha: Var) -> Result<Var> {
        let (c, h, w) = self.value(input).chw()?;
        if self.value(alpha).shape() != [c] {
            return Err(Error::dim(format!(
                "channel weights {:?} for a {c}-channel tensor",
                self.value(alpha).shape()
            )));
        }
        let a = self.value(alpha).as_slice();
        let mut data = self.value(input).as_slice().to_vec();
        for (plane, &ac) in data.chunks_mut(h * w).zip(a) {
            plane.iter_mut().for_each(|v| *v *= ac);
        }
        let value = Tensor::from_vec(&[c, h, w], data)?;
        self.push(
            value,
            Op::ChannelMul {
                input: input.0,
                alpha: alpha.0,
            },
            &[input.0, alpha.0],
            "channel_mul",
        )
    }

    /// Backpropagates `upstream` (the gradient of a scalar loss with respect
    /// to `output`) through every recorded op. Gradients accumulate, so call
    /// on a fresh tape or after [`Tape::zero_grad`].
    pub fn backward(&mut self, output: Var, upstream: &[f64]) -> Result<()> {
        if upstream.len() != self.value(output).len() {
            return Err(Error::dim(format!(
                "upstream gradient has {} values, output has {}",
                upstream.len(),
                self.value(output).len()
            )));
        }
        if upstream.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                what: "upstream gradient".into(),
                iteration: 0,
            });
        }
        accumulate(&mut self.nodes[output.0], upstream);

        for idx in (0..=output.0).rev() {
            let Some(g) = self.nodes[idx].grad.take() else {
                continue;
            };
            if !self.nodes[idx].requires_grad {
                self.nodes[idx].grad = Some(g);
                continue;
            }
            self.propagate(idx, &g);
            self.nodes[idx].grad = Some(g);
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn needs(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    fn propagate(&mut self, idx: usize, g: &[f64]) {
        let op = std::mem::replace(&mut self.nodes[idx].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                cols,
                kernel,
            } => {
                let (input, weight, bias, k) = (*input, *weight, *bias, *kernel);
                let (cin, h, w) = self.nodes[input].value.chw().expect("checked in forward");
                let cout = self.nodes[idx].value.shape()[0];
                let (kk, hw) = (cin * k * k, h * w);
                if self.needs(weight) {
                    // dW = dOut * cols^T
                    let mut dw = vec![0.0; cout * kk];
                    gemm(cout, hw, kk, g, (hw as isize, 1), cols, (1, hw as isize), &mut dw, 0.0);
                    accumulate(&mut self.nodes[weight], &dw);
                }
                if self.needs(bias) {
                    let db: Vec<f64> = g.chunks(hw).map(|r| r.iter().sum()).collect();
                    accumulate(&mut self.nodes[bias], &db);
                }
                if self.needs(input) {
                    // dcols = W^T * dOut
                    let mut dcols = vec![0.0; kk * hw];
                    gemm(
                        kk,
                        cout,
                        hw,
                        self.nodes[weight].value.as_slice(),
                        (1, kk as isize),
                        g,
                        (hw as isize, 1),
                        &mut dcols,
                        0.0,
                    );
                    let dx = col2im(&dcols, cin, h, w, k);
                    accumulate(&mut self.nodes[input], &dx);
                }
            }
            Op::Upsample { input, factor } => {
                let (input, f) = (*input, *factor);
                if self.needs(input) {
                    let (c, h, w) = self.nodes[input].value.chw().expect("checked in forward");
                    let (oh, ow) = (h * f, w * f);
                    let mut dx = vec![0.0; c * h * w];
                    for ch in 0..c {
                        for y in 0..oh {
                            let grow = &g[(ch * oh + y) * ow..][..ow];
                            let drow = &mut dx[(ch * h + y / f) * w..][..w];
                            for (x, gv) in grow.iter().enumerate() {
                                drow[x / f] += gv;
                            }
                        }
                    }
                    accumulate(&mut self.nodes[input], &dx);
                }
            }
            Op::LeakyRelu { input, slope } => {
                let (input, slope) = (*input, *slope);
                if self.needs(input) {
                    let dx: Vec<f64> = self.nodes[input]
                        .value
                        .as_slice()
                        .iter()
                        .zip(g)
                        .map(|(&x, &gv)| if x > 0.0 { gv } else { slope * gv })
                        .collect();
                    accumulate(&mut self.nodes[input], &dx);
                }
            }
            Op::Sigmoid { input } => {
                let input = *input;
                if self.needs(input) {
                    // s(x) s(-x) keeps a usable derivative where 1 - s(x)
                    // would round to zero.
                    let dx: Vec<f64> = self.nodes[input]
                        .value
                        .as_slice()
                        .iter()
                        .zip(g)
                        .map(|(&x, &gv)| gv * sigmoid(x) * sigmoid(-x))
                        .collect();
                    accumulate(&mut self.nodes[input], &dx);
                }
            }
            Op::Add { a, b } => {
                let (a, b) = (*a, *b);
                if self.needs(a) {
                    accumulate(&mut self.nodes[a], g);
                }
                if self.needs(b) {
                    accumulate(&mut self.nodes[b], g);
                }
            }
            Op::Scale { input, factor } => {
                let (input, factor) = (*input, *factor);
                if self.needs(input) {
                    let dx: Vec<f64> = g.iter().map(|v| v * factor).collect();
                    accumulate(&mut self.nodes[input], &dx);
                }
            }
            Op::ChannelMul { input, alpha } => {
                let (input, alpha) = (*input, *alpha);
                let (_, h, w) = self.nodes[input].value.chw().expect("checked in forward");
                let hw = h * w;
                if self.needs(alpha) {
                    let da: Vec<f64> = self.nodes[input]
                        .value
                        .as_slice()
                        .chunks(hw)
                        .zip(g.chunks(hw))
                        .map(|(x, gv)| x.iter().zip(gv).map(|(p, q)| p * q).sum())
                        .collect();
                    accumulate(&mut self.nodes[alpha], &da);
                }
                if self.needs(input) {
                    let a = self.nodes[alpha].value.as_slice();
                    let dx: Vec<f64> = g
                        .chunks(hw)
                        .zip(a)
                        .flat_map(|(gv, &ac)| gv.iter().map(move |v| v * ac))
                        .collect();
                    accumulate(&mut self.nodes[input], &dx);
                }
            }
        }
        self.nodes[idx].op = op;
    }
}

fn accumulate(node: &mut Node, g: &[f64]) {
    match &mut node.grad {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        None => node.grad = Some(g.to_vec()),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `c = a * b + beta * c` with `a: m x k`, `b: k x n`, `c: m x n` (row-major
/// `c`); `a` and `b` strides are `(row, col)`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    c: &mut [f64],
    beta: f64,
) {
    debug_assert_eq!(c.len(), m * n);
    // SAFETY: slice lengths cover the strided extents given by the callers
    // (each call site passes the dense layout of the matrix it owns).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(x: &[f64], c: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let p = k / 2;
    let hw = h * w;
    let mut cols = vec![0.0; c * k * k * hw];
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ch * k + ky) * k + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - p as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &x[(ch * h + sy as usize) * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    for (xo, d) in dst.iter_mut().enumerate() {
                        let sx = xo as isize + kx as isize - p as isize;
                        if sx >= 0 && sx < w as isize {
                            *d = src[sx as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], c: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let p = k / 2;
    let hw = h * w;
    let mut x = vec![0.0; c * hw];
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ch * k + ky) * k + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - p as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut x[(ch * h + sy as usize) * w..][..w];
                    let src = &row[y * w..][..w];
                    for (xo, s) in src.iter().enumerate() {
                        let sx = xo as isize + kx as isize - p as isize;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] += s;
                        }
                    }
                }
            }
        }
    }
    x
}
