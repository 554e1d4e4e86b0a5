use serde::{Deserialize, Serialize};

use super::adam::{learning_rate, Adam, AdamHyper};
use crate::error::{Error, Result};
use crate::image::{Image, Sinogram};
use crate::metrics::{psnr, ssim, SsimSpec};
use crate::neural::{ForwardPass, Generator, GeneratorConfig, GeneratorParams, LatentCodes};
use crate::noise::Fidelity;
use crate::priors::{prox_tv_warm, tv, ProxTvOptions, TvSpec};
use crate::tomography::{LinearOperator, Projector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub rho: f64,
    pub lambda: f64,
    pub num_codes: usize,
    pub iterations: usize,
    pub base_lr: f64,
    pub lr_halving_period: usize,
    pub fidelity: Fidelity,
    pub seed: u64,
    /// Trace cadence: iterations `k, 2k, ...` and the last one are recorded.
    pub record_every: usize,
    /// Keep the channel weights at their initial values.
    pub freeze_alphas: bool,
    /// Generator architecture; `None` picks the default for the image size.
    pub generator: Option<GeneratorConfig>,
    pub prox: ProxTvOptions,
    pub ssim: SsimSpec,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            lambda: 4.0,
            num_codes: 20,
            iterations: 5000,
            base_lr: 0.02,
            lr_halving_period: 1000,
            fidelity: Fidelity::L2,
            seed: 0,
            record_every: 25,
            freeze_alphas: false,
            generator: None,
            prox: ProxTvOptions::default(),
            ssim: SsimSpec::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::arg(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::arg(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.num_codes == 0 || self.iterations == 0 || self.record_every == 0 {
            return Err(Error::arg("code count, iterations and record cadence must be >= 1"));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::arg(format!("learning rate must be positive, got {}", self.base_lr)));
        }
        if let Some(g) = &self.generator {
            g.validate()?;
        }
        self.ssim.validate()
    }

    pub fn generator_config(&self, width: usize, height: usize) -> Result<GeneratorConfig> {
        let config = match &self.generator {
            Some(g) => g.clone(),
            None if width == height => GeneratorConfig::for_image(width)?,
            None => {
                return Err(Error::arg(format!(
                    "default generator needs a square image, got {width}x{height}"
                )))
            }
        };
        if config.output_dims() != (width, height) {
            return Err(Error::dim(format!(
                "generator produces {:?}, image is {width}x{height}",
                config.output_dims()
            )));
        }
        Ok(config)
    }
}

/// Measurements, forward model and (optionally) the ground truth used for
/// trace metrics.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub op: &'a Projector,
    pub y: &'a Sinogram,
    pub truth: Option<&'a Image>,
}

#[derive(Debug, Clone)]
pub struct AdmmState {
    pub x: Image,
    pub u: Image,
    pub params: GeneratorParams,
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub fidelity: f64,
    pub lagrangian: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: usize,
    pub image: Image,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub last: Snapshot,
    /// Highest-PSNR recorded iterate; equals `last` without ground truth.
    pub best: Snapshot,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub image: Image,
    pub trace: RunTrace,
    pub state: AdmmState,
}

/// Per-iteration view handed to observers. `u` is `None` for plain DIP.
#[derive(Debug, Clone, Copy)]
pub struct Iterate<'a> {
    pub t: usize,
    pub x: &'a Image,
    pub u: Option<&'a Image>,
    pub generated: &'a Image,
}

/// `F(AG, y) + lambda TV(x) + rho/2 ||x - G + u||^2 - rho/2 ||u||^2` where
/// `generated` is the generator output `G`.
#[allow(clippy::too_many_arguments)]
pub fn augmented_lagrangian(
    x: &Image,
    generated: &Image,
    u: &Image,
    y: &Sinogram,
    op: &dyn LinearOperator,
    fidelity: Fidelity,
    lambda: f64,
    rho: f64,
) -> Result<f64> {
    x.check_same_shape(generated)?;
    x.check_same_shape(u)?;
    let f = fidelity.value(&op.forward(generated)?, y)?;
    let coupling: f64 = x
        .as_slice()
        .iter()
        .zip(generated.as_slice())
        .zip(u.as_slice())
        .map(|((xi, gi), ui)| (xi - gi + ui).powi(2))
        .sum();
    let value = f + lambda * tv(x, &TvSpec::default()) + 0.5 * rho * coupling - 0.5 * rho * u.dot(u);
    if !value.is_finite() {
        return Err(Error::NonFinite {
            what: "augmented Lagrangian".into(),
            iteration: 0,
        });
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    Dip,
    PnpDip,
    Mcdip,
}

/// Trains the generator on the fidelity alone. `num_codes` and `lambda` are
/// ignored.
pub fn run_dip(problem: &Problem, config: &SolverConfig) -> Result<RunOutput> {
    run(problem, config, Method::Dip, &mut |_| {})
}

pub fn run_dip_observed(
    problem: &Problem,
    config: &SolverConfig,
    observer: &mut dyn FnMut(&Iterate),
) -> Result<RunOutput> {
    run(problem, config, Method::Dip, observer)
}

/// Single-code ADMM with a TV prox step. `num_codes` is ignored.
pub fn run_pnp_dip(problem: &Problem, config: &SolverConfig) -> Result<RunOutput> {
    run(problem, config, Method::PnpDip, &mut |_| {})
}

pub fn run_pnp_dip_observed(
    problem: &Problem,
    config: &SolverConfig,
    observer: &mut dyn FnMut(&Iterate),
) -> Result<RunOutput> {
    run(problem, config, Method::PnpDip, observer)
}

/// Multi-code ADMM: features of `num_codes` latent codes are weighted per
/// channel and summed at the split layer.
pub fn run_mcdip_admm(problem: &Problem, config: &SolverConfig) -> Result<RunOutput> {
    run(problem, config, Method::Mcdip, &mut |_| {})
}

pub fn run_mcdip_admm_observed(
    problem: &Problem,
    config: &SolverConfig,
    observer: &mut dyn FnMut(&Iterate),
) -> Result<RunOutput> {
    run(problem, config, Method::Mcdip, observer)
}

fn at_iteration(t: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { what, .. } => Error::NonFinite { what, iteration: t },
        other => other,
    }
}

fn run(
    problem: &Problem,
    config: &SolverConfig,
    method: Method,
    observer: &mut dyn FnMut(&Iterate),
) -> Result<RunOutput> {
    config.validate()?;
    let op = problem.op;
    let (width, height) = op.image_dims();
    let extent = op.extent();
    if let Some(truth) = problem.truth {
        if (truth.width(), truth.height()) != (width, height) {
            return Err(Error::dim("ground truth does not match the projector grid"));
        }
    }
    op.forward(&op.zero_image())?.check_same_shape(problem.y)?;

    let generator = Generator::new(config.generator_config(width, height)?)?;
    let num_codes = if method == Method::Mcdip { config.num_codes } else { 1 };
    let codes = LatentCodes::sample(generator.config(), num_codes, config.seed)?;
    let mut params = GeneratorParams::init(generator.config(), num_codes, config.seed)?;
    let freeze_alphas = method != Method::Mcdip || config.freeze_alphas;
    let mut adam = Adam::new(&params, AdamHyper::default());

    let forward = |params: &GeneratorParams| -> Result<ForwardPass> {
        match method {
            Method::Mcdip => generator.forward_multi(&codes, params, !freeze_alphas),
            _ => generator.forward_single(&codes.codes()[0], params),
        }
    };

    let mut pass = forward(&params).map_err(at_iteration(0))?;
    let mut g = pass.image(extent)?;
    let mut x = g.clone();
    let mut u = op.zero_image();
    let admm = method != Method::Dip;
    let weight = config.lambda / config.rho;
    let rho = config.rho;
    let mut tv_dual = Vec::new();

    let mut records = Vec::with_capacity(config.iterations.div_ceil(config.record_every));
    let mut best: Option<Snapshot> = None;
    let mut last: Option<Snapshot> = None;

    for t in 1..=config.iterations {
        let fail = at_iteration(t);
        // x-step on G_{t-1} - u_{t-1}; the gradient below uses the same G.
        let mut upstream = vec![0.0; g.len()];
        if admm {
            let v = g.zip_map(&u, |a, b| a - b);
            x = prox_tv_warm(&v, weight, &config.prox, &mut tv_dual)?.image;
            for (o, ((gi, xi), ui)) in upstream
                .iter_mut()
                .zip(g.as_slice().iter().zip(x.as_slice()).zip(u.as_slice()))
            {
                *o = rho * (gi - xi - ui);
            }
        }
        let ag = op.forward(&g)?;
        let fe = config.fidelity.eval(&ag, problem.y)?;
        if !fe.value.is_finite() {
            return Err(fail(Error::NonFinite {
                what: "fidelity".into(),
                iteration: t,
            }));
        }
        let back = op.adjoint(&fe.grad)?;
        for (o, b) in upstream.iter_mut().zip(back.as_slice()) {
            *o += b;
        }
        let grads = pass.backward(&upstream).map_err(&fail)?;
        if !grads.slices().flatten().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                what: "parameter gradient".into(),
                iteration: t,
            });
        }
        let lr = learning_rate(config.base_lr, config.lr_halving_period, t);
        adam.step(&mut params, &grads, t, lr, freeze_alphas);

        pass = forward(&params).map_err(&fail)?;
        g = pass.image(extent).map_err(|_| {
            fail(Error::NonFinite {
                what: "generator output".into(),
                iteration: t,
            })
        })?;
        if admm {
            for (ui, (xi, gi)) in u
                .as_mut_slice()
                .iter_mut()
                .zip(x.as_slice().iter().zip(g.as_slice()))
            {
                *ui += xi - gi;
            }
        } else {
            x = g.clone();
        }

        observer(&Iterate {
            t,
            x: &x,
            u: admm.then_some(&u),
            generated: &g,
        });

        if t % config.record_every == 0 || t == config.iterations {
            let fidelity = config.fidelity.value(&op.forward(&g)?, problem.y)?;
            let lagrangian = if admm {
                augmented_lagrangian(&x, &g, &u, problem.y, op, config.fidelity, config.lambda, rho)
                    .map_err(&fail)?
            } else {
                fidelity
            };
            if !fidelity.is_finite() {
                return Err(fail(Error::NonFinite {
                    what: "fidelity".into(),
                    iteration: t,
                }));
            }
            let (p, s) = match problem.truth {
                Some(truth) => (Some(psnr(&x, truth)?), Some(ssim(&x, truth, &config.ssim)?)),
                None => (None, None),
            };
            records.push(TraceRecord {
                t,
                psnr: p,
                ssim: s,
                fidelity,
                lagrangian,
            });
            let snap = Snapshot {
                t,
                image: x.clone(),
                psnr: p,
                ssim: s,
            };
            let better = match (&best, p) {
                (None, _) => true,
                (Some(b), Some(p)) => p > b.psnr.unwrap_or(f64::NEG_INFINITY),
                (Some(_), None) => false,
            };
            if better {
                best = Some(snap.clone());
            }
            last = Some(snap);
        }
    }

    let last = last.expect("the final iteration is always recorded");
    let best = if problem.truth.is_some() {
        best.expect("at least one record")
    } else {
        last.clone()
    };
    Ok(RunOutput {
        image: x.clone(),
        trace: RunTrace { records, last, best },
        state: AdmmState {
            x,
            u,
            params,
            t: config.iterations,
        },
    })
}
