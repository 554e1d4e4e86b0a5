//! Simulation, reconstruction and code-count sweeps, in memory. File layout
//! lives in [`crate::output`].

use ctrecon::metrics::{psnr, ssim};
use ctrecon::neural::{Generator, GeneratorConfig, GeneratorParams, LatentCodes};
use ctrecon::noise::{add_gaussian_noise, realized_snr_db, sample_poisson, NoiseSpec};
use ctrecon::priors::{sample_l1, sample_truncated_gaussian, sample_tv_prior};
use ctrecon::solvers::{run_dip, run_mcdip_admm, run_pnp_dip, Problem, SolverConfig, TraceRecord};
use ctrecon::tomography::{cgne, fbp, fbp_fan, Geometry, LinearOperator, Projector};
use ctrecon::{Image, Sinogram};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Method, EXTENT};
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub phantom: String,
    pub size: usize,
    pub num_angles: usize,
    pub num_detectors: usize,
    /// Factor applied to the line integrals before Poisson sampling; 1 for
    /// Gaussian noise.
    pub scale: f64,
    pub realized_snr_db: f64,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub truth: Image,
    pub clean: Sinogram,
    pub noisy: Sinogram,
    pub report: SimulationReport,
}

pub fn simulate(config: &ExperimentConfig) -> Result<Simulation> {
    let truth = config.phantom.render(EXTENT)?;
    let geometry = config.geometry.build(truth.width())?;
    let op = Projector::for_image(&truth, &geometry)?;
    let line_integrals = op.forward(&truth)?;
    let (clean, noisy, scale) = match config.noise {
        NoiseSpec::Gaussian { sigma, seed } => {
            let noisy = add_gaussian_noise(&line_integrals, sigma, seed)?;
            (line_integrals, noisy, 1.0)
        }
        NoiseSpec::Poisson { mean_counts, seed } => {
            let mean = line_integrals.as_slice().iter().sum::<f64>() / line_integrals.len() as f64;
            if mean <= 0.0 {
                return Err(HarnessError::config("phantom has no attenuation to count against"));
            }
            let scale = mean_counts / mean;
            let clean = line_integrals.map(|v| v * scale);
            let noisy = sample_poisson(&clean, seed)?;
            (clean, noisy, scale)
        }
    };
    let report = SimulationReport {
        phantom: config.phantom.name().to_string(),
        size: truth.width(),
        num_angles: geometry.num_angles(),
        num_detectors: geometry.num_detectors(),
        scale,
        realized_snr_db: realized_snr_db(&clean, &noisy)?,
    };
    Ok(Simulation {
        truth,
        clean,
        noisy,
        report,
    })
}

/// Forward model and data for reconstruction. `op` includes the count scale,
/// so it maps images straight to the measured sinogram.
#[derive(Debug, Clone)]
pub struct Instance {
    pub truth: Image,
    pub y: Sinogram,
    pub geometry: Geometry,
    pub op: Projector,
    pub scale: f64,
}

impl Instance {
    pub fn new(config: &ExperimentConfig, truth: Image, y: Sinogram, scale: f64) -> Result<Self> {
        let geometry = config.geometry.build(truth.width())?;
        let op = Projector::for_image(&truth, &geometry)?.scaled(scale)?;
        if y.num_angles() != geometry.num_angles() || y.num_detectors() != geometry.num_detectors() {
            return Err(HarnessError::config(format!(
                "sinogram is {}x{}, geometry expects {}x{}",
                y.num_angles(),
                y.num_detectors(),
                geometry.num_angles(),
                geometry.num_detectors()
            )));
        }
        Ok(Self {
            truth,
            y,
            geometry,
            op,
            scale,
        })
    }

    pub fn from_simulation(config: &ExperimentConfig, sim: &Simulation) -> Result<Self> {
        Self::new(config, sim.truth.clone(), sim.noisy.clone(), sim.report.scale)
    }

    pub fn problem(&self) -> Problem<'_> {
        Problem {
            op: &self.op,
            y: &self.y,
            truth: Some(&self.truth),
        }
    }
}

/// One row of the reconstruction summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub phantom: String,
    pub seed: u64,
    pub final_psnr: f64,
    pub best_psnr: f64,
    pub final_ssim: f64,
    pub best_ssim: f64,
    /// Iteration of the best recorded iterate; empty for single-shot methods.
    pub best_t: Option<usize>,
    pub final_fidelity: f64,
    /// Fidelity of the ground truth against the same measurements.
    pub truth_fidelity: f64,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub final_image: Image,
    pub best_image: Image,
    /// `None` for FBP and CGNE.
    pub trace: Option<Vec<TraceRecord>>,
    pub params: Option<GeneratorParams>,
    pub summary: SummaryRow,
}

pub fn run_method(config: &ExperimentConfig, instance: &Instance, method: Method, seed: u64) -> Result<SeedRun> {
    let solver = config.solver_config(seed)?;
    run_with(config, instance, method, &solver)
}

pub fn run_with(config: &ExperimentConfig, instance: &Instance, method: Method, solver: &SolverConfig) -> Result<SeedRun> {
    let truth = &instance.truth;
    let truth_fidelity = solver.fidelity.value(&instance.op.forward(truth)?, &instance.y)?;
    let single_shot = |image: Image| -> Result<SeedRun> {
        let p = psnr(&image, truth)?;
        let s = ssim(&image, truth, &solver.ssim)?;
        let fidelity = solver.fidelity.value(&instance.op.forward(&image)?, &instance.y)?;
        Ok(SeedRun {
            seed: solver.seed,
            final_image: image.clone(),
            best_image: image,
            trace: None,
            params: None,
            summary: SummaryRow {
                method: method.name().to_string(),
                phantom: config.phantom.name().to_string(),
                seed: solver.seed,
                final_psnr: p,
                best_psnr: p,
                final_ssim: s,
                best_ssim: s,
                best_t: None,
                final_fidelity: fidelity,
                truth_fidelity,
            },
        })
    };
    let (w, h) = (truth.width(), truth.height());
    match method {
        Method::Fbp => {
            // FBP works on line integrals, so undo the count scale.
            let y = instance.y.map(|v| v / instance.scale);
            let image = match &instance.geometry {
                Geometry::Parallel(g) => fbp(&y, g, w, h, EXTENT, config.method.filter)?,
                Geometry::Fan(g) => fbp_fan(&y, g, w, h, EXTENT, config.method.filter)?,
            };
            single_shot(image)
        }
        Method::Cgne => {
            let result = cgne(&instance.op, &instance.y, &instance.op.zero_image(), config.method.cgne_iterations)?;
            single_shot(result.image)
        }
        Method::Dip | Method::PnpDip | Method::McdipAdmm => {
            let problem = instance.problem();
            let out = match method {
                Method::Dip => run_dip(&problem, solver)?,
                Method::PnpDip => run_pnp_dip(&problem, solver)?,
                _ => run_mcdip_admm(&problem, solver)?,
            };
            let trace = out.trace;
            let last = trace.records.last().expect("a run records at least its final iteration");
            let summary = SummaryRow {
                method: method.name().to_string(),
                phantom: config.phantom.name().to_string(),
                seed: solver.seed,
                final_psnr: trace.last.psnr.unwrap_or(f64::NAN),
                best_psnr: trace.best.psnr.unwrap_or(f64::NAN),
                final_ssim: trace.last.ssim.unwrap_or(f64::NAN),
                best_ssim: trace.best.ssim.unwrap_or(f64::NAN),
                best_t: Some(trace.best.t),
                final_fidelity: last.fidelity,
                truth_fidelity,
            };
            Ok(SeedRun {
                seed: solver.seed,
                final_image: trace.last.image,
                best_image: trace.best.image,
                trace: Some(trace.records),
                params: Some(out.state.params),
                summary,
            })
        }
    }
}

/// Runs the configured method once per seed, seeds in parallel. Results come
/// back in seed-list order.
pub fn reconstruct(config: &ExperimentConfig, instance: &Instance) -> Result<Vec<SeedRun>> {
    config
        .seeds
        .par_iter()
        .map(|&seed| run_method(config, instance, config.method.kind, seed))
        .collect()
}

pub const DEFAULT_CODE_COUNTS: [usize; 5] = [1, 5, 10, 20, 30];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub num_codes: usize,
    pub label: String,
    pub seed: u64,
    pub final_psnr: f64,
    pub best_psnr: f64,
    pub final_ssim: f64,
    pub best_ssim: f64,
    pub final_fidelity: f64,
}

/// Per-code-count trace averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanTraceRow {
    pub num_codes: usize,
    pub t: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub fidelity: f64,
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub runs: Vec<(usize, SeedRun)>,
    pub rows: Vec<SweepRow>,
    pub mean_traces: Vec<MeanTraceRow>,
}

/// With one code the multi-code model is the single-code PnP-DIP loop.
pub fn sweep_label(num_codes: usize) -> &'static str {
    if num_codes == 1 {
        "pnp-dip-equivalent"
    } else {
        "mcdip-admm"
    }
}

pub fn sweep_codes(config: &ExperimentConfig, instance: &Instance, code_counts: &[usize]) -> Result<Sweep> {
    if config.method.kind != Method::McdipAdmm {
        return Err(HarnessError::config("sweep-codes needs method mcdip-admm"));
    }
    if code_counts.is_empty() || code_counts.contains(&0) {
        return Err(HarnessError::config("code counts must be non-empty and >= 1"));
    }
    let jobs: Vec<(usize, u64)> = code_counts
        .iter()
        .flat_map(|&n| config.seeds.iter().map(move |&s| (n, s)))
        .collect();
    let runs: Vec<(usize, SeedRun)> = jobs
        .par_iter()
        .map(|&(n, seed)| {
            let solver = SolverConfig {
                num_codes: n,
                ..config.solver_config(seed)?
            };
            Ok((n, run_with(config, instance, Method::McdipAdmm, &solver)?))
        })
        .collect::<Result<_>>()?;

    let rows = runs
        .iter()
        .map(|(n, run)| SweepRow {
            num_codes: *n,
            label: sweep_label(*n).to_string(),
            seed: run.seed,
            final_psnr: run.summary.final_psnr,
            best_psnr: run.summary.best_psnr,
            final_ssim: run.summary.final_ssim,
            best_ssim: run.summary.best_ssim,
            final_fidelity: run.summary.final_fidelity,
        })
        .collect();

    let mut mean_traces = Vec::new();
    for &n in code_counts {
        let traces: Vec<&Vec<TraceRecord>> = runs
            .iter()
            .filter(|(m, _)| *m == n)
            .filter_map(|(_, r)| r.trace.as_ref())
            .collect();
        let k = traces.len() as f64;
        for (i, record) in traces[0].iter().enumerate() {
            let mean = |f: &dyn Fn(&TraceRecord) -> f64| traces.iter().map(|t| f(&t[i])).sum::<f64>() / k;
            mean_traces.push(MeanTraceRow {
                num_codes: n,
                t: record.t,
                psnr: mean(&|r| r.psnr.unwrap_or(f64::NAN)),
                ssim: mean(&|r| r.ssim.unwrap_or(f64::NAN)),
                fidelity: mean(&|r| r.fidelity),
            });
        }
    }
    Ok(Sweep {
        runs,
        rows,
        mean_traces,
    })
}

/// Mean final and best PSNR per code count, in sweep order.
pub fn sweep_means(rows: &[SweepRow]) -> Vec<(usize, f64, f64)> {
    let mut out: Vec<(usize, f64, f64, usize)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|e| e.0 == r.num_codes) {
            Some(e) => {
                e.1 += r.final_psnr;
                e.2 += r.best_psnr;
                e.3 += 1;
            }
            None => out.push((r.num_codes, r.final_psnr, r.best_psnr, 1)),
        }
    }
    out.into_iter()
        .map(|(n, f, b, k)| (n, f / k as f64, b / k as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSampleSettings {
    pub size: usize,
    pub alpha: f64,
    pub seed: u64,
    pub tv_sweeps: usize,
}

impl Default for PriorSampleSettings {
    fn default() -> Self {
        Self {
            size: 64,
            alpha: 1.0,
            seed: 0,
            tv_sweeps: 500,
        }
    }
}

/// One draw each from the truncated Gaussian, l1 and TV priors and the output
/// of a randomly initialised generator.
pub fn prior_samples(settings: &PriorSampleSettings) -> Result<Vec<(&'static str, Image)>> {
    let PriorSampleSettings {
        size,
        alpha,
        seed,
        tv_sweeps,
    } = *settings;
    let gcfg = GeneratorConfig::for_image(size)?;
    let generator = Generator::new(gcfg.clone())?;
    let params = GeneratorParams::init(&gcfg, 1, seed)?;
    let codes = LatentCodes::sample(&gcfg, 1, seed)?;
    let generated = generator.forward_single(&codes.codes()[0], &params)?.image(EXTENT)?;
    Ok(vec![
        ("truncated-gaussian", sample_truncated_gaussian(alpha, size, size, seed)?),
        ("l1", sample_l1(alpha, size, size, seed)?),
        ("tv", sample_tv_prior(alpha, size, size, seed, tv_sweeps)?.image),
        ("generator", generated),
    ])
}

/// 2x2 layout with a one-pixel gap; each panel is rescaled to `[0, 1]` on its
/// own range.
pub fn montage(panels: &[(&str, Image)]) -> Result<Image> {
    if panels.len() != 4 {
        return Err(HarnessError::config("montage needs four panels"));
    }
    let (w, h) = (panels[0].1.width(), panels[0].1.height());
    let mut out = Image::filled(2 * w + 1, 2 * h + 1, 1.0);
    for (k, (_, img)) in panels.iter().enumerate() {
        if img.width() != w || img.height() != h {
            return Err(HarnessError::config("montage panels differ in size"));
        }
        let (lo, hi) = (img.min(), img.max());
        let span = if hi > lo { hi - lo } else { 1.0 };
        let (r0, c0) = ((k / 2) * (h + 1), (k % 2) * (w + 1));
        for r in 0..h {
            for c in 0..w {
                out.set(r0 + r, c0 + c, (img.get(r, c) - lo) / span);
            }
        }
    }
    Ok(out)
}
