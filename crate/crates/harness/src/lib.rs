//! Experiment orchestration for `ctrecon`: simulate measurements, run the
//! reconstruction methods over seeds, sweep the code count and sample priors.

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;

use std::path::Path;

use ctrecon::io::read_image;
use ctrecon::metrics::{psnr, ssim, SsimSpec};

pub use config::{ExperimentConfig, GeometrySpec, Method, MethodSpec, Preset, SolverSettings};
pub use error::{HarnessError, Result};
pub use experiment::{Instance, SeedRun, Simulation, SummaryRow, Sweep, SweepRow};

pub fn cmd_simulate(config: &ExperimentConfig) -> Result<Simulation> {
    let sim = experiment::simulate(config)?;
    output::write_simulation(&config.resolved_output_dir(), config, &sim)?;
    Ok(sim)
}

pub fn cmd_reconstruct(config: &ExperimentConfig) -> Result<Vec<SummaryRow>> {
    let dir = config.resolved_output_dir();
    let instance = output::load_instance(&dir, config)?;
    let runs = experiment::reconstruct(config, &instance)?;
    output::write_reconstruction(&dir, config.method.kind, &runs)?;
    Ok(runs.into_iter().map(|r| r.summary).collect())
}

pub fn cmd_sweep_codes(config: &ExperimentConfig, code_counts: &[usize]) -> Result<Sweep> {
    let dir = config.resolved_output_dir();
    let instance = output::load_instance(&dir, config)?;
    let sweep = experiment::sweep_codes(config, &instance, code_counts)?;
    output::write_sweep(&dir, &sweep)?;
    Ok(sweep)
}

pub fn cmd_prior_sample(dir: &Path, settings: &experiment::PriorSampleSettings) -> Result<usize> {
    let panels = experiment::prior_samples(settings)?;
    let montage = experiment::montage(&panels)?;
    output::write_prior_samples(dir, &panels, &montage)?;
    Ok(panels.len())
}

/// PSNR and SSIM of `estimate` against `reference`.
pub fn cmd_metrics(estimate: &Path, reference: &Path, spec: &SsimSpec) -> Result<(f64, f64)> {
    let xhat = read_image(estimate)?;
    let x = read_image(reference)?;
    Ok((psnr(&xhat, &x)?, ssim(&xhat, &x, spec)?))
}
