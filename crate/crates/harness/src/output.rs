//! On-disk layout of an experiment directory:
//!
//! ```text
//! config.toml              copy of the experiment config
//! truth.grid  truth.png
//! clean.grid  noisy.grid   sinograms (angles x detectors)
//! simulation.toml          count scale and realised SNR
//! <method>/summary.csv
//! <method>/seed-<s>/{final,best}.{grid,png}  trace.csv  params.ckpt
//! sweep/sweep.csv  sweep/mean_trace.csv  sweep/n<N>/seed-<s>/trace.csv
//! prior/<panel>.{grid,png}  prior/montage.png
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ctrecon::io::{read_image, read_sinogram, write_checkpoint, write_image, write_png, write_sinogram, write_trace_csv};
use ctrecon::Image;
use serde::Serialize;

use crate::config::{ExperimentConfig, Method};
use crate::error::{HarnessError, Result};
use crate::experiment::{sweep_label, sweep_means, Instance, SeedRun, Simulation, SimulationReport, SummaryRow, Sweep};

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn write_image_pair(dir: &Path, stem: &str, image: &Image) -> Result<()> {
    write_image(&dir.join(format!("{stem}.grid")), image)?;
    write_png(&dir.join(format!("{stem}.png")), image, Some((0.0, 1.0)))?;
    Ok(())
}

pub fn write_simulation(dir: &Path, config: &ExperimentConfig, sim: &Simulation) -> Result<()> {
    ensure_dir(dir)?;
    write_text(&dir.join("config.toml"), &config.to_toml()?)?;
    write_image_pair(dir, "truth", &sim.truth)?;
    write_sinogram(&dir.join("clean.grid"), &sim.clean)?;
    write_sinogram(&dir.join("noisy.grid"), &sim.noisy)?;
    let report = toml::to_string(&sim.report).map_err(|e| HarnessError::config(e.to_string()))?;
    write_text(&dir.join("simulation.toml"), &report)
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(HarnessError::MissingInput(path))
    }
}

/// Reads the simulated data back for reconstruction.
pub fn load_instance(dir: &Path, config: &ExperimentConfig) -> Result<Instance> {
    let truth = read_image(&require(dir.join("truth.grid"))?)?;
    let y = read_sinogram(&require(dir.join("noisy.grid"))?)?;
    let report_path = require(dir.join("simulation.toml"))?;
    let text = fs::read_to_string(&report_path).map_err(|e| HarnessError::io(&report_path, e))?;
    let report: SimulationReport = toml::from_str(&text).map_err(|source| HarnessError::Parse {
        path: report_path,
        source,
    })?;
    if truth.width() != config.phantom.size() {
        return Err(HarnessError::config(format!(
            "stored truth is {}x{}, config asks for size {}; re-run simulate",
            truth.width(),
            truth.height(),
            config.phantom.size()
        )));
    }
    Instance::new(config, truth, y, report.scale)
}

pub fn seed_dir(dir: &Path, method: Method, seed: u64) -> PathBuf {
    dir.join(method.name()).join(format!("seed-{seed}"))
}

pub fn write_seed_run(dir: &Path, run: &SeedRun) -> Result<()> {
    ensure_dir(dir)?;
    write_image_pair(dir, "final", &run.final_image)?;
    write_image_pair(dir, "best", &run.best_image)?;
    if let Some(trace) = &run.trace {
        write_trace_csv(&dir.join("trace.csv"), trace)?;
    }
    if let Some(params) = &run.params {
        write_checkpoint(&dir.join("params.ckpt"), params)?;
    }
    Ok(())
}

pub fn write_reconstruction(dir: &Path, method: Method, runs: &[SeedRun]) -> Result<()> {
    for run in runs {
        write_seed_run(&seed_dir(dir, method, run.seed), run)?;
    }
    let rows: Vec<SummaryRow> = runs.iter().map(|r| r.summary.clone()).collect();
    write_csv(&dir.join(method.name()).join("summary.csv"), &rows)
}

pub fn write_sweep(dir: &Path, sweep: &Sweep) -> Result<()> {
    let root = dir.join("sweep");
    for (n, run) in &sweep.runs {
        write_seed_run(&root.join(format!("n{n}")).join(format!("seed-{}", run.seed)), run)?;
    }
    write_csv(&root.join("sweep.csv"), &sweep.rows)?;
    write_csv(&root.join("mean_trace.csv"), &sweep.mean_traces)
}

pub fn write_prior_samples(dir: &Path, panels: &[(&str, Image)], montage: &Image) -> Result<()> {
    let root = dir.join("prior");
    ensure_dir(&root)?;
    for (name, img) in panels {
        write_image(&root.join(format!("{name}.grid")), img)?;
        write_png(&root.join(format!("{name}.png")), img, None)?;
    }
    write_png(&root.join("montage.png"), montage, Some((0.0, 1.0)))?;
    Ok(())
}

/// Plain-text table with "final (best)" cells.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<11} {:<12} {:>5}  {:>17}  {:>17}  {:>12}  {:>12}",
        "method", "phantom", "seed", "PSNR final (best)", "SSIM final (best)", "fidelity", "truth"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<11} {:<12} {:>5}  {:>17}  {:>17}  {:>12.4}  {:>12.4}",
            r.method,
            r.phantom,
            r.seed,
            format!("{:.2} ({:.2})", r.final_psnr, r.best_psnr),
            format!("{:.3} ({:.3})", r.final_ssim, r.best_ssim),
            r.final_fidelity,
            r.truth_fidelity
        );
    }
    s
}

pub fn format_sweep(sweep: &Sweep) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>6}  {:<20}  {:>21}", "codes", "label", "mean PSNR final (best)");
    for (n, f, b) in sweep_means(&sweep.rows) {
        let _ = writeln!(s, "{:>6}  {:<20}  {:>21}", n, sweep_label(n), format!("{f:.2} ({b:.2})"));
    }
    s
}
