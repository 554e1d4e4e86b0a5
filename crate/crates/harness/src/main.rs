use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ctrecon::metrics::SsimSpec;
use ctrecon_harness::config::{resolve_output, OUTPUT_ROOT_VAR};
use ctrecon_harness::experiment::{PriorSampleSettings, DEFAULT_CODE_COUNTS};
use ctrecon_harness::output::{format_summary, format_sweep};
use ctrecon_harness::{ExperimentConfig, GeometrySpec, HarnessError, Method, Preset, Result};

#[derive(Parser)]
#[command(name = "ctrecon", version, about = "CT reconstruction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an example experiment config to stdout.
    Init {
        #[arg(long, value_enum, default_value_t = GeometryKind::Parallel)]
        geometry: GeometryKind,
        #[arg(long)]
        poisson: bool,
        #[arg(long, value_enum, default_value_t = PresetArg::Desk)]
        preset: PresetArg,
    },
    /// Render the phantom and write clean and noisy sinograms.
    Simulate(RunArgs),
    /// Run the configured method for every seed.
    Reconstruct(RunArgs),
    /// Run MCDIP-ADMM over several code counts.
    SweepCodes {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated code counts.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_CODE_COUNTS)]
        code_counts: Vec<usize>,
    },
    /// Draw one sample from each image prior and the untrained generator.
    PriorSample {
        #[arg(long, default_value = "prior-samples")]
        output_dir: PathBuf,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        tv_sweeps: usize,
    },
    /// PSNR and SSIM of an estimate against a reference (grid files).
    Metrics {
        estimate: PathBuf,
        reference: PathBuf,
        #[arg(long, default_value_t = 7)]
        window: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GeometryKind {
    Parallel,
    Fan,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Reference,
    Desk,
}

/// Config file plus per-run overrides.
#[derive(Args)]
struct RunArgs {
    #[arg(short, long)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    num_codes: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    base_lr: Option<f64>,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::load(&self.config)?;
        if let Some(v) = &self.output_dir {
            c.output_dir = v.clone();
        }
        if let Some(v) = &self.seeds {
            c.seeds = v.clone();
        }
        if let Some(v) = self.method {
            c.method.kind = v;
        }
        let s = &mut c.solver;
        s.iterations = self.iterations.or(s.iterations);
        s.num_codes = self.num_codes.or(s.num_codes);
        s.lambda = self.lambda.or(s.lambda);
        s.rho = self.rho.or(s.rho);
        s.base_lr = self.base_lr.or(s.base_lr);
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Init {
            geometry,
            poisson,
            preset,
        } => {
            let geometry = match geometry {
                GeometryKind::Parallel => GeometrySpec::Parallel {
                    angles: 100,
                    detectors: None,
                },
                GeometryKind::Fan => GeometrySpec::Fan { angles: 120 },
            };
            let preset = match preset {
                PresetArg::Reference => Preset::Reference,
                PresetArg::Desk => Preset::Desk,
            };
            print!("{}", ExperimentConfig::template(geometry, poisson, preset).to_toml()?);
        }
        Command::Simulate(args) => {
            let config = args.load()?;
            let sim = ctrecon_harness::cmd_simulate(&config)?;
            println!(
                "{}: {} angles x {} detectors, realised SNR {:.2} dB -> {}",
                sim.report.phantom,
                sim.report.num_angles,
                sim.report.num_detectors,
                sim.report.realized_snr_db,
                config.resolved_output_dir().display()
            );
        }
        Command::Reconstruct(args) => {
            let config = args.load()?;
            let rows = ctrecon_harness::cmd_reconstruct(&config)?;
            print!("{}", format_summary(&rows));
        }
        Command::SweepCodes { run, code_counts } => {
            let config = run.load()?;
            let sweep = ctrecon_harness::cmd_sweep_codes(&config, &code_counts)?;
            print!("{}", format_sweep(&sweep));
        }
        Command::PriorSample {
            output_dir,
            size,
            alpha,
            seed,
            tv_sweeps,
        } => {
            let dir = resolve_output(&output_dir, std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from));
            let settings = PriorSampleSettings {
                size,
                alpha,
                seed,
                tv_sweeps,
            };
            let n = ctrecon_harness::cmd_prior_sample(&dir, &settings)?;
            println!("wrote {n} panels to {}", dir.join("prior").display());
        }
        Command::Metrics {
            estimate,
            reference,
            window,
        } => {
            let spec = SsimSpec {
                window,
                ..SsimSpec::default()
            };
            let (p, s) = ctrecon_harness::cmd_metrics(Path::new(&estimate), Path::new(&reference), &spec)?;
            println!("psnr {p:.4}");
            println!("ssim {s:.6}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &HarnessError) -> u8 {
    e.exit_code() as u8
}
