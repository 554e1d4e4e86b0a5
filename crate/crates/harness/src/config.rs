//! Experiment description: one TOML file per experiment directory.
//!
//! ```toml
//! seeds = [0, 1, 2]
//! output_dir = "runs/shepp64"
//!
//! [phantom]
//! kind = "shepp-logan"
//! size = 64
//!
//! [geometry]
//! kind = "parallel"
//! angles = 100
//!
//! [noise]
//! kind = "gaussian"
//! sigma = 0.03
//! seed = 100
//!
//! [method]
//! kind = "mcdip-admm"
//!
//! [solver]
//! num_codes = 10
//! ```
//!
//! Solver fields left out of `[solver]` take the reference hyperparameters
//! for the geometry (see [`reference_solver`]).

use std::path::{Path, PathBuf};

use ctrecon::neural::GeneratorConfig;
use ctrecon::noise::{Fidelity, NoiseSpec};
use ctrecon::phantom::PhantomSpec;
use ctrecon::priors::ProxTvOptions;
use ctrecon::solvers::SolverConfig;
use ctrecon::tomography::{FanGeometry, Geometry, ParallelGeometry, RampFilter};
use ctrecon::metrics::SsimSpec;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Physical side length of every phantom.
pub const EXTENT: f64 = 1.0;

/// Overrides the relative `output_dir` root when set.
pub const OUTPUT_ROOT_VAR: &str = "CTRECON_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub phantom: PhantomSpec,
    pub geometry: GeometrySpec,
    pub noise: NoiseSpec,
    pub method: MethodSpec,
    #[serde(default)]
    pub solver: SolverSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeometrySpec {
    /// Equispaced angles over `[0, pi)`; the detector covers the image diagonal
    /// at one bin per pixel unless `detectors` is given.
    Parallel {
        angles: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detectors: Option<usize>,
    },
    /// Equispaced source angles over `[0, 2 pi)` with the default flat-detector
    /// layout for the image size.
    Fan { angles: usize },
}

impl GeometrySpec {
    pub fn build(&self, size: usize) -> Result<Geometry> {
        let geometry = match *self {
            GeometrySpec::Parallel { angles, detectors: None } => {
                Geometry::Parallel(ParallelGeometry::for_image(angles, size, size, EXTENT)?)
            }
            GeometrySpec::Parallel {
                angles,
                detectors: Some(n),
            } => Geometry::Parallel(ParallelGeometry::new(angles, n, EXTENT / size as f64)?),
            GeometrySpec::Fan { angles } => Geometry::Fan(FanGeometry::for_image(angles, size, size, EXTENT)?),
        };
        Ok(geometry)
    }

    pub fn is_fan(&self) -> bool {
        matches!(self, GeometrySpec::Fan { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Fbp,
    Cgne,
    Dip,
    PnpDip,
    McdipAdmm,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Fbp => "fbp",
            Method::Cgne => "cgne",
            Method::Dip => "dip",
            Method::PnpDip => "pnp-dip",
            Method::McdipAdmm => "mcdip-admm",
        }
    }

    /// Single-shot baselines produce no trace.
    pub fn is_iterative_prior(&self) -> bool {
        matches!(self, Method::Dip | Method::PnpDip | Method::McdipAdmm)
    }
}

impl std::str::FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fbp" => Ok(Method::Fbp),
            "cgne" => Ok(Method::Cgne),
            "dip" => Ok(Method::Dip),
            "pnp-dip" => Ok(Method::PnpDip),
            "mcdip-admm" => Ok(Method::McdipAdmm),
            other => Err(HarnessError::config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub kind: Method,
    /// FBP filter.
    #[serde(default)]
    pub filter: RampFilter,
    #[serde(default = "default_cgne_iterations")]
    pub cgne_iterations: usize,
}

fn default_cgne_iterations() -> usize {
    30
}

impl MethodSpec {
    pub fn new(kind: Method) -> Self {
        Self {
            kind,
            filter: RampFilter::default(),
            cgne_iterations: default_cgne_iterations(),
        }
    }
}

/// `[solver]` section: every field optional. The seed is not here; runs take
/// it from the top-level `seeds` list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_codes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_lr: Option<f64>,
    /// 0 disables halving.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_halving_period: Option<usize>,
    /// Defaults to the likelihood matching the noise model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<Fidelity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freeze_alphas: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prox: Option<ProxTvOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ssim: Option<SsimSpec>,
}

/// Reference hyperparameters: rho = 1 for both geometries, lambda = 4 and
/// 20 codes for parallel beam, lambda = 8 and 15 codes for fan beam; Adam
/// at 0.02 halved every 1000 iterations.
pub fn reference_solver(geometry: &GeometrySpec) -> SolverConfig {
    let (lambda, num_codes) = if geometry.is_fan() { (8.0, 15) } else { (4.0, 20) };
    SolverConfig {
        rho: 1.0,
        lambda,
        num_codes,
        ..SolverConfig::default()
    }
}

/// Hyperparameters that work for 64x64 phantoms with the default generator.
/// The reference values drive the sigmoid output into saturation at this
/// size. The Poisson loss is not scaled by the noise variance the way the
/// Gaussian one is, so its penalty weights are larger by about `1/sigma^2`.
pub fn desk_solver(fidelity: Fidelity) -> SolverSettings {
    let (rho, lambda) = match fidelity {
        Fidelity::L2 => (0.02, 0.0005),
        Fidelity::Poisson => (22.0, 0.55),
    };
    SolverSettings {
        rho: Some(rho),
        lambda: Some(lambda),
        num_codes: Some(10),
        iterations: Some(5000),
        base_lr: Some(0.002),
        lr_halving_period: Some(0),
        fidelity: Some(fidelity),
        ..SolverSettings::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Reference,
    Desk,
}

impl ExperimentConfig {
    /// A complete example config for `ctrecon init`.
    pub fn template(geometry: GeometrySpec, poisson: bool, preset: Preset) -> Self {
        let noise = if poisson {
            NoiseSpec::Poisson {
                mean_counts: 100.0,
                seed: 100,
            }
        } else {
            NoiseSpec::Gaussian { sigma: 0.03, seed: 100 }
        };
        let fidelity = if poisson { Fidelity::Poisson } else { Fidelity::L2 };
        let solver = match preset {
            Preset::Reference => SolverSettings::default(),
            Preset::Desk => desk_solver(fidelity),
        };
        Self {
            seeds: vec![0, 1, 2],
            output_dir: PathBuf::from("runs/experiment"),
            phantom: PhantomSpec::SheppLogan { size: 64 },
            geometry,
            noise,
            method: MethodSpec::new(Method::McdipAdmm),
            solver,
        }
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|source| HarnessError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(HarnessError::config("at least one seed is required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(HarnessError::config("seeds must be distinct"));
        }
        self.noise.validate()?;
        if self.method.cgne_iterations == 0 {
            return Err(HarnessError::config("cgne_iterations must be >= 1"));
        }
        self.geometry.build(self.phantom.size())?;
        let solver = self.solver_config(self.seeds[0])?;
        if solver.fidelity == Fidelity::Poisson && !matches!(self.noise, NoiseSpec::Poisson { .. }) {
            return Err(HarnessError::config(
                "poisson fidelity needs poisson (non-negative count) measurements",
            ));
        }
        Ok(())
    }

    /// Fully resolved solver settings for one seed.
    pub fn solver_config(&self, seed: u64) -> Result<SolverConfig> {
        let mut c = reference_solver(&self.geometry);
        let s = &self.solver;
        c.fidelity = match self.noise {
            NoiseSpec::Gaussian { .. } => Fidelity::L2,
            NoiseSpec::Poisson { .. } => Fidelity::Poisson,
        };
        if let Some(v) = s.rho {
            c.rho = v;
        }
        if let Some(v) = s.lambda {
            c.lambda = v;
        }
        if let Some(v) = s.num_codes {
            c.num_codes = v;
        }
        if let Some(v) = s.iterations {
            c.iterations = v;
        }
        if let Some(v) = s.base_lr {
            c.base_lr = v;
        }
        if let Some(v) = s.lr_halving_period {
            c.lr_halving_period = v;
        }
        if let Some(v) = s.fidelity {
            c.fidelity = v;
        }
        if let Some(v) = s.record_every {
            c.record_every = v;
        }
        if let Some(v) = s.freeze_alphas {
            c.freeze_alphas = v;
        }
        if let Some(v) = &s.generator {
            c.generator = Some(v.clone());
        }
        if let Some(v) = s.prox {
            c.prox = v;
        }
        if let Some(v) = s.ssim {
            c.ssim = v;
        }
        c.seed = seed;
        c.validate()?;
        Ok(c)
    }

    /// `output_dir`, placed under `$CTRECON_OUTPUT_ROOT` when that is set and
    /// the configured path is relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        resolve_output(&self.output_dir, std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from))
    }
}

pub fn resolve_output(dir: &Path, root: Option<PathBuf>) -> PathBuf {
    match root {
        Some(root) if dir.is_relative() => root.join(dir),
        _ => dir.to_path_buf(),
    }
}
