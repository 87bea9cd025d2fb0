//! Experiment configuration: a TOML file with per-experiment sections,
//! every field defaulted to the reference study's parameters, plus a small
//! set of command-line overrides.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Deserialize;

use crate::error::CliError;

/// Environment variable consulted for the output directory when neither
/// `--out` nor the configuration file names one.
pub const OUT_DIR_ENV: &str = "PTLAB_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    /// Complex-plane stability and accuracy sweep of the three schemes.
    Stability,
    /// Lid-driven-cavity convergence study over mesh, viscosity, and
    /// coarse step.
    Cavity,
    /// Tabulation of the parallel speedup ceiling.
    Speedup,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn name(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }

    pub fn extension(self) -> &'static str {
        self.name()
    }
}

/// Shared time-domain decomposition: the horizon and its slicing.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecompositionConfig {
    pub t_end: f64,
    pub n_slices: usize,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        DecompositionConfig {
            t_end: 15.0,
            n_slices: 15,
        }
    }
}

impl DecompositionConfig {
    pub fn slice_length(&self) -> f64 {
        self.t_end / self.n_slices as f64
    }
}

/// Stability-sweep section: window, resolution, iteration counts, and the
/// per-slice step counts of the two propagators.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub resolution: usize,
    pub iterations: Vec<usize>,
    pub coarse_steps_per_slice: usize,
    pub fine_steps_per_slice: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            re_min: -4.0,
            re_max: 0.0,
            im_min: -4.0,
            im_max: 4.0,
            resolution: 201,
            iterations: vec![1, 4, 8, 12],
            coarse_steps_per_slice: 2,
            fine_steps_per_slice: 5,
        }
    }
}

/// Cavity-study section: the parameter grids and solver settings.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CavityStudyConfig {
    pub nx: Vec<usize>,
    pub nu: Vec<f64>,
    pub dt_coarse: Vec<f64>,
    pub dt_fine: f64,
    pub max_iter: usize,
    pub lid_velocity: f64,
    pub poisson_tol: f64,
}

impl Default for CavityStudyConfig {
    fn default() -> Self {
        CavityStudyConfig {
            nx: vec![8, 16, 32, 64],
            nu: vec![1e-1, 1e-2, 1e-3, 1e-4],
            dt_coarse: vec![1.0 / 200.0, 1.0 / 400.0],
            dt_fine: 1.0 / 500.0,
            max_iter: 15,
            lid_velocity: 1.0,
            poisson_tol: 1e-10,
        }
    }
}

/// Speedup-table section. The bound needs a fine-to-coarse cost ratio:
/// either supplied in `cost_ratios` or measured by timing one slice of the
/// first configured cavity case (`measure = true`).
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedupConfig {
    pub n_slices: Vec<usize>,
    pub n_iter: Vec<usize>,
    pub cost_ratios: Vec<f64>,
    pub measure: bool,
}

impl Default for SpeedupConfig {
    fn default() -> Self {
        SpeedupConfig {
            n_slices: vec![15],
            n_iter: (1..=15).collect(),
            cost_ratios: Vec::new(),
            measure: false,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub decomposition: DecompositionConfig,
    pub stability: StabilityConfig,
    pub cavity: CavityStudyConfig,
    pub speedup: SpeedupConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub experiment: Option<ExperimentKind>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub nu: Option<Vec<f64>>,
    pub nx: Option<Vec<usize>>,
    pub dt_coarse: Option<Vec<f64>>,
    pub dt_fine: Option<f64>,
    pub slices: Option<usize>,
    pub max_iter: Option<usize>,
}

impl ExperimentConfig {
    /// Loads the file (or starts from defaults when none is given) and
    /// applies the overrides.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut config = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("cannot parse {}: {e}", p.display())))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(e) = overrides.experiment {
            config.experiment = Some(e);
        }
        if let Some(out) = &overrides.out {
            config.out_dir = Some(out.clone());
        }
        if let Some(f) = overrides.format {
            config.format = Some(f);
        }
        if let Some(nu) = &overrides.nu {
            config.cavity.nu = nu.clone();
        }
        if let Some(nx) = &overrides.nx {
            config.cavity.nx = nx.clone();
        }
        if let Some(dt) = &overrides.dt_coarse {
            config.cavity.dt_coarse = dt.clone();
        }
        if let Some(dt) = overrides.dt_fine {
            config.cavity.dt_fine = dt;
        }
        if let Some(n) = overrides.slices {
            config.decomposition.n_slices = n;
        }
        if let Some(k) = overrides.max_iter {
            config.cavity.max_iter = k;
        }
        Ok(config)
    }

    pub fn format(&self) -> OutputFormat {
        self.format.unwrap_or(OutputFormat::Csv)
    }

    /// Output directory precedence: `--out`, then the file, then the
    /// `PTLAB_OUT` environment variable, then `./results`.
    pub fn resolve_out_dir(&self) -> PathBuf {
        if let Some(dir) = &self.out_dir {
            return dir.clone();
        }
        if let Some(dir) = env::var_os(OUT_DIR_ENV) {
            if !dir.is_empty() {
                return PathBuf::from(dir);
            }
        }
        PathBuf::from("results")
    }
}

/// Number of equal steps of size `dt` covering one slice. The step must
/// tile the slice exactly (to roundoff: the covered length may differ from
/// the slice length by at most a relative 1e-12, matching what the
/// propagators accept); anything else is a configuration error.
pub fn steps_per_slice(dt: f64, slice_length: f64, label: &str) -> Result<usize, CliError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(CliError::Config(format!(
            "{label} step must be positive and finite (got {dt})"
        )));
    }
    let steps = (slice_length / dt).round();
    if steps < 1.0 || (steps * dt - slice_length).abs() > 1e-12 * slice_length {
        return Err(CliError::Config(format!(
            "{label} step {dt} does not tile a slice of length {slice_length} \
             with a whole number of steps"
        )));
    }
    Ok(steps as usize)
}
