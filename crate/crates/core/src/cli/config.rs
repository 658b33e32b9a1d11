//! Scenario configuration: JSON with a versioned schema. Parsing and
//! validation errors carry the dotted path of the offending field.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::kernels::{InheritanceKernel, NoiseDensity, TabulatedDensity};
use crate::macro_solver::{Positivity, SolverConfig};
use crate::measures::{GridMeasure, TraitGrid};
use crate::ode::Scheme;
use crate::rates::ConstantRates;
use crate::stability::FixedPointConfig;

use super::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    /// Optional; when present it must name the subcommand being run.
    pub scenario: Option<String>,
    pub grid: Option<GridSpec>,
    pub rates: Option<ConstantRates>,
    pub kernel: Option<KernelSpec>,
    pub initial: Option<InitialSpec>,
    pub solver: Option<SolverSpec>,
    #[serde(rename = "macro")]
    pub macro_run: Option<MacroSpec>,
    pub totals: Option<TotalsSpec>,
    pub ibm: Option<IbmSpec>,
    pub fixed_point: Option<FixedPointSpec>,
    pub lln: Option<LlnSpec>,
    pub acceptance: Option<AcceptanceSpec>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Directory of the config file; relative data paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelSpec {
    Additive { noise: NoiseSpec },
    Multiplicative { noise: NoiseSpec },
    /// Tabulated `x, y, z, density` file.
    Tabulated { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseSpec {
    Gaussian { sigma: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Tabulated `z, density` file.
    Tabulated { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub male: ShapeSpec,
    pub female: ShapeSpec,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum ShapeSpec {
    Point {
        at: f64,
        #[serde(default = "unit")]
        mass: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
        #[serde(default = "unit")]
        mass: f64,
    },
    Gaussian {
        mean: f64,
        sd: f64,
        #[serde(default = "unit")]
        mass: f64,
    },
    /// `cell_center, weight` rows; weights are rescaled to `mass` if given.
    Csv { path: PathBuf, mass: Option<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub positivity: Positivity,
    pub sample_every: Option<usize>,
    pub sample_interval: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MacroMode {
    /// Unnormalized system for `(m, f)`.
    #[default]
    Full,
    /// Probability laws `(mu, nu)` with a constant sex ratio `A`.
    Normalized,
    /// Full run with the normalized view extracted along the way.
    Coupled,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroSpec {
    #[serde(default)]
    pub mode: MacroMode,
    #[serde(rename = "A")]
    pub sex_ratio: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TotalsSpec {
    #[serde(rename = "M0", default = "unit")]
    pub m0: f64,
    #[serde(rename = "F0", default = "unit")]
    pub f0: f64,
    #[serde(default = "default_totals_t_end")]
    pub t_end: f64,
    #[serde(default = "default_totals_dt")]
    pub dt: f64,
    /// Random restarts of the root finder for the uniqueness probe.
    #[serde(default = "default_starts")]
    pub starts: usize,
}

fn default_totals_t_end() -> f64 {
    50.0
}

fn default_totals_dt() -> f64 {
    0.01
}

fn default_starts() -> usize {
    100
}

impl Default for TotalsSpec {
    fn default() -> Self {
        Self {
            m0: 1.0,
            f0: 1.0,
            t_end: default_totals_t_end(),
            dt: default_totals_dt(),
            starts: default_starts(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IbmSpec {
    pub scale: usize,
    pub t_end: f64,
    #[serde(default)]
    pub sample_times: Vec<f64>,
    pub max_events: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointSpec {
    pub initial: Option<ShapeSpec>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub theta: Option<f64>,
    pub patience: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlnSpec {
    pub scales: Vec<usize>,
    pub replicas: usize,
    pub checkpoints: Vec<f64>,
    #[serde(default = "default_lln_dt")]
    pub dt: f64,
}

fn default_lln_dt() -> f64 {
    0.01
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceSpec {
    /// Criterion ids to run; all when empty.
    #[serde(default)]
    pub criteria: Vec<u8>,
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn require<'a, T>(section: &'a Option<T>, name: &str, scenario: &str) -> Result<&'a T, CliError> {
    section
        .as_ref()
        .ok_or_else(|| invalid(name, format!("section is required by `{scenario}`")))
}

fn positive(field: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                CliError::Config(e.inner().to_string())
            } else {
                invalid(&path, e.inner())
            }
        })?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", config.schema_version),
            ));
        }
        if let Some(rates) = &config.rates {
            rates.validate().map_err(|e| CliError::Config(format!("rates.{}", strip_kind(&e))))?;
        }
        Ok(config)
    }

    pub fn check_scenario(&self, scenario: &str) -> Result<(), CliError> {
        match &self.scenario {
            Some(s) if s != scenario => Err(invalid(
                "scenario",
                format!("config is for `{s}` but `{scenario}` was requested"),
            )),
            _ => Ok(()),
        }
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn grid(&self, scenario: &str) -> Result<TraitGrid, CliError> {
        let g = require(&self.grid, "grid", scenario)?;
        TraitGrid::new(g.x_min, g.x_max, g.n_cells).map_err(|e| invalid("grid", strip_kind(&e)))
    }

    pub fn rates(&self, scenario: &str) -> Result<ConstantRates, CliError> {
        require(&self.rates, "rates", scenario).copied()
    }

    pub fn kernel(&self, scenario: &str) -> Result<InheritanceKernel, CliError> {
        let section = require(&self.kernel, "kernel", scenario)?;
        let noise = |n: &NoiseSpec| -> Result<NoiseDensity, CliError> {
            let built = match n {
                NoiseSpec::Gaussian { sigma } => NoiseDensity::gaussian(*sigma),
                NoiseSpec::Uniform { lo, hi } => NoiseDensity::uniform(*lo, *hi),
                NoiseSpec::Tabulated { path } => {
                    let (z, d) = read_two_columns(&self.resolve(path), "kernel.noise.path")?;
                    TabulatedDensity::new(z, d).map(NoiseDensity::Tabulated)
                }
            };
            built.map_err(|e| invalid("kernel.noise", strip_kind(&e)))
        };
        match section {
            KernelSpec::Additive { noise: n } => Ok(InheritanceKernel::additive(noise(n)?)),
            KernelSpec::Multiplicative { noise: n } => InheritanceKernel::multiplicative(noise(n)?)
                .map_err(|e| invalid("kernel.noise", strip_kind(&e))),
            KernelSpec::Tabulated { path } => InheritanceKernel::from_csv(self.resolve(path))
                .map_err(|e| invalid("kernel.path", strip_kind(&e))),
        }
    }

    pub fn shape(&self, shape: &ShapeSpec, grid: TraitGrid, field: &str) -> Result<GridMeasure, CliError> {
        let built = match shape {
            ShapeSpec::Point { at, mass } => {
                if !grid.contains(*at) {
                    return Err(invalid(&format!("{field}.at"), format!("{at} lies outside the grid")));
                }
                if !(*mass >= 0.0 && mass.is_finite()) {
                    return Err(invalid(&format!("{field}.mass"), format!("must be non-negative, got {mass}")));
                }
                Ok(GridMeasure::point_mass(grid, *at, *mass))
            }
            ShapeSpec::Uniform { lo, hi, mass } => GridMeasure::uniform(grid, *lo, *hi, *mass),
            ShapeSpec::Gaussian { mean, sd, mass } => GridMeasure::gaussian(grid, *mean, *sd, *mass),
            ShapeSpec::Csv { path, mass } => {
                let (centers, weights) = read_two_columns(&self.resolve(path), &format!("{field}.path"))?;
                let mut w = vec![0.0; grid.n_cells()];
                for (x, v) in centers.iter().zip(&weights) {
                    if !grid.contains(*x) {
                        return Err(invalid(&format!("{field}.path"), format!("cell center {x} lies outside the grid")));
                    }
                    w[grid.cell_of(*x)] += v;
                }
                GridMeasure::from_weights(grid, w).and_then(|m| match mass {
                    Some(target) => m.with_mass(*target),
                    None => Ok(m),
                })
            }
        };
        built.map_err(|e| invalid(field, strip_kind(&e)))
    }

    pub fn initial(&self, scenario: &str, grid: TraitGrid) -> Result<(GridMeasure, GridMeasure), CliError> {
        let section = require(&self.initial, "initial", scenario)?;
        Ok((
            self.shape(&section.male, grid, "initial.male")?,
            self.shape(&section.female, grid, "initial.female")?,
        ))
    }

    pub fn solver(&self, scenario: &str) -> Result<SolverConfig, CliError> {
        let s = require(&self.solver, "solver", scenario)?;
        let dt = positive("solver.dt", s.dt)?;
        let t_end = positive("solver.t_end", s.t_end)?;
        let mut config = SolverConfig::new(dt, t_end)
            .with_scheme(s.scheme)
            .with_positivity(s.positivity);
        match (s.sample_every, s.sample_interval) {
            (Some(_), Some(_)) => {
                return Err(invalid("solver", "give sample_every or sample_interval, not both"));
            }
            (Some(0), None) => return Err(invalid("solver.sample_every", "must be at least 1")),
            (Some(k), None) => config = config.sampled_every(k),
            (None, Some(h)) => config = config.sampled_at_interval(positive("solver.sample_interval", h)?),
            (None, None) => {}
        }
        Ok(config)
    }

    pub fn fixed_point_config(&self) -> Result<FixedPointConfig, CliError> {
        let mut c = FixedPointConfig::default();
        if let Some(s) = &self.fixed_point {
            if let Some(tol) = s.tol {
                c.tol = positive("fixed_point.tol", tol)?;
            }
            if let Some(n) = s.max_iter {
                c.max_iter = n;
            }
            if let Some(theta) = s.theta {
                if !(theta > 0.0 && theta <= 1.0) {
                    return Err(invalid("fixed_point.theta", format!("must lie in (0, 1], got {theta}")));
                }
                c.theta = theta;
            }
            if let Some(p) = s.patience {
                c.patience = p;
            }
        }
        Ok(c)
    }

    pub fn ibm(&self, scenario: &str) -> Result<&IbmSpec, CliError> {
        let s = require(&self.ibm, "ibm", scenario)?;
        if s.scale == 0 {
            return Err(invalid("ibm.scale", "must be at least 1"));
        }
        positive("ibm.t_end", s.t_end)?;
        Ok(s)
    }

    pub fn lln(&self, scenario: &str) -> Result<&LlnSpec, CliError> {
        let s = require(&self.lln, "lln", scenario)?;
        if s.scales.is_empty() || s.scales.contains(&0) {
            return Err(invalid("lln.scales", "must be a nonempty list of positive sizes"));
        }
        if s.replicas < 3 {
            return Err(invalid("lln.replicas", format!("at least 3 are needed, got {}", s.replicas)));
        }
        if s.checkpoints.is_empty() || s.checkpoints.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(invalid("lln.checkpoints", "must be a nonempty list of non-negative times"));
        }
        positive("lln.dt", s.dt)?;
        Ok(s)
    }
}

/// Library error message without the leading "invalid ...:" category.
fn strip_kind(e: &crate::Error) -> String {
    let msg = e.to_string();
    match msg.split_once(": ") {
        Some((kind, rest)) if kind.starts_with("invalid") => rest.to_string(),
        _ => msg,
    }
}

fn read_two_columns(path: &Path, field: &str) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| invalid(field, format!("{}: {e}", path.display())))?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (line, record) in reader.deserialize::<(f64, f64)>().enumerate() {
        let (x, y) = record.map_err(|e| invalid(field, format!("{} row {}: {e}", path.display(), line + 1)))?;
        a.push(x);
        b.push(y);
    }
    Ok((a, b))
}
