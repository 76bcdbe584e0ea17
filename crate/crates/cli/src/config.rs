//! Experiment configuration: the TOML file a user writes, and the fully
//! explicit form every run is executed from and recorded as.

use std::fmt;
use std::path::{Path, PathBuf};

use lmgsim::scrambling::DEFAULT_DELTA_PHI_GRID;
use lmgsim::tomography::{DEFAULT_DIRECTION_COUNT, DEFAULT_SHOTS, MIN_BOOTSTRAP_RESAMPLES};
use lmgsim::SeedScheme;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    Fig2b,
    Fig2c,
    Fig2d,
    Fig3,
    Fig4,
    Fig5,
    Custom,
}

impl ExperimentId {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::Fig2b => "fig2b",
            ExperimentId::Fig2c => "fig2c",
            ExperimentId::Fig2d => "fig2d",
            ExperimentId::Fig3 => "fig3",
            ExperimentId::Fig4 => "fig4",
            ExperimentId::Fig5 => "fig5",
            ExperimentId::Custom => "custom",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a run computes on its `(omega, S chi t)` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Antisqueezing, its direction and the Binder cumulant along it.
    Antisqueezing,
    /// Signal amplification, echo noise and metrological gain.
    Satin,
    /// Tomographic and direct FOTOC per displacement, fitted OTOC.
    Tomography,
    /// Antisqueezing, `G^2` and the OTOC side by side.
    Comparison,
}

/// Either an explicit list or an inclusive `start..=stop` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Values(Vec<f64>),
    Range(RangeSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

/// Grid values are rounded to this many decimals so that `0.1 * 3` prints
/// as `0.3`.
const GRID_DECIMALS: i32 = 12;

fn round_grid(x: f64) -> f64 {
    let scale = 10f64.powi(GRID_DECIMALS);
    let r = (x * scale).round() / scale;
    if r == 0.0 { 0.0 } else { r }
}

impl GridSpec {
    fn range(start: f64, stop: f64, step: f64) -> Self {
        GridSpec::Range(RangeSpec { start, stop, step })
    }

    pub fn expand(&self, what: &str) -> Result<Vec<f64>, ConfigError> {
        match self {
            GridSpec::Values(v) => Ok(v.clone()),
            GridSpec::Range(RangeSpec { start, stop, step }) => {
                if ![start, stop, step].iter().all(|v| v.is_finite()) {
                    return invalid(format!("{what}: range bounds must be finite"));
                }
                if !(*step > 0.0) {
                    return invalid(format!("{what}: step must be positive"));
                }
                if stop < start {
                    return invalid(format!("{what}: stop {stop} is below start {start}"));
                }
                let count = ((stop - start) / step + 1e-9).floor() as usize;
                Ok((0..=count).map(|i| round_grid(start + i as f64 * step)).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographyInput {
    pub shots: Option<u64>,
    pub directions: Option<usize>,
    pub delta_phi: Option<GridSpec>,
    pub bootstrap_resamples: Option<usize>,
    pub seed_scheme: Option<SeedScheme>,
}

/// A config file as written. Omitted fields take the defaults of the
/// experiment id; `custom` requires `kind`, `n`, `omega_over_schi` and `s_chi_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub kind: Option<ExperimentKind>,
    /// Stem of the output files; the experiment id when absent.
    pub name: Option<String>,
    pub n: Option<usize>,
    /// Twisting strength in rad/s; only rescales time.
    pub chi: Option<f64>,
    pub omega_over_schi: Option<GridSpec>,
    /// Evolution times in units of `1/(S chi)`.
    pub s_chi_t: Option<GridSpec>,
    /// Collective `S_z` dephasing rate in units of `chi`.
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    /// Output directory; relative paths are taken from the output root.
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub tomography: TomographyInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographySettings {
    pub shots: u64,
    pub directions: usize,
    pub delta_phi: Vec<f64>,
    /// Zero disables the bootstrap.
    pub bootstrap_resamples: usize,
    pub seed_scheme: SeedScheme,
}

/// Every parameter of a run, explicit. This is what the manifest records
/// and hashes; the output location is deliberately not part of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub experiment: ExperimentId,
    pub kind: ExperimentKind,
    pub name: String,
    pub n: usize,
    pub chi: f64,
    pub omega_over_schi: Vec<f64>,
    pub s_chi_t: Vec<f64>,
    pub gamma: f64,
    pub seed: u64,
    pub tomography: TomographySettings,
}

struct Defaults {
    kind: ExperimentKind,
    n: usize,
    omega: GridSpec,
    s_chi_t: GridSpec,
}

fn defaults(id: ExperimentId) -> Option<Defaults> {
    use ExperimentKind::*;
    let d = |kind, omega, s_chi_t| Some(Defaults { kind, n: 200, omega, s_chi_t });
    match id {
        ExperimentId::Fig2b => d(Antisqueezing, GridSpec::range(-1.0, 3.0, 0.125), GridSpec::Values(vec![1.9])),
        ExperimentId::Fig2c => d(Antisqueezing, GridSpec::Values(vec![0.0, 1.0]), GridSpec::range(0.0, 2.0, 0.05)),
        ExperimentId::Fig2d => d(Antisqueezing, GridSpec::Values(vec![1.0]), GridSpec::range(0.0, 2.0, 0.05)),
        ExperimentId::Fig3 => d(Satin, GridSpec::Values(vec![1.0]), GridSpec::range(0.0, 1.2, 0.05)),
        ExperimentId::Fig4 => d(Tomography, GridSpec::Values(vec![1.0]), GridSpec::Values(vec![0.57])),
        ExperimentId::Fig5 => d(Comparison, GridSpec::Values(vec![1.0]), GridSpec::range(0.0, 1.2, 0.05)),
        ExperimentId::Custom => None,
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
    parse_config(&text)
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentId) -> Self {
        Self {
            experiment,
            kind: None,
            name: None,
            n: None,
            chi: None,
            omega_over_schi: None,
            s_chi_t: None,
            gamma: None,
            seed: None,
            output: None,
            tomography: TomographyInput::default(),
        }
    }

    /// Fills in defaults, expands grids and validates.
    pub fn resolve(&self) -> Result<ResolvedConfig, ConfigError> {
        let base = defaults(self.experiment);
        let kind = match (&base, self.kind) {
            (Some(b), Some(k)) if k != b.kind => {
                return invalid(format!("{} is a {:?} experiment, not {k:?}", self.experiment, b.kind));
            }
            (Some(b), _) => b.kind,
            (None, Some(k)) => k,
            (None, None) => return invalid("custom experiments must set `kind`"),
        };
        let required = |field: &str| ConfigError::Invalid(format!("custom experiments must set `{field}`"));
        let n = match (self.n, &base) {
            (Some(n), _) => n,
            (None, Some(b)) => b.n,
            (None, None) => return Err(required("n")),
        };
        let omega = match (&self.omega_over_schi, &base) {
            (Some(g), _) => g.expand("omega_over_schi")?,
            (None, Some(b)) => b.omega.expand("omega_over_schi")?,
            (None, None) => return Err(required("omega_over_schi")),
        };
        let s_chi_t = match (&self.s_chi_t, &base) {
            (Some(g), _) => g.expand("s_chi_t")?,
            (None, Some(b)) => b.s_chi_t.expand("s_chi_t")?,
            (None, None) => return Err(required("s_chi_t")),
        };
        let tomo = &self.tomography;
        let delta_phi = match &tomo.delta_phi {
            Some(g) => g.expand("tomography.delta_phi")?,
            None => DEFAULT_DELTA_PHI_GRID.to_vec(),
        };
        let resolved = ResolvedConfig {
            experiment: self.experiment,
            kind,
            name: self.name.clone().unwrap_or_else(|| self.experiment.to_string()),
            n,
            chi: self.chi.unwrap_or(1.0),
            omega_over_schi: omega,
            s_chi_t,
            gamma: self.gamma.unwrap_or(0.0),
            seed: self.seed.unwrap_or(0),
            tomography: TomographySettings {
                shots: tomo.shots.unwrap_or(DEFAULT_SHOTS),
                directions: tomo.directions.unwrap_or(DEFAULT_DIRECTION_COUNT),
                delta_phi,
                bootstrap_resamples: tomo.bootstrap_resamples.unwrap_or(0),
                seed_scheme: tomo.seed_scheme.unwrap_or_default(),
            },
        };
        resolved.validate()?;
        Ok(resolved)
    }
}

fn check_finite(what: &str, values: &[f64]) -> Result<(), ConfigError> {
    if values.is_empty() {
        return invalid(format!("{what} grid is empty"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return invalid(format!("{what} contains non-finite value {v}"));
    }
    Ok(())
}

impl ResolvedConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return invalid(format!("name {:?} must be non-empty and use only [A-Za-z0-9._-]", self.name));
        }
        if self.n == 0 {
            return invalid("n must be at least 1");
        }
        if !(self.chi > 0.0 && self.chi.is_finite()) {
            return invalid(format!("chi {} must be positive and finite", self.chi));
        }
        check_finite("omega_over_schi", &self.omega_over_schi)?;
        check_finite("s_chi_t", &self.s_chi_t)?;
        if self.s_chi_t.iter().any(|&t| t < 0.0) {
            return invalid("s_chi_t values must be non-negative");
        }
        if self.s_chi_t.windows(2).any(|w| w[1] < w[0]) {
            return invalid("s_chi_t must be non-decreasing");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return invalid(format!("gamma {} must be finite and non-negative", self.gamma));
        }
        if self.gamma > 0.0 && matches!(self.kind, ExperimentKind::Tomography | ExperimentKind::Comparison) {
            return invalid(format!("gamma > 0 is not supported for {:?} experiments", self.kind));
        }
        let t = &self.tomography;
        if t.shots == 0 || t.directions == 0 {
            return invalid("tomography needs at least one shot and one direction");
        }
        check_finite("tomography.delta_phi", &t.delta_phi)?;
        if t.delta_phi.len() < 5 || !t.delta_phi.iter().any(|&d| d < 0.0) || !t.delta_phi.iter().any(|&d| d > 0.0) {
            return invalid("tomography.delta_phi needs at least 5 values spanning both signs");
        }
        if t.bootstrap_resamples != 0 && t.bootstrap_resamples < MIN_BOOTSTRAP_RESAMPLES {
            return invalid(format!(
                "bootstrap_resamples must be 0 or at least {MIN_BOOTSTRAP_RESAMPLES}"
            ));
        }
        Ok(())
    }

    /// The explicit form as TOML, loadable again as a config file.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("resolved configs serialize")
    }

    /// Canonical JSON of the config plus the crate version.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&serde_json::json!({ "version": crate::VERSION, "config": self }))
            .expect("resolved configs serialize")
    }
}
