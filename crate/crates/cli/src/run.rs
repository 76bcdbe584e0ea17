//! Executes resolved experiments and writes their datasets.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lmgsim::rng::derive_seed;
use lmgsim::scrambling::echo_scan;
use lmgsim::tomography::{bootstrap_otoc, direct_fotoc, fibonacci_directions, tomographic_fotoc_pipeline, PipelineSetup, ShotsConfig};
use lmgsim::{
    antisqueezing, binder_cumulant, build_hamiltonian, css, otoc_from_fotoc, CollectiveSpinParams, DensityMatrix, Echo,
    HamiltonianSpec, LindbladIntegrator, LindbladSpec, Propagator, PureState, SatinConfig, SatinEngine, SpinAxis,
    SpinOperators, SpinState,
};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentId, ExperimentKind, ResolvedConfig};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Simulation(#[from] lmgsim::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_owned(), source }
}

/// One output dataset. `None` cells are written empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// Appended to the run name to form the file stem; empty for the main table.
    pub suffix: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    fn new(suffix: &str, columns: &[&str]) -> Self {
        Self { suffix: suffix.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// CSV text preceded by a `#` comment line naming the config hash.
    pub fn to_csv(&self, config_sha256: &str) -> Result<Vec<u8>, csv::Error> {
        let mut out = format!("# lmgsim {} config_sha256={config_sha256}\n", crate::VERSION).into_bytes();
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()))?;
        }
        w.flush()?;
        drop(w);
        Ok(out)
    }
}

struct Model {
    params: CollectiveSpinParams,
    ops: SpinOperators,
    x: PureState,
    chi: f64,
}

impl Model {
    fn new(cfg: &ResolvedConfig) -> Result<Self, RunError> {
        let params = CollectiveSpinParams::new(cfg.n)?;
        Ok(Self { params, ops: SpinOperators::new(params), x: css(params, std::f64::consts::FRAC_PI_2, 0.0), chi: cfg.chi })
    }

    fn spec(&self, ratio: f64) -> HamiltonianSpec {
        HamiltonianSpec::lmg(self.chi, ratio * self.params.spin() * self.chi)
    }

    /// Physical time for a dimensionless `S chi t`.
    fn time(&self, st: f64) -> f64 {
        st / (self.params.spin() * self.chi)
    }

    fn satin(&self, ratio: f64, gamma: f64) -> Result<SatinConfig, RunError> {
        let cfg = SatinConfig::new(self.spec(ratio), 0.0);
        Ok(if gamma > 0.0 { cfg.with_lindblad(LindbladSpec::new(gamma * self.chi, SpinAxis::z())?) } else { cfg })
    }
}

/// Runs the computation and returns its tables; no files are touched.
pub fn compute(cfg: &ResolvedConfig) -> Result<Vec<Table>, RunError> {
    let model = Model::new(cfg)?;
    match cfg.kind {
        ExperimentKind::Antisqueezing => antisqueezing_tables(cfg, &model),
        ExperimentKind::Satin => satin_tables(cfg, &model),
        ExperimentKind::Tomography => tomography_tables(cfg, &model),
        ExperimentKind::Comparison => comparison_tables(cfg, &model),
    }
}

fn antisqueezing_tables(cfg: &ResolvedConfig, m: &Model) -> Result<Vec<Table>, RunError> {
    let mut table = Table::new("", &["omega_over_schi", "S_chi_t", "xi_plus_sq", "alpha_max", "binder"]);
    for &ratio in &cfg.omega_over_schi {
        let h = build_hamiltonian(&m.spec(ratio), &m.ops)?;
        let rows: Vec<Vec<Option<f64>>> = if cfg.gamma > 0.0 {
            let lindblad = LindbladIntegrator::new(&h, &LindbladSpec::new(cfg.gamma * m.chi, SpinAxis::z())?, &m.ops)?;
            let rho0 = DensityMatrix::from_pure(&m.x);
            cfg.s_chi_t
                .par_iter()
                .map(|&st| antisqueezing_row(m, ratio, st, &lindblad.evolve(&rho0, m.time(st), None)?))
                .collect::<Result<_, RunError>>()?
        } else {
            let prop = Propagator::new(&h)?;
            cfg.s_chi_t
                .par_iter()
                .map(|&st| antisqueezing_row(m, ratio, st, &m.x.propagate(&prop, m.time(st))))
                .collect::<Result<_, RunError>>()?
        };
        table.rows.extend(rows);
    }
    Ok(vec![table])
}

fn antisqueezing_row<S: SpinState>(m: &Model, ratio: f64, st: f64, state: &S) -> Result<Vec<Option<f64>>, RunError> {
    let a = antisqueezing(&m.ops, state)?;
    let binder = binder_cumulant(&m.ops, state, &a.axis)?;
    Ok(vec![Some(ratio), Some(st), Some(a.xi_plus_sq), Some(a.alpha_max), Some(binder)])
}

fn satin_tables(cfg: &ResolvedConfig, m: &Model) -> Result<Vec<Table>, RunError> {
    let mut table = Table::new("", &["omega_over_schi", "S_chi_t", "g_sq", "n_sq", "gain_db"]);
    for &ratio in &cfg.omega_over_schi {
        let engine = SatinEngine::new(&m.ops, &m.satin(ratio, cfg.gamma)?)?;
        let rows: Vec<Vec<Option<f64>>> = cfg
            .s_chi_t
            .par_iter()
            .map(|&st| {
                let r = engine.metrological_gain(&m.x, m.time(st))?;
                Ok(vec![Some(ratio), Some(st), Some(r.g_sq), Some(r.n_sq), Some(r.gain_db)])
            })
            .collect::<Result<_, RunError>>()?;
        table.rows.extend(rows);
    }
    Ok(vec![table])
}

fn tomography_tables(cfg: &ResolvedConfig, m: &Model) -> Result<Vec<Table>, RunError> {
    let tomo = &cfg.tomography;
    let mut fotoc = Table::new(
        "",
        &["omega_over_schi", "S_chi_t", "delta_phi", "fidelity_direct", "fidelity_tomographic"],
    );
    let mut otoc = Table::new(
        "_otoc",
        &["omega_over_schi", "S_chi_t", "otoc_direct", "otoc_tomographic", "otoc_stderr", "ci_lower", "ci_upper"],
    );
    let axis = m.satin(0.0, 0.0)?.signal_axis();
    let mut point = 0u64;
    for &ratio in &cfg.omega_over_schi {
        let h = build_hamiltonian(&m.spec(ratio), &m.ops)?;
        let echo = Echo::new(&h, &m.ops, &axis)?;
        for &st in &cfg.s_chi_t {
            let t = m.time(st);
            let seed = derive_seed(cfg.seed, point);
            point += 1;
            let mut setup = PipelineSetup::new(&m.ops, &m.x);
            setup.directions = fibonacci_directions(tomo.directions);
            setup.seed_scheme = tomo.seed_scheme;
            setup.reconstruction.seed = seed;
            let shots = ShotsConfig::Sampled { shots_per_direction: tomo.shots };
            let run = tomographic_fotoc_pipeline(&setup, &h, &axis, &tomo.delta_phi, t, shots, seed)?;
            let direct = echo_scan(&echo, &m.x, &tomo.delta_phi, t);
            for (d, s) in direct.iter().zip(&run.samples) {
                fotoc.rows.push(vec![Some(ratio), Some(st), Some(d.delta_phi), Some(d.fidelity), Some(s.fidelity)]);
            }
            let direct_fit = otoc_from_fotoc(&direct, t)?;
            let (lower, upper) = if tomo.bootstrap_resamples > 0 {
                let b = bootstrap_otoc(&setup, &run.records, t, tomo.bootstrap_resamples)?;
                (Some(b.lower), Some(b.upper))
            } else {
                (None, None)
            };
            otoc.rows.push(vec![
                Some(ratio),
                Some(st),
                Some(direct_fit.otoc),
                Some(run.otoc.otoc),
                Some(run.otoc.otoc_stderr),
                lower,
                upper,
            ]);
        }
    }
    Ok(vec![fotoc, otoc])
}

fn comparison_tables(cfg: &ResolvedConfig, m: &Model) -> Result<Vec<Table>, RunError> {
    let mut table = Table::new("", &["omega_over_schi", "S_chi_t", "xi_plus_sq", "g_sq", "otoc", "otoc_norm"]);
    let grid = &cfg.tomography.delta_phi;
    for &ratio in &cfg.omega_over_schi {
        let satin = m.satin(ratio, 0.0)?;
        let engine = SatinEngine::new(&m.ops, &satin)?;
        let h = engine.hamiltonian().clone();
        let prop = Propagator::new(&h)?;
        let otoc_at = |t: f64| direct_fotoc(&m.ops, &m.x, &h, &satin.signal_axis(), grid, t).map(|r| r.otoc);
        let reference = otoc_at(0.0)?;
        let rows: Vec<Vec<Option<f64>>> = cfg
            .s_chi_t
            .par_iter()
            .map(|&st| {
                let t = m.time(st);
                let xi = antisqueezing(&m.ops, &m.x.propagate(&prop, t))?.xi_plus_sq;
                let g_sq = engine.metrological_gain(&m.x, t)?.g_sq;
                let otoc = otoc_at(t)?;
                Ok(vec![Some(ratio), Some(st), Some(xi), Some(g_sq), Some(otoc), Some(otoc / reference)])
            })
            .collect::<Result<_, RunError>>()?;
        table.rows.extend(rows);
    }
    Ok(vec![table])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: ExperimentId,
    pub seed: u64,
    /// Hash of the canonical config JSON; repeated in every CSV header.
    pub config_sha256: String,
    pub config: ResolvedConfig,
    pub wall_time_s: f64,
    pub threads: usize,
    pub outputs: Vec<OutputFile>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Computes the experiment and writes `<name><suffix>.csv` files plus
/// `manifest.json` into `dir`, creating it if needed.
pub fn run_experiment(cfg: &ResolvedConfig, dir: &Path) -> Result<Manifest, RunError> {
    cfg.validate()?;
    let start = Instant::now();
    let tables = compute(cfg)?;
    let config_sha256 = sha256_hex(cfg.canonical_json().as_bytes());
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut outputs = Vec::new();
    for table in &tables {
        let file = format!("{}{}.csv", cfg.name, table.suffix);
        let path = dir.join(&file);
        let bytes = table.to_csv(&config_sha256).map_err(|e| lmgsim::Error::Parse(e.to_string()))?;
        fs::write(&path, &bytes).map_err(io_err(&path))?;
        outputs.push(OutputFile { file, sha256: sha256_hex(&bytes), rows: table.rows.len() });
    }
    let manifest = Manifest {
        tool: "lmgsim",
        version: crate::VERSION,
        experiment: cfg.experiment,
        seed: cfg.seed,
        config_sha256,
        config: cfg.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
        outputs,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut file = fs::File::create(&path).map_err(io_err(&path))?;
    serde_json::to_writer_pretty(&mut file, &manifest).map_err(|e| lmgsim::Error::Parse(e.to_string()))?;
    file.write_all(b"\n").map_err(io_err(&path))?;
    Ok(manifest)
}
