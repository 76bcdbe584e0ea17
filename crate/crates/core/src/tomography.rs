//! Simulated projective spin measurements and maximum-likelihood state
//! reconstruction.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64 as C64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dicke::{CollectiveSpinParams, DensityMatrix, PureState, SpinAxis, SpinOperators, SpinState};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, dagger};
use crate::rng;
use crate::scrambling::{echo_scan, otoc_from_fotoc, Echo, FotocSample, OtocResult};
use crate::tolerance::PSD_TOL;

pub const DEFAULT_DIRECTION_COUNT: usize = 41;
pub const DEFAULT_SHOTS: u64 = 30;

/// `n` near-uniform directions on a spherical Fibonacci lattice.
pub fn fibonacci_directions(n: usize) -> Vec<SpinAxis> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let phi = (golden * i as f64).rem_euclid(2.0 * std::f64::consts::PI);
            SpinAxis::polar(z.acos(), phi)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    pub direction: SpinAxis,
    pub shots: u64,
}

impl MeasurementSetting {
    pub fn new(direction: SpinAxis, shots: u64) -> Result<Self> {
        if shots == 0 {
            return Err(Error::InvalidParameter("a setting needs at least one shot".into()));
        }
        Ok(Self { direction, shots })
    }
}

/// [`DEFAULT_DIRECTION_COUNT`] Fibonacci directions with `shots` each.
pub fn default_settings(shots: u64) -> Result<Vec<MeasurementSetting>> {
    fibonacci_directions(DEFAULT_DIRECTION_COUNT)
        .into_iter()
        .map(|d| MeasurementSetting::new(d, shots))
        .collect()
}

/// Outcome histogram of one setting; `counts[k]` is the number of results
/// `m = S - k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub setting: MeasurementSetting,
    pub counts: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct RecordJson {
    #[serde(rename = "N")]
    n: usize,
    theta: f64,
    phi: f64,
    counts: BTreeMap<String, u64>,
}

impl MeasurementRecord {
    pub fn new(setting: MeasurementSetting, counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidParameter("empty histogram".into()));
        }
        let total: u64 = counts.iter().sum();
        if total != setting.shots {
            return Err(Error::InvalidParameter(format!("counts sum to {total}, expected {}", setting.shots)));
        }
        Ok(Self { setting, counts })
    }

    pub fn particles(&self) -> usize {
        self.counts.len() - 1
    }

    fn params(&self) -> CollectiveSpinParams {
        CollectiveSpinParams::new(self.particles()).expect("histogram has at least two bins")
    }

    /// Sample mean of the measured projection.
    pub fn mean(&self) -> f64 {
        let p = self.params();
        self.counts.iter().enumerate().map(|(k, &c)| c as f64 * p.m_at(k)).sum::<f64>() / self.setting.shots as f64
    }

    /// Population variance of the measured projection.
    pub fn variance(&self) -> f64 {
        let p = self.params();
        let mean = self.mean();
        self.counts.iter().enumerate().map(|(k, &c)| c as f64 * (p.m_at(k) - mean).powi(2)).sum::<f64>()
            / self.setting.shots as f64
    }

    /// One JSON object: `{"N", "theta", "phi", "counts": {"m": count}}`, zero
    /// counts omitted.
    pub fn to_json_line(&self) -> Result<String> {
        let p = self.params();
        let (theta, phi) = self.setting.direction.angles();
        let counts = self
            .counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (format!("{}", p.m_at(k)), c))
            .collect();
        Ok(serde_json::to_string(&RecordJson { n: p.particles(), theta, phi, counts })?)
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let raw: RecordJson = serde_json::from_str(line)?;
        let p = CollectiveSpinParams::new(raw.n)?;
        let s = p.spin();
        let mut counts = vec![0u64; p.dim()];
        for (key, c) in raw.counts {
            let m: f64 = key.trim().parse().map_err(|_| Error::Parse(format!("bad outcome label {key:?}")))?;
            let k = s - m;
            if (k - k.round()).abs() > 1e-9 || k < -1e-9 || k > (p.dim() - 1) as f64 + 1e-9 {
                return Err(Error::Parse(format!("outcome {key} is not an eigenvalue for N = {}", raw.n)));
            }
            counts[k.round() as usize] += c;
        }
        let shots = counts.iter().sum();
        MeasurementRecord::new(MeasurementSetting::new(SpinAxis::polar(raw.theta, raw.phi), shots)?, counts)
    }
}

pub fn write_records_jsonl<W: Write>(records: &[MeasurementRecord], mut out: W) -> Result<()> {
    for r in records {
        writeln!(out, "{}", r.to_json_line()?)?;
    }
    Ok(())
}

pub fn read_records_jsonl<R: BufRead>(input: R) -> Result<Vec<MeasurementRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(MeasurementRecord::from_json_line(&line)?);
        }
    }
    Ok(out)
}

/// Born probabilities `p_k = <m_n|rho|m_n>`, `m = S - k`, along `direction`.
pub fn outcome_probabilities<S: SpinState>(ops: &SpinOperators, state: &S, direction: &SpinAxis) -> Result<Vec<f64>> {
    check_dim(ops.dim(), state.dim())?;
    let u = ops.orienting_rotation(direction)?;
    let rotated = state.transform(&dagger(&u)).to_density();
    let mut probs = Vec::with_capacity(ops.dim());
    for k in 0..ops.dim() {
        let p = rotated.entries()[[k, k]].re;
        if p < -PSD_TOL {
            return Err(Error::NotPositive { min_eigenvalue: p });
        }
        probs.push(p.max(0.0));
    }
    Ok(probs)
}

fn sample_counts<R: Rng>(probs: &[f64], shots: u64, rng: &mut R) -> Result<Vec<u64>> {
    let dist = WeightedIndex::new(probs).map_err(|e| Error::InvalidState(e.to_string()))?;
    let mut counts = vec![0u64; probs.len()];
    for _ in 0..shots {
        counts[dist.sample(rng)] += 1;
    }
    Ok(counts)
}

/// Samples each setting independently; setting `i` draws from the stream
/// `(seed, i)`, so the result does not depend on thread scheduling.
pub fn simulate_measurements<S: SpinState>(
    ops: &SpinOperators,
    rho: &S,
    settings: &[MeasurementSetting],
    seed: u64,
) -> Result<Vec<MeasurementRecord>> {
    check_dim(ops.dim(), rho.dim())?;
    settings
        .par_iter()
        .enumerate()
        .map(|(i, setting)| {
            let probs = outcome_probabilities(ops, rho, &setting.direction)?;
            let counts = sample_counts(&probs, setting.shots, &mut rng::stream(seed, i as u64))?;
            MeasurementRecord::new(*setting, counts)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionConfig {
    pub max_iterations: usize,
    /// Stop once the per-shot log-likelihood rises by less than this.
    pub tolerance: f64,
    /// Master seed for resampling; reconstruction itself is deterministic.
    pub seed: u64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self { max_iterations: 2000, tolerance: 1e-10, seed: 0 }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub rho: DensityMatrix,
    pub converged: bool,
    pub iterations: usize,
    /// Per-shot log-likelihood, starting with the initial maximally mixed state.
    pub log_likelihood: Vec<f64>,
}

/// Relative frequencies below this are dropped. Exact binomial tails reach
/// ~1e-30, where the model probability is pure round-off and `f / p` in `R`
/// would blow up.
const NEGLIGIBLE_FREQUENCY: f64 = 1e-14;

/// Observed projectors `|v_j><v_j|` stacked as columns, with outcome frequencies.
struct Observations {
    vectors: Array2<C64>,
    weights: Array1<f64>,
}

impl Observations {
    fn build(ops: &SpinOperators, directions: &[SpinAxis], frequencies: &[Vec<f64>]) -> Result<Self> {
        if directions.len() != frequencies.len() {
            return Err(Error::InvalidParameter("one frequency vector per direction required".into()));
        }
        let total: f64 = frequencies.iter().flatten().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("no observations".into()));
        }
        let bases: Vec<Array2<C64>> =
            directions.par_iter().map(|d| ops.orienting_rotation(d)).collect::<Result<_>>()?;
        let mut columns = Vec::new();
        let mut weights = Vec::new();
        for (u, f) in bases.iter().zip(frequencies) {
            check_dim(ops.dim(), f.len())?;
            for (k, &w) in f.iter().enumerate() {
                if w / total > NEGLIGIBLE_FREQUENCY {
                    columns.push(u.column(k).to_owned());
                    weights.push(w / total);
                }
            }
        }
        let views: Vec<_> = columns.iter().map(|c| c.view().insert_axis(Axis(1))).collect();
        let vectors = ndarray::concatenate(Axis(1), &views).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(Self { vectors, weights: Array1::from(weights) })
    }

    /// Outcome probabilities `v_j^dagger rho v_j` under `rho`.
    fn probabilities(&self, rho: &Array2<C64>) -> Array1<f64> {
        let rv = rho.dot(&self.vectors);
        Array1::from_shape_fn(self.weights.len(), |j| {
            self.vectors.column(j).iter().zip(rv.column(j)).map(|(a, b)| (a.conj() * b).re).sum::<f64>()
        })
    }

    fn log_likelihood(&self, probs: &Array1<f64>) -> f64 {
        self.weights.iter().zip(probs).map(|(w, p)| w * p.max(f64::MIN_POSITIVE).ln()).sum()
    }

    /// `R = sum_j f_j / p_j |v_j><v_j|`.
    fn r_operator(&self, probs: &Array1<f64>) -> Array2<C64> {
        let scale = Array1::from_shape_fn(self.weights.len(), |j| self.weights[j] / probs[j].max(f64::MIN_POSITIVE));
        let scaled = &self.vectors * &scale.mapv(|s| C64::new(s, 0.0)).insert_axis(Axis(0));
        scaled.dot(&dagger(&self.vectors))
    }
}

const INITIAL_DILUTION: f64 = 10.0;
const MAX_DILUTION: f64 = 1e4;
const MIN_DILUTION: f64 = 1e-12;

/// Diluted `R rho R` iteration: `rho <- (I + e R) rho (I + e R) / Tr`, with `e`
/// halved until the log-likelihood does not decrease and doubled after each
/// accepted step.
fn maximize_likelihood(obs: &Observations, d: usize, config: &ReconstructionConfig) -> Result<Reconstruction> {
    config.validate()?;
    let mut rho = linalg::identity(d).mapv(|z| z / d as f64);
    let mut probs = obs.probabilities(&rho);
    let mut ll = obs.log_likelihood(&probs);
    let mut trace = vec![ll];
    let mut eps = INITIAL_DILUTION;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let r = obs.r_operator(&probs);
        let mut accepted = None;
        while eps >= MIN_DILUTION {
            let mut step = r.mapv(|z| z * eps);
            for i in 0..d {
                step[[i, i]] += 1.0;
            }
            let mut next = step.dot(&rho).dot(&step);
            linalg::symmetrize(&mut next);
            let tr = linalg::trace(&next).re;
            next.mapv_inplace(|z| z / tr);
            let next_probs = obs.probabilities(&next);
            let next_ll = obs.log_likelihood(&next_probs);
            if next_ll >= ll {
                accepted = Some((next, next_probs, next_ll));
                break;
            }
            eps *= 0.5;
        }
        let Some((next, next_probs, next_ll)) = accepted else {
            break;
        };
        let gain = next_ll - ll;
        rho = next;
        probs = next_probs;
        ll = next_ll;
        trace.push(ll);
        eps = (eps * 2.0).min(MAX_DILUTION);
        if gain < config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(Reconstruction { rho: DensityMatrix::from_raw(rho), converged, iterations, log_likelihood: trace })
}

/// Maximum-likelihood density matrix from measurement histograms.
pub fn reconstruct(ops: &SpinOperators, records: &[MeasurementRecord], config: &ReconstructionConfig) -> Result<Reconstruction> {
    if records.is_empty() {
        return Err(Error::InvalidParameter("no measurement records".into()));
    }
    for r in records {
        check_dim(ops.dim(), r.counts.len())?;
    }
    let directions: Vec<SpinAxis> = records.iter().map(|r| r.setting.direction).collect();
    let freqs: Vec<Vec<f64>> = records.iter().map(|r| r.counts.iter().map(|&c| c as f64).collect()).collect();
    maximize_likelihood(&Observations::build(ops, &directions, &freqs)?, ops.dim(), config)
}

/// Reconstruction from exact outcome probabilities (the infinite-shot limit),
/// equally weighted across directions.
pub fn reconstruct_from_probabilities(
    ops: &SpinOperators,
    directions: &[SpinAxis],
    probabilities: &[Vec<f64>],
    config: &ReconstructionConfig,
) -> Result<Reconstruction> {
    maximize_likelihood(&Observations::build(ops, directions, probabilities)?, ops.dim(), config)
}

/// Eigenvalues below this (times the dimension) are round-off of a zero;
/// left in, their square roots would bias fidelities by ~1e-8.
const EIGEN_FLOOR: f64 = 1e-15;

fn sqrt_psd(rho: &DensityMatrix) -> Result<Array2<C64>> {
    let (vals, vecs) = linalg::eigh(rho.entries())?;
    if vals[0] < -PSD_TOL {
        return Err(Error::NotPositive { min_eigenvalue: vals[0] });
    }
    let floor = EIGEN_FLOOR * rho.dim() as f64;
    Ok(linalg::reassemble(&vecs, &vals.mapv(|v| C64::new(if v > floor { v.sqrt() } else { 0.0 }, 0.0))))
}

/// `(Tr sqrt(sqrt(rho1) rho2 sqrt(rho1)))^2`.
pub fn uhlmann_fidelity(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    check_dim(rho1.dim(), rho2.dim())?;
    let s = sqrt_psd(rho1)?;
    let inner = s.dot(rho2.entries()).dot(&s);
    let vals = linalg::eigvalsh(&inner)?;
    if let Some(min) = rho2.eigenvalues()?.iter().copied().reduce(f64::min) {
        if min < -PSD_TOL {
            return Err(Error::NotPositive { min_eigenvalue: min });
        }
    }
    let floor = EIGEN_FLOOR * rho1.dim() as f64;
    let root: f64 = vals.iter().filter(|&&v| v > floor).map(|v| v.sqrt()).sum();
    Ok((root * root).clamp(0.0, 1.0))
}

/// `<psi|rho|psi>`, the Uhlmann fidelity with a pure reference.
pub fn pure_fidelity(psi: &PureState, rho: &DensityMatrix) -> Result<f64> {
    check_dim(psi.dim(), rho.dim())?;
    let v = psi.amplitudes();
    let rv = rho.entries().dot(v);
    let f: f64 = v.iter().zip(&rv).map(|(a, b)| (a.conj() * b).re).sum();
    Ok(f.clamp(0.0, 1.0))
}

/// How the tomographic pipeline obtains its data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShotsConfig {
    /// Exact Born probabilities, no sampling noise.
    Exact,
    Sampled { shots_per_direction: u64 },
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub otoc: OtocResult,
    pub samples: Vec<FotocSample>,
    /// Measurement records per displacement; empty for exact data.
    pub records: Vec<(f64, Vec<MeasurementRecord>)>,
    pub reconstructions_converged: bool,
}

/// How measurement seeds are assigned across displacements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedScheme {
    /// Every displacement samples with the pipeline seed. Neighbouring echo
    /// states then share most of their sampling noise, which largely cancels
    /// in the fitted curvature.
    #[default]
    Shared,
    /// Displacement `i` samples with `derive_seed(seed, i)`, as for
    /// physically separate runs.
    PerDisplacement,
}

impl SeedScheme {
    fn seed(self, master: u64, index: usize) -> u64 {
        match self {
            SeedScheme::Shared => master,
            SeedScheme::PerDisplacement => rng::derive_seed(master, index as u64),
        }
    }
}

/// Inputs shared by the tomographic pipeline and its bootstrap.
#[derive(Debug, Clone)]
pub struct PipelineSetup<'a> {
    pub ops: &'a SpinOperators,
    pub psi0: &'a PureState,
    pub directions: Vec<SpinAxis>,
    pub reconstruction: ReconstructionConfig,
    pub seed_scheme: SeedScheme,
}

impl<'a> PipelineSetup<'a> {
    /// The 41 Fibonacci directions and default reconstruction settings.
    pub fn new(ops: &'a SpinOperators, psi0: &'a PureState) -> Self {
        Self {
            ops,
            psi0,
            directions: fibonacci_directions(DEFAULT_DIRECTION_COUNT),
            reconstruction: ReconstructionConfig::default(),
            seed_scheme: SeedScheme::Shared,
        }
    }

    fn fidelity_from_records(&self, records: &[MeasurementRecord]) -> Result<(f64, bool)> {
        let rec = reconstruct(self.ops, records, &self.reconstruction)?;
        Ok((pure_fidelity(self.psi0, &rec.rho)?, rec.converged))
    }
}

/// Echo states measured and reconstructed for every displacement, then the
/// OTOC fitted from the reconstructed fidelities `<psi0|rho|psi0>`.
///
/// Measurement seeds per displacement follow `setup.seed_scheme`.
pub fn tomographic_fotoc_pipeline(
    setup: &PipelineSetup<'_>,
    h: &Array2<C64>,
    axis: &SpinAxis,
    delta_phi_grid: &[f64],
    t: f64,
    shots: ShotsConfig,
    seed: u64,
) -> Result<PipelineResult> {
    check_dim(setup.ops.dim(), setup.psi0.dim())?;
    if delta_phi_grid.len() < 5 {
        return Err(Error::IllConditionedFit(format!(
            "{} displacements, the fit needs at least 5",
            delta_phi_grid.len()
        )));
    }
    let echo = Echo::new(h, setup.ops, axis)?;
    let forward = echo.forward(setup.psi0, t);
    let outputs: Vec<(FotocSample, Vec<MeasurementRecord>, bool)> = delta_phi_grid
        .par_iter()
        .enumerate()
        .map(|(i, &dphi)| {
            let state = echo.complete(&forward, dphi, t);
            let (fidelity, records, converged) = match shots {
                ShotsConfig::Exact => {
                    let probs: Vec<Vec<f64>> = setup
                        .directions
                        .iter()
                        .map(|d| outcome_probabilities(setup.ops, &state, d))
                        .collect::<Result<_>>()?;
                    let rec = reconstruct_from_probabilities(setup.ops, &setup.directions, &probs, &setup.reconstruction)?;
                    (pure_fidelity(setup.psi0, &rec.rho)?, Vec::new(), rec.converged)
                }
                ShotsConfig::Sampled { shots_per_direction } => {
                    let settings: Vec<MeasurementSetting> = setup
                        .directions
                        .iter()
                        .map(|d| MeasurementSetting::new(*d, shots_per_direction))
                        .collect::<Result<_>>()?;
                    let records = simulate_measurements(setup.ops, &state, &settings, setup.seed_scheme.seed(seed, i))?;
                    let (f, ok) = setup.fidelity_from_records(&records)?;
                    (f, records, ok)
                }
            };
            Ok((FotocSample { delta_phi: dphi, fidelity, t }, records, converged))
        })
        .collect::<Result<_>>()?;
    let samples: Vec<FotocSample> = outputs.iter().map(|o| o.0).collect();
    let otoc = otoc_from_fotoc(&samples, t)?;
    let reconstructions_converged = outputs.iter().all(|o| o.2);
    let records = match shots {
        ShotsConfig::Exact => Vec::new(),
        ShotsConfig::Sampled { .. } => outputs.into_iter().map(|(s, r, _)| (s.delta_phi, r)).collect(),
    };
    Ok(PipelineResult { otoc, samples, records, reconstructions_converged })
}

/// Direct (sampling-free) FOTOC samples and fit, for comparison with the pipeline.
pub fn direct_fotoc(
    ops: &SpinOperators,
    psi0: &PureState,
    h: &Array2<C64>,
    axis: &SpinAxis,
    delta_phi_grid: &[f64],
    t: f64,
) -> Result<OtocResult> {
    let echo = Echo::new(h, ops, axis)?;
    otoc_from_fotoc(&echo_scan(&echo, psi0, delta_phi_grid, t), t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// OTOC fitted to the original records.
    pub estimate: f64,
    pub mean: f64,
    /// 16th and 84th percentiles of the resampled OTOCs.
    pub lower: f64,
    pub upper: f64,
    pub resamples: Vec<f64>,
}

impl BootstrapResult {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        (self.lower..=self.upper).contains(&value)
    }
}

pub const MIN_BOOTSTRAP_RESAMPLES: usize = 100;

/// Multinomial resample of one record from its own empirical distribution.
fn resample_record<R: Rng>(record: &MeasurementRecord, rng: &mut R) -> Result<MeasurementRecord> {
    let probs: Vec<f64> = record.counts.iter().map(|&c| c as f64).collect();
    MeasurementRecord::new(record.setting, sample_counts(&probs, record.setting.shots, rng)?)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap (68%) of the OTOC: each resample redraws every
/// setting's histogram with replacement, reconstructs all displacements and
/// refits.
///
/// Resample `b` of displacement group `i` draws from the stream
/// `(seed_i, b)`, where `seed_i` follows `setup.seed_scheme` applied to
/// `setup.reconstruction.seed`. Under [`SeedScheme::Shared`] every group
/// restarts the same stream, mirroring the correlated sampling of the pipeline.
pub fn bootstrap_otoc(
    setup: &PipelineSetup<'_>,
    records_by_dphi: &[(f64, Vec<MeasurementRecord>)],
    t: f64,
    resamples: usize,
) -> Result<BootstrapResult> {
    if resamples < MIN_BOOTSTRAP_RESAMPLES {
        return Err(Error::InvalidParameter(format!(
            "{resamples} resamples, need at least {MIN_BOOTSTRAP_RESAMPLES}"
        )));
    }
    let fit = |groups: &[(f64, Vec<MeasurementRecord>)]| -> Result<f64> {
        let samples = groups
            .iter()
            .map(|(dphi, recs)| Ok(FotocSample { delta_phi: *dphi, fidelity: setup.fidelity_from_records(recs)?.0, t }))
            .collect::<Result<Vec<_>>>()?;
        Ok(otoc_from_fotoc(&samples, t)?.otoc)
    };
    let estimate = fit(records_by_dphi)?;
    let seed = setup.reconstruction.seed;
    let mut values: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let groups = records_by_dphi
                .iter()
                .enumerate()
                .map(|(i, (dphi, recs))| {
                    let mut rng = rng::stream(setup.seed_scheme.seed(seed, i), b as u64);
                    let redrawn = recs.iter().map(|r| resample_record(r, &mut rng)).collect::<Result<Vec<_>>>()?;
                    Ok((*dphi, redrawn))
                })
                .collect::<Result<Vec<_>>>()?;
            fit(&groups)
        })
        .collect::<Result<_>>()?;
    let resampled = values.clone();
    values.sort_by(f64::total_cmp);
    Ok(BootstrapResult {
        estimate,
        mean: values.iter().sum::<f64>() / values.len() as f64,
        lower: percentile(&values, 0.16),
        upper: percentile(&values, 0.84),
        resamples: resampled,
    })
}
