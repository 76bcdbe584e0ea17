//! Signal amplification through time-reversed interaction (SATIN).
//!
//! Forward evolution under `H` for time `t`, a small rotation `dphi` about
//! `S_a`, then evolution under `-H` for the same time. The displacement of the
//! final mean spin, relative to that of an unentangled state, is the signal
//! amplification `G`; the final projection noise normalized to the standard
//! quantum limit is `N^2`.

use std::f64::consts::PI;
use std::io::Write;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dicke::{DensityMatrix, PureState, SpinAxis, SpinOperators, SpinState, State};
use crate::dynamics::{build_hamiltonian, HamiltonianSpec, LindbladIntegrator, LindbladSpec, Propagator};
use crate::error::{check_dim, Error, Result};
use crate::observables::{maximize_periodic, mean_spin, spin_moments};
use crate::scrambling::Echo;

pub const DEFAULT_ALPHA: f64 = PI / 4.0;
pub const DEFAULT_PROBE: f64 = 0.005;
/// Coarse grid of the readout-direction search.
pub const READOUT_SCAN_POINTS: usize = 64;
/// Responses below this fraction of `S` count as vanishing.
const VANISHING_RESPONSE: f64 = 1e-9;

/// Direction along which the final spin displacement is read out.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReadoutAxis {
    /// The yz-plane direction of largest `|response|`, found per evolution
    /// time by a 64-point scan refined by golden section.
    #[default]
    MaxResponse,
    Fixed { axis: SpinAxis },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatinConfig {
    /// Forward (and reverse) evolution time in units of `1/chi`.
    pub time: f64,
    /// Signal axis `S_y cos(alpha) + S_z sin(alpha)`.
    pub alpha: f64,
    /// Central-difference step for the signal derivative.
    pub delta_phi_probe: f64,
    pub readout_axis: ReadoutAxis,
    pub hamiltonian: HamiltonianSpec,
    /// Dephasing applied during both legs.
    pub lindblad: Option<LindbladSpec>,
    /// Integrator step; the integrator's heuristic when absent.
    pub lindblad_dt: Option<f64>,
    /// Additive detection variance in units of the standard quantum limit.
    pub detection_noise: f64,
}

impl SatinConfig {
    pub fn new(hamiltonian: HamiltonianSpec, time: f64) -> Self {
        Self {
            time,
            alpha: DEFAULT_ALPHA,
            delta_phi_probe: DEFAULT_PROBE,
            readout_axis: ReadoutAxis::MaxResponse,
            hamiltonian,
            lindblad: None,
            lindblad_dt: None,
            detection_noise: 0.0,
        }
    }

    pub fn with_lindblad(mut self, spec: LindbladSpec) -> Self {
        self.lindblad = Some(spec);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.hamiltonian.validate()?;
        if !(self.time >= 0.0 && self.time.is_finite()) {
            return Err(Error::InvalidParameter(format!("time {} must be finite and >= 0", self.time)));
        }
        if !self.alpha.is_finite() {
            return Err(Error::InvalidParameter("alpha must be finite".into()));
        }
        if !(self.delta_phi_probe > 0.0 && self.delta_phi_probe.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "probe step {} must be positive",
                self.delta_phi_probe
            )));
        }
        if !(self.detection_noise >= 0.0 && self.detection_noise.is_finite()) {
            return Err(Error::InvalidParameter("detection noise must be finite and >= 0".into()));
        }
        if let Some(l) = &self.lindblad {
            LindbladSpec::new(l.gamma, l.jump_axis)?;
        }
        Ok(())
    }

    pub fn signal_axis(&self) -> SpinAxis {
        SpinAxis::in_plane(self.alpha)
    }
}

/// One row of a gain sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatinResult {
    #[serde(rename = "S_chi_t")]
    pub s_chi_t: f64,
    pub g_sq: f64,
    pub n_sq: f64,
    pub gain_db: f64,
}

impl SatinResult {
    pub fn new(s_chi_t: f64, g_sq: f64, n_sq: f64) -> Self {
        Self { s_chi_t, g_sq, n_sq, gain_db: 10.0 * (g_sq / n_sq).log10() }
    }
}

/// Signal amplification and the readout direction it was measured along.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalGain {
    pub g: f64,
    pub readout: SpinAxis,
    /// `d<S_readout>/d(dphi)` after the echo.
    pub response: f64,
    /// Same quantity for the initial state without evolution.
    pub css_response: f64,
}

enum Legs {
    Unitary(Echo),
    Dissipative { forward: LindbladIntegrator, reverse: LindbladIntegrator, dt: Option<f64> },
}

/// The protocol for a fixed Hamiltonian, evaluated at any evolution time.
pub struct SatinEngine<'a> {
    ops: &'a SpinOperators,
    legs: Legs,
    h: Array2<C64>,
    signal: SpinAxis,
    probe: f64,
    readout: ReadoutAxis,
    detection_noise: f64,
    chi: f64,
}

impl<'a> SatinEngine<'a> {
    pub fn new(ops: &'a SpinOperators, config: &SatinConfig) -> Result<Self> {
        config.validate()?;
        let h = build_hamiltonian(&config.hamiltonian, ops)?;
        Self::with_hamiltonian(ops, h, config)
    }

    /// Uses the given Hamiltonian matrix; `config.hamiltonian` only supplies
    /// `chi` for the reported `S chi t`.
    pub fn with_hamiltonian(ops: &'a SpinOperators, h: Array2<C64>, config: &SatinConfig) -> Result<Self> {
        config.validate()?;
        check_dim(ops.dim(), h.nrows())?;
        let signal = config.signal_axis();
        let legs = match &config.lindblad {
            None => Legs::Unitary(Echo::with_propagator(Propagator::new(&h)?, ops, &signal)?),
            Some(spec) => Legs::Dissipative {
                forward: LindbladIntegrator::new(&h, spec, ops)?,
                reverse: LindbladIntegrator::new(&h.mapv(|z| -z), spec, ops)?,
                dt: config.lindblad_dt,
            },
        };
        Ok(Self {
            ops,
            legs,
            h,
            signal,
            probe: config.delta_phi_probe,
            readout: config.readout_axis,
            detection_noise: config.detection_noise,
            chi: config.hamiltonian.chi,
        })
    }

    pub fn hamiltonian(&self) -> &Array2<C64> {
        &self.h
    }

    fn forward(&self, psi0: &PureState, t: f64) -> Result<State> {
        check_dim(self.ops.dim(), psi0.dim())?;
        match &self.legs {
            Legs::Unitary(echo) => Ok(State::Pure(echo.forward(psi0, t))),
            Legs::Dissipative { forward, dt, .. } => {
                Ok(State::Mixed(forward.evolve(&DensityMatrix::from_pure(psi0), t, *dt)?))
            }
        }
    }

    fn finish(&self, forward_state: &State, delta_phi: f64, t: f64) -> Result<State> {
        match &self.legs {
            Legs::Unitary(echo) => Ok(echo.complete(forward_state, delta_phi, t)),
            Legs::Dissipative { reverse, dt, .. } => {
                let rotated = crate::dicke::rotate(self.ops, &forward_state.to_density(), &self.signal, delta_phi)?;
                Ok(State::Mixed(reverse.evolve(&rotated, t, *dt)?))
            }
        }
    }

    /// Final state of the protocol.
    pub fn run(&self, psi0: &PureState, delta_phi: f64, t: f64) -> Result<State> {
        let fwd = self.forward(psi0, t)?;
        self.finish(&fwd, delta_phi, t)
    }

    /// `(<S>(+probe) - <S>(-probe)) / (2 probe)` as a vector.
    fn response_vector(&self, plus: &State, minus: &State) -> Result<[f64; 3]> {
        let a = mean_spin(self.ops, plus)?;
        let b = mean_spin(self.ops, minus)?;
        Ok([0, 1, 2].map(|i| (a[i] - b[i]) / (2.0 * self.probe)))
    }

    fn select_readout(&self, r: [f64; 3]) -> SpinAxis {
        match self.readout {
            ReadoutAxis::Fixed { axis } => axis,
            ReadoutAxis::MaxResponse => {
                let along = |a: f64| (r[1] * a.cos() + r[2] * a.sin()).abs();
                let a = maximize_periodic(along, PI, READOUT_SCAN_POINTS, 1e-9).rem_euclid(PI);
                SpinAxis::in_plane(a)
            }
        }
    }

    fn project(r: [f64; 3], axis: &SpinAxis) -> f64 {
        let n = axis.unit_vector();
        n[0] * r[0] + n[1] * r[1] + n[2] * r[2]
    }

    fn css_response(&self, psi0: &PureState) -> Result<f64> {
        let plus = State::Pure(crate::dicke::rotate(self.ops, psi0, &self.signal, self.probe)?);
        let minus = State::Pure(crate::dicke::rotate(self.ops, psi0, &self.signal, -self.probe)?);
        let r = self.response_vector(&plus, &minus)?;
        let axis = self.select_readout(r);
        let value = Self::project(r, &axis).abs();
        if value < VANISHING_RESPONSE * self.ops.spin().max(1.0) {
            return Err(Error::VanishingResponse);
        }
        Ok(value)
    }

    fn gain_and_noise(&self, psi0: &PureState, t: f64) -> Result<(SignalGain, f64)> {
        let fwd = self.forward(psi0, t)?;
        let plus = self.finish(&fwd, self.probe, t)?;
        let minus = self.finish(&fwd, -self.probe, t)?;
        let r = self.response_vector(&plus, &minus)?;
        let readout = self.select_readout(r);
        let response = Self::project(r, &readout);
        let css_response = self.css_response(psi0)?;
        let echo = self.finish(&fwd, 0.0, t)?;
        let var = spin_moments(self.ops, &echo, &readout)?.variance;
        let n_sq = var / (self.ops.spin() / 2.0) + self.detection_noise;
        Ok((SignalGain { g: response.abs() / css_response, readout, response, css_response }, n_sq))
    }

    pub fn signal_gain(&self, psi0: &PureState, t: f64) -> Result<SignalGain> {
        Ok(self.gain_and_noise(psi0, t)?.0)
    }

    pub fn metrological_gain(&self, psi0: &PureState, t: f64) -> Result<SatinResult> {
        let (g, n_sq) = self.gain_and_noise(psi0, t)?;
        Ok(SatinResult::new(self.ops.spin() * self.chi * t, g.g * g.g, n_sq))
    }

    /// Unnormalized noise along a given axis after the `dphi = 0` echo.
    pub fn echo_noise(&self, psi0: &PureState, t: f64, axis: &SpinAxis) -> Result<f64> {
        let echo = self.run(psi0, 0.0, t)?;
        Ok(spin_moments(self.ops, &echo, axis)?.variance / (self.ops.spin() / 2.0) + self.detection_noise)
    }
}

/// Final state of the forward / rotate / reverse sequence.
pub fn run_satin(ops: &SpinOperators, psi0: &PureState, config: &SatinConfig, delta_phi: f64) -> Result<State> {
    SatinEngine::new(ops, config)?.run(psi0, delta_phi, config.time)
}

pub fn signal_gain(ops: &SpinOperators, psi0: &PureState, config: &SatinConfig) -> Result<SignalGain> {
    SatinEngine::new(ops, config)?.signal_gain(psi0, config.time)
}

/// `N^2` along the readout direction selected by the signal.
pub fn noise_n2(ops: &SpinOperators, psi0: &PureState, config: &SatinConfig) -> Result<f64> {
    Ok(metrological_gain(ops, psi0, config)?.n_sq)
}

pub fn metrological_gain(ops: &SpinOperators, psi0: &PureState, config: &SatinConfig) -> Result<SatinResult> {
    SatinEngine::new(ops, config)?.metrological_gain(psi0, config.time)
}

/// One [`SatinResult`] per time, in grid order. `config.time` is ignored.
pub fn gain_vs_time_sweep(
    ops: &SpinOperators,
    psi0: &PureState,
    config: &SatinConfig,
    t_grid: &[f64],
) -> Result<Vec<SatinResult>> {
    if t_grid.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::InvalidParameter("time grid must be non-decreasing".into()));
    }
    let engine = SatinEngine::new(ops, config)?;
    t_grid.par_iter().map(|&t| engine.metrological_gain(psi0, t)).collect()
}

/// Writes a sweep as CSV with header `S_chi_t,g_sq,n_sq,gain_db`.
pub fn write_satin_csv<W: Write>(rows: &[SatinResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
