//! Collective-spin Hamiltonians, their linear stability, and time evolution.
//!
//! Unitary evolution goes through a cached spectral decomposition of `H`, so
//! arbitrary times and the sign-flipped Hamiltonian come for free. Dissipative
//! evolution integrates the collective-dephasing master equation with a
//! fixed-step classical Runge-Kutta scheme.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::dicke::{CollectiveSpinParams, DensityMatrix, PureState, SpinAxis, SpinOperators, SpinState};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, dagger, I};
use crate::tolerance::HERMITIAN_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HamiltonianKind {
    /// One-axis twisting `chi S_z^2`.
    Oat,
    /// Twisting plus transverse field.
    Lmg,
    /// Two-axis twisting.
    Tat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeDirection {
    Forward,
    Reversed,
}

impl TimeDirection {
    pub fn sign(self) -> f64 {
        match self {
            TimeDirection::Forward => 1.0,
            TimeDirection::Reversed => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            TimeDirection::Forward => TimeDirection::Reversed,
            TimeDirection::Reversed => TimeDirection::Forward,
        }
    }
}

/// Parameters of the collective-spin Hamiltonian. `chi` and `omega` are in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub chi: f64,
    pub omega: f64,
    pub kind: HamiltonianKind,
    pub time_sign: TimeDirection,
}

impl HamiltonianSpec {
    pub fn oat(chi: f64) -> Self {
        Self { chi, omega: 0.0, kind: HamiltonianKind::Oat, time_sign: TimeDirection::Forward }
    }

    pub fn lmg(chi: f64, omega: f64) -> Self {
        Self { chi, omega, kind: HamiltonianKind::Lmg, time_sign: TimeDirection::Forward }
    }

    pub fn tat(chi: f64) -> Self {
        Self { chi, omega: 0.0, kind: HamiltonianKind::Tat, time_sign: TimeDirection::Forward }
    }

    /// Critically tuned LMG, `Omega = S chi`.
    pub fn critical_lmg(chi: f64, params: CollectiveSpinParams) -> Self {
        Self::lmg(chi, params.spin() * chi)
    }

    /// The same Hamiltonian with overall sign flipped (`chi` and `Omega` negated).
    pub fn reversed(self) -> Self {
        Self { time_sign: self.time_sign.flipped(), ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.chi.is_finite() || !self.omega.is_finite() {
            return Err(Error::InvalidParameter("chi and omega must be finite".into()));
        }
        Ok(())
    }

    fn cache_key(&self, n: usize) -> (u64, u64, HamiltonianKind, usize) {
        let omega = if self.kind == HamiltonianKind::Lmg { self.omega } else { 0.0 };
        (self.chi.to_bits(), omega.to_bits(), self.kind, n)
    }
}

/// Builds the Hamiltonian matrix.
///
/// * OAT: `chi S_z^2`
/// * LMG: `chi S_z^2 + Omega S_x`. With this relative sign the coherent
///   state along `+x` sits on the unstable fixed point for
///   `0 < Omega/(S chi) < 2`, consistent with [`classify_stability`].
/// * TAT: `(chi/2)(S_z^2 - S_y^2)`, the quadratic form the critical LMG
///   model reduces to around `+x` (same squeezing rate `S chi`).
///
/// Everything is multiplied by the time sign.
pub fn build_hamiltonian(spec: &HamiltonianSpec, ops: &SpinOperators) -> Result<Array2<C64>> {
    spec.validate()?;
    let sz2 = ops.sz.dot(&ops.sz);
    let sign = spec.time_sign.sign();
    let h = match spec.kind {
        HamiltonianKind::Oat => sz2.mapv(|z| z * spec.chi),
        HamiltonianKind::Lmg => {
            let mut h = sz2.mapv(|z| z * spec.chi);
            h.scaled_add(C64::new(spec.omega, 0.0), &ops.sx);
            h
        }
        HamiltonianKind::Tat => {
            let sy2 = ops.sy.dot(&ops.sy);
            (sz2 - sy2).mapv(|z| z * (0.5 * spec.chi))
        }
    };
    let mut h = h.mapv(|z| z * sign);
    linalg::symmetrize(&mut h);
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Periodic,
    Unstable,
    Marginal,
}

/// Linearized (Holstein-Primakoff) dynamics around the `+x` coherent state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// `Omega / (S chi)`; infinite when `chi = 0`.
    pub ratio: f64,
    pub regime: Regime,
    /// Oscillation frequency (periodic) or Lyapunov exponent (unstable), rad/s.
    pub rate: f64,
}

impl StabilityReport {
    pub fn frequency(&self) -> Option<f64> {
        (self.regime == Regime::Periodic).then_some(self.rate)
    }

    pub fn lyapunov(&self) -> Option<f64> {
        (self.regime == Regime::Unstable).then_some(self.rate)
    }
}

/// Classifies the small-oscillation dynamics via `w^2 = Omega (Omega - 2 S chi)`.
///
/// `chi = 0` is reported as the marginal free-rotation case.
pub fn classify_stability(chi: f64, omega: f64, s: f64) -> StabilityReport {
    if chi == 0.0 {
        return StabilityReport { ratio: f64::INFINITY, regime: Regime::Marginal, rate: 0.0 };
    }
    let sc = s * chi;
    let w2 = omega * (omega - 2.0 * sc);
    let scale = sc * sc;
    let (regime, rate) = if w2.abs() <= 1e-14 * scale {
        (Regime::Marginal, 0.0)
    } else if w2 > 0.0 {
        (Regime::Periodic, w2.sqrt())
    } else {
        (Regime::Unstable, (-w2).sqrt())
    };
    StabilityReport { ratio: omega / sc, regime, rate }
}

/// Spectral decomposition `H = V diag(E) V^dagger` used for `exp(-iHt)`.
#[derive(Debug, Clone)]
pub struct Propagator {
    energies: Array1<f64>,
    vectors: Array2<C64>,
}

impl Propagator {
    pub fn new(h: &Array2<C64>) -> Result<Self> {
        let (r, c) = h.dim();
        check_dim(r, c)?;
        let deviation = linalg::hermitian_deviation(h.view());
        let scale = h.iter().fold(1.0f64, |m, z| m.max(z.norm()));
        if !deviation.is_finite() || deviation > HERMITIAN_TOL * scale {
            return Err(Error::NonHermitian { deviation });
        }
        let (energies, vectors) = linalg::eigh(h)?;
        Ok(Self { energies, vectors })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &Array1<f64> {
        &self.energies
    }

    /// Propagator of `-H`.
    pub fn reversed(&self) -> Self {
        Self { energies: self.energies.mapv(|e| -e), vectors: self.vectors.clone() }
    }

    pub fn hamiltonian(&self) -> Array2<C64> {
        linalg::reassemble(&self.vectors, &self.energies.mapv(|e| C64::new(e, 0.0)))
    }

    fn phases(&self, t: f64) -> Array1<C64> {
        self.energies.mapv(|e| C64::from_polar(1.0, -e * t))
    }

    /// `exp(-iHt)`.
    pub fn unitary(&self, t: f64) -> Array2<C64> {
        linalg::reassemble(&self.vectors, &self.phases(t))
    }

    /// `exp(-iHt) v` in `O(d^2)`.
    pub fn apply(&self, v: &Array1<C64>, t: f64) -> Array1<C64> {
        let coeffs = dagger(&self.vectors).dot(v) * self.phases(t);
        self.vectors.dot(&coeffs)
    }

    /// Heisenberg-picture operator `exp(iHt) A exp(-iHt)`.
    pub fn heisenberg(&self, a: &Array2<C64>, t: f64) -> Array2<C64> {
        let u = self.unitary(t);
        dagger(&u).dot(a).dot(&u)
    }
}

type CacheKey = (u64, u64, HamiltonianKind, usize);

/// Thread-safe cache of forward-time eigendata keyed by `(spec, N)`.
///
/// Reversed-time requests reuse the forward decomposition.
#[derive(Debug, Default)]
pub struct PropagatorCache {
    inner: RwLock<HashMap<CacheKey, Arc<Propagator>>>,
}

impl PropagatorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, spec: &HamiltonianSpec, ops: &SpinOperators) -> Result<Arc<Propagator>> {
        let key = spec.cache_key(ops.params().particles());
        let cached = self.inner.read().expect("propagator cache poisoned").get(&key).cloned();
        let forward = match cached {
            Some(p) => p,
            None => {
                let forward_spec = HamiltonianSpec { time_sign: TimeDirection::Forward, ..*spec };
                let built = Arc::new(Propagator::new(&build_hamiltonian(&forward_spec, ops)?)?);
                let mut guard = self.inner.write().expect("propagator cache poisoned");
                guard.entry(key).or_insert(built).clone()
            }
        };
        Ok(match spec.time_sign {
            TimeDirection::Forward => forward,
            TimeDirection::Reversed => Arc::new(forward.reversed()),
        })
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("propagator cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Applies `exp(-iHt)` to a pure state or density matrix.
pub fn evolve_unitary<S: SpinState>(h: &Array2<C64>, state: &S, t: f64) -> Result<S> {
    check_dim(h.nrows(), state.dim())?;
    let p = Propagator::new(h)?;
    Ok(state.propagate(&p, t))
}

/// Collective dephasing `gamma (L rho L - {L^2, rho}/2)` with `L = n.S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LindbladSpec {
    pub gamma: f64,
    pub jump_axis: SpinAxis,
}

impl LindbladSpec {
    pub fn new(gamma: f64, jump_axis: SpinAxis) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!("dephasing rate {gamma} must be >= 0")));
        }
        Ok(Self { gamma, jump_axis })
    }
}

/// Default step-size safety factor: `dt <= safety / (||H|| + gamma S^2)`.
pub const DEFAULT_STEP_SAFETY: f64 = 0.01;
/// Trace drift beyond which integration is rejected.
pub const MAX_TRACE_DRIFT: f64 = 1e-6;

/// Fixed-step RK4 integrator for the collective-dephasing master equation.
#[derive(Debug, Clone)]
pub struct LindbladIntegrator {
    h: Array2<C64>,
    jump: Array2<C64>,
    jump_sq: Array2<C64>,
    gamma: f64,
    max_dt: f64,
}

impl LindbladIntegrator {
    pub fn new(h: &Array2<C64>, spec: &LindbladSpec, ops: &SpinOperators) -> Result<Self> {
        Self::with_safety(h, spec, ops, DEFAULT_STEP_SAFETY)
    }

    pub fn with_safety(h: &Array2<C64>, spec: &LindbladSpec, ops: &SpinOperators, safety: f64) -> Result<Self> {
        check_dim(ops.dim(), h.nrows())?;
        let spec = LindbladSpec::new(spec.gamma, spec.jump_axis)?;
        if !(safety > 0.0) {
            return Err(Error::InvalidParameter("step safety factor must be positive".into()));
        }
        let deviation = linalg::hermitian_deviation(h.view());
        if deviation > HERMITIAN_TOL * h.iter().fold(1.0f64, |m, z| m.max(z.norm())) {
            return Err(Error::NonHermitian { deviation });
        }
        let norm = linalg::spectral_norm_hermitian(h)?;
        let s = ops.spin();
        let scale = norm + spec.gamma * s * s;
        let max_dt = if scale > 0.0 { safety / scale } else { f64::INFINITY };
        let jump = ops.component(&spec.jump_axis);
        let jump_sq = jump.dot(&jump);
        Ok(Self { h: h.clone(), jump, jump_sq, gamma: spec.gamma, max_dt })
    }

    /// Largest step allowed by the heuristic.
    pub fn max_step(&self) -> f64 {
        self.max_dt
    }

    /// Right-hand side `-i[H, rho] + gamma D[rho]`.
    pub fn generator(&self, rho: &Array2<C64>) -> Array2<C64> {
        let hr = self.h.dot(rho);
        // -i (H rho - rho H) = -i H rho + (-i H rho)^dagger for Hermitian rho
        let mut out = hr.mapv(|z| -I * z);
        let adj = dagger(&out);
        out += &adj;
        if self.gamma > 0.0 {
            let lr = self.jump.dot(rho);
            let lrl = lr.dot(&self.jump);
            let l2r = self.jump_sq.dot(rho);
            let anti = &l2r + &dagger(&l2r);
            out.scaled_add(C64::new(self.gamma, 0.0), &lrl);
            out.scaled_add(C64::new(-0.5 * self.gamma, 0.0), &anti);
        }
        out
    }

    /// Integrates for time `t >= 0`.
    ///
    /// With `dt = None` the step is the heuristic maximum, shrunk so that an
    /// integer number of steps lands exactly on `t`.
    pub fn evolve(&self, rho: &DensityMatrix, t: f64, dt: Option<f64>) -> Result<DensityMatrix> {
        check_dim(self.h.nrows(), rho.dim())?;
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!("evolution time {t} must be finite and >= 0")));
        }
        if t == 0.0 {
            return Ok(rho.clone());
        }
        let target = match dt {
            Some(d) if d > 0.0 && d.is_finite() => d,
            Some(d) => return Err(Error::InvalidParameter(format!("step {d} must be positive"))),
            None => self.max_dt,
        };
        let steps = (t / target).ceil().max(1.0) as usize;
        let h = t / steps as f64;
        let half = C64::new(0.5 * h, 0.0);
        let full = C64::new(h, 0.0);
        let sixth = C64::new(h / 6.0, 0.0);
        let third = C64::new(h / 3.0, 0.0);

        let mut state = rho.entries().clone();
        let start_trace = linalg::trace(&state).re;
        for _ in 0..steps {
            let k1 = self.generator(&state);
            let k2 = self.generator(&(&state + &k1.mapv(|z| z * half)));
            let k3 = self.generator(&(&state + &k2.mapv(|z| z * half)));
            let k4 = self.generator(&(&state + &k3.mapv(|z| z * full)));
            state.scaled_add(sixth, &k1);
            state.scaled_add(third, &k2);
            state.scaled_add(third, &k3);
            state.scaled_add(sixth, &k4);
            linalg::symmetrize(&mut state);
            // |rho_ij| <= 1 for any density matrix; larger entries mean the step diverged
            let blown = state.iter().any(|z| !z.re.is_finite() || !z.im.is_finite() || z.norm() > 1.0 + 1e-6);
            if blown {
                return Err(Error::StepTooLarge { drift: f64::INFINITY });
            }
        }
        let drift = (linalg::trace(&state).re - start_trace).abs();
        if drift > MAX_TRACE_DRIFT {
            return Err(Error::StepTooLarge { drift });
        }
        Ok(DensityMatrix::from_raw(state))
    }
}

/// One-shot convenience wrapper around [`LindbladIntegrator`].
pub fn evolve_lindblad(
    h: &Array2<C64>,
    spec: &LindbladSpec,
    ops: &SpinOperators,
    rho: &DensityMatrix,
    t: f64,
    dt: Option<f64>,
) -> Result<DensityMatrix> {
    LindbladIntegrator::new(h, spec, ops)?.evolve(rho, t, dt)
}

/// Closed-form state of one-axis twisting with collective `S_z` dephasing,
/// starting from the coherent state `(theta, phi)`:
///
/// `rho_mm' = exp(-i(m^2 - m'^2) chi t / 2 - gamma t (m - m')^2 / (2N)) c_m c_m'^*`.
///
/// This parametrization corresponds to `H = (chi/2) S_z^2` with jump operator
/// `S_z / sqrt(N)`; for `H = chi_0 S_z^2` and rate `gamma_0` pass
/// `chi = 2 chi_0`, `gamma = N gamma_0`. Evaluated directly from the
/// amplitudes, independent of any integrator.
pub fn dephased_oat_state(params: CollectiveSpinParams, theta: f64, phi: f64, chi: f64, gamma: f64, t: f64) -> DensityMatrix {
    let c = crate::dicke::css(params, theta, phi);
    let amps = c.amplitudes();
    let n = params.particles() as f64;
    let d = params.dim();
    let entries = Array2::from_shape_fn((d, d), |(i, j)| {
        let (m, mp) = (params.m_at(i), params.m_at(j));
        let exponent = C64::new(
            -gamma * t * (m - mp).powi(2) / (2.0 * n),
            -(m * m - mp * mp) * chi * t / 2.0,
        );
        exponent.exp() * amps[i] * amps[j].conj()
    });
    DensityMatrix::from_raw(entries)
}

/// Convenience: evolve a pure state under a Hamiltonian spec.
pub fn evolve_spec(spec: &HamiltonianSpec, ops: &SpinOperators, psi: &PureState, t: f64) -> Result<PureState> {
    let h = build_hamiltonian(spec, ops)?;
    evolve_unitary(&h, psi, t)
}
