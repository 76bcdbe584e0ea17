//! Fidelity out-of-time-order correlators.
//!
//! The echo `U_t = exp(iHt) exp(-i S_a dphi) exp(-iHt)` displaces the initial
//! state by the Heisenberg-picture rotation `exp(-i S_a(t) dphi)`. The FOTOC
//! `F(dphi) = Tr(U_t rho U_t^dagger rho)` has curvature
//! `-F''/2 = Tr(S_a(t)^2 rho^2) - Tr(S_a(t) rho S_a(t) rho)`, which is the
//! OTOC `I(t)` extracted here by a parabola fit.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dicke::{SpinAxis, SpinOperators, SpinState};
use crate::dynamics::Propagator;
use crate::error::{check_dim, Error, Result};
use crate::fit::polyfit;
use crate::linalg;

/// Displacements used when none are given, in radians.
pub const DEFAULT_DELTA_PHI_GRID: [f64; 7] = [-0.01, -0.005, -0.002, 0.0, 0.002, 0.005, 0.01];

/// Beyond this `|dphi|` a FOTOC sample is outside the quadratic regime.
pub const QUADRATIC_REGIME_LIMIT: f64 = 0.1;

/// One point of `F(t; dphi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FotocSample {
    pub delta_phi: f64,
    pub fidelity: f64,
    pub t: f64,
}

impl FotocSample {
    /// True when `|dphi|` exceeds [`QUADRATIC_REGIME_LIMIT`].
    pub fn is_flagged(&self) -> bool {
        self.delta_phi.abs() > QUADRATIC_REGIME_LIMIT
    }
}

/// Parabola fit `F ~ peak - otoc (dphi - offset)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OtocResult {
    pub otoc: f64,
    pub otoc_stderr: f64,
    pub fit_offset: f64,
    pub fit_peak: f64,
    pub t: f64,
}

/// `exp(iHt) A exp(-iHt)`.
pub fn heisenberg_operator(h: &Array2<C64>, a: &Array2<C64>, t: f64) -> Result<Array2<C64>> {
    check_dim(h.nrows(), a.nrows())?;
    check_dim(h.ncols(), a.ncols())?;
    Ok(Propagator::new(h)?.heisenberg(a, t))
}

/// Evolution and signal generator of the echo, decomposed once and reusable
/// for any evolution time.
pub struct Echo {
    propagator: Propagator,
    generator_vectors: Array2<C64>,
    spin: f64,
}

impl Echo {
    pub fn new(h: &Array2<C64>, ops: &SpinOperators, axis: &SpinAxis) -> Result<Self> {
        check_dim(ops.dim(), h.nrows())?;
        Self::with_propagator(Propagator::new(h)?, ops, axis)
    }

    pub fn with_propagator(propagator: Propagator, ops: &SpinOperators, axis: &SpinAxis) -> Result<Self> {
        check_dim(ops.dim(), propagator.dim())?;
        let (_, generator_vectors) = linalg::eigh(&ops.component(axis))?;
        Ok(Self { propagator, generator_vectors, spin: ops.spin() })
    }

    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }

    /// `exp(-i S_a dphi)`.
    pub fn signal_rotation(&self, delta_phi: f64) -> Array2<C64> {
        let d = self.propagator.dim();
        let phases = Array1::from_shape_fn(d, |k| C64::from_polar(1.0, -delta_phi * (-self.spin + k as f64)));
        linalg::reassemble(&self.generator_vectors, &phases)
    }

    /// State after the forward leg.
    pub fn forward<S: SpinState>(&self, state: &S, t: f64) -> S {
        state.propagate(&self.propagator, t)
    }

    /// Rotation followed by the reversed leg, applied to an already forward-evolved state.
    pub fn complete<S: SpinState>(&self, forward: &S, delta_phi: f64, t: f64) -> S {
        forward.transform(&self.signal_rotation(delta_phi)).propagate(&self.propagator, -t)
    }

    /// `U_t state`.
    pub fn apply<S: SpinState>(&self, state: &S, delta_phi: f64, t: f64) -> S {
        self.complete(&self.forward(state, t), delta_phi, t)
    }
}

/// `F(t; dphi) = Tr(U_t rho U_t^dagger rho)`.
pub fn fotoc<S: SpinState>(
    h: &Array2<C64>,
    ops: &SpinOperators,
    rho0: &S,
    axis: &SpinAxis,
    delta_phi: f64,
    t: f64,
) -> Result<FotocSample> {
    check_dim(ops.dim(), rho0.dim())?;
    let echo = Echo::new(h, ops, axis)?;
    let fidelity = echo.apply(rho0, delta_phi, t).overlap(rho0);
    Ok(FotocSample { delta_phi, fidelity, t })
}

/// FOTOC over a grid of displacements, sharing the forward leg.
///
/// Samples are returned in grid order.
pub fn fotoc_scan<S: SpinState>(
    h: &Array2<C64>,
    ops: &SpinOperators,
    rho0: &S,
    axis: &SpinAxis,
    delta_phis: &[f64],
    t: f64,
) -> Result<Vec<FotocSample>> {
    check_dim(ops.dim(), rho0.dim())?;
    let echo = Echo::new(h, ops, axis)?;
    Ok(echo_scan(&echo, rho0, delta_phis, t))
}

/// FOTOC samples from a prepared [`Echo`], in grid order.
pub fn echo_scan<S: SpinState>(echo: &Echo, rho0: &S, delta_phis: &[f64], t: f64) -> Vec<FotocSample> {
    let forward = echo.forward(rho0, t);
    delta_phis
        .par_iter()
        .map(|&dphi| FotocSample { delta_phi: dphi, fidelity: echo.complete(&forward, dphi, t).overlap(rho0), t })
        .collect()
}

/// Least-squares parabola through FOTOC samples.
///
/// Requires at least five samples, displacements of both signs and three
/// distinct abscissae.
pub fn otoc_from_fotoc(samples: &[FotocSample], t: f64) -> Result<OtocResult> {
    if samples.len() < 5 {
        return Err(Error::IllConditionedFit(format!("{} samples, need at least 5", samples.len())));
    }
    if !(samples.iter().any(|s| s.delta_phi > 0.0) && samples.iter().any(|s| s.delta_phi < 0.0)) {
        return Err(Error::IllConditionedFit("displacements must take both signs".into()));
    }
    let x: Vec<f64> = samples.iter().map(|s| s.delta_phi).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.fidelity).collect();
    let fit = polyfit(&x, &y, 2)?;
    let [a0, a1, a2] = [fit.coefficients[0], fit.coefficients[1], fit.coefficients[2]];
    let c2 = -a2;
    let offset = if c2 != 0.0 { a1 / (2.0 * c2) } else { 0.0 };
    Ok(OtocResult {
        otoc: c2,
        otoc_stderr: fit.std_errors[2],
        fit_offset: offset,
        fit_peak: a0 + c2 * offset * offset,
        t,
    })
}

fn density_entries<S: SpinState>(rho0: &S) -> Array2<C64> {
    rho0.to_density().into_entries()
}

/// Exact curvature `Tr(S_a(t)^2 rho^2) - Tr(S_a(t) rho S_a(t) rho)`; the
/// Heisenberg-picture variance for pure states.
pub fn otoc_exact<S: SpinState>(h: &Array2<C64>, ops: &SpinOperators, rho0: &S, axis: &SpinAxis, t: f64) -> Result<f64> {
    check_dim(ops.dim(), rho0.dim())?;
    let a = heisenberg_operator(h, &ops.component(axis), t)?;
    let rho = density_entries(rho0);
    let a_rho = a.dot(&rho);
    let square = linalg::trace_product(&a_rho, &a_rho).re;
    let rho2 = rho.dot(&rho);
    let a2 = a.dot(&a);
    Ok(linalg::trace_product(&a2, &rho2).re - square)
}

/// Literal trace form `Tr(S_a(t) rho S_a(t) rho)`; equals `<S_a(t)>^2` for
/// pure states. Diagnostic only; the OTOC proper is the curvature.
pub fn otoc_literal_trace<S: SpinState>(
    h: &Array2<C64>,
    ops: &SpinOperators,
    rho0: &S,
    axis: &SpinAxis,
    t: f64,
) -> Result<f64> {
    check_dim(ops.dim(), rho0.dim())?;
    let a = heisenberg_operator(h, &ops.component(axis), t)?;
    let a_rho = a.dot(&density_entries(rho0));
    Ok(linalg::trace_product(&a_rho, &a_rho).re)
}

/// Writes samples as CSV with header `delta_phi,fidelity,t`.
pub fn write_fotoc_csv<W: Write>(samples: &[FotocSample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in samples {
        w.serialize(s).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_fotoc_csv<R: Read>(input: R) -> Result<Vec<FotocSample>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| Error::Parse(e.to_string())))
        .collect()
}
