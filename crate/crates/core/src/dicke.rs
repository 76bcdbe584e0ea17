//! Collective spin-S states and operators on the symmetric (Dicke) subspace.
//!
//! Basis vectors are ordered `m = S, S-1, ..., -S`, so index `k` holds
//! `m = S - k`. Every matrix, state vector and serialized array in the crate
//! follows this order.

use std::f64::consts::PI;
use std::sync::OnceLock;

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::dynamics::Propagator;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, dagger, hermitian_deviation, ZERO};
use crate::tolerance::Tolerances;

/// Particle number `N` of an ensemble of spin-1/2 particles; total spin `S = N/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CollectiveSpinParams {
    n: usize,
}

impl CollectiveSpinParams {
    pub fn new(particles: usize) -> Result<Self> {
        if particles == 0 {
            return Err(Error::InvalidParameter("particle number must be >= 1".into()));
        }
        Ok(Self { n: particles })
    }

    pub fn particles(&self) -> usize {
        self.n
    }

    /// Total spin `S = N/2`.
    pub fn spin(&self) -> f64 {
        self.n as f64 / 2.0
    }

    /// Hilbert-space dimension `N + 1`.
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    /// Magnetic quantum number stored at basis index `k`.
    pub fn m_at(&self, k: usize) -> f64 {
        self.spin() - k as f64
    }

    pub fn m_values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.dim()).map(move |k| self.m_at(k))
    }
}

/// A direction on the Bloch sphere.
///
/// `InPlane { alpha }` is the yz-plane direction `(0, cos a, sin a)`, so that
/// `n . S = S_y cos a + S_z sin a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpinAxis {
    Polar { theta: f64, phi: f64 },
    InPlane { alpha: f64 },
}

impl SpinAxis {
    pub fn polar(theta: f64, phi: f64) -> Self {
        SpinAxis::Polar { theta, phi }
    }

    pub fn in_plane(alpha: f64) -> Self {
        SpinAxis::InPlane { alpha }
    }

    pub fn x() -> Self {
        SpinAxis::Polar { theta: PI / 2.0, phi: 0.0 }
    }

    pub fn y() -> Self {
        SpinAxis::in_plane(0.0)
    }

    pub fn z() -> Self {
        SpinAxis::Polar { theta: 0.0, phi: 0.0 }
    }

    /// Builds an axis from an arbitrary non-zero vector.
    pub fn from_vector(v: [f64; 3]) -> Result<Self> {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidParameter("axis vector must be non-zero".into()));
        }
        let z = (v[2] / norm).clamp(-1.0, 1.0);
        Ok(SpinAxis::Polar {
            theta: z.acos(),
            phi: v[1].atan2(v[0]),
        })
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        match *self {
            SpinAxis::Polar { theta, phi } => {
                let (st, ct) = theta.sin_cos();
                let (sp, cp) = phi.sin_cos();
                [st * cp, st * sp, ct]
            }
            SpinAxis::InPlane { alpha } => {
                let (s, c) = alpha.sin_cos();
                [0.0, c, s]
            }
        }
    }

    /// Polar and azimuthal angle of the direction.
    pub fn angles(&self) -> (f64, f64) {
        match *self {
            SpinAxis::Polar { theta, phi } => (theta, phi),
            SpinAxis::InPlane { .. } => {
                let [x, y, z] = self.unit_vector();
                (z.clamp(-1.0, 1.0).acos(), y.atan2(x))
            }
        }
    }
}

/// Angular-momentum matrices `S_x, S_y, S_z, S^2` in the Dicke basis.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    params: CollectiveSpinParams,
    pub sx: Array2<C64>,
    pub sy: Array2<C64>,
    pub sz: Array2<C64>,
    pub s2: Array2<C64>,
    /// Eigenvectors of `S_y`, shared by every polar-angle rotation.
    sy_vectors: OnceLock<Array2<C64>>,
}

impl SpinOperators {
    pub fn new(params: CollectiveSpinParams) -> Self {
        let d = params.dim();
        let s = params.spin();
        let mut sz = Array2::<C64>::zeros((d, d));
        // raising operator: <m+1|S+|m> sits at (k-1, k)
        let mut sp = Array2::<C64>::zeros((d, d));
        for k in 0..d {
            let m = params.m_at(k);
            sz[[k, k]] = C64::new(m, 0.0);
            if k > 0 {
                sp[[k - 1, k]] = C64::new((s * (s + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
            }
        }
        let sm = dagger(&sp);
        let sx = (&sp + &sm).mapv(|z| z * 0.5);
        let sy = (&sp - &sm).mapv(|z| z * C64::new(0.0, -0.5));
        let s2 = linalg::identity(d).mapv(|z| z * (s * (s + 1.0)));
        Self { params, sx, sy, sz, s2, sy_vectors: OnceLock::new() }
    }

    pub fn params(&self) -> CollectiveSpinParams {
        self.params
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    pub fn spin(&self) -> f64 {
        self.params.spin()
    }

    /// `n . S` for the given axis.
    pub fn component(&self, axis: &SpinAxis) -> Array2<C64> {
        let [nx, ny, nz] = axis.unit_vector();
        let mut out = self.sx.mapv(|z| z * nx);
        out.scaled_add(C64::new(ny, 0.0), &self.sy);
        out.scaled_add(C64::new(nz, 0.0), &self.sz);
        out
    }

    /// `exp(-i angle n.S)`.
    ///
    /// The spectrum of `n.S` is exactly `{-S, ..., S}`; the computed
    /// eigenvalues are snapped to it before exponentiation.
    pub fn rotation(&self, axis: &SpinAxis, angle: f64) -> Result<Array2<C64>> {
        let vectors = if *axis == SpinAxis::y() {
            self.sy_eigenvectors()?.clone()
        } else {
            linalg::eigh(&self.component(axis))?.1
        };
        Ok(self.rotation_from_eigenvectors(&vectors, angle))
    }

    fn sy_eigenvectors(&self) -> Result<&Array2<C64>> {
        if let Some(v) = self.sy_vectors.get() {
            return Ok(v);
        }
        let (_, v) = linalg::eigh(&self.sy)?;
        Ok(self.sy_vectors.get_or_init(|| v))
    }

    fn rotation_from_eigenvectors(&self, vectors: &Array2<C64>, angle: f64) -> Array2<C64> {
        let s = self.spin();
        let phases = Array1::from_shape_fn(self.dim(), |k| C64::from_polar(1.0, -angle * (-s + k as f64)));
        linalg::reassemble(vectors, &phases)
    }

    /// `exp(-i phi S_z) exp(-i theta S_y)`: maps `|S, m>` onto the eigenstate of
    /// `n.S` with eigenvalue `m`, where `n` points along `(theta, phi)`.
    pub fn orienting_rotation(&self, axis: &SpinAxis) -> Result<Array2<C64>> {
        let (theta, phi) = axis.angles();
        let mut out = self.rotation_from_eigenvectors(self.sy_eigenvectors()?, theta);
        for (k, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            let phase = C64::from_polar(1.0, -phi * self.params.m_at(k));
            row.mapv_inplace(|z| z * phase);
        }
        Ok(out)
    }
}

/// Standard angular-momentum matrices for `params`.
pub fn build_spin_operators(params: CollectiveSpinParams) -> SpinOperators {
    SpinOperators::new(params)
}

/// Normalized pure state over the Dicke basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: Array1<C64>,
}

impl PureState {
    pub fn new(amplitudes: Array1<C64>) -> Result<Self> {
        Self::new_with(amplitudes, &Tolerances::default())
    }

    pub fn new_with(amplitudes: Array1<C64>, tol: &Tolerances) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(Error::InvalidState("state needs at least two amplitudes".into()));
        }
        let norm: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum();
        if !norm.is_finite() || (norm - 1.0).abs() > tol.state_norm {
            return Err(Error::InvalidState(format!("norm^2 = {norm} is not 1")));
        }
        Ok(Self { amplitudes })
    }

    /// Rescales `amplitudes` to unit norm.
    pub fn normalized(amplitudes: Array1<C64>) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidState("cannot normalize a zero vector".into()));
        }
        Self::new(amplitudes.mapv(|c| c / norm))
    }

    /// Dicke state `|S, m>`.
    pub fn dicke(params: CollectiveSpinParams, m: f64) -> Result<Self> {
        let k = params.spin() - m;
        if k < 0.0 || k > params.particles() as f64 || k.fract() != 0.0 {
            return Err(Error::InvalidParameter(format!("m = {m} is not a valid projection")));
        }
        let mut amps = Array1::zeros(params.dim());
        amps[k as usize] = C64::new(1.0, 0.0);
        Ok(Self { amplitudes: amps })
    }

    pub(crate) fn from_raw(amplitudes: Array1<C64>) -> Self {
        Self { amplitudes }
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn particles(&self) -> usize {
        self.dim() - 1
    }

    pub fn inner(&self, other: &PureState) -> C64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|<self|other>|^2`.
    pub fn fidelity(&self, other: &PureState) -> f64 {
        self.inner(other).norm_sqr()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&StateJson::from(&State::Pure(self.clone())))?)
    }
}

/// Hermitian, unit-trace, positive-semidefinite operator on the Dicke subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: Array2<C64>,
}

impl DensityMatrix {
    pub fn new(entries: Array2<C64>) -> Result<Self> {
        Self::new_with(entries, &Tolerances::default())
    }

    /// Validates Hermiticity, trace and positivity against `tol`.
    pub fn new_with(entries: Array2<C64>, tol: &Tolerances) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c || r < 2 {
            return Err(Error::InvalidState(format!("density matrix must be square, got {r}x{c}")));
        }
        let deviation = hermitian_deviation(entries.view());
        if !deviation.is_finite() || deviation > tol.hermitian {
            return Err(Error::NonHermitian { deviation });
        }
        let tr = linalg::trace(&entries);
        if (tr.re - 1.0).abs() > tol.trace || tr.im.abs() > tol.trace {
            return Err(Error::InvalidState(format!("trace {tr} is not 1")));
        }
        let min = linalg::eigvalsh(&entries)?[0];
        if min < -tol.psd {
            return Err(Error::NotPositive { min_eigenvalue: min });
        }
        Ok(Self { entries })
    }

    pub(crate) fn from_raw(entries: Array2<C64>) -> Self {
        Self { entries }
    }

    pub fn from_pure(psi: &PureState) -> Self {
        let a = psi.amplitudes();
        let col = a.view().insert_axis(Axis(1));
        let row = a.mapv(|z| z.conj()).insert_axis(Axis(0));
        Self { entries: col.dot(&row) }
    }

    pub fn maximally_mixed(params: CollectiveSpinParams) -> Self {
        let d = params.dim();
        Self {
            entries: linalg::identity(d).mapv(|z| z / d as f64),
        }
    }

    /// `w a + (1 - w) b`.
    pub fn mixture(w: f64, a: &DensityMatrix, b: &DensityMatrix) -> Result<Self> {
        check_dim(a.dim(), b.dim())?;
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::InvalidParameter(format!("mixing weight {w} outside [0, 1]")));
        }
        Ok(Self {
            entries: &a.entries * C64::new(w, 0.0) + &b.entries * C64::new(1.0 - w, 0.0),
        })
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<C64> {
        self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn particles(&self) -> usize {
        self.dim() - 1
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.entries)
    }

    /// `Tr rho^2`.
    pub fn purity(&self) -> f64 {
        linalg::trace_product(&self.entries, &self.entries).re
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Result<Array1<f64>> {
        linalg::eigvalsh(&self.entries)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&StateJson::from(&State::Mixed(self.clone())))?)
    }
}

/// Operations shared by pure states and density matrices.
pub trait SpinState: Clone + Send + Sync {
    fn dim(&self) -> usize;

    /// Applies a unitary: `U psi` or `U rho U^dagger`.
    fn transform(&self, u: &Array2<C64>) -> Self;

    /// `<A>`.
    fn expectation(&self, op: &Array2<C64>) -> C64;

    /// `<A B>`; cheaper than forming the product for pure states.
    fn correlation(&self, a: &Array2<C64>, b: &Array2<C64>) -> C64 {
        self.expectation(&a.dot(b))
    }

    /// `<A>, <A^2>, <A^3>, <A^4>`.
    fn power_expectations(&self, op: &Array2<C64>) -> [C64; 4] {
        let a2 = op.dot(op);
        [
            self.expectation(op),
            self.expectation(&a2),
            self.correlation(op, &a2),
            self.correlation(&a2, &a2),
        ]
    }

    /// `Tr(rho_1 rho_2)`, i.e. `|<a|b>|^2` for pure states.
    fn overlap(&self, other: &Self) -> f64;

    fn to_density(&self) -> DensityMatrix;

    /// Unitary evolution `exp(-iHt)` using cached eigendata.
    fn propagate(&self, propagator: &Propagator, t: f64) -> Self {
        self.transform(&propagator.unitary(t))
    }
}

impl SpinState for PureState {
    fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    fn transform(&self, u: &Array2<C64>) -> Self {
        Self::from_raw(u.dot(&self.amplitudes))
    }

    fn expectation(&self, op: &Array2<C64>) -> C64 {
        let v = op.dot(&self.amplitudes);
        self.amplitudes
            .iter()
            .zip(v.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    fn correlation(&self, a: &Array2<C64>, b: &Array2<C64>) -> C64 {
        // <psi|A B|psi> = <A^dagger psi | B psi>
        let left = dagger(a).dot(&self.amplitudes);
        let right = b.dot(&self.amplitudes);
        left.iter().zip(right.iter()).map(|(x, y)| x.conj() * y).sum()
    }

    fn power_expectations(&self, op: &Array2<C64>) -> [C64; 4] {
        let v1 = op.dot(&self.amplitudes);
        let v2 = op.dot(&v1);
        let dot = |x: &Array1<C64>, y: &Array1<C64>| -> C64 {
            x.iter().zip(y.iter()).map(|(a, b)| a.conj() * b).sum()
        };
        let ad = dagger(op);
        let w1 = ad.dot(&self.amplitudes);
        let w2 = ad.dot(&w1);
        [
            dot(&self.amplitudes, &v1),
            dot(&w1, &v1),
            dot(&w1, &v2),
            dot(&w2, &v2),
        ]
    }

    fn overlap(&self, other: &Self) -> f64 {
        self.fidelity(other)
    }

    fn to_density(&self) -> DensityMatrix {
        DensityMatrix::from_pure(self)
    }

    fn propagate(&self, propagator: &Propagator, t: f64) -> Self {
        Self::from_raw(propagator.apply(&self.amplitudes, t))
    }
}

impl SpinState for DensityMatrix {
    fn dim(&self) -> usize {
        self.entries.nrows()
    }

    fn transform(&self, u: &Array2<C64>) -> Self {
        let mut out = u.dot(&self.entries).dot(&dagger(u));
        linalg::symmetrize(&mut out);
        Self::from_raw(out)
    }

    fn expectation(&self, op: &Array2<C64>) -> C64 {
        linalg::trace_product(&self.entries, op)
    }

    fn overlap(&self, other: &Self) -> f64 {
        linalg::trace_product(&self.entries, &other.entries).re
    }

    fn to_density(&self) -> DensityMatrix {
        self.clone()
    }
}

/// Either kind of state; the tagged form used for serialization.
#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Pure(PureState),
    Mixed(DensityMatrix),
}

impl From<PureState> for State {
    fn from(p: PureState) -> Self {
        State::Pure(p)
    }
}

impl From<DensityMatrix> for State {
    fn from(r: DensityMatrix) -> Self {
        State::Mixed(r)
    }
}

impl State {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&StateJson::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: StateJson = serde_json::from_str(s)?;
        raw.try_into()
    }
}

impl SpinState for State {
    fn dim(&self) -> usize {
        match self {
            State::Pure(p) => p.dim(),
            State::Mixed(r) => r.dim(),
        }
    }

    fn transform(&self, u: &Array2<C64>) -> Self {
        match self {
            State::Pure(p) => State::Pure(p.transform(u)),
            State::Mixed(r) => State::Mixed(r.transform(u)),
        }
    }

    fn expectation(&self, op: &Array2<C64>) -> C64 {
        match self {
            State::Pure(p) => p.expectation(op),
            State::Mixed(r) => r.expectation(op),
        }
    }

    fn correlation(&self, a: &Array2<C64>, b: &Array2<C64>) -> C64 {
        match self {
            State::Pure(p) => p.correlation(a, b),
            State::Mixed(r) => r.correlation(a, b),
        }
    }

    fn power_expectations(&self, op: &Array2<C64>) -> [C64; 4] {
        match self {
            State::Pure(p) => p.power_expectations(op),
            State::Mixed(r) => r.power_expectations(op),
        }
    }

    fn overlap(&self, other: &Self) -> f64 {
        match (self, other) {
            (State::Pure(a), State::Pure(b)) => a.overlap(b),
            (State::Pure(p), State::Mixed(r)) | (State::Mixed(r), State::Pure(p)) => {
                r.expectation(&DensityMatrix::from_pure(p).entries).re
            }
            (State::Mixed(a), State::Mixed(b)) => a.overlap(b),
        }
    }

    fn to_density(&self) -> DensityMatrix {
        match self {
            State::Pure(p) => p.to_density(),
            State::Mixed(r) => r.clone(),
        }
    }

    fn propagate(&self, propagator: &Propagator, t: f64) -> Self {
        match self {
            State::Pure(p) => State::Pure(p.propagate(propagator, t)),
            State::Mixed(r) => State::Mixed(r.propagate(propagator, t)),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StateJson {
    #[serde(rename = "N")]
    n: usize,
    kind: String,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl From<&State> for StateJson {
    fn from(s: &State) -> Self {
        let (kind, values): (&str, Vec<C64>) = match s {
            State::Pure(p) => ("pure", p.amplitudes.to_vec()),
            State::Mixed(r) => ("density", r.entries.iter().copied().collect()),
        };
        StateJson {
            n: s.dim() - 1,
            kind: kind.to_string(),
            re: values.iter().map(|z| z.re).collect(),
            im: values.iter().map(|z| z.im).collect(),
        }
    }
}

impl TryFrom<StateJson> for State {
    type Error = Error;

    fn try_from(raw: StateJson) -> Result<Self> {
        if raw.re.len() != raw.im.len() {
            return Err(Error::Parse("re and im arrays differ in length".into()));
        }
        let d = raw.n + 1;
        let values: Vec<C64> = raw
            .re
            .iter()
            .zip(raw.im.iter())
            .map(|(&re, &im)| C64::new(re, im))
            .collect();
        match raw.kind.as_str() {
            "pure" => {
                check_dim(d, values.len())?;
                Ok(State::Pure(PureState::new(Array1::from(values))?))
            }
            "density" => {
                check_dim(d * d, values.len())?;
                let m = Array2::from_shape_vec((d, d), values)
                    .map_err(|e| Error::Parse(e.to_string()))?;
                Ok(State::Mixed(DensityMatrix::new(m)?))
            }
            other => Err(Error::Parse(format!("unknown state kind {other:?}"))),
        }
    }
}

/// `ln k!` for `k = 0..=n`.
pub(crate) fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Coherent spin state pointing along `(theta, phi)`.
///
/// Amplitudes `c_m = C(N, S+m)^{1/2} cos^{S+m}(theta/2) sin^{S-m}(theta/2)
/// e^{-i(S+m)phi}`, evaluated in log space so `N` up to a few thousand does
/// not overflow. `theta = 0` is `|m = +S>`.
pub fn css(params: CollectiveSpinParams, theta: f64, phi: f64) -> PureState {
    let n = params.particles();
    let lnf = ln_factorials(n);
    let (s_half, c_half) = (theta / 2.0).sin_cos();
    let pow_term = |base: f64, exp: usize| -> (f64, f64) {
        // (log|base|^exp, sign^exp), with 0^0 = 1
        if exp == 0 {
            (0.0, 1.0)
        } else if base == 0.0 {
            (f64::NEG_INFINITY, 1.0)
        } else {
            let sign = if base < 0.0 && exp % 2 == 1 { -1.0 } else { 1.0 };
            (exp as f64 * base.abs().ln(), sign)
        }
    };
    let amps = Array1::from_shape_fn(params.dim(), |k| {
        let up = n - k; // S + m
        let ln_binom = lnf[n] - lnf[up] - lnf[k];
        let (lc, sc) = pow_term(c_half, up);
        let (ls, ss) = pow_term(s_half, k);
        let mag = (0.5 * ln_binom + lc + ls).exp() * sc * ss;
        if mag == 0.0 {
            ZERO
        } else {
            C64::from_polar(1.0, -(up as f64) * phi) * mag
        }
    });
    // log-space evaluation is accurate to rounding; fold the residue into the norm
    PureState::normalized(amps).expect("coherent state amplitudes are never all zero")
}

/// `n . S` for the given axis.
pub fn spin_component(ops: &SpinOperators, axis: &SpinAxis) -> Array2<C64> {
    ops.component(axis)
}

/// Rotates `state` by `angle` about `axis`: applies `exp(-i angle n.S)`.
pub fn rotate<S: SpinState>(ops: &SpinOperators, state: &S, axis: &SpinAxis, angle: f64) -> Result<S> {
    check_dim(ops.dim(), state.dim())?;
    Ok(state.transform(&ops.rotation(axis, angle)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize) -> CollectiveSpinParams {
        CollectiveSpinParams::new(n).unwrap()
    }

    fn commutator(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
        a.dot(b) - b.dot(a)
    }

    #[test]
    fn rejects_zero_particles() {
        assert!(CollectiveSpinParams::new(0).is_err());
    }

    #[test]
    fn spin_half_is_half_pauli() {
        let ops = SpinOperators::new(params(1));
        let h = 0.5;
        assert_eq!(ops.sx[[0, 1]], C64::new(h, 0.0));
        assert_eq!(ops.sx[[1, 0]], C64::new(h, 0.0));
        assert_eq!(ops.sy[[0, 1]], C64::new(0.0, -h));
        assert_eq!(ops.sy[[1, 0]], C64::new(0.0, h));
        assert_eq!(ops.sz[[0, 0]], C64::new(h, 0.0));
        assert_eq!(ops.sz[[1, 1]], C64::new(-h, 0.0));
        assert_eq!(ops.sx[[0, 0]], ZERO);
    }

    #[test]
    fn spin_one_sz() {
        let ops = SpinOperators::new(params(2));
        let diag: Vec<f64> = ops.sz.diag().iter().map(|z| z.re).collect();
        assert_eq!(diag, vec![1.0, 0.0, -1.0]);
    }

    #[test]
    fn commutation_relations() {
        for n in [1usize, 2, 3, 10, 51, 200, 512] {
            let ops = SpinOperators::new(params(n));
            let i = C64::new(0.0, 1.0);
            let xy = commutator(&ops.sx, &ops.sy) - ops.sz.mapv(|z| z * i);
            let yz = commutator(&ops.sy, &ops.sz) - ops.sx.mapv(|z| z * i);
            let zx = commutator(&ops.sz, &ops.sx) - ops.sy.mapv(|z| z * i);
            for m in [xy, yz, zx] {
                let worst = m.iter().fold(0.0f64, |a, z| a.max(z.norm()));
                // entries of S.S scale with S^2; 1e-12 absolute holds to N = 512
                assert!(worst <= 1e-12 * (1.0 + ops.spin()), "N={n}: {worst}");
            }
            for a in [&ops.sx, &ops.sy, &ops.sz] {
                let c = commutator(&ops.s2, a);
                assert!(c.iter().all(|z| z.norm() <= 1e-12));
            }
        }
    }

    #[test]
    fn casimir_matches_sum_of_squares() {
        let ops = SpinOperators::new(params(7));
        let sum = ops.sx.dot(&ops.sx) + ops.sy.dot(&ops.sy) + ops.sz.dot(&ops.sz);
        assert!(linalg::max_abs_diff(&sum, &ops.s2) < 1e-12);
    }

    #[test]
    fn in_plane_component_limits() {
        let ops = SpinOperators::new(params(6));
        assert_eq!(ops.component(&SpinAxis::in_plane(0.0)), ops.sy);
        let sz = ops.component(&SpinAxis::in_plane(PI / 2.0));
        assert!(linalg::max_abs_diff(&sz, &ops.sz) < 1e-15);
        let mut ev = linalg::eigvalsh(&ops.component(&SpinAxis::in_plane(PI / 4.0))).unwrap().to_vec();
        ev.sort_by(f64::total_cmp);
        for (k, e) in ev.iter().enumerate() {
            assert!((e - (-3.0 + k as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn css_poles_and_equator() {
        let p = params(8);
        let north = css(p, 0.0, 0.0);
        assert!((north.amplitudes()[0].norm() - 1.0).abs() < 1e-15);
        assert!(north.amplitudes().iter().skip(1).all(|c| c.norm() == 0.0));

        let ops = SpinOperators::new(p);
        let x = css(p, PI / 2.0, 0.0);
        assert!((x.expectation(&ops.sx).re - 4.0).abs() < 1e-10);
        let [m1, m2, ..] = x.power_expectations(&ops.sz);
        assert!((m2.re - m1.re * m1.re - 2.0).abs() < 1e-10);
    }

    #[test]
    fn css_points_where_asked() {
        let p = params(30);
        let ops = SpinOperators::new(p);
        for (theta, phi) in [(0.3, 0.0), (1.2, 2.1), (2.9, -1.0), (PI / 2.0, PI)] {
            let psi = css(p, theta, phi);
            let n = SpinAxis::polar(theta, phi);
            let v = psi.expectation(&ops.component(&n)).re;
            assert!((v - 15.0).abs() < 1e-10, "{theta} {phi}: {v}");
        }
    }

    #[test]
    fn css_large_n_is_finite() {
        let psi = css(params(1024), PI / 2.0, 0.4);
        assert!(psi.amplitudes().iter().all(|c| c.re.is_finite() && c.im.is_finite()));
    }

    #[test]
    fn rotate_identity_and_half_turn() {
        let p = params(10);
        let ops = SpinOperators::new(p);
        let psi = css(p, PI / 2.0, 0.0);
        let same = rotate(&ops, &psi, &SpinAxis::z(), 0.0).unwrap();
        assert!((same.fidelity(&psi) - 1.0).abs() < 1e-12);
        let flipped = rotate(&ops, &psi, &SpinAxis::z(), PI).unwrap();
        assert!((flipped.expectation(&ops.sx).re + 5.0).abs() < 1e-10);
    }

    #[test]
    fn small_rotation_moves_mean_spin() {
        let p = params(40);
        let ops = SpinOperators::new(p);
        let psi = css(p, PI / 2.0, 0.0);
        let d = 0.013;
        let r = rotate(&ops, &psi, &SpinAxis::z(), d).unwrap();
        assert!((r.expectation(&ops.sy).re - 20.0 * d.sin()).abs() < 1e-8);
        let rho = rotate(&ops, &psi.to_density(), &SpinAxis::z(), d).unwrap();
        assert!((rho.expectation(&ops.sy).re - 20.0 * d.sin()).abs() < 1e-8);
        assert!((rho.trace().re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn orienting_rotation_diagonalizes_component() {
        let p = params(5);
        let ops = SpinOperators::new(p);
        let axis = SpinAxis::polar(1.1, -0.7);
        let u = ops.orienting_rotation(&axis).unwrap();
        let d = dagger(&u).dot(&ops.component(&axis)).dot(&u);
        for i in 0..p.dim() {
            for j in 0..p.dim() {
                let expect = if i == j { p.m_at(i) } else { 0.0 };
                assert!((d[[i, j]] - C64::new(expect, 0.0)).norm() < 1e-12, "{i} {j} {}", d[[i, j]]);
            }
        }
    }

    #[test]
    fn rotate_rejects_dimension_mismatch() {
        let ops = SpinOperators::new(params(4));
        let psi = css(params(5), 1.0, 0.0);
        assert!(matches!(
            rotate(&ops, &psi, &SpinAxis::z(), 0.1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn density_matrix_validation() {
        let p = params(3);
        assert!(DensityMatrix::new(DensityMatrix::maximally_mixed(p).into_entries()).is_ok());
        let mut bad = linalg::identity(4).mapv(|z| z * 0.25);
        bad[[0, 1]] = C64::new(0.1, 0.0);
        assert!(matches!(DensityMatrix::new(bad), Err(Error::NonHermitian { .. })));
        let mut neg = linalg::identity(4).mapv(|z| z * 0.5);
        neg[[0, 0]] = C64::new(-0.5, 0.0);
        assert!(matches!(DensityMatrix::new(neg), Err(Error::NotPositive { .. })));
        let half = linalg::identity(4).mapv(|z| z * 0.1);
        assert!(matches!(DensityMatrix::new(half), Err(Error::InvalidState(_))));
    }

    #[test]
    fn json_layout() {
        let psi = css(params(2), PI / 2.0, 0.0);
        let v: serde_json::Value = serde_json::from_str(&psi.to_json().unwrap()).unwrap();
        assert_eq!(v["N"], 2);
        assert_eq!(v["kind"], "pure");
        assert_eq!(v["re"].as_array().unwrap().len(), 3);
        let rho = psi.to_density();
        let v: serde_json::Value = serde_json::from_str(&rho.to_json().unwrap()).unwrap();
        assert_eq!(v["kind"], "density");
        assert_eq!(v["im"].as_array().unwrap().len(), 9);
        let back = State::from_json(&rho.to_json().unwrap()).unwrap();
        assert_eq!(back, State::Mixed(rho));
    }

    #[test]
    fn json_rejects_wrong_length() {
        let s = r#"{"N": 3, "kind": "pure", "re": [1.0, 0.0], "im": [0.0, 0.0]}"#;
        assert!(State::from_json(s).is_err());
    }
}
