//! Metrological and statistical observables of collective spin states.

use std::f64::consts::PI;
use std::io::Write;

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dicke::{CollectiveSpinParams, DensityMatrix, SpinAxis, SpinOperators, SpinState};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, dagger};
use crate::tolerance::PSD_TOL;

/// Mean and central moments of a spin projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub third: f64,
    pub fourth: f64,
}

/// Mean and second to fourth central moments of `n.S`.
///
/// Central moments come from powers of `n.S - <n.S>` applied to the state,
/// not from raw moments, so there is no cancellation for large `S`.
pub fn spin_moments<S: SpinState>(ops: &SpinOperators, state: &S, axis: &SpinAxis) -> Result<Moments> {
    check_dim(ops.dim(), state.dim())?;
    let op = ops.component(axis);
    let mean = state.expectation(&op).re;
    let mut shifted = op;
    for k in 0..shifted.nrows() {
        shifted[[k, k]] -= C64::new(mean, 0.0);
    }
    let [_, m2, m3, m4] = state.power_expectations(&shifted);
    Ok(Moments { mean, variance: m2.re, third: m3.re, fourth: m4.re })
}

/// Symmetrized covariance matrix `Re<S_i S_j> - <S_i><S_j>`, `i, j in {x, y, z}`.
pub fn covariance_matrix<S: SpinState>(ops: &SpinOperators, state: &S) -> Result<[[f64; 3]; 3]> {
    check_dim(ops.dim(), state.dim())?;
    let comps = [&ops.sx, &ops.sy, &ops.sz];
    let means: Vec<f64> = comps.iter().map(|c| state.expectation(c).re).collect();
    let mut cov = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let v = state.correlation(comps[i], comps[j]).re - means[i] * means[j];
            cov[i][j] = v;
            cov[j][i] = v;
        }
    }
    Ok(cov)
}

/// Mean spin vector `<S>`.
pub fn mean_spin<S: SpinState>(ops: &SpinOperators, state: &S) -> Result<[f64; 3]> {
    check_dim(ops.dim(), state.dim())?;
    Ok([
        state.expectation(&ops.sx).re,
        state.expectation(&ops.sy).re,
        state.expectation(&ops.sz).re,
    ])
}

fn in_plane_variance(cov: &[[f64; 3]; 3], alpha: f64) -> f64 {
    let (s, c) = alpha.sin_cos();
    c * c * cov[1][1] + s * s * cov[2][2] + 2.0 * s * c * cov[1][2]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AntisqueezingSearch {
    /// Directions `S_y cos a + S_z sin a`, perpendicular to the `+x` mean spin.
    #[default]
    YzPlane,
    /// Every direction on the sphere.
    FullSphere,
}

/// Largest normalized projection variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntisqueezingResult {
    /// `max var(S_a) / (S/2)`; one for a coherent state.
    pub xi_plus_sq: f64,
    /// Maximizing in-plane angle in `[0, pi)`.
    pub alpha_max: f64,
    pub axis: SpinAxis,
}

pub const ANTISQUEEZING_GRID: usize = 64;
pub const ANTISQUEEZING_ANGLE_TOL: f64 = 1e-6;

/// Antisqueezing in the yz-plane.
pub fn antisqueezing<S: SpinState>(ops: &SpinOperators, state: &S) -> Result<AntisqueezingResult> {
    antisqueezing_with(ops, state, AntisqueezingSearch::YzPlane)
}

pub fn antisqueezing_with<S: SpinState>(
    ops: &SpinOperators,
    state: &S,
    search: AntisqueezingSearch,
) -> Result<AntisqueezingResult> {
    let cov = covariance_matrix(ops, state)?;
    let sql = ops.spin() / 2.0;
    match search {
        AntisqueezingSearch::YzPlane => {
            let alpha = maximize_periodic(|a| in_plane_variance(&cov, a), PI, ANTISQUEEZING_GRID, ANTISQUEEZING_ANGLE_TOL);
            let alpha = alpha.rem_euclid(PI);
            Ok(AntisqueezingResult {
                xi_plus_sq: in_plane_variance(&cov, alpha) / sql,
                alpha_max: alpha,
                axis: SpinAxis::in_plane(alpha),
            })
        }
        AntisqueezingSearch::FullSphere => {
            let m = Array2::from_shape_fn((3, 3), |(i, j)| cov[i][j]);
            let (vals, vecs) = m.eigh(UPLO::Upper).map_err(|e| Error::Eigen(e.to_string()))?;
            let v = [vecs[[0, 2]], vecs[[1, 2]], vecs[[2, 2]]];
            Ok(AntisqueezingResult {
                xi_plus_sq: vals[2] / sql,
                alpha_max: v[2].atan2(v[1]).rem_euclid(PI),
                axis: SpinAxis::from_vector(v)?,
            })
        }
    }
}

/// Coarse grid over `[0, period)` followed by golden-section refinement of the
/// best bracket, down to `tol`.
pub(crate) fn maximize_periodic<F: Fn(f64) -> f64>(f: F, period: f64, grid: usize, tol: f64) -> f64 {
    let h = period / grid as f64;
    let best = (0..grid)
        .map(|j| j as f64 * h)
        .max_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap_or(0.0);
    let (mut lo, mut hi) = (best - h, best + h);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    let mid = 0.5 * (lo + hi);
    if f(best) > f(mid) {
        best
    } else {
        mid
    }
}

/// Binder cumulant `1 - <dS^4> / (3 <dS^2>^2)` of the centered projection.
pub fn binder_cumulant<S: SpinState>(ops: &SpinOperators, state: &S, axis: &SpinAxis) -> Result<f64> {
    let m = spin_moments(ops, state, axis)?;
    binder_from_moments(m.variance, m.fourth)
}

fn binder_from_moments(var: f64, fourth: f64) -> Result<f64> {
    if !(var > 1e-12) {
        return Err(Error::ZeroVariance);
    }
    Ok(1.0 - fourth / (3.0 * var * var))
}

/// Binder cumulant estimated from samples (population moments).
pub fn binder_from_samples(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let (m2, m4) = samples.iter().fold((0.0, 0.0), |(a, b), x| {
        let d = (x - mean).powi(2);
        (a + d, b + d * d)
    });
    binder_from_moments(m2 / n, m4 / n)
}

/// Quantum Fisher information and the spin characterization matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QfiResult {
    /// `F_Q` for rotations about the requested axis.
    pub f_q: f64,
    /// `Gamma_Q` over `x, y, z`; `F_Q(n) = n^T Gamma_Q n`.
    pub gamma_q: [[f64; 3]; 3],
    /// Rotation axis with the largest Fisher information.
    pub optimal_axis: SpinAxis,
    pub optimal_f_q: f64,
}

/// Eigenvalue-pair cutoff on `q_k + q_k'` below which terms are dropped.
pub const QFI_CUTOFF: f64 = 1e-12;

/// `F_Q = 2 sum (q_k - q_k')^2 / (q_k + q_k') |<k'|S_n|k>|^2`.
pub fn qfi(ops: &SpinOperators, rho: &DensityMatrix, axis: &SpinAxis) -> Result<QfiResult> {
    check_dim(ops.dim(), rho.dim())?;
    let (q, v) = linalg::eigh(rho.entries())?;
    if q[0] < -PSD_TOL {
        return Err(Error::NotPositive { min_eigenvalue: q[0] });
    }
    let q = q.mapv(|x| x.max(0.0));
    let vd = dagger(&v);
    let rotated: Vec<Array2<C64>> = [&ops.sx, &ops.sy, &ops.sz].iter().map(|s| vd.dot(*s).dot(&v)).collect();
    let d = q.len();
    let mut weights = Array2::<f64>::zeros((d, d));
    for a in 0..d {
        for b in 0..d {
            let sum = q[a] + q[b];
            if sum > QFI_CUTOFF {
                weights[[a, b]] = (q[a] - q[b]).powi(2) / sum;
            }
        }
    }
    let mut gamma = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let mut acc = 0.0;
            for a in 0..d {
                for b in 0..d {
                    let w = weights[[a, b]];
                    if w != 0.0 {
                        // <b|S_i|a><a|S_j|b>
                        acc += w * (rotated[i][[b, a]] * rotated[j][[a, b]]).re;
                    }
                }
            }
            gamma[i][j] = 2.0 * acc;
            gamma[j][i] = 2.0 * acc;
        }
    }
    let n = axis.unit_vector();
    let f_q: f64 = (0..3).map(|i| (0..3).map(|j| n[i] * gamma[i][j] * n[j]).sum::<f64>()).sum();
    let g = Array2::from_shape_fn((3, 3), |(i, j)| gamma[i][j]);
    let (vals, vecs) = g.eigh(UPLO::Upper).map_err(|e| Error::Eigen(e.to_string()))?;
    let top = [vecs[[0, 2]], vecs[[1, 2]], vecs[[2, 2]]];
    Ok(QfiResult {
        f_q: f_q.max(0.0),
        gamma_q: gamma,
        optimal_axis: SpinAxis::from_vector(top)?,
        optimal_f_q: vals[2].max(0.0),
    })
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// `(theta, phi)` lattice with quadrature weights for integrals over the sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereGrid {
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    theta_weights: Vec<f64>,
}

impl SphereGrid {
    /// Midpoint rule in `theta`, uniform in `phi`.
    pub fn uniform(n_theta: usize, n_phi: usize) -> Self {
        let h = PI / n_theta as f64;
        let thetas: Vec<f64> = (0..n_theta).map(|i| (i as f64 + 0.5) * h).collect();
        let theta_weights = thetas.iter().map(|t| t.sin() * h).collect();
        Self { thetas, phis: uniform_phis(n_phi), theta_weights }
    }

    /// Gauss-Legendre in `cos theta`, uniform in `phi`. Integrates band-limited
    /// functions up to degree `min(2 n_theta - 1, n_phi - 1)` exactly.
    pub fn gauss_legendre(n_theta: usize, n_phi: usize) -> Self {
        let (x, w) = gauss_legendre(n_theta);
        Self {
            thetas: x.iter().map(|x| x.clamp(-1.0, 1.0).acos()).collect(),
            phis: uniform_phis(n_phi),
            theta_weights: w,
        }
    }

    /// Smallest grid that resolves (and integrates exactly) a spin-`S` Wigner function.
    pub fn for_spin(params: CollectiveSpinParams) -> Self {
        let d = params.dim();
        Self::gauss_legendre(d, 2 * d)
    }

    pub fn len(&self) -> usize {
        self.thetas.len() * self.phis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn uniform_phis(n: usize) -> Vec<f64> {
    (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect()
}

/// Wigner function sampled on a [`SphereGrid`]; `values[[i, j]]` is at
/// `(thetas[i], phis[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerMap {
    pub grid: SphereGrid,
    pub values: Array2<f64>,
}

impl WignerMap {
    /// Quadrature of `W dA` over the sphere.
    pub fn integrate(&self) -> f64 {
        let dphi = 2.0 * PI / self.grid.phis.len() as f64;
        self.grid
            .theta_weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * dphi * self.values.row(i).sum())
            .sum()
    }

    /// Grid point of the global maximum: `(theta, phi, W)`.
    pub fn argmax(&self) -> (f64, f64, f64) {
        let mut best = (0.0, 0.0, f64::NEG_INFINITY);
        for ((i, j), &v) in self.values.indexed_iter() {
            if v > best.2 {
                best = (self.grid.thetas[i], self.grid.phis[j], v);
            }
        }
        best
    }

    /// CSV rows `theta,phi,W` with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "theta,phi,w")?;
        for ((i, j), v) in self.values.indexed_iter() {
            writeln!(out, "{:.17e},{:.17e},{:.17e}", self.grid.thetas[i], self.grid.phis[j], v)?;
        }
        Ok(())
    }
}

/// Diagonal entries of the axial multipole operators `T_k0`, `k = 0..=2S`.
///
/// These are the polynomials in `m` orthonormal on the lattice `S..-S`
/// (`sum_m T_k0(m)^2 = 1`), normalized to be positive at `m = S`. Built by
/// Gram-Schmidt with full reorthogonalization.
pub fn axial_multipoles(params: CollectiveSpinParams) -> Array2<f64> {
    let d = params.dim();
    let m: Vec<f64> = params.m_values().collect();
    let mut basis = Array2::<f64>::zeros((d, d));
    for k in 0..d {
        let mut v: Vec<f64> = if k == 0 {
            vec![1.0; d]
        } else {
            (0..d).map(|i| m[i] * basis[[k - 1, i]]).collect()
        };
        for _ in 0..2 {
            for j in 0..k {
                let proj: f64 = (0..d).map(|i| v[i] * basis[[j, i]]).sum();
                for i in 0..d {
                    v[i] -= proj * basis[[j, i]];
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let sign = if v[0] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            basis[[k, i]] = sign * v[i] / norm;
        }
    }
    basis
}

/// Diagonal of the Wigner kernel at the north pole,
/// `sum_k sqrt((2k+1)/4pi) T_k0`.
pub fn north_pole_kernel(params: CollectiveSpinParams) -> Array1<f64> {
    let t = axial_multipoles(params);
    let d = params.dim();
    Array1::from_shape_fn(d, |i| {
        (0..d).map(|k| ((2 * k + 1) as f64 / (4.0 * PI)).sqrt() * t[[k, i]]).sum()
    })
}

struct WignerKernel<'a> {
    ops: &'a SpinOperators,
    diag: Array1<f64>,
}

impl<'a> WignerKernel<'a> {
    fn new(ops: &'a SpinOperators) -> Self {
        Self { ops, diag: north_pole_kernel(ops.params()) }
    }

    /// `R_y(theta) K_0 R_y(theta)^dagger`.
    fn tilted(&self, theta: f64) -> Result<Array2<C64>> {
        let d = self.diag.len();
        let ry = self.ops.rotation(&SpinAxis::y(), theta)?;
        let scaled = Array2::from_shape_fn((d, d), |(i, j)| ry[[i, j]] * self.diag[j]);
        Ok(scaled.dot(&dagger(&ry)))
    }

    /// Fourier coefficients `c_D = sum_{b-a=D} rho_ba K_ab`, indexed by `D + d - 1`.
    fn coefficients(&self, rho: &Array2<C64>, k: &Array2<C64>) -> Vec<C64> {
        let d = rho.nrows();
        let mut c = vec![C64::new(0.0, 0.0); 2 * d - 1];
        for a in 0..d {
            for b in 0..d {
                c[b + d - 1 - a] += rho[[b, a]] * k[[a, b]];
            }
        }
        c
    }

    fn evaluate(c: &[C64], d: usize, phi: f64) -> f64 {
        c.iter()
            .enumerate()
            .map(|(idx, ci)| {
                let delta = idx as f64 - (d as f64 - 1.0);
                (ci * C64::from_polar(1.0, -phi * delta)).re
            })
            .sum()
    }
}

/// Spherical Wigner function `W(n) = Tr(rho R(n) K_0 R(n)^dagger)` on a grid.
///
/// Equivalent to the multipole expansion `sum_kq rho_kq Y_kq(theta, phi)`.
/// Rows of the grid are evaluated in parallel; the result does not depend on
/// the partitioning.
pub fn wigner<S: SpinState>(ops: &SpinOperators, state: &S, grid: &SphereGrid) -> Result<WignerMap> {
    check_dim(ops.dim(), state.dim())?;
    let rho = state.to_density().into_entries();
    let kernel = WignerKernel::new(ops);
    let d = ops.dim();
    let rows: Vec<Vec<f64>> = grid
        .thetas
        .par_iter()
        .map(|&theta| {
            let k = kernel.tilted(theta)?;
            let c = kernel.coefficients(&rho, &k);
            Ok(grid.phis.iter().map(|&phi| WignerKernel::evaluate(&c, d, phi)).collect())
        })
        .collect::<Result<_>>()?;
    let values = Array2::from_shape_fn((grid.thetas.len(), grid.phis.len()), |(i, j)| rows[i][j]);
    Ok(WignerMap { grid: grid.clone(), values })
}

/// Wigner function at a single point.
pub fn wigner_at<S: SpinState>(ops: &SpinOperators, state: &S, theta: f64, phi: f64) -> Result<f64> {
    check_dim(ops.dim(), state.dim())?;
    let rho = state.to_density().into_entries();
    let kernel = WignerKernel::new(ops);
    let c = kernel.coefficients(&rho, &kernel.tilted(theta)?);
    Ok(WignerKernel::evaluate(&c, ops.dim(), phi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dicke::{css, PureState};
    use crate::dynamics::{build_hamiltonian, evolve_unitary, HamiltonianSpec};

    fn setup(n: usize) -> (CollectiveSpinParams, SpinOperators) {
        let p = CollectiveSpinParams::new(n).unwrap();
        (p, SpinOperators::new(p))
    }

    #[test]
    fn moments_of_reference_states() {
        let (p, ops) = setup(20);
        let x = css(p, PI / 2.0, 0.0);
        let mz = spin_moments(&ops, &x, &SpinAxis::z()).unwrap();
        assert!(mz.mean.abs() < 1e-12);
        assert!((mz.variance - 5.0).abs() < 1e-10);
        let mx = spin_moments(&ops, &x, &SpinAxis::x()).unwrap();
        assert!((mx.mean - 10.0).abs() < 1e-10);
        let top = PureState::dicke(p, 10.0).unwrap();
        let m = spin_moments(&ops, &top, &SpinAxis::z()).unwrap();
        assert_eq!((m.mean, m.variance), (10.0, 0.0));
    }

    #[test]
    fn moments_agree_between_pure_and_density() {
        let (p, ops) = setup(9);
        let psi = css(p, 1.1, 0.4);
        let axis = SpinAxis::polar(0.7, 2.0);
        let a = spin_moments(&ops, &psi, &axis).unwrap();
        let b = spin_moments(&ops, &psi.to_density(), &axis).unwrap();
        for (x, y) in [(a.mean, b.mean), (a.variance, b.variance), (a.third, b.third), (a.fourth, b.fourth)] {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn css_has_unit_antisqueezing() {
        let (p, ops) = setup(50);
        let r = antisqueezing(&ops, &css(p, PI / 2.0, 0.0)).unwrap();
        assert!((r.xi_plus_sq - 1.0).abs() < 1e-10);
        assert!((0.0..PI).contains(&r.alpha_max));
    }

    #[test]
    fn antisqueezing_dominates_every_sampled_angle() {
        let (p, ops) = setup(40);
        let h = build_hamiltonian(&HamiltonianSpec::lmg(1.0, 20.0), &ops).unwrap();
        let psi = evolve_unitary(&h, &css(p, PI / 2.0, 0.0), 0.02).unwrap();
        let r = antisqueezing(&ops, &psi).unwrap();
        for j in 0..360 {
            let a = j as f64 * PI / 360.0;
            let v = spin_moments(&ops, &psi, &SpinAxis::in_plane(a)).unwrap().variance / 10.0;
            assert!(v <= r.xi_plus_sq + 1e-12);
        }
        let full = antisqueezing_with(&ops, &psi, AntisqueezingSearch::FullSphere).unwrap();
        assert!(full.xi_plus_sq >= r.xi_plus_sq - 1e-9);
    }

    #[test]
    fn golden_section_hits_known_maximum() {
        let target = 1.234_567;
        let a = maximize_periodic(|a| (2.0 * (a - target)).cos(), PI, 64, 1e-9);
        assert!((a - target).abs() < 1e-6);
    }

    #[test]
    fn binder_two_point_distribution() {
        let (p, ops) = setup(10);
        let amps = Array1::from_shape_fn(p.dim(), |k| {
            if k == 0 || k == p.dim() - 1 {
                C64::new(1.0 / 2f64.sqrt(), 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let cat = PureState::new(amps).unwrap();
        let b = binder_cumulant(&ops, &cat, &SpinAxis::z()).unwrap();
        assert!((b - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn binder_rejects_zero_variance() {
        let (p, ops) = setup(4);
        let top = PureState::dicke(p, 2.0).unwrap();
        assert!(matches!(binder_cumulant(&ops, &top, &SpinAxis::z()), Err(Error::ZeroVariance)));
        assert!(binder_from_samples(&[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn qfi_limits() {
        let (p, ops) = setup(16);
        let x = css(p, PI / 2.0, 0.0).to_density();
        let r = qfi(&ops, &x, &SpinAxis::z()).unwrap();
        assert!((r.f_q - 16.0).abs() < 1e-8);
        let mixed = DensityMatrix::maximally_mixed(p);
        assert!(qfi(&ops, &mixed, &SpinAxis::z()).unwrap().f_q.abs() < 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                assert!((r.gamma_q[i][j] - r.gamma_q[j][i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn qfi_optimal_axis_for_x_css_is_perpendicular() {
        let (p, ops) = setup(10);
        let r = qfi(&ops, &css(p, PI / 2.0, 0.0).to_density(), &SpinAxis::x()).unwrap();
        assert!(r.f_q.abs() < 1e-8);
        let [x, _, _] = r.optimal_axis.unit_vector();
        assert!(x.abs() < 1e-6);
        assert!((r.optimal_f_q - 10.0).abs() < 1e-8);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        let int: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((int - 2.0 / 9.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    /// Wigner 3j symbol `(j1 j2 j3; m1 m2 m3)` by the Racah formula; fine for small `j`.
    fn three_j(j1: f64, j2: f64, j3: f64, m1: f64, m2: f64, m3: f64) -> f64 {
        fn fact(x: f64) -> f64 {
            (1..=(x.round() as i64)).fold(1.0, |a, k| a * k as f64)
        }
        if (m1 + m2 + m3).abs() > 1e-9 {
            return 0.0;
        }
        let tri = fact(j1 + j2 - j3) * fact(j1 - j2 + j3) * fact(-j1 + j2 + j3) / fact(j1 + j2 + j3 + 1.0);
        let pre = tri.sqrt()
            * (fact(j1 + m1) * fact(j1 - m1) * fact(j2 + m2) * fact(j2 - m2) * fact(j3 + m3) * fact(j3 - m3)).sqrt();
        let kmin = 0f64.max(j2 - j3 - m1).max(j1 - j3 + m2);
        let kmax = (j1 + j2 - j3).min(j1 - m1).min(j2 + m2);
        let mut sum = 0.0;
        let mut k = kmin;
        while k <= kmax + 1e-9 {
            let denom = fact(k)
                * fact(j1 + j2 - j3 - k)
                * fact(j1 - m1 - k)
                * fact(j2 + m2 - k)
                * fact(j3 - j2 + m1 + k)
                * fact(j3 - j1 - m2 + k);
            sum += if (k.round() as i64) % 2 == 0 { 1.0 } else { -1.0 } / denom;
            k += 1.0;
        }
        let phase = if ((j1 - j2 - m3).round() as i64).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        phase * pre * sum
    }

    #[test]
    fn axial_multipoles_match_clebsch_gordan() {
        for n in [1usize, 2, 3, 6, 9] {
            let p = CollectiveSpinParams::new(n).unwrap();
            let s = p.spin();
            let t = axial_multipoles(p);
            for k in 0..p.dim() {
                let mut oracle: Vec<f64> = p
                    .m_values()
                    .map(|m| {
                        let phase = if ((s - m).round() as i64) % 2 == 0 { 1.0 } else { -1.0 };
                        phase * ((2 * k + 1) as f64).sqrt() * three_j(s, s, k as f64, m, -m, 0.0)
                    })
                    .collect();
                if oracle[0] < 0.0 {
                    oracle.iter_mut().for_each(|v| *v = -*v);
                }
                for (i, o) in oracle.iter().enumerate() {
                    assert!((t[[k, i]] - o).abs() < 1e-10, "N={n} k={k} i={i}: {} vs {o}", t[[k, i]]);
                }
            }
        }
    }

    #[test]
    fn wigner_peaks_at_css_direction() {
        let (p, ops) = setup(8);
        let (theta0, phi0) = (1.0, 2.0);
        let grid = SphereGrid::uniform(60, 120);
        let snap = |v: f64, xs: &[f64]| *xs.iter().min_by(|a, b| (*a - v).abs().total_cmp(&(*b - v).abs())).unwrap();
        let t0 = snap(theta0, &grid.thetas);
        let p0 = snap(phi0, &grid.phis);
        let map = wigner(&ops, &css(p, t0, p0), &grid).unwrap();
        let (t, f, w) = map.argmax();
        assert!(w > 0.0);
        assert!((t - t0).abs() < 1e-12 && (f - p0).abs() < 1e-12, "{t} {f}");
    }

    #[test]
    fn wigner_integral_is_state_independent() {
        let (p, ops) = setup(6);
        let grid = SphereGrid::for_spin(p);
        let reference = wigner(&ops, &PureState::dicke(p, 3.0).unwrap(), &grid).unwrap().integrate();
        let h = build_hamiltonian(&HamiltonianSpec::lmg(1.0, 3.0), &ops).unwrap();
        let states = [
            css(p, 0.4, 1.0).to_density(),
            DensityMatrix::maximally_mixed(p),
            evolve_unitary(&h, &css(p, PI / 2.0, 0.0), 0.5).unwrap().to_density(),
        ];
        for s in &states {
            let v = wigner(&ops, s, &grid).unwrap().integrate();
            assert!((v - reference).abs() < 1e-10, "{v} vs {reference}");
        }
        assert!((reference - (4.0 * PI / 7.0).sqrt()).abs() < 1e-10);
    }

    fn rotate_vec(v: [f64; 3], axis: [f64; 3], angle: f64) -> [f64; 3] {
        let (s, c) = angle.sin_cos();
        let dot = axis[0] * v[0] + axis[1] * v[1] + axis[2] * v[2];
        let cross = [
            axis[1] * v[2] - axis[2] * v[1],
            axis[2] * v[0] - axis[0] * v[2],
            axis[0] * v[1] - axis[1] * v[0],
        ];
        [0, 1, 2].map(|i| v[i] * c + cross[i] * s + axis[i] * dot * (1.0 - c))
    }

    #[test]
    fn wigner_is_rotation_covariant() {
        let (p, ops) = setup(5);
        let h = build_hamiltonian(&HamiltonianSpec::lmg(1.0, 2.5), &ops).unwrap();
        let psi = evolve_unitary(&h, &css(p, PI / 2.0, 0.0), 0.4).unwrap();
        let axis = SpinAxis::polar(0.8, 0.3);
        let angle = 0.9;
        let rotated = crate::dicke::rotate(&ops, &psi, &axis, angle).unwrap();
        let grid = SphereGrid::uniform(7, 9);
        let map = wigner(&ops, &rotated, &grid).unwrap();
        for (i, &theta) in grid.thetas.iter().enumerate() {
            for (j, &phi) in grid.phis.iter().enumerate() {
                let n = SpinAxis::polar(theta, phi).unit_vector();
                let back = rotate_vec(n, axis.unit_vector(), -angle);
                let (bt, bp) = SpinAxis::from_vector(back).unwrap().angles();
                let original = wigner_at(&ops, &psi, bt, bp).unwrap();
                assert!((map.values[[i, j]] - original).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn wigner_csv_has_one_row_per_point() {
        let (p, ops) = setup(2);
        let grid = SphereGrid::uniform(3, 4);
        let map = wigner(&ops, &css(p, 0.0, 0.0), &grid).unwrap();
        let mut buf = Vec::new();
        map.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 13);
    }
}
