use std::f64::consts::PI;

use lmgsim::observables::antisqueezing;
use lmgsim::scrambling::{otoc_literal_trace, read_fotoc_csv, write_fotoc_csv, DEFAULT_DELTA_PHI_GRID};
use lmgsim::{
    build_hamiltonian, css, fit_exponent, fotoc, fotoc_scan, heisenberg_operator, otoc_exact, otoc_from_fotoc,
    spin_moments, CollectiveSpinParams, Complex64, DensityMatrix, Echo, FotocSample, HamiltonianSpec, PureState,
    SpinAxis, SpinOperators, SpinState,
};
use ndarray::Array2;
use ndarray_linalg::{EigValsh, UPLO};
use proptest::prelude::*;

const MEASURED_TIMES: [f64; 4] = [0.38, 0.57, 0.77, 0.96];

fn ops(n: usize) -> (CollectiveSpinParams, SpinOperators) {
    let p = CollectiveSpinParams::new(n).unwrap();
    (p, SpinOperators::new(p))
}

fn x_css(p: CollectiveSpinParams) -> PureState {
    css(p, PI / 2.0, 0.0)
}

fn signal_axis() -> SpinAxis {
    SpinAxis::in_plane(PI / 4.0)
}

fn symmetric_grid() -> Vec<f64> {
    vec![-0.01, -0.005, -0.002, 0.002, 0.005, 0.01]
}

/// `exp(a)` by scaling and squaring a truncated Taylor series.
fn expm(a: &Array2<Complex64>) -> Array2<Complex64> {
    let norm: f64 = a.iter().map(|z| z.norm()).sum::<f64>().max(1e-300);
    let squarings = (norm / 0.25).log2().ceil().max(0.0) as i32;
    let scaled = a.mapv(|z| z / 2f64.powi(squarings));
    let d = a.nrows();
    let mut term = Array2::<Complex64>::eye(d);
    let mut sum = term.clone();
    for k in 1..30 {
        term = term.dot(&scaled).mapv(|z| z / k as f64);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = sum.dot(&sum);
    }
    sum
}

fn spectrum(a: &Array2<Complex64>) -> Vec<f64> {
    a.eigvalsh(UPLO::Lower).unwrap().to_vec()
}

#[test]
fn heisenberg_operator_is_a_similarity() {
    let (p, o) = ops(24);
    let h = build_hamiltonian(&HamiltonianSpec::critical_lmg(1.0, p), &o).unwrap();
    let a = o.component(&signal_axis());
    let at = heisenberg_operator(&h, &a, 0.9 / p.spin()).unwrap();
    let herm = at.iter().zip(at.t()).fold(0.0f64, |m, (x, y)| m.max((x - y.conj()).norm()));
    assert!(herm < 1e-10);
    for (x, y) in spectrum(&a).iter().zip(spectrum(&at)) {
        assert!((x - y).abs() < 1e-9);
    }
    let still = heisenberg_operator(&h, &a, 0.0).unwrap();
    assert!(still.iter().zip(&a).all(|(x, y)| (x - y).norm() < 1e-12));
    let small = o.component(&SpinAxis::z()).slice(ndarray::s![..3, ..3]).to_owned();
    assert!(heisenberg_operator(&h, &small, 1.0).is_err());
}

#[test]
fn coherent_state_fotoc_factorizes() {
    for n in [2, 20, 200] {
        let (p, o) = ops(n);
        let h = build_hamiltonian(&HamiltonianSpec::critical_lmg(1.0, p), &o).unwrap();
        let x = x_css(p);
        let dphis: Vec<f64> = (-10..=10).map(|i| 0.01 * i as f64).collect();
        for s in fotoc_scan(&h, &o, &x, &SpinAxis::z(), &dphis, 0.0).unwrap() {
            let exact = (s.delta_phi / 2.0).cos().powi(2 * n as i32);
            assert!((s.fidelity - exact).abs() < 1e-8, "N = {n}, dphi = {}", s.delta_phi);
        }
    }
}

#[test]
fn diagonal_signal_axis_matches_brute_force_exponential() {
    for n in [3, 20, 200] {
        let (p, o) = ops(n);
        let h = build_hamiltonian(&HamiltonianSpec::oat(1.0), &o).unwrap();
        let x = x_css(p);
        let sa = o.component(&signal_axis());
        for dphi in [-0.1, -0.01, 0.003, 0.05] {
            let u = expm(&sa.mapv(|z| z * Complex64::new(0.0, -dphi)));
            let v = u.dot(x.amplitudes());
            let amp: Complex64 = x.amplitudes().iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            let got = fotoc(&h, &o, &x, &signal_axis(), dphi, 0.0).unwrap().fidelity;
            assert!((got - amp.norm_sqr()).abs() < 1e-10, "N = {n}, dphi = {dphi}");
        }
    }
}

#[test]
fn coherent_state_curvature_is_projection_variance() {
    let (p, o) = ops(50);
    let h = build_hamiltonian(&HamiltonianSpec::critical_lmg(1.0, p), &o).unwrap();
    let samples = fotoc_scan(&h, &o, &x_css(p), &SpinAxis::z(), &DEFAULT_DELTA_PHI_GRID, 0.0).unwrap();
    let r = otoc_from_fotoc(&samples, 0.0).unwrap();
    assert!((r.otoc / (p.spin() / 2.0) - 1.0).abs() < 1e-3);
}

/// `var_psi(e^{iHt} A e^{-iHt})` computed directly.
fn heisenberg_variance(h: &Array2<Complex64>, a: &Array2<Complex64>, psi: &PureState, t: f64) -> f64 {
    let at = heisenberg_operator(h, a, t).unwrap();
    psi.expectation(&at.dot(&at)).re - psi.expectation(&at).re.powi(2)
}

#[test]
fn curvature_matches_heisenberg_variance() {
    let (p, o) = ops(50);
    let s = p.spin();
    let specs = [
        HamiltonianSpec::critical_lmg(1.0, p),
        HamiltonianSpec::lmg(1.0, 0.4 * s),
        HamiltonianSpec::oat(1.0),
        HamiltonianSpec::tat(1.0),
    ];
    let x = x_css(p);
    let a = o.component(&signal_axis());
    for spec in specs {
        let h = build_hamiltonian(&spec, &o).unwrap();
        for st in MEASURED_TIMES {
            let t = st / s;
            let samples = fotoc_scan(&h, &o, &x, &signal_axis(), &symmetric_grid(), t).unwrap();
            let r = otoc_from_fotoc(&samples, t).unwrap();
            let oracle = heisenberg_variance(&h, &a, &x, t);
            assert!((r.otoc / oracle - 1.0).abs() <= 0.02, "{spec:?} at S chi t = {st}: {} vs {oracle}", r.otoc);
            let exact = otoc_exact(&h, &o, &x, &signal_axis(), t).unwrap();
            assert!((exact / oracle - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn literal_trace_form_is_squared_mean_for_pure_states() {
    let (p, o) = ops(20);
    let h = build_hamiltonian(&HamiltonianSpec::critical_lmg(1.0, p), &o).unwrap();
    let x = css(p, 1.2, 0.3);
    let t = 0.7 / p.spin();
    let at = heisenberg_operator(&h, &o.component(&signal_axis()), t).unwrap();
    let literal = otoc_literal_trace(&h, &o, &x, &signal_axis(), t).unwrap();
    assert!((literal - x.expectation(&at).re.powi(2)).abs() < 1e-9);
}

/// The quartic term of `F` biases the fitted peak by about `I^2 dphi^4`, so
/// the exact-peak check needs `I dphi_max^2` well below one.
#[test]
fn ideal_fit_is_centered_on_initial_purity() {
    let (p, o) = ops(20);
    let h = build_hamiltonian(&HamiltonianSpec::critical_lmg(1.0, p), &o).unwrap();
    let x = x_css(p);
    let mixed = DensityMatrix::mixture(0.7, &x.to_density(), &DensityMatrix::maximally_mixed(p)).unwrap();
    for st in MEASURED_TIMES {
        let t = st / p.spin();
        let pure = otoc_from_fotoc(&fotoc_scan(&h, &o, &x, &signal_axis(), &DEFAULT_DELTA_PHI_GRID, t).unwrap(), t)
            .unwrap();
        assert!(pure.fit_offset.abs() <= 1e-6 && (pure.fit_peak - 1.0).abs() <= 1e-6);
        let samples = fotoc_scan(&h, &o, &mixed, &signal_axis(), &DEFAULT_DELTA_PHI_GRID, t).unwrap();
        let r = otoc_from_fotoc(&samples, t).unwrap();
        assert!(r.fit_offset.abs() <= 1e-6);
        assert!((r.fit_peak - mixed.purity()).abs() <= 1e-6);
    }
}

#[test]
fn zero_displacement_is_a_perfect_echo_for_every_hamiltonian() {
    let (p, o) = ops(60);
    let psi = css(p, 0.8, -0.4);
    for spec in [HamiltonianSpec::oat(1.3), HamiltonianSpec::lmg(1.0, 45.0), HamiltonianSpec::tat(0.7)] {
        let h = build_hamiltonian(&spec, &o).unwrap();
        for t in [0.01, 0.05, 0.2] {
            assert!((fotoc(&h, &o, &psi, &signal_axis(), 0.0, t).unwrap().fidelity - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn echo_reuse_matches_one_shot_fotoc() {
    let (p, o) = ops(30);
    let h = build_hamiltonian(&HamiltonianSpec::critical_lmg(1.0, p), &o).unwrap();
    let echo = Echo::new(&h, &o, &signal_axis()).unwrap();
    let x = x_css(p);
    for (dphi, t) in [(0.01, 0.02), (-0.03, 0.05)] {
        let once = fotoc(&h, &o, &x, &signal_axis(), dphi, t).unwrap().fidelity;
        let reused = echo.apply(&x, dphi, t).overlap(&x);
        assert!((once - reused).abs() < 1e-12);
    }
}

#[test]
fn fotoc_is_even_for_reflection_symmetric_states() {
    let (p, o) = ops(50);
    let s = p.spin();
    let h = build_hamiltonian(&HamiltonianSpec::critical_lmg(1.0, p), &o).unwrap();
    let x = x_css(p);
    for st in [0.3, 0.9, 1.5] {
        let dphis = [0.002, 0.01, 0.05, -0.002, -0.01, -0.05];
        let f = fotoc_scan(&h, &o, &x, &signal_axis(), &dphis, st / s).unwrap();
        for i in 0..3 {
            assert!((f[i].fidelity - f[i + 3].fidelity).abs() < 1e-9);
        }
    }
}

#[test]
fn otoc_grows_at_the_lyapunov_rate_and_tracks_antisqueezing() {
    let (p, o) = ops(200);
    let s = p.spin();
    let h = build_hamiltonian(&HamiltonianSpec::critical_lmg(1.0, p), &o).unwrap();
    let echo = Echo::new(&h, &o, &signal_axis()).unwrap();
    let x = x_css(p);
    let st: Vec<f64> = (0..=12).map(|i| 0.2 + 0.05 * i as f64).collect();
    let mut otoc = Vec::new();
    for &v in &st {
        let samples = lmgsim::scrambling::echo_scan(&echo, &x, &DEFAULT_DELTA_PHI_GRID, v / s);
        let i = otoc_from_fotoc(&samples, v / s).unwrap().otoc / (s / 2.0);
        let xi = antisqueezing(&o, &echo.forward(&x, v / s)).unwrap().xi_plus_sq;
        assert!((i - xi).abs() / xi <= 0.10, "S chi t = {v}: I = {i}, xi = {xi}");
        otoc.push(i);
    }
    let fit = fit_exponent(&st, &otoc, (0.2, 0.8)).unwrap();
    assert!((fit.lambda - 1.0).abs() <= 0.05, "lambda / S chi = {}", fit.lambda);
}

#[test]
fn fit_rejects_degenerate_samples() {
    let one = vec![FotocSample { delta_phi: 0.01, fidelity: 0.9, t: 0.0 }; 7];
    assert!(otoc_from_fotoc(&one, 0.0).is_err());
    let few: Vec<_> = [-0.01, 0.0, 0.01].iter().map(|&d| FotocSample { delta_phi: d, fidelity: 1.0, t: 0.0 }).collect();
    assert!(otoc_from_fotoc(&few, 0.0).is_err());
}

#[test]
fn csv_round_trip_is_exact() {
    let (p, o) = ops(10);
    let h = build_hamiltonian(&HamiltonianSpec::critical_lmg(1.0, p), &o).unwrap();
    let samples = fotoc_scan(&h, &o, &x_css(p), &signal_axis(), &DEFAULT_DELTA_PHI_GRID, 0.1).unwrap();
    let mut buf = Vec::new();
    write_fotoc_csv(&samples, &mut buf).unwrap();
    assert_eq!(read_fotoc_csv(buf.as_slice()).unwrap(), samples);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_parabola_is_recovered(c0 in 0.5..1.0f64, c2 in 0.1..1e4f64, x0 in -1e-3..1e-3f64) {
        let samples: Vec<_> = DEFAULT_DELTA_PHI_GRID
            .iter()
            .map(|&d| FotocSample { delta_phi: d, fidelity: c0 - c2 * (d - x0).powi(2), t: 0.0 })
            .collect();
        let r = otoc_from_fotoc(&samples, 0.0).unwrap();
        prop_assert!((r.otoc / c2 - 1.0).abs() < 1e-8);
        prop_assert!((r.fit_offset - x0).abs() < 1e-8);
        prop_assert!((r.fit_peak - c0).abs() < 1e-8);
    }

    #[test]
    fn curvature_ignores_constant_shift(shift in -0.5..0.5f64, c2 in 1.0..500.0f64) {
        let base: Vec<_> = DEFAULT_DELTA_PHI_GRID
            .iter()
            .map(|&d| FotocSample { delta_phi: d, fidelity: 1.0 - c2 * d * d + 1e-4 * d.powi(3) * c2, t: 0.0 })
            .collect();
        let moved: Vec<_> = base.iter().map(|s| FotocSample { fidelity: s.fidelity + shift, ..*s }).collect();
        let a = otoc_from_fotoc(&base, 0.0).unwrap();
        let b = otoc_from_fotoc(&moved, 0.0).unwrap();
        prop_assert!((a.otoc - b.otoc).abs() <= 1e-9 * a.otoc.abs());
    }
}

#[test]
fn mean_spin_axis_has_vanishing_curvature_at_time_zero() {
    let (p, o) = ops(30);
    let h = build_hamiltonian(&HamiltonianSpec::critical_lmg(1.0, p), &o).unwrap();
    let samples = fotoc_scan(&h, &o, &x_css(p), &SpinAxis::x(), &DEFAULT_DELTA_PHI_GRID, 0.0).unwrap();
    assert!(otoc_from_fotoc(&samples, 0.0).unwrap().otoc.abs() < 1e-8);
    assert!(spin_moments(&o, &x_css(p), &SpinAxis::x()).unwrap().variance.abs() < 1e-10);
}
