//! Shared fixtures for the benchmarks.

use std::f64::consts::FRAC_PI_2;

use lmgsim::{build_hamiltonian, css, CollectiveSpinParams, Complex64, HamiltonianSpec, PureState, SpinOperators};
use ndarray::Array2;

pub struct Fixture {
    pub params: CollectiveSpinParams,
    pub ops: SpinOperators,
    pub x: PureState,
    /// Critical LMG Hamiltonian, `Omega = S chi` with `chi = 1`.
    pub h: Array2<Complex64>,
}

impl Fixture {
    pub fn new(n: usize) -> Self {
        let params = CollectiveSpinParams::new(n).expect("n >= 1");
        let ops = SpinOperators::new(params);
        let h = build_hamiltonian(&HamiltonianSpec::critical_lmg(1.0, params), &ops).expect("valid spec");
        Self { params, x: css(params, FRAC_PI_2, 0.0), ops, h }
    }

    /// Physical time for `S chi t = st`.
    pub fn time(&self, st: f64) -> f64 {
        st / self.params.spin()
    }
}
