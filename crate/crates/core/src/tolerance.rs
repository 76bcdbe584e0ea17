//! Numerical tolerances shared by the state invariants.

use serde::{Deserialize, Serialize};

/// Thresholds used when validating states and operators.
///
/// The defaults are the ones every invariant test in this crate is written
/// against; the `*_with` constructors on states accept a custom set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Allowed deviation of a pure state's norm from one.
    pub state_norm: f64,
    /// Allowed deviation of a density matrix trace from one.
    pub trace: f64,
    /// Allowed max-norm of `A - A^dagger`.
    pub hermitian: f64,
    /// Smallest eigenvalue accepted as non-negative.
    pub psd: f64,
}

pub const STATE_NORM_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-8;
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-8;

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            state_norm: STATE_NORM_TOL,
            trace: TRACE_TOL,
            hermitian: HERMITIAN_TOL,
            psd: PSD_TOL,
        }
    }
}
