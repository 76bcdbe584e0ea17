//! Exact simulation of collective-spin dynamics on the symmetric subspace of
//! `N` spin-1/2 particles.
//!
//! The crate covers the Lipkin-Meshkov-Glick (LMG) model `chi S_z^2 + Omega S_x`
//! and its one- and two-axis-twisting relatives, the time-reversed signal
//! amplification protocol built on them, scrambling diagnostics (fidelity
//! out-of-time-order correlators), and simulated state tomography.
//!
//! Modules, bottom-up:
//!
//! * [`dicke`]: basis, spin operators, coherent states, rotations.
//! * [`dynamics`]: Hamiltonians, stability classification, unitary and
//!   dissipative evolution.
//! * [`observables`]: moments, antisqueezing, Binder cumulant, quantum Fisher
//!   information, spherical Wigner functions.
//! * [`scrambling`]: Heisenberg operators, FOTOC samples and OTOC extraction.
//! * [`satin`]: the forward / encode / reverse amplification protocol.
//! * [`tomography`]: measurement sampling, maximum-likelihood reconstruction,
//!   bootstrap error bars.

pub mod dicke;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod observables;
pub mod rng;
pub mod satin;
pub mod scrambling;
pub mod tolerance;
pub mod tomography;

mod linalg;

pub use num_complex::Complex64;

pub use dicke::{
    build_spin_operators, css, rotate, spin_component, CollectiveSpinParams, DensityMatrix, PureState, SpinAxis,
    SpinOperators, SpinState, State,
};
pub use dynamics::{
    build_hamiltonian, classify_stability, dephased_oat_state, evolve_lindblad, evolve_unitary, HamiltonianKind,
    HamiltonianSpec, LindbladIntegrator, LindbladSpec, Propagator, PropagatorCache, Regime, StabilityReport,
    TimeDirection,
};
pub use error::{Error, Result};
pub use fit::{fit_exponent, ExponentFit};
pub use observables::{antisqueezing, binder_cumulant, qfi, spin_moments, wigner, AntisqueezingResult, Moments, QfiResult};
pub use satin::{
    gain_vs_time_sweep, metrological_gain, noise_n2, run_satin, signal_gain, ReadoutAxis, SatinConfig, SatinEngine,
    SatinResult, SignalGain,
};
pub use scrambling::{fotoc, fotoc_scan, heisenberg_operator, otoc_exact, otoc_from_fotoc, Echo, FotocSample, OtocResult};
pub use tolerance::Tolerances;
pub use tomography::{
    bootstrap_otoc, reconstruct, simulate_measurements, tomographic_fotoc_pipeline, uhlmann_fidelity, BootstrapResult,
    MeasurementRecord, MeasurementSetting, PipelineSetup, ReconstructionConfig, SeedScheme, ShotsConfig,
};
