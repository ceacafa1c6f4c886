//! Open tight-binding quantum systems described by an energy-dependent,
//! complex-symmetric effective Hamiltonian.
//!
//! The crate covers the whole chain from model construction to sweep
//! tables:
//!
//! * [`models`] builds the closed Hamiltonian and the lead self-energies of
//!   the three model systems (chain, double dot, lattice billiard).
//! * [`heff`] assembles `H_eff(E)`, solves the fixed-point equations for the
//!   resonance poles, measures the phase rigidity `r` of eigenvectors and
//!   locates branch points (exceptional points) in the `(v, E)` plane.
//! * [`scattering`] computes transmission amplitudes through two independent
//!   routes, the interior scattering wavefunction and its phase rigidity `rho`.
//! * [`sweep`] runs parameter grids in parallel and writes deterministic CSV.
//! * [`spectral`] holds the eigendecomposition with bilinear (c-product)
//!   normalization that everything else is built on.

pub mod band;
pub mod error;
pub mod heff;
pub mod models;
pub mod scattering;
pub mod simplex;
pub mod spectral;
pub mod sweep;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

pub use heff::{
    build_heff, find_branch_point, phase_rigidity_state, solve_poles, BranchPoint,
    BranchSearch, EffectiveHamiltonian, ResonanceState,
};
pub use models::{ModelKind, ModelSpec, OpenSystem, Side};
pub use scattering::{
    double_pole_profile, phase_rigidity_wave, scattering_wavefunction, transmission_direct,
    transmission_spectral, ScatteringSolution,
};
pub use spectral::{c_normalize, eig_complex_symmetric, overlaps, track_pairing, EigenSystem};
pub use sweep::{correlate, run_sweep, SweepPlan, SweepTable};
