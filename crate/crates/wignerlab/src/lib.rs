//! wignerlab: a phase-space laboratory for mixed-state semi-relativistic
//! Hartree dynamics and its classical Vlasov-Poisson limit.
//!
//! The crate provides
//!
//! * [`spectral`] — periodic grids, unitary FFTs, Fourier multipliers and
//!   band-limited interpolation (the transform convention lives there);
//! * [`poisson`] — spectral solvers for `−κΔV = n` and its Yukawa variant;
//! * [`hartree`] — mixed quantum states `ρ = Σ λ_j |ψ_j⟩⟨ψ_j|` evolved by
//!   Strang splitting with a self-consistent field;
//! * [`wigner`] — the ε-scaled Wigner transform, the phase-space operators
//!   Γ^ε and Θ^ε[V], weak pairings and the weak-form residual;
//! * [`vlasov`] — a semi-Lagrangian solver for the relativistic
//!   Vlasov-Poisson system (the ε → 0 target);
//! * [`diagnostics`] — conserved quantities, Schatten norms, density-norm
//!   inequalities and assumption margins;
//! * [`harness`] — run configuration, the ε sweep, reports, and the CLI.
//!
//! The `book/` directory holds a guide whose code snippets are compiled and
//! run as doc-tests (see the `guide` module), so the narrative cannot drift
//! from the library.

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod hartree;
pub mod io;
pub mod poisson;
pub mod profile;
pub mod spectral;
pub mod vlasov;
pub mod wigner;

mod guide;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
