//! The `book/` chapters, included as doc comments so that `cargo test`
//! compiles and runs every code snippet in the guide. If the text drifts
//! from the library, the build breaks.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[doc = include_str!("../../../book/src/grids-and-transforms.md")]
mod grids_and_transforms {}

#[doc = include_str!("../../../book/src/hartree-dynamics.md")]
mod hartree_dynamics {}

#[doc = include_str!("../../../book/src/wigner-transform.md")]
mod wigner_transform {}

#[doc = include_str!("../../../book/src/phase-space-operators.md")]
mod phase_space_operators {}

#[doc = include_str!("../../../book/src/vlasov-solver.md")]
mod vlasov_solver {}

#[doc = include_str!("../../../book/src/diagnostics-and-checks.md")]
mod diagnostics_and_checks {}

#[doc = include_str!("../../../book/src/classical-limit.md")]
mod classical_limit {}
