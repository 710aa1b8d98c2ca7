//! Desk-scale laboratory for interacting particle systems and their
//! mean-field limits.
//!
//! The crate is organised around five subsystems:
//!
//! * [`kernels`] — interaction kernels, drift envelopes, mollifiers and the
//!   empirical/measure convolution operators that assemble particle drifts.
//! * [`particles`] — Euler–Maruyama stepping for the N-particle system, the
//!   moderately interacting system and the synchronously coupled limit
//!   process, driven by a counter-based RNG.
//! * [`pde`] — deterministic reference solutions: 1D nonlinear Fokker–Planck,
//!   the Burgers CDF equation with a Hopf–Cole oracle, the Gaussian heat
//!   semigroup, Picard density iteration and a backward-PDE gradient study.
//! * [`mixedlp`] — mixed Lebesgue norms with permuted integration order,
//!   localized norms, index-set membership and inequality checkers.
//! * [`chaosmetrics`] — distances between empirical and reference laws,
//!   discrete relative entropy with its inequality suite, exponential-moment
//!   statistics and convergence-rate extraction.

pub mod chaosmetrics;
pub mod grid;
pub mod kernels;
pub mod mixedlp;
pub mod particles;
pub mod pde;
pub mod rng;

pub use grid::GridField;
