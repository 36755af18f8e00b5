//! Exact transition probabilities of the multi-species asymmetric simple
//! exclusion process on the integer lattice.
//!
//! N particles hop right with probability `p` and left with `q = 1 - p` after
//! exponential waiting times. A jump onto a site held by an equal-or-higher
//! species is suppressed; a jump onto a lower species swaps the two particles.
//! The N-particle transition probability from `(Y, nu)` to `(X, pi)` is an
//! N-fold contour integral of a sum over permutations, where each permutation
//! carries a matrix amplitude built from two-particle interaction scalars.
//!
//! The crate is organised along that pipeline:
//!
//! * [`combinatorics`] — species words, sectors (multiset blocks), permutation
//!   inversions and adjacent-transposition paths;
//! * [`bethe`] — the interaction scalars S, P, Q, T, their 2x2 sector blocks,
//!   and the transport of sector vectors through transposition paths;
//! * [`integrability`] — numerical checks of the inverse, Yang-Baxter and
//!   braid relations that make the amplitudes well defined;
//! * [`quadrature`] — trapezoidal contour rule on circles, tensor grids, and
//!   node-doubling convergence control;
//! * [`transition`] — the probability formula itself, single states or whole
//!   windows at once;
//! * [`oracle`] — an independent finite-window CTMC (uniformization) and a
//!   direct Gillespie sampler used to cross-validate the formula.

// The grid kernels walk several parallel buffers by index and thread their
// full evaluation context through a handful of helpers; both lints fire on
// intent there.
#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod bethe;
pub mod combinatorics;
pub mod integrability;
pub mod oracle;
pub mod quadrature;
pub mod transition;

pub use bethe::{SpectralPoint, SystemParams};
pub use combinatorics::{sector_of, Permutation, Sector, SpeciesWord, TranspositionPath};
pub use quadrature::{max_radius, ContourSpec, ConvergenceSettings};
pub use transition::{ProbabilityResult, State, TransitionQuery};

/// Complex scalar used throughout the analytic path.
pub type Complex64 = num_complex::Complex<f64>;
