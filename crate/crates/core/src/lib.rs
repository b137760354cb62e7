//! Numerical lab for the doubly nonlinear equation `∂ₜu = Δₚ(u^{1/(p-1)})` on
//! radial model manifolds: geometry, explicit constants, closed-form
//! solutions, a conservative solver and numerical checks of the decay and
//! localization estimates.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod constants;
pub mod error;
pub mod exact;
pub mod geometry;
pub mod quadrature;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use exact::ExactSolution;
pub use geometry::{ModelManifold, RadialSet, Region};
pub use solver::{Field, RadialGrid, SolverConfig, Trace};
