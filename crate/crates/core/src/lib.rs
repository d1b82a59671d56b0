//! Numerical laboratory for the fully nonlinear Alt-Phillips problem
//! `F(D²u) = u^{γ−1}`, `u ≥ 0`, `γ ∈ (1,2)`.
//!
//! Solutions are computed with a monotone nine-point scheme and Howard
//! policy iteration, and then measured: growth exponent, Harnack ratio,
//! Hessian-to-right-hand-side ratio, contact-set density at free-boundary
//! points, blow-up convergence to half-space profiles and normal continuity.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod discretization;
pub mod error;
pub mod experiment;
pub mod freeboundary;
pub mod grid;
pub mod linsolve;
pub mod operators;
pub mod params;
pub mod scaling;
pub mod solver;
pub mod sym;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{hessian_central, restrict_to_ball, Grid, ScalarField};
pub use operators::{OperatorKind, OperatorSpec};
pub use params::{beta_of, Params};
pub use sym::SymMatrix;
