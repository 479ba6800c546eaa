//! Least-solution solver for equation systems of the form
//!
//! ```text
//!     x1 = e11 ∨ e12 ∨ ... ∨ e1k
//!     ...
//!     xn = en1 ∨ ... ∨ enm
//! ```
//!
//! over the extended reals `[-∞, ∞]`, where every `eij` is monotone and
//! order-concave: constants, monotone affine forms, minima of affine forms,
//! and parametrized linear or semidefinite programs whose right-hand sides
//! are the values of other variables.
//!
//! The solver performs max-strategy iteration: it repeatedly picks one
//! argument of every `∨` (a strategy), computes the least solution of the
//! resulting conjunctive system that is at or above the current valuation,
//! and switches to strictly better arguments until the valuation solves the
//! whole system.  Conjunctive systems are evaluated through convex
//! optimization: each equation contributes linear or semidefinite
//! constraints, and each variable is maximized over the resulting feasible
//! set.
//!
//! On top of the solver sits a static analysis for programs with affine
//! assignments and quadratic guards: the [`relax`] module builds, per
//! program point and quadratic template, one semidefinite equation whose
//! least solution bounds the template value over all reachable states.
//!
//! Modules:
//! - [`ext`]: extended reals and valuations.
//! - [`system`]: expressions, equation systems, strategies.
//! - [`linprog`]: dense two-phase simplex and the LP operator.
//! - [`sdp`]: dense conic interior-point solver and the SDP operator.
//! - [`eval`]: conjunctive-system evaluation and the strategy-iteration loop.
//! - [`relax`]: program relaxation onto quadratic templates.
//! - [`model`]: serde models for the on-disk JSON formats.

pub mod error;
pub mod eval;
pub mod ext;
pub mod linprog;
pub mod model;
pub mod relax;
pub mod sdp;
pub mod system;

pub use error::Error;
pub use eval::{solve_least, Algorithm, Solution, SolveOptions, TraceStep};
pub use ext::{ExtReal, Valuation};
pub use system::{EquationSystem, Expression, Leaf, Strategy, VarId};
