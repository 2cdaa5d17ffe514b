//! Co-optimization of a community water system and a microgrid.
//!
//! The crate provides the building blocks for day-ahead dispatch of a small
//! community that runs both an electric microgrid (generators, storage, a grid
//! tie) and a water system (wastewater treatment, treatment units, storage
//! tanks, pumps):
//!
//! * [`scenario`] — input data model, validation, and JSON (de)serialization;
//! * [`model`] — a solver-agnostic mixed-integer linear model representation;
//! * [`solver`] — a bounded-variable simplex, branch-and-bound, and a
//!   brute-force oracle, all deterministic;
//! * [`pwl`] — max-affine piecewise-linear approximation of convex pump
//!   curves, plus an exact mixed-integer equality encoding;
//! * [`mem`] / [`mwm`] — model builders for the energy side and the water
//!   side respectively;
//! * [`central`] — the monolithic benchmark that optimizes both systems as
//!   one model;
//! * [`admm`] — the decentralized coordination loop in which the two
//!   operators exchange only a power-consumption profile;
//! * [`transport`] — a length-prefixed socket protocol so the two agents can
//!   run as separate processes;
//! * [`report`] — comparison runs and deterministic CSV/JSON report emission.

pub mod admm;
pub mod bundled;
pub mod central;
pub mod mem;
pub mod model;
pub mod mwm;
pub mod pwl;
pub mod scenario;
pub mod solver;
pub mod transport;

pub use model::{ConstraintId, LinearConstraint, ModelError, ModelIR, Sense, VarId, VarKind};
pub use solver::{
    BuiltinSolver, SolveResult, SolveStatus, SolverBackend, SolverError, Tolerances,
};
