//! Deterministic LP/MILP solving.
//!
//! Three entry points share one model representation:
//!
//! * [`solve_lp`] — bounded-variable primal simplex (binaries relaxed);
//! * [`solve_milp`] — branch-and-bound on top of the simplex;
//! * [`brute_force_milp`] — exhaustive enumeration of binary assignments,
//!   kept deliberately dumb so it can serve as an oracle for the tree search.
//!
//! Everything is deterministic: identical models produce bit-identical
//! results because every tie (entering variable, leaving row, node order,
//! branching choice) is broken by a fixed rule, and no hashed containers are
//! used anywhere near the numeric paths.

mod branch_bound;
mod simplex;

pub(crate) use simplex::LpInstance;

use crate::model::{ModelIR, VarKind};
use thiserror::Error;

/// Outcome classification for a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Hit an iteration or node budget; the result carries the incumbent (if
    /// any) and the best proven bound.
    IterationLimit,
}

/// Numeric tolerances shared by all solver entry points.
///
/// * `feasibility` — largest constraint/bound violation accepted in a
///   returned point. 1e-9 keeps physical residuals far below the 1e-6 the
///   dispatch checks demand, while staying clear of f64 noise on kW-scale
///   data.
/// * `integrality` — distance from {0, 1} within which a relaxed binary
///   counts as integral.
/// * `mip_gap` — relative gap `(incumbent - bound) / max(1, |incumbent|)` at
///   which branch-and-bound declares optimality. Kept tight (1e-9) so the
///   MILP result is comparable against the brute-force oracle at 1e-6.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub feasibility: f64,
    pub integrality: f64,
    pub mip_gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feasibility: 1e-9,
            integrality: 1e-6,
            mip_gap: 1e-9,
        }
    }
}

/// Result of any solve. `assignment` holds one value per model variable (the
/// structural variables only, never slacks). For [`SolveStatus::Infeasible`]
/// the objective is `+inf`; for [`SolveStatus::Unbounded`] it is `-inf`.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub assignment: Vec<f64>,
    pub objective: f64,
    /// Proven lower bound on the optimum. Equals `objective` for LP solves
    /// and for MILP solves that close the gap.
    pub best_bound: f64,
    /// Row duals, present for pure LP solves only.
    pub duals: Option<Vec<f64>>,
    pub simplex_iterations: u64,
    pub nodes: u64,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("model has {count} binaries, more than the brute-force cap of {max}")]
    TooManyBinaries { count: usize, max: usize },
}

/// Default cap on binaries the brute-force oracle will enumerate (2^14 LPs).
pub const BRUTE_FORCE_MAX_BINARIES: usize = 14;

/// Anything that can solve a [`ModelIR`]. The built-in solver implements it;
/// an external backend would slot in here without touching the callers.
pub trait SolverBackend {
    fn solve(&self, model: &ModelIR) -> SolveResult;
}

/// The built-in simplex + branch-and-bound backend.
#[derive(Debug, Clone, Default)]
pub struct BuiltinSolver {
    pub tolerances: Tolerances,
}

impl SolverBackend for BuiltinSolver {
    fn solve(&self, model: &ModelIR) -> SolveResult {
        if model.num_binaries() == 0 {
            solve_lp(model, &self.tolerances)
        } else {
            solve_milp(model, &self.tolerances)
        }
    }
}

/// Solves the continuous relaxation of `model` (binaries become continuous
/// within their bounds). Returns row duals on optimality.
pub fn solve_lp(model: &ModelIR, tol: &Tolerances) -> SolveResult {
    let inst = LpInstance::from_model(model);
    let out = inst.solve(&inst.base_lower, &inst.base_upper, tol);
    if out.status == SolveStatus::Optimal && out.max_infeasibility > tol.feasibility {
        log::warn!(
            "LP optimum carries residual infeasibility {:.3e}",
            out.max_infeasibility
        );
    }
    SolveResult {
        status: out.status,
        assignment: out.structural(model.num_vars()),
        objective: out.objective,
        best_bound: out.objective,
        duals: Some(out.duals),
        simplex_iterations: out.iterations,
        nodes: 0,
    }
}

/// Solves `model` to proven optimality (within the MIP gap) by
/// branch-and-bound: best-bound node selection, most-fractional branching
/// with ties broken toward the lowest variable id, and a rounding heuristic
/// at every node to find incumbents early.
pub fn solve_milp(model: &ModelIR, tol: &Tolerances) -> SolveResult {
    branch_bound::solve(model, tol, branch_bound::DEFAULT_NODE_LIMIT)
}

/// Like [`solve_milp`] with an explicit node budget.
pub fn solve_milp_with_node_limit(model: &ModelIR, tol: &Tolerances, node_limit: u64) -> SolveResult {
    branch_bound::solve(model, tol, node_limit)
}

/// Exhaustively enumerates every assignment of the model's binaries, solving
/// the continuous LP for each, and returns the best. Exponential by design;
/// refuses models with more than `max_binaries` binaries.
pub fn brute_force_milp(
    model: &ModelIR,
    tol: &Tolerances,
    max_binaries: usize,
) -> Result<SolveResult, SolverError> {
    let binaries: Vec<usize> = model
        .vars
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(i, _)| i)
        .collect();
    if binaries.len() > max_binaries {
        return Err(SolverError::TooManyBinaries {
            count: binaries.len(),
            max: max_binaries,
        });
    }
    let inst = LpInstance::from_model(model);
    let mut lower = inst.base_lower.clone();
    let mut upper = inst.base_upper.clone();

    let mut best: Option<simplex::LpOutcome> = None;
    let mut iterations = 0u64;
    let mut nodes = 0u64;
    let mut unbounded = false;
    for mask in 0u64..(1u64 << binaries.len()) {
        for (bit, &col) in binaries.iter().enumerate() {
            // Fixing a binary below its tightened lower bound (or above its
            // upper) just makes that branch infeasible, which the LP reports.
            let v = ((mask >> bit) & 1) as f64;
            lower[col] = v.max(inst.base_lower[col]);
            upper[col] = v.min(inst.base_upper[col]);
        }
        let out = inst.solve(&lower, &upper, tol);
        iterations += out.iterations;
        nodes += 1;
        match out.status {
            SolveStatus::Optimal => {
                let better = match &best {
                    None => true,
                    Some(b) => out.objective < b.objective - 1e-12,
                };
                if better {
                    best = Some(out);
                }
            }
            SolveStatus::Unbounded => unbounded = true,
            _ => {}
        }
    }
    if unbounded {
        return Ok(SolveResult {
            status: SolveStatus::Unbounded,
            assignment: vec![],
            objective: f64::NEG_INFINITY,
            best_bound: f64::NEG_INFINITY,
            duals: None,
            simplex_iterations: iterations,
            nodes,
        });
    }
    Ok(match best {
        Some(out) => SolveResult {
            status: SolveStatus::Optimal,
            assignment: out.structural(model.num_vars()),
            objective: out.objective,
            best_bound: out.objective,
            duals: None,
            simplex_iterations: iterations,
            nodes,
        },
        None => SolveResult {
            status: SolveStatus::Infeasible,
            assignment: vec![],
            objective: f64::INFINITY,
            best_bound: f64::INFINITY,
            duals: None,
            simplex_iterations: iterations,
            nodes,
        },
    })
}

/// Dual objective of the bounded-variable LP, computed from the row duals
/// alone: `y·b + sum_j d_j * (active bound of j)` with `d_j = c_j - y·a_j`
/// credited to the lower bound when `d_j > 0` and to the upper bound when
/// `d_j < 0`. At an optimal basis this equals the primal objective (strong
/// duality); a finite mismatch reveals numeric drift. Returns NaN if a
/// needed bound is infinite (a dual-infeasible sign pattern).
pub fn lp_dual_objective(model: &ModelIR, duals: &[f64]) -> f64 {
    let mut total = model.objective_offset;
    for (i, c) in model.constraints.iter().enumerate() {
        total += duals[i] * c.rhs;
    }
    // d_j accumulated per structural variable.
    let mut reduced: Vec<f64> = model.objective.clone();
    for (i, c) in model.constraints.iter().enumerate() {
        for (v, a) in &c.terms {
            reduced[v.0] -= duals[i] * a;
        }
    }
    for (j, d) in reduced.iter().enumerate() {
        let (l, u) = (model.vars[j].lower, model.vars[j].upper);
        let bound = if *d > 1e-11 {
            l
        } else if *d < -1e-11 {
            u
        } else if l.is_finite() {
            l
        } else if u.is_finite() {
            u
        } else {
            0.0
        };
        if !bound.is_finite() {
            return f64::NAN;
        }
        total += d * bound;
    }
    total
}
