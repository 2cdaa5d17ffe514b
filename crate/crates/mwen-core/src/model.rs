//! Solver-agnostic model representation.
//!
//! A [`ModelIR`] is a minimize-only linear objective over continuous and
//! binary variables, a list of sparse linear constraints, and nothing else.
//! Model builders emit into this structure; every solver entry point consumes
//! it. Keeping the representation dumb makes it easy to evaluate candidate
//! solutions independently of any solver and to cross-check two different
//! solution routes against each other.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a variable within its [`ModelIR`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

impl std::fmt::Display for VarId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "x{}", self.0)
    }
}

/// Index of a constraint within its [`ModelIR`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConstraintId(pub usize);

/// Variable domain kind. Binaries are `{0, 1}` possibly tightened by bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

/// A single decision variable: name, kind, and inclusive bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariableDef {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

/// Constraint sense for `lhs (sense) rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

/// Sparse linear constraint `sum(coeff * var) (sense) rhs`.
///
/// The `tag` names the constraint family it belongs to (e.g.
/// `"power_balance"`), so infeasibility reports and conservation checks can
/// say *which* physical rule was broken rather than pointing at a row number.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub tag: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Result of evaluating one constraint at a candidate point.
#[derive(Debug, Clone)]
pub struct ConstraintResidual {
    pub id: ConstraintId,
    pub tag: String,
    /// Raw signed residual `lhs - rhs`.
    pub residual: f64,
    /// Non-negative breach magnitude (0 when the constraint holds).
    pub violation: f64,
}

/// Result of [`ModelIR::evaluate`].
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: f64,
    pub residuals: Vec<ConstraintResidual>,
    /// Bound breaches `(var, amount)` for variables outside `[lower, upper]`.
    pub bound_violations: Vec<(VarId, f64)>,
    /// Largest violation across constraints and bounds.
    pub max_violation: f64,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("variable {name:?}: invalid bounds [{lower}, {upper}]")]
    InvalidBounds { name: String, lower: f64, upper: f64 },
    #[error("variable {name:?}: binary bounds [{lower}, {upper}] must lie within [0, 1]")]
    BinaryBounds { name: String, lower: f64, upper: f64 },
    #[error("constraint {tag:?}: unknown variable id {var}")]
    UnknownVariable { tag: String, var: usize },
    #[error("constraint {tag:?}: variable {var} appears more than once")]
    DuplicateTerm { tag: String, var: usize },
    #[error("constraint {tag:?}: coefficient or rhs is not finite")]
    NonFinite { tag: String },
    #[error("constraint {tag:?} has no variables and 0 {sense} {rhs} fails: vacuously infeasible")]
    VacuouslyInfeasible { tag: String, sense: String, rhs: f64 },
    #[error("constraint {tag:?} has no variables and is vacuous; refusing to store it")]
    Vacuous { tag: String },
    #[error("objective term references unknown variable id {var}")]
    UnknownObjectiveVariable { var: usize },
    #[error("quadratic penalty: weight {weight} must be finite and >= 0")]
    BadPenaltyWeight { weight: f64 },
    #[error("quadratic penalty: interval [{lo}, {hi}] must be finite and contain center {center}")]
    BadPenaltyInterval { lo: f64, hi: f64, center: f64 },
    #[error("quadratic penalty: cut_count must be >= 1")]
    NoCuts,
    #[error("assignment has {got} values but the model has {expected} variables")]
    AssignmentLength { expected: usize, got: usize },
}

/// A mixed-integer linear model: minimize `objective . x + objective_offset`
/// subject to linear constraints and variable bounds.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ModelIR {
    pub name: String,
    pub vars: Vec<VariableDef>,
    pub constraints: Vec<LinearConstraint>,
    /// Dense objective coefficients, parallel to `vars`.
    pub objective: Vec<f64>,
    /// Constant added to every objective value (does not affect the argmin).
    pub objective_offset: f64,
}

impl ModelIR {
    pub fn new(name: impl Into<String>) -> Self {
        ModelIR {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    /// Adds a variable and returns its id. Binary bounds must stay within
    /// `[0, 1]`; use a collapsed interval (e.g. `[0, 0]`) to pin a binary.
    pub fn add_variable(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lower: f64,
        upper: f64,
    ) -> Result<VarId, ModelError> {
        let name = name.into();
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(ModelError::InvalidBounds { name, lower, upper });
        }
        if kind == VarKind::Binary && !(0.0..=1.0).contains(&lower) || kind == VarKind::Binary && !(0.0..=1.0).contains(&upper) {
            return Err(ModelError::BinaryBounds { name, lower, upper });
        }
        self.vars.push(VariableDef { name, kind, lower, upper });
        self.objective.push(0.0);
        Ok(VarId(self.vars.len() - 1))
    }

    /// Convenience: continuous variable.
    pub fn add_continuous(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
    ) -> Result<VarId, ModelError> {
        self.add_variable(name, VarKind::Continuous, lower, upper)
    }

    /// Convenience: binary variable with full `[0, 1]` range.
    pub fn add_binary(&mut self, name: impl Into<String>) -> Result<VarId, ModelError> {
        self.add_variable(name, VarKind::Binary, 0.0, 1.0)
    }

    /// Adds `coeff` to the objective coefficient of `var`.
    pub fn add_objective_term(&mut self, var: VarId, coeff: f64) -> Result<(), ModelError> {
        if var.0 >= self.vars.len() {
            return Err(ModelError::UnknownObjectiveVariable { var: var.0 });
        }
        self.objective[var.0] += coeff;
        Ok(())
    }

    /// Adds a constraint after checking it is well formed: every referenced
    /// variable exists, no variable appears twice, all numbers are finite,
    /// and the term list is non-empty. A constraint with no variables is
    /// refused outright — either it can never hold (vacuously infeasible) or
    /// it says nothing; both indicate a builder bug worth surfacing early.
    pub fn add_linear_constraint(&mut self, c: LinearConstraint) -> Result<ConstraintId, ModelError> {
        if c.terms.is_empty() {
            let holds = match c.sense {
                Sense::Le => 0.0 <= c.rhs,
                Sense::Eq => c.rhs == 0.0,
                Sense::Ge => 0.0 >= c.rhs,
            };
            return Err(if holds {
                ModelError::Vacuous { tag: c.tag }
            } else {
                ModelError::VacuouslyInfeasible {
                    tag: c.tag,
                    sense: format!("{:?}", c.sense),
                    rhs: c.rhs,
                }
            });
        }
        if !c.rhs.is_finite() || c.terms.iter().any(|(_, a)| !a.is_finite()) {
            return Err(ModelError::NonFinite { tag: c.tag });
        }
        let mut seen = vec![];
        for (v, _) in &c.terms {
            if v.0 >= self.vars.len() {
                return Err(ModelError::UnknownVariable { tag: c.tag, var: v.0 });
            }
            if seen.contains(&v.0) {
                return Err(ModelError::DuplicateTerm { tag: c.tag, var: v.0 });
            }
            seen.push(v.0);
        }
        self.constraints.push(c);
        Ok(ConstraintId(self.constraints.len() - 1))
    }

    /// Shorthand used heavily by the model builders.
    pub fn constrain(
        &mut self,
        tag: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> Result<ConstraintId, ModelError> {
        self.add_linear_constraint(LinearConstraint {
            tag: tag.into(),
            terms,
            sense,
            rhs,
        })
    }

    /// Evaluates a full assignment: objective value, per-constraint signed
    /// residuals, bound breaches, and the worst violation over everything.
    pub fn evaluate(&self, assignment: &[f64]) -> Result<Evaluation, ModelError> {
        if assignment.len() != self.vars.len() {
            return Err(ModelError::AssignmentLength {
                expected: self.vars.len(),
                got: assignment.len(),
            });
        }
        let objective = self.objective_offset
            + self
                .objective
                .iter()
                .zip(assignment)
                .map(|(c, x)| c * x)
                .sum::<f64>();
        let mut residuals = Vec::with_capacity(self.constraints.len());
        let mut max_violation = 0.0_f64;
        for (i, c) in self.constraints.iter().enumerate() {
            let lhs: f64 = c.terms.iter().map(|(v, a)| a * assignment[v.0]).sum();
            let residual = lhs - c.rhs;
            let violation = match c.sense {
                Sense::Le => residual.max(0.0),
                Sense::Ge => (-residual).max(0.0),
                Sense::Eq => residual.abs(),
            };
            max_violation = max_violation.max(violation);
            residuals.push(ConstraintResidual {
                id: ConstraintId(i),
                tag: c.tag.clone(),
                residual,
                violation,
            });
        }
        let mut bound_violations = vec![];
        for (i, (v, x)) in self.vars.iter().zip(assignment).enumerate() {
            let breach = (v.lower - x).max(x - v.upper).max(0.0);
            if breach > 0.0 {
                bound_violations.push((VarId(i), breach));
                max_violation = max_violation.max(breach);
            }
        }
        Ok(Evaluation {
            objective,
            residuals,
            bound_violations,
            max_violation,
        })
    }

    /// Models `weight * (x - center)^2` in the objective as an epigraph
    /// variable `q` supported from below by tangent cuts.
    ///
    /// Cut points are spaced evenly across `interval`; `center` is inserted
    /// as an extra cut point when the even grid misses it, so the epigraph is
    /// exact at `center` (the cut there is `q >= 0`, met with equality when
    /// `x == center`). The maximum of the cuts never exceeds the true
    /// quadratic anywhere, and matches it exactly at every cut point. `q`
    /// enters the objective with coefficient 1. A zero weight emits the
    /// single cut `q >= 0`, pinning `q` to 0.
    pub fn add_quadratic_penalty_epigraph(
        &mut self,
        weight: f64,
        x: VarId,
        center: f64,
        interval: (f64, f64),
        cut_count: usize,
    ) -> Result<VarId, ModelError> {
        if !weight.is_finite() || weight < 0.0 {
            return Err(ModelError::BadPenaltyWeight { weight });
        }
        if x.0 >= self.vars.len() {
            return Err(ModelError::UnknownVariable {
                tag: "penalty_epigraph".into(),
                var: x.0,
            });
        }
        let (lo, hi) = interval;
        if !lo.is_finite() || !hi.is_finite() || lo > hi || center < lo || center > hi {
            return Err(ModelError::BadPenaltyInterval { lo, hi, center });
        }
        if cut_count == 0 {
            return Err(ModelError::NoCuts);
        }
        let x_name = self.vars[x.0].name.clone();
        let (x_lo, x_hi) = (self.vars[x.0].lower, self.vars[x.0].upper);

        let mut points = Vec::with_capacity(cut_count + 1);
        if cut_count == 1 || weight == 0.0 {
            points.push(center);
        } else {
            for i in 0..cut_count {
                points.push(lo + (hi - lo) * i as f64 / (cut_count - 1) as f64);
            }
            if !points.iter().any(|p| (p - center).abs() <= 1e-12) {
                points.push(center);
            }
        }

        // Upper bound for q: the largest cut value reachable within x's own
        // bounds (x may be allowed outside `interval`; cuts stay valid there).
        let mut q_upper = 0.0_f64;
        let cuts: Vec<(f64, f64)> = points
            .iter()
            .map(|&p| {
                let slope = 2.0 * weight * (p - center);
                let intercept = weight * (p - center) * (p - center) - slope * p;
                for xe in [x_lo, x_hi] {
                    if xe.is_finite() {
                        q_upper = q_upper.max(slope * xe + intercept);
                    }
                }
                (slope, intercept)
            })
            .collect();
        if !x_lo.is_finite() || !x_hi.is_finite() {
            q_upper = f64::INFINITY;
        }

        let q = self.add_continuous(format!("{x_name}_penalty"), 0.0, q_upper + 1e-9)?;
        self.objective[q.0] += 1.0;
        for (slope, intercept) in cuts {
            let terms = if slope == 0.0 {
                vec![(q, 1.0)]
            } else {
                vec![(q, 1.0), (x, -slope)]
            };
            self.add_linear_constraint(LinearConstraint {
                tag: format!("{x_name}_penalty_cut"),
                terms,
                sense: Sense::Ge,
                rhs: intercept,
            })?;
        }
        Ok(q)
    }

    /// Plain-text export in an LP-style layout, for eyeballing models while
    /// debugging. Not a parser-grade format.
    pub fn to_lp_text(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let _ = writeln!(s, "\\ model {}", self.name);
        let _ = writeln!(s, "Minimize");
        let mut obj = String::from(" obj:");
        for (i, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                let _ = write!(obj, " {:+} {}", c, self.vars[i].name);
            }
        }
        if self.objective_offset != 0.0 {
            let _ = write!(obj, " {:+}", self.objective_offset);
        }
        let _ = writeln!(s, "{obj}");
        let _ = writeln!(s, "Subject To");
        for (i, c) in self.constraints.iter().enumerate() {
            let mut row = format!(" {}_{}:", c.tag, i);
            for (v, a) in &c.terms {
                let _ = write!(row, " {:+} {}", a, self.vars[v.0].name);
            }
            let sense = match c.sense {
                Sense::Le => "<=",
                Sense::Eq => "=",
                Sense::Ge => ">=",
            };
            let _ = writeln!(s, "{row} {sense} {}", c.rhs);
        }
        let _ = writeln!(s, "Bounds");
        for v in &self.vars {
            let _ = writeln!(s, " {} <= {} <= {}", v.lower, v.name, v.upper);
        }
        let _ = writeln!(s, "Binaries");
        let mut bins = String::from(" ");
        for v in &self.vars {
            if v.kind == VarKind::Binary {
                let _ = write!(bins, "{} ", v.name);
            }
        }
        let _ = writeln!(s, "{bins}");
        let _ = writeln!(s, "End");
        s
    }
}
