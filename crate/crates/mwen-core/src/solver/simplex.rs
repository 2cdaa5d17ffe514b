//! Bounded-variable primal simplex.
//!
//! The implementation keeps the constraint matrix in compressed sparse
//! column form with one slack column per row (`a.x + s = b`, slack bounds
//! encode the row sense) and maintains the basis inverse as a product of
//! sparse eta transformations, rebuilt from scratch every few dozen pivots.
//! Phase 1 runs the same pivot loop with a composite infeasibility cost
//! (no artificial variables), so the slack basis is always a valid start.
//!
//! Determinism is a contract here, not an accident: entering variables are
//! chosen by largest reduced cost with ties to the lowest index, leaving
//! rows by smallest ratio with ties to the largest pivot then lowest row,
//! and Bland's least-index rule takes over after a stall, so identical
//! inputs replay identical pivot sequences.

use super::{SolveStatus, Tolerances};
use crate::model::{ModelIR, Sense};

/// Reduced-cost threshold below which a column is not worth entering.
const DUAL_TOL: f64 = 1e-9;
/// Magnitudes below this are treated as exact zeros in eta vectors.
const ZERO_TOL: f64 = 1e-11;
/// Smallest pivot accepted while refactorizing the basis.
const PIVOT_TOL: f64 = 1e-8;
/// Non-improving iterations tolerated before Bland's rule engages.
const STALL_LIMIT: u32 = 200;
/// Pivots between refactorizations of the eta file.
const REFACTOR_EVERY: usize = 64;

/// One elementary transformation of the basis inverse. `entries` holds the
/// off-pivot components of the pivot column; `pivot` its pivot-row value.
struct Eta {
    row: u32,
    pivot: f64,
    entries: Vec<(u32, f64)>,
}

/// An LP in solver-internal form, built once per model and reused across
/// many solves with different bound vectors (branch-and-bound nodes fix
/// binaries purely through bounds).
pub(crate) struct LpInstance {
    pub nrows: usize,
    /// Structural + slack column count.
    pub ncols: usize,
    pub nstruct: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    vals: Vec<f64>,
    pub base_lower: Vec<f64>,
    pub base_upper: Vec<f64>,
    cost: Vec<f64>,
    offset: f64,
    rhs: Vec<f64>,
}

/// Raw result of one simplex run.
pub(crate) struct LpOutcome {
    pub status: SolveStatus,
    /// Values for every column (structural then slack); meaningful for
    /// `Optimal` and best-effort for `IterationLimit`.
    pub x: Vec<f64>,
    pub objective: f64,
    pub duals: Vec<f64>,
    pub iterations: u64,
    pub max_infeasibility: f64,
}

impl LpOutcome {
    /// First `n` (structural) values, or empty when no feasible point exists.
    pub fn structural(&self, n: usize) -> Vec<f64> {
        match self.status {
            SolveStatus::Optimal | SolveStatus::IterationLimit => self.x[..n].to_vec(),
            _ => vec![],
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum St {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic with both bounds infinite, parked at zero.
    Free,
}

impl LpInstance {
    pub fn from_model(m: &ModelIR) -> Self {
        let nstruct = m.num_vars();
        let nrows = m.num_constraints();
        let ncols = nstruct + nrows;

        let mut cols: Vec<Vec<(u32, f64)>> = vec![Vec::new(); nstruct];
        for (i, c) in m.constraints.iter().enumerate() {
            for (v, a) in &c.terms {
                if *a != 0.0 {
                    cols[v.0].push((i as u32, *a));
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(ncols + 1);
        let mut row_idx = Vec::new();
        let mut vals = Vec::new();
        col_ptr.push(0);
        for col in &cols {
            for (r, a) in col {
                row_idx.push(*r);
                vals.push(*a);
            }
            col_ptr.push(row_idx.len());
        }
        for i in 0..nrows {
            row_idx.push(i as u32);
            vals.push(1.0);
            col_ptr.push(row_idx.len());
        }

        let mut base_lower = Vec::with_capacity(ncols);
        let mut base_upper = Vec::with_capacity(ncols);
        let mut cost = Vec::with_capacity(ncols);
        for v in &m.vars {
            base_lower.push(v.lower);
            base_upper.push(v.upper);
        }
        cost.extend_from_slice(&m.objective);
        for c in &m.constraints {
            let (l, u) = match c.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            base_lower.push(l);
            base_upper.push(u);
            cost.push(0.0);
        }

        LpInstance {
            nrows,
            ncols,
            nstruct,
            col_ptr,
            row_idx,
            vals,
            base_lower,
            base_upper,
            cost,
            offset: m.objective_offset,
            rhs: m.constraints.iter().map(|c| c.rhs).collect(),
        }
    }

    fn col(&self, j: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.col_ptr[j], self.col_ptr[j + 1]);
        (&self.row_idx[a..b], &self.vals[a..b])
    }

    /// Solves with the given bound vectors (length `ncols`; slack bounds are
    /// normally the base ones). Crossed bounds short-circuit to Infeasible.
    pub fn solve(&self, lower: &[f64], upper: &[f64], tol: &Tolerances) -> LpOutcome {
        for j in 0..self.ncols {
            if lower[j] > upper[j] {
                return LpOutcome {
                    status: SolveStatus::Infeasible,
                    x: vec![],
                    objective: f64::INFINITY,
                    duals: vec![],
                    iterations: 0,
                    max_infeasibility: f64::INFINITY,
                };
            }
        }
        Work::new(self, lower, upper, tol).run()
    }
}

struct Work<'a> {
    inst: &'a LpInstance,
    lower: &'a [f64],
    upper: &'a [f64],
    feas_tol: f64,
    x: Vec<f64>,
    state: Vec<St>,
    /// Basic variable per row.
    basis: Vec<u32>,
    etas: Vec<Eta>,
    /// Dense scratch, length nrows, kept zeroed between uses.
    work: Vec<f64>,
    iterations: u64,
    pivots_since_refactor: usize,
}

impl<'a> Work<'a> {
    fn new(inst: &'a LpInstance, lower: &'a [f64], upper: &'a [f64], tol: &Tolerances) -> Self {
        let mut x = vec![0.0; inst.ncols];
        let mut state = vec![St::AtLower; inst.ncols];
        for j in 0..inst.nstruct {
            if lower[j].is_finite() {
                state[j] = St::AtLower;
                x[j] = lower[j];
            } else if upper[j].is_finite() {
                state[j] = St::AtUpper;
                x[j] = upper[j];
            } else {
                state[j] = St::Free;
                x[j] = 0.0;
            }
        }
        let mut basis = Vec::with_capacity(inst.nrows);
        for i in 0..inst.nrows {
            let s = inst.nstruct + i;
            state[s] = St::Basic;
            basis.push(s as u32);
        }
        Work {
            inst,
            lower,
            upper,
            feas_tol: tol.feasibility,
            x,
            state,
            basis,
            etas: Vec::new(),
            work: vec![0.0; inst.nrows],
            iterations: 0,
            pivots_since_refactor: 0,
        }
    }

    fn ftran(&self, v: &mut [f64]) {
        for e in &self.etas {
            let r = e.row as usize;
            let t = v[r] / e.pivot;
            if t != 0.0 {
                for &(i, a) in &e.entries {
                    v[i as usize] -= a * t;
                }
            }
            v[r] = t;
        }
    }

    fn btran(&self, v: &mut [f64]) {
        for e in self.etas.iter().rev() {
            let r = e.row as usize;
            let mut s = 0.0;
            for &(i, a) in &e.entries {
                s += v[i as usize] * a;
            }
            v[r] = (v[r] - s) / e.pivot;
        }
    }

    /// Scatter column j of A into the scratch vector and apply the inverse.
    fn ftran_col(&mut self, j: usize) {
        let (rows, vals) = self.inst.col(j);
        for (r, a) in rows.iter().zip(vals) {
            self.work[*r as usize] = *a;
        }
        let mut v = std::mem::take(&mut self.work);
        self.ftran(&mut v);
        self.work = v;
    }

    fn clear_work(&mut self) {
        for v in self.work.iter_mut() {
            *v = 0.0;
        }
    }

    fn append_eta(&mut self, pivot_row: usize) {
        let pivot = self.work[pivot_row];
        let mut entries = Vec::new();
        for (i, &a) in self.work.iter().enumerate() {
            if i != pivot_row && a.abs() > ZERO_TOL {
                entries.push((i as u32, a));
            }
        }
        self.etas.push(Eta {
            row: pivot_row as u32,
            pivot,
            entries,
        });
        self.pivots_since_refactor += 1;
    }

    /// Rebuilds the eta file from the current basis set and recomputes the
    /// basic variable values. Slack members pivot trivially at their home
    /// rows; structural members are processed sparsest-first and pivot on
    /// their largest transformed entry among still-free rows. A member whose
    /// transformed column has no usable pivot is dropped to a bound and its
    /// row repaired with a slack — a degraded but consistent basis.
    fn refactor(&mut self) {
        let m = self.inst.nrows;
        self.etas.clear();
        self.pivots_since_refactor = 0;
        let mut row_taken = vec![false; m];
        let mut new_basis: Vec<u32> = vec![u32::MAX; m];

        let mut structural: Vec<u32> = Vec::new();
        for &v in &self.basis {
            let j = v as usize;
            if j >= self.inst.nstruct {
                let home = j - self.inst.nstruct;
                row_taken[home] = true;
                new_basis[home] = v;
                // Slack columns are unit vectors and no etas exist yet when
                // they are processed, so their eta would be the identity.
            } else {
                structural.push(v);
            }
        }
        structural.sort_by_key(|&v| {
            let j = v as usize;
            (self.inst.col_ptr[j + 1] - self.inst.col_ptr[j], j)
        });

        let mut dropped: Vec<u32> = Vec::new();
        for &v in &structural {
            self.ftran_col(v as usize);
            let mut best_row = usize::MAX;
            let mut best = PIVOT_TOL;
            for (i, &a) in self.work.iter().enumerate() {
                if !row_taken[i] && a.abs() > best {
                    best = a.abs();
                    best_row = i;
                }
            }
            if best_row == usize::MAX {
                dropped.push(v);
            } else {
                row_taken[best_row] = true;
                new_basis[best_row] = v;
                self.append_eta(best_row);
            }
            self.clear_work();
        }
        self.pivots_since_refactor = 0;

        for v in dropped {
            let j = v as usize;
            let (l, u) = (self.lower[j], self.upper[j]);
            let (st, val) = if l.is_finite() && (self.x[j] - l).abs() <= (self.x[j] - u).abs() {
                (St::AtLower, l)
            } else if u.is_finite() {
                (St::AtUpper, u)
            } else if l.is_finite() {
                (St::AtLower, l)
            } else {
                (St::Free, 0.0)
            };
            self.state[j] = st;
            self.x[j] = val;
        }
        for i in 0..m {
            if new_basis[i] == u32::MAX {
                // Bring this row's slack back in (it cannot be basic
                // elsewhere: basic slacks always pivot at their home row).
                let s = (self.inst.nstruct + i) as u32;
                self.ftran_col(s as usize);
                if self.work[i].abs() > PIVOT_TOL {
                    new_basis[i] = s;
                    self.append_eta(i);
                } else {
                    let mut best_row = usize::MAX;
                    let mut best = PIVOT_TOL;
                    for (r, &a) in self.work.iter().enumerate() {
                        if new_basis[r] == u32::MAX && a.abs() > best {
                            best = a.abs();
                            best_row = r;
                        }
                    }
                    if best_row != usize::MAX {
                        new_basis[best_row] = s;
                        self.append_eta(best_row);
                    }
                }
                self.clear_work();
            }
        }
        self.pivots_since_refactor = 0;

        for (i, slot) in new_basis.iter_mut().enumerate() {
            if *slot == u32::MAX {
                // Truly unrepairable row; pin its slack anyway to keep the
                // data structures consistent. Should be unreachable.
                *slot = (self.inst.nstruct + i) as u32;
            }
            self.state[*slot as usize] = St::Basic;
        }
        self.basis = new_basis;
        self.recompute_basics();
    }

    /// x_B = Binv (b - N x_N) for the current basis and nonbasic values.
    fn recompute_basics(&mut self) {
        let mut r = vec![0.0; self.inst.nrows];
        r.copy_from_slice(&self.inst.rhs);
        for j in 0..self.inst.ncols {
            if self.state[j] != St::Basic && self.x[j] != 0.0 {
                let (rows, vals) = self.inst.col(j);
                for (row, a) in rows.iter().zip(vals) {
                    r[*row as usize] -= a * self.x[j];
                }
            }
        }
        self.ftran(&mut r);
        for (&bj, &v) in self.basis.iter().zip(&r) {
            self.x[bj as usize] = v;
        }
    }

    fn infeasibility(&self) -> (f64, f64) {
        let mut total = 0.0;
        let mut max = 0.0_f64;
        for &v in &self.basis {
            let j = v as usize;
            let breach = (self.lower[j] - self.x[j]).max(self.x[j] - self.upper[j]).max(0.0);
            total += breach;
            max = max.max(breach);
        }
        (total, max)
    }

    fn objective_value(&self) -> f64 {
        let mut s = self.inst.offset;
        for j in 0..self.inst.ncols {
            if self.inst.cost[j] != 0.0 {
                s += self.inst.cost[j] * self.x[j];
            }
        }
        s
    }

    fn outcome(&self, status: SolveStatus, duals: Vec<f64>) -> LpOutcome {
        let (_, max_infeas) = self.infeasibility();
        let objective = match status {
            SolveStatus::Optimal => self.objective_value(),
            SolveStatus::Unbounded => f64::NEG_INFINITY,
            SolveStatus::Infeasible => f64::INFINITY,
            SolveStatus::IterationLimit => {
                if max_infeas <= self.feas_tol {
                    self.objective_value()
                } else {
                    f64::INFINITY
                }
            }
        };
        LpOutcome {
            status,
            x: self.x.clone(),
            objective,
            duals,
            iterations: self.iterations,
            max_infeasibility: max_infeas,
        }
    }

    fn dual_values(&mut self) -> Vec<f64> {
        let mut y = vec![0.0; self.inst.nrows];
        for (yi, &bj) in y.iter_mut().zip(&self.basis) {
            *yi = self.inst.cost[bj as usize];
        }
        self.btran(&mut y);
        y
    }

    fn run(mut self) -> LpOutcome {
        self.refactor();
        let max_iter = 2000 + 50 * (self.inst.nrows as u64 + self.inst.ncols as u64);
        let mut stall = 0u32;
        let mut bland = false;
        let mut prev_metric = f64::INFINITY;
        // Set after an optimality/infeasibility candidate has been verified
        // against a freshly refactored basis.
        let mut verified = false;

        loop {
            if self.iterations >= max_iter {
                let duals = self.dual_values();
                return self.outcome(SolveStatus::IterationLimit, duals);
            }
            if self.pivots_since_refactor >= REFACTOR_EVERY {
                self.refactor();
            }

            let (total_infeas, max_infeas) = self.infeasibility();
            let phase1 = max_infeas > self.feas_tol;

            // Pricing: y = Binv^T w with w the phase cost on basic rows.
            let mut y = vec![0.0; self.inst.nrows];
            for (yi, &bv) in y.iter_mut().zip(&self.basis) {
                let j = bv as usize;
                *yi = if phase1 {
                    if self.x[j] < self.lower[j] - self.feas_tol {
                        -1.0
                    } else if self.x[j] > self.upper[j] + self.feas_tol {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    self.inst.cost[j]
                };
            }
            self.btran(&mut y);

            let mut entering = usize::MAX;
            let mut entering_dir = 1.0;
            let mut best_score = DUAL_TOL;
            for j in 0..self.inst.ncols {
                if self.state[j] == St::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let (rows, vals) = self.inst.col(j);
                let mut d = if phase1 { 0.0 } else { self.inst.cost[j] };
                for (r, a) in rows.iter().zip(vals) {
                    d -= y[*r as usize] * a;
                }
                let (eligible, dir, score) = match self.state[j] {
                    St::AtLower => (d < -DUAL_TOL, 1.0, -d),
                    St::AtUpper => (d > DUAL_TOL, -1.0, d),
                    St::Free => (d.abs() > DUAL_TOL, if d < 0.0 { 1.0 } else { -1.0 }, d.abs()),
                    St::Basic => unreachable!(),
                };
                if eligible {
                    if bland {
                        entering = j;
                        entering_dir = dir;
                        break;
                    }
                    if score > best_score {
                        best_score = score;
                        entering = j;
                        entering_dir = dir;
                    }
                }
            }

            if entering == usize::MAX {
                // No improving column. Verify against a clean factorization
                // before trusting the verdict, then settle.
                if !verified {
                    self.refactor();
                    verified = true;
                    continue;
                }
                if phase1 {
                    return self.outcome(SolveStatus::Infeasible, vec![]);
                }
                let duals = self.dual_values();
                return self.outcome(SolveStatus::Optimal, duals);
            }
            verified = false;

            let q = entering;
            let sigma = entering_dir;
            self.ftran_col(q);

            // Ratio test. Two passes: find the tightest step, then among
            // blocks within a hair of it take the largest pivot for
            // stability (lowest row on ties). Under Bland's rule the leaving
            // choice is the lowest variable index instead.
            let flip_limit = self.upper[q] - self.lower[q]; // inf if unbounded range
            let mut t_min = flip_limit;
            for (i, &a) in self.work.iter().enumerate() {
                if a.abs() <= ZERO_TOL {
                    continue;
                }
                let g = -sigma * a;
                let bj = self.basis[i] as usize;
                let (v, l, u) = (self.x[bj], self.lower[bj], self.upper[bj]);
                let t = if phase1 && v < l - self.feas_tol {
                    if g > 0.0 {
                        (l - v) / g
                    } else {
                        continue;
                    }
                } else if phase1 && v > u + self.feas_tol {
                    if g < 0.0 {
                        (v - u) / -g
                    } else {
                        continue;
                    }
                } else if g > 0.0 {
                    if u.is_finite() {
                        (u - v) / g
                    } else {
                        continue;
                    }
                } else if l.is_finite() {
                    (v - l) / -g
                } else {
                    continue;
                };
                let t = t.max(0.0);
                if t < t_min {
                    t_min = t;
                }
            }

            if t_min.is_infinite() {
                if phase1 {
                    // An unblocked infeasibility-reducing ray cannot happen
                    // with a bounded-below phase objective; bail out rather
                    // than loop.
                    let duals = self.dual_values();
                    return self.outcome(SolveStatus::IterationLimit, duals);
                }
                self.clear_work();
                return self.outcome(SolveStatus::Unbounded, vec![]);
            }

            // Exact minimum-ratio selection: the applied step must equal the
            // chosen row's own ratio, so the leaving variable lands on its
            // bound exactly and no drift is injected into the row equations.
            // Ties at the exact minimum prefer the largest pivot for
            // stability (lowest variable id under Bland's rule).
            let mut leave_row = usize::MAX;
            let mut leave_to_upper = false;
            let window = t_min;
            let mut best_pivot = 0.0;
            let mut best_bland = usize::MAX;
            for (i, &a) in self.work.iter().enumerate() {
                if a.abs() <= ZERO_TOL {
                    continue;
                }
                let g = -sigma * a;
                let bj = self.basis[i] as usize;
                let (v, l, u) = (self.x[bj], self.lower[bj], self.upper[bj]);
                let (t, to_upper) = if phase1 && v < l - self.feas_tol {
                    if g > 0.0 {
                        ((l - v) / g, false)
                    } else {
                        continue;
                    }
                } else if phase1 && v > u + self.feas_tol {
                    if g < 0.0 {
                        ((v - u) / -g, true)
                    } else {
                        continue;
                    }
                } else if g > 0.0 {
                    if u.is_finite() {
                        ((u - v) / g, true)
                    } else {
                        continue;
                    }
                } else if l.is_finite() {
                    ((v - l) / -g, false)
                } else {
                    continue;
                };
                let t = t.max(0.0);
                if t <= window {
                    if bland {
                        if bj < best_bland {
                            best_bland = bj;
                            leave_row = i;
                            leave_to_upper = to_upper;
                        }
                    } else if a.abs() > best_pivot {
                        best_pivot = a.abs();
                        leave_row = i;
                        leave_to_upper = to_upper;
                    }
                }
            }

            let step = t_min;
            if step > 0.0 {
                for (i, &a) in self.work.iter().enumerate() {
                    if a.abs() > ZERO_TOL {
                        let bj = self.basis[i] as usize;
                        self.x[bj] -= sigma * a * step;
                    }
                }
                self.x[q] += sigma * step;
            }

            if leave_row == usize::MAX {
                // Bound flip: the entering variable crossed its own range.
                self.x[q] = if sigma > 0.0 { self.upper[q] } else { self.lower[q] };
                self.state[q] = if sigma > 0.0 { St::AtUpper } else { St::AtLower };
            } else {
                let r = leave_row;
                let lv = self.basis[r] as usize;
                self.x[lv] = if leave_to_upper { self.upper[lv] } else { self.lower[lv] };
                self.state[lv] = if leave_to_upper { St::AtUpper } else { St::AtLower };
                self.state[q] = St::Basic;
                self.basis[r] = q as u32;
                self.append_eta(r);
            }
            self.clear_work();
            self.iterations += 1;

            // Stall detection on the phase-appropriate metric.
            let metric = if phase1 { total_infeas } else { self.objective_value() };
            if metric < prev_metric - 1e-12 * (1.0 + prev_metric.abs()) {
                stall = 0;
                bland = false;
            } else {
                stall += 1;
                if stall > STALL_LIMIT {
                    bland = true;
                }
            }
            prev_metric = metric;
        }
    }
}
