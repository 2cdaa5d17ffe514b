//! Branch-and-bound over the binary variables of a model.
//!
//! Nodes live in an arena and carry only their branching decision; full
//! bound vectors are rebuilt by walking the parent chain, so memory stays
//! proportional to the tree, not to the variable count times the tree.
//! The search pops the node with the smallest known bound first, branches
//! on the most fractional binary, and runs a rounding heuristic at every
//! node so an incumbent appears early and best-bound pruning has teeth.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::simplex::{LpInstance, LpOutcome};
use super::{SolveResult, SolveStatus, Tolerances};
use crate::model::{ModelIR, VarKind};

pub(crate) const DEFAULT_NODE_LIMIT: u64 = 2_000_000;

/// How many recent rounding patterns to remember (and skip re-solving).
const HEURISTIC_MEMO: usize = 64;

struct Node {
    parent: usize,
    var: usize,
    value: f64,
}

const NO_PARENT: usize = usize::MAX;

struct Open {
    bound: f64,
    seq: u64,
    node: usize,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.seq == other.seq
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; "greater" must mean "explore first",
        // i.e. smaller bound, then smaller insertion sequence.
        match other.bound.partial_cmp(&self.bound).unwrap_or(Ordering::Equal) {
            Ordering::Equal => other.seq.cmp(&self.seq),
            o => o,
        }
    }
}

struct Search<'a> {
    inst: LpInstance,
    tol: &'a Tolerances,
    binaries: Vec<usize>,
    arena: Vec<Node>,
    heap: BinaryHeap<Open>,
    seq: u64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    heur_lower: Vec<f64>,
    heur_upper: Vec<f64>,
    incumbent: Option<(f64, Vec<f64>)>,
    simplex_iterations: u64,
    nodes: u64,
    tried_patterns: Vec<Vec<u8>>,
}

pub(crate) fn solve(model: &ModelIR, tol: &Tolerances, node_limit: u64) -> SolveResult {
    let binaries: Vec<usize> = model
        .vars
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(i, _)| i)
        .collect();
    if binaries.is_empty() {
        let mut r = super::solve_lp(model, tol);
        r.nodes = 1;
        return r;
    }

    let inst = LpInstance::from_model(model);
    let lower = inst.base_lower.clone();
    let upper = inst.base_upper.clone();
    let heur_lower = lower.clone();
    let heur_upper = upper.clone();
    let mut s = Search {
        inst,
        tol,
        binaries,
        arena: Vec::new(),
        heap: BinaryHeap::new(),
        seq: 0,
        lower,
        upper,
        heur_lower,
        heur_upper,
        incumbent: None,
        simplex_iterations: 0,
        nodes: 0,
        tried_patterns: Vec::new(),
    };
    s.run(model.num_vars(), node_limit)
}

impl<'a> Search<'a> {
    fn gap_abs(&self) -> f64 {
        match &self.incumbent {
            Some((obj, _)) => self.tol.mip_gap * obj.abs().max(1.0),
            None => 0.0,
        }
    }

    fn incumbent_cutoff(&self) -> f64 {
        match &self.incumbent {
            Some((obj, _)) => obj - self.gap_abs(),
            None => f64::INFINITY,
        }
    }

    /// Rebuilds the node's bound vectors from the base bounds plus the
    /// branching decisions on the path back to the root.
    fn load_bounds(&mut self, mut node: usize) {
        self.lower.copy_from_slice(&self.inst.base_lower);
        self.upper.copy_from_slice(&self.inst.base_upper);
        while node != NO_PARENT {
            let n = &self.arena[node];
            self.lower[n.var] = n.value;
            self.upper[n.var] = n.value;
            node = n.parent;
        }
    }

    fn solve_current(&mut self) -> LpOutcome {
        let out = self.inst.solve(&self.lower, &self.upper, self.tol);
        self.simplex_iterations += out.iterations;
        out
    }

    /// Index of the most fractional binary, or None if all are integral.
    fn most_fractional(&self, x: &[f64]) -> Option<usize> {
        let mut pick = None;
        let mut best = self.tol.integrality;
        for &j in &self.binaries {
            let f = x[j] - x[j].floor();
            let dist = f.min(1.0 - f);
            if dist > best {
                best = dist;
                pick = Some(j);
            }
        }
        pick
    }

    fn offer_incumbent(&mut self, objective: f64, x: &[f64], nstruct: usize) {
        let better = match &self.incumbent {
            Some((obj, _)) => objective < obj - 1e-12,
            None => true,
        };
        if better {
            self.incumbent = Some((objective, x[..nstruct].to_vec()));
        }
    }

    /// Fixes every binary at a rounding of the relaxation values and
    /// re-solves. Tried once with a "greater than epsilon means on"
    /// rounding that favors keeping units available, and if that pattern
    /// is infeasible, once more with nearest-integer rounding.
    fn rounding_heuristic(&mut self, relax_x: &[f64], nstruct: usize) {
        let pattern_a: Vec<u8> = self
            .binaries
            .iter()
            .map(|&j| if relax_x[j] > 1e-6 { 1 } else { 0 })
            .collect();
        let first = self.try_pattern(&pattern_a, nstruct);
        if first == Some(false) {
            let pattern_b: Vec<u8> = self
                .binaries
                .iter()
                .map(|&j| if relax_x[j] >= 0.5 { 1 } else { 0 })
                .collect();
            if pattern_b != pattern_a {
                self.try_pattern(&pattern_b, nstruct);
            }
        }
    }

    /// Returns Some(feasible) if the pattern was solved, None if it was
    /// skipped (seen recently or clashes with node fixings).
    fn try_pattern(&mut self, pattern: &[u8], nstruct: usize) -> Option<bool> {
        for (&j, &v) in self.binaries.iter().zip(pattern) {
            let v = v as f64;
            if v < self.lower[j] || v > self.upper[j] {
                return None;
            }
        }
        if self.tried_patterns.iter().any(|p| p == pattern) {
            return None;
        }
        if self.tried_patterns.len() >= HEURISTIC_MEMO {
            self.tried_patterns.remove(0);
        }
        self.tried_patterns.push(pattern.to_vec());

        self.heur_lower.copy_from_slice(&self.lower);
        self.heur_upper.copy_from_slice(&self.upper);
        for (&j, &v) in self.binaries.iter().zip(pattern) {
            self.heur_lower[j] = v as f64;
            self.heur_upper[j] = v as f64;
        }
        let out = self.inst.solve(&self.heur_lower, &self.heur_upper, self.tol);
        self.simplex_iterations += out.iterations;
        if out.status == SolveStatus::Optimal {
            let obj = out.objective;
            self.offer_incumbent(obj, &out.x, nstruct);
            Some(true)
        } else {
            Some(false)
        }
    }

    fn run(&mut self, nstruct: usize, node_limit: u64) -> SolveResult {
        // Root relaxation.
        let root = self.solve_current();
        self.nodes = 1;
        match root.status {
            SolveStatus::Infeasible => {
                return self.finish(SolveStatus::Infeasible, f64::INFINITY, nstruct)
            }
            SolveStatus::Unbounded => {
                return self.finish(SolveStatus::Unbounded, f64::NEG_INFINITY, nstruct)
            }
            SolveStatus::IterationLimit => {
                return self.finish(SolveStatus::IterationLimit, f64::NEG_INFINITY, nstruct)
            }
            SolveStatus::Optimal => {}
        }
        let mut lowest_open;
        self.expand(root, NO_PARENT, nstruct);

        loop {
            let top = match self.heap.pop() {
                Some(t) => t,
                None => {
                    // Tree exhausted: the incumbent (if any) is optimal.
                    return match self.incumbent.take() {
                        Some((obj, x)) => SolveResult {
                            status: SolveStatus::Optimal,
                            assignment: x,
                            objective: obj,
                            best_bound: obj,
                            duals: None,
                            simplex_iterations: self.simplex_iterations,
                            nodes: self.nodes,
                        },
                        None => SolveResult {
                            status: SolveStatus::Infeasible,
                            assignment: vec![],
                            objective: f64::INFINITY,
                            best_bound: f64::INFINITY,
                            duals: None,
                            simplex_iterations: self.simplex_iterations,
                            nodes: self.nodes,
                        },
                    };
                }
            };
            lowest_open = top.bound;
            if top.bound >= self.incumbent_cutoff() {
                // Best-first order: every remaining node is at least as bad.
                let (obj, x) = self.incumbent.take().expect("cutoff implies incumbent");
                return SolveResult {
                    status: SolveStatus::Optimal,
                    assignment: x,
                    objective: obj,
                    best_bound: top.bound.min(obj),
                    duals: None,
                    simplex_iterations: self.simplex_iterations,
                    nodes: self.nodes,
                };
            }
            if self.nodes >= node_limit {
                return self.finish(SolveStatus::IterationLimit, lowest_open, nstruct);
            }

            self.load_bounds(top.node);
            let out = self.solve_current();
            self.nodes += 1;
            match out.status {
                SolveStatus::Infeasible => continue,
                SolveStatus::Optimal => {}
                // A node relaxation cannot be unbounded if the root was
                // bounded, and an iteration-limited node cannot prune
                // safely; treat both as a search failure.
                SolveStatus::Unbounded | SolveStatus::IterationLimit => {
                    return self.finish(SolveStatus::IterationLimit, lowest_open, nstruct);
                }
            }
            if out.objective >= self.incumbent_cutoff() {
                continue;
            }
            self.expand(out, top.node, nstruct);
        }
    }

    /// Handles one solved, not-yet-pruned relaxation: integral points
    /// become incumbents, fractional ones run the heuristic and branch.
    fn expand(&mut self, out: LpOutcome, node: usize, nstruct: usize) {
        match self.most_fractional(&out.x) {
            None => {
                self.offer_incumbent(out.objective, &out.x, nstruct);
            }
            Some(var) => {
                self.rounding_heuristic(&out.x, nstruct);
                if out.objective >= self.incumbent_cutoff() {
                    return;
                }
                for value in [0.0, 1.0] {
                    self.arena.push(Node {
                        parent: node,
                        var,
                        value,
                    });
                    self.heap.push(Open {
                        bound: out.objective,
                        seq: self.seq,
                        node: self.arena.len() - 1,
                    });
                    self.seq += 1;
                }
            }
        }
    }

    fn finish(&mut self, status: SolveStatus, bound: f64, _nstruct: usize) -> SolveResult {
        match (&status, self.incumbent.take()) {
            (SolveStatus::IterationLimit, Some((obj, x))) => SolveResult {
                status,
                assignment: x,
                objective: obj,
                best_bound: bound.min(obj),
                duals: None,
                simplex_iterations: self.simplex_iterations,
                nodes: self.nodes,
            },
            (SolveStatus::Unbounded, _) => SolveResult {
                status,
                assignment: vec![],
                objective: f64::NEG_INFINITY,
                best_bound: f64::NEG_INFINITY,
                duals: None,
                simplex_iterations: self.simplex_iterations,
                nodes: self.nodes,
            },
            (_, _) => SolveResult {
                status,
                assignment: vec![],
                objective: f64::INFINITY,
                best_bound: bound,
                duals: None,
                simplex_iterations: self.simplex_iterations,
                nodes: self.nodes,
            },
        }
    }
}
