//! Convex piecewise-linear pump curves.
//!
//! A pump's electrical demand is a convex quadratic in its flow rate, which
//! cannot enter a linear program as an equality. This module fits a
//! max-affine surrogate (the pointwise maximum of a few lines) to sampled
//! curve data — either exactly, through a mixed-integer least-squares
//! program solved with cutting planes on the quadratic objective, or by a
//! fast alternating partition/fit heuristic — and then encodes the fitted
//! curve back into a model as a true *equality* using an incremental
//! formulation with fill-order binaries, so pump power can neither be
//! understated nor padded by the optimizer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ConstraintId, ModelError, ModelIR, Sense, VarId};
use crate::solver::{solve_milp, SolveStatus, Tolerances};

/// Hard caps on the exact fit: the mixed-integer program carries
/// `m · (pieces − 1)` binaries, and beyond these sizes the heuristic is the
/// sensible tool.
pub const EXACT_FIT_MAX_POINTS: usize = 25;
pub const EXACT_FIT_MAX_PIECES: usize = 4;

/// Sweep cap for the alternating heuristic.
const HEURISTIC_MAX_SWEEPS: usize = 50;
/// Cutting-plane rounds for the exact fit's quadratic objective.
const KELLEY_MAX_ROUNDS: usize = 40;
/// Relative optimality gap at which the cutting-plane loop stops: the best
/// candidate's true residual sits within this factor of the master's lower
/// bound, and per-piece polishing has already squeezed out the rest.
const KELLEY_REL_GAP: f64 = 1e-6;
/// Refinement tangents kept per point beyond the fixed seed bracket; older
/// ones retire so master programs stay small as rounds accumulate.
const RECENT_CUTS_PER_POINT: usize = 8;

#[derive(Debug, Error)]
pub enum PwlError {
    #[error("a fit dataset needs at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("duplicate flow value {0} in fit dataset")]
    DuplicateFlow(f64),
    #[error("non-finite value in fit input")]
    NonFinite,
    #[error("sampling interval [{0}, {1}] is empty")]
    DegenerateInterval(f64, f64),
    #[error("a piecewise fit needs at least one piece")]
    ZeroPieces,
    #[error("exact fit limited to {max_points} points and {max_pieces} pieces, got {points} and {pieces}")]
    TooLarge {
        points: usize,
        pieces: usize,
        max_points: usize,
        max_pieces: usize,
    },
    #[error("flow variable bounds [{flow_lo}, {flow_hi}] fall outside the curve domain [{dom_lo}, {dom_hi}]")]
    DomainMismatch {
        flow_lo: f64,
        flow_hi: f64,
        dom_lo: f64,
        dom_hi: f64,
    },
    #[error("fit solve failed: {0}")]
    FitFailed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Quadratic pump power curve `P(W) = c1·W² + c2·W + c3` (kW against m³/h).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpQuadratic {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl PumpQuadratic {
    pub fn power(&self, w: f64) -> f64 {
        self.c1 * w * w + self.c2 * w + self.c3
    }
}

/// A max-affine curve: the pointwise maximum of `segments` (slope,
/// intercept) pairs over `domain`. Slopes are strictly increasing, and
/// `breakpoints` holds the crossover points between consecutive segments,
/// strictly increasing and strictly inside the domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PwlCurve {
    pub segments: Vec<(f64, f64)>,
    pub domain: (f64, f64),
    pub breakpoints: Vec<f64>,
    /// Sum of squared residuals against the data the curve was fitted to.
    pub sse: f64,
}

/// Flow/power samples to fit against. Flows are distinct and finite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDataset {
    pub points: Vec<(f64, f64)>,
}

impl FitDataset {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, PwlError> {
        if points.len() < 2 {
            return Err(PwlError::TooFewPoints(points.len()));
        }
        for &(w, y) in &points {
            if !w.is_finite() || !y.is_finite() {
                return Err(PwlError::NonFinite);
            }
        }
        let mut sorted: Vec<f64> = points.iter().map(|p| p.0).collect();
        sorted.sort_by(f64::total_cmp);
        for pair in sorted.windows(2) {
            if pair[0] == pair[1] {
                return Err(PwlError::DuplicateFlow(pair[0]));
            }
        }
        Ok(FitDataset { points })
    }

    fn sorted_by_flow(&self) -> Vec<(f64, f64)> {
        let mut p = self.points.clone();
        p.sort_by(|a, b| a.0.total_cmp(&b.0));
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    /// Global optimum of the mixed-integer least-squares program.
    ExactMilp,
    /// Alternating partition / per-piece least squares.
    PartitionHeuristic,
}

/// Evenly sampled points of a quadratic pump curve over `interval`.
pub fn sample_quadratic(
    pump: &PumpQuadratic,
    interval: (f64, f64),
    m: usize,
) -> Result<FitDataset, PwlError> {
    let (lo, hi) = interval;
    if !lo.is_finite() || !hi.is_finite() || hi <= lo {
        return Err(PwlError::DegenerateInterval(lo, hi));
    }
    if m < 2 {
        return Err(PwlError::TooFewPoints(m));
    }
    let step = (hi - lo) / (m - 1) as f64;
    let mut points = Vec::with_capacity(m);
    for i in 0..m {
        let w = if i + 1 == m { hi } else { lo + step * i as f64 };
        points.push((w, pump.power(w)));
    }
    FitDataset::new(points)
}

/// Value of the curve at `w`; inputs outside the domain are clamped (with a
/// warning) so callers never extrapolate a segment past its fit range.
pub fn eval_pwl(curve: &PwlCurve, w: f64) -> f64 {
    let mut x = w;
    if x < curve.domain.0 || x > curve.domain.1 {
        log::warn!(
            "flow {} outside pwl domain [{}, {}]; clamping",
            x,
            curve.domain.0,
            curve.domain.1
        );
        x = x.clamp(curve.domain.0, curve.domain.1);
    }
    max_affine(&curve.segments, x)
}

fn max_affine(lines: &[(f64, f64)], x: f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for &(a, b) in lines {
        let v = a * x + b;
        if v > best {
            best = v;
        }
    }
    best
}

fn sse_of(lines: &[(f64, f64)], data: &[(f64, f64)]) -> f64 {
    let mut s = 0.0;
    for &(w, y) in data {
        let e = max_affine(lines, w) - y;
        s += e * e;
    }
    s
}

/// Ordinary least squares through two or more points.
fn least_squares(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for &(x, y) in points {
        sx += x;
        sy += y;
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let a = sxy / sxx;
    (a, my - a * mx)
}

fn line_through(p: (f64, f64), q: (f64, f64)) -> (f64, f64) {
    let a = (q.1 - p.1) / (q.0 - p.0);
    (a, p.1 - a * p.0)
}

/// Fits one piece of a partition. A single-point piece cannot pin a line on
/// its own, so it borrows the nearest point of a neighboring piece — the
/// last point of the piece to its left when one exists, otherwise the first
/// point of the piece to its right — and runs the line through both.
fn fit_piece(
    group: &[(f64, f64)],
    left_last: Option<(f64, f64)>,
    right_first: Option<(f64, f64)>,
) -> (f64, f64) {
    if group.len() >= 2 {
        least_squares(group)
    } else {
        let p = group[0];
        let q = left_last
            .or(right_first)
            .expect("singleton piece with no neighbor");
        line_through(q, p)
    }
}

/// Per-piece fits for an ordered partition of the sorted data.
fn fit_partition(groups: &[Vec<(f64, f64)>]) -> Vec<(f64, f64)> {
    let mut lines = Vec::with_capacity(groups.len());
    for (k, g) in groups.iter().enumerate() {
        let left = if k > 0 {
            groups[k - 1].last().copied()
        } else {
            None
        };
        let right = groups.get(k + 1).and_then(|n| n.first().copied());
        lines.push(fit_piece(g, left, right));
    }
    lines
}

/// Collapses a line set into a clean upper envelope over `domain`: slopes
/// strictly increasing, duplicate slopes keep the higher intercept, lines
/// never active inside the domain dropped, breakpoints strictly increasing.
fn normalize_envelope(mut lines: Vec<(f64, f64)>, domain: (f64, f64)) -> (Vec<(f64, f64)>, Vec<f64>) {
    let (lo, hi) = domain;
    lines.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
    // Duplicate slopes: only the highest intercept can ever win a max.
    let mut dedup: Vec<(f64, f64)> = Vec::with_capacity(lines.len());
    for (a, b) in lines {
        match dedup.last_mut() {
            Some(last) if (a - last.0).abs() <= 1e-9 * a.abs().max(1.0) => {
                if b > last.1 {
                    *last = (a, b);
                }
            }
            _ => dedup.push((a, b)),
        }
    }
    // Upper-envelope scan: each kept line records where it becomes active.
    let mut stack: Vec<(f64, f64, f64)> = Vec::new(); // (a, b, active_from)
    for (a, b) in dedup {
        let cross = loop {
            match stack.last() {
                None => break lo,
                Some(&(ta, tb, tstart)) => {
                    let at = (tb - b) / (a - ta);
                    if at <= tstart {
                        stack.pop();
                    } else {
                        break at;
                    }
                }
            }
        };
        if stack.is_empty() {
            stack.push((a, b, lo));
        } else if cross < hi {
            stack.push((a, b, cross));
        }
        // Otherwise the line only overtakes at or past the right edge and
        // is never active inside the domain.
    }
    let segments: Vec<(f64, f64)> = stack.iter().map(|&(a, b, _)| (a, b)).collect();
    let breakpoints: Vec<f64> = stack.iter().skip(1).map(|&(_, _, s)| s).collect();
    (segments, breakpoints)
}

fn build_curve(lines: Vec<(f64, f64)>, data: &[(f64, f64)], domain: (f64, f64)) -> PwlCurve {
    let (segments, breakpoints) = normalize_envelope(lines, domain);
    let sse = sse_of(&segments, data);
    PwlCurve {
        segments,
        domain,
        breakpoints,
        sse,
    }
}

/// Fits a max-affine curve with at most `pieces` segments.
pub fn fit_max_affine(
    data: &FitDataset,
    pieces: usize,
    method: FitMethod,
) -> Result<PwlCurve, PwlError> {
    if pieces == 0 {
        return Err(PwlError::ZeroPieces);
    }
    let sorted = data.sorted_by_flow();
    let domain = (sorted[0].0, sorted[sorted.len() - 1].0);
    if pieces == 1 {
        let line = least_squares(&sorted);
        return Ok(build_curve(vec![line], &sorted, domain));
    }
    let lines = match method {
        FitMethod::PartitionHeuristic => heuristic_fit(&sorted, pieces),
        FitMethod::ExactMilp => exact_fit(&sorted, pieces)?,
    };
    Ok(build_curve(lines, &sorted, domain))
}

/// Alternating fit: start from balanced contiguous chunks, then repeat
/// (fit lines per group, reassign each point to its argmax line) until the
/// assignment stops changing. Groups that lose every point are dropped.
/// The best line set seen (by true residual) is kept, so a late oscillation
/// cannot degrade the answer.
fn heuristic_fit(sorted: &[(f64, f64)], pieces: usize) -> Vec<(f64, f64)> {
    let m = sorted.len();
    let k = pieces.min(m);
    let mut assign: Vec<usize> = Vec::with_capacity(m);
    let (base, extra) = (m / k, m % k);
    for g in 0..k {
        let size = base + usize::from(g < extra);
        for _ in 0..size {
            assign.push(g);
        }
    }

    let mut best_lines: Vec<(f64, f64)> = Vec::new();
    let mut best_sse = f64::INFINITY;
    for _ in 0..HEURISTIC_MAX_SWEEPS {
        // Group by current assignment, in point order.
        let groups = regroup(sorted, &assign);
        let lines = fit_partition(&groups);
        let sse = sse_of(&lines, sorted);
        if sse < best_sse - 1e-15 {
            best_sse = sse;
            best_lines = lines.clone();
        }
        // Reassign to the argmax line (ties toward the lower index).
        let mut next: Vec<usize> = Vec::with_capacity(m);
        for &(w, _) in sorted {
            let mut pick = 0;
            let mut best = f64::NEG_INFINITY;
            for (j, &(a, b)) in lines.iter().enumerate() {
                let v = a * w + b;
                if v > best {
                    best = v;
                    pick = j;
                }
            }
            next.push(pick);
        }
        if next == assign {
            break;
        }
        assign = next;
    }
    best_lines
}

/// Compacts an assignment vector into non-empty groups ordered by their
/// first point.
fn regroup(sorted: &[(f64, f64)], assign: &[usize]) -> Vec<Vec<(f64, f64)>> {
    let k = assign.iter().copied().max().unwrap_or(0) + 1;
    let mut groups: Vec<Vec<(f64, f64)>> = vec![Vec::new(); k];
    for (p, &g) in sorted.iter().zip(assign) {
        groups[g].push(*p);
    }
    groups.retain(|g| !g.is_empty());
    groups
}

/// Variable handles for one master-relaxation build.
struct MasterVars {
    a: Vec<VarId>,
    b: Vec<VarId>,
    alpha: Vec<Vec<VarId>>,
    /// Last chain stage per point: the modeled max-affine value there.
    t: Vec<VarId>,
}

/// Builds the mixed-integer least-squares master program for the current
/// tangent pool.
///
/// Variables: line coefficients `a_v, b_v`; per point a chain of running
/// maxima `p_1 … p_{pieces-1}` with selector binaries, so the last chain
/// value equals the pointwise maximum of all lines; and an epigraph scalar
/// per point standing in for the squared residual, bounded below by the
/// pool's tangent cuts. Two value-preserving reductions keep the tree
/// small: slopes are ordered, and each selector column is nondecreasing
/// along flow-sorted points (valid because a steeper line, once on top,
/// stays on top).
fn build_master(
    sorted: &[(f64, f64)],
    pieces: usize,
    omega: f64,
    pool: &[Vec<f64>],
) -> Result<(ModelIR, MasterVars), PwlError> {
    let m = sorted.len();
    let mut model = ModelIR::new("pwl_exact_fit");
    let inf = f64::INFINITY;
    // Lines and chain values are free: each epigraph carries bracket cuts
    // with both slope signs, so the objective stays bounded below and the
    // only unbounded directions lie on zero-cost faces the simplex never
    // follows. Free coefficients also start at zero, which leaves the
    // initial all-slack basis feasible in every row but a few cuts.
    let mut a_vars = Vec::with_capacity(pieces);
    let mut b_vars = Vec::with_capacity(pieces);
    for v in 0..pieces {
        a_vars.push(model.add_continuous(format!("a{v}"), -inf, inf)?);
        b_vars.push(model.add_continuous(format!("b{v}"), -inf, inf)?);
    }
    // chain[k][i] = running max of lines 0..=k+1 at point i.
    let mut chain: Vec<Vec<VarId>> = Vec::with_capacity(pieces - 1);
    let mut alpha: Vec<Vec<VarId>> = Vec::with_capacity(pieces - 1);
    for k in 0..pieces - 1 {
        let mut row_p = Vec::with_capacity(m);
        let mut row_a = Vec::with_capacity(m);
        for i in 0..m {
            row_p.push(model.add_continuous(format!("p{k}_{i}"), -inf, inf)?);
            row_a.push(model.add_binary(format!("alpha{k}_{i}"))?);
        }
        chain.push(row_p);
        alpha.push(row_a);
    }
    let mut resid = Vec::with_capacity(m);
    for i in 0..m {
        let s = model.add_continuous(format!("s{i}"), 0.0, inf)?;
        model.add_objective_term(s, 1.0)?;
        resid.push(s);
    }

    for (i, &(w, _)) in sorted.iter().enumerate() {
        // First chain stage: p0 = max(line0, line1).
        let p0 = chain[0][i];
        let al0 = alpha[0][i];
        model.constrain(
            "chain_lb",
            vec![(p0, 1.0), (a_vars[0], -w), (b_vars[0], -1.0)],
            Sense::Ge,
            0.0,
        )?;
        model.constrain(
            "chain_ub",
            vec![(p0, 1.0), (a_vars[0], -w), (b_vars[0], -1.0), (al0, -omega)],
            Sense::Le,
            0.0,
        )?;
        model.constrain(
            "chain_lb",
            vec![(p0, 1.0), (a_vars[1], -w), (b_vars[1], -1.0)],
            Sense::Ge,
            0.0,
        )?;
        model.constrain(
            "chain_ub",
            vec![(p0, 1.0), (a_vars[1], -w), (b_vars[1], -1.0), (al0, omega)],
            Sense::Le,
            omega,
        )?;
        // Later stages: p_k = max(p_{k-1}, line_{k+1}).
        for k in 1..pieces - 1 {
            let (pk, pk1, alk) = (chain[k][i], chain[k - 1][i], alpha[k][i]);
            model.constrain("chain_lb", vec![(pk, 1.0), (pk1, -1.0)], Sense::Ge, 0.0)?;
            model.constrain(
                "chain_ub",
                vec![(pk, 1.0), (pk1, -1.0), (alk, -omega)],
                Sense::Le,
                0.0,
            )?;
            model.constrain(
                "chain_lb",
                vec![(pk, 1.0), (a_vars[k + 1], -w), (b_vars[k + 1], -1.0)],
                Sense::Ge,
                0.0,
            )?;
            model.constrain(
                "chain_ub",
                vec![
                    (pk, 1.0),
                    (a_vars[k + 1], -w),
                    (b_vars[k + 1], -1.0),
                    (alk, omega),
                ],
                Sense::Le,
                omega,
            )?;
        }
    }
    // Slope ordering and monotone selectors (symmetry reduction).
    for v in 0..pieces - 1 {
        model.constrain(
            "slope_order",
            vec![(a_vars[v + 1], 1.0), (a_vars[v], -1.0)],
            Sense::Ge,
            0.0,
        )?;
    }
    for col in &alpha {
        for pair in col.windows(2) {
            model.constrain(
                "selector_monotone",
                vec![(pair[1], 1.0), (pair[0], -1.0)],
                Sense::Ge,
                0.0,
            )?;
        }
    }
    // Epigraph cuts from the tangent pool.
    let last = pieces - 2;
    for (i, &(_, y)) in sorted.iter().enumerate() {
        for &u in &pool[i] {
            add_square_cut(&mut model, resid[i], chain[last][i], y, u)?;
        }
    }
    let t = chain[last].clone();
    let vars = MasterVars {
        a: a_vars,
        b: b_vars,
        alpha,
        t,
    };
    Ok((model, vars))
}

/// Records a tangent location in a point's pool unless an existing entry
/// already sits within rounding distance of it.
fn push_cut_location(pool_i: &mut Vec<f64>, u: f64) -> bool {
    if !u.is_finite() {
        return false;
    }
    if pool_i
        .iter()
        .any(|&v| (u - v).abs() <= 1e-9 * v.abs().max(1.0))
    {
        return false;
    }
    pool_i.push(u);
    true
}

/// Global fit via the big-M mixed-integer least-squares program, driven by
/// cutting planes on the quadratic objective: solve the master over the
/// current tangent pool, polish the partition it selected with per-piece
/// least squares, add tangents at the incumbent values, and repeat until
/// the best candidate's true residual meets the master's lower bound
/// (which is valid because the cut model under-approximates every squared
/// residual). The incumbent starts at the alternating heuristic's answer,
/// so this method never returns a worse fit than the heuristic.
fn exact_fit(sorted: &[(f64, f64)], pieces: usize) -> Result<Vec<(f64, f64)>, PwlError> {
    let m = sorted.len();
    if m > EXACT_FIT_MAX_POINTS || pieces > EXACT_FIT_MAX_PIECES {
        return Err(PwlError::TooLarge {
            points: m,
            pieces,
            max_points: EXACT_FIT_MAX_POINTS,
            max_pieces: EXACT_FIT_MAX_PIECES,
        });
    }
    let pieces = pieces.min(m);
    let max_abs_y = sorted.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let mut max_slope = 0.0_f64;
    for pair in sorted.windows(2) {
        let s = ((pair[1].1 - pair[0].1) / (pair[1].0 - pair[0].0)).abs();
        max_slope = max_slope.max(s);
    }
    let width = sorted[m - 1].0 - sorted[0].0;
    let omega = 10.0 * (max_abs_y + max_slope * width);
    let spread = (max_abs_y + max_slope * width).max(1.0);

    // Warm start: the heuristic's answer seeds the incumbent, and each
    // point gets a geometric bracket of seed tangents (both sides, three
    // scales) plus one at the warm value, so the first master already
    // carries a usable picture of the squared residuals.
    let warm = heuristic_fit(sorted, pieces);
    let mut best_lines = warm.clone();
    let mut best_sse = sse_of(&warm, sorted);
    let mut pool: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut seed_len = Vec::with_capacity(m);
    for &(w, y) in sorted {
        let mut cuts = Vec::with_capacity(7);
        for u in [
            y - spread,
            y + spread,
            y - spread / 8.0,
            y + spread / 8.0,
            y - spread / 64.0,
            y + spread / 64.0,
            max_affine(&warm, w),
        ] {
            push_cut_location(&mut cuts, u);
        }
        seed_len.push(cuts.len());
        pool.push(cuts);
    }

    let tol = Tolerances {
        mip_gap: 1e-7,
        ..Tolerances::default()
    };
    for round in 0..KELLEY_MAX_ROUNDS {
        let (model, vars) = build_master(sorted, pieces, omega, &pool)?;
        let res = solve_milp(&model, &tol);
        if res.status != SolveStatus::Optimal {
            return Err(PwlError::FitFailed(format!(
                "master relaxation ended {:?} (round {round}, {} simplex iterations, {} nodes)",
                res.status, res.simplex_iterations, res.nodes
            )));
        }
        // Candidate 1: the program's own line coefficients. Candidate 2:
        // the selected partition re-fitted by per-piece least squares (the
        // program's coefficients can carry big-M slack).
        let milp_lines: Vec<(f64, f64)> = (0..pieces)
            .map(|v| (res.assignment[vars.a[v].0], res.assignment[vars.b[v].0]))
            .collect();
        let mut active = vec![0usize; m];
        for (i, act) in active.iter_mut().enumerate() {
            let mut sel = usize::from(res.assignment[vars.alpha[0][i].0] > 0.5);
            for k in 1..pieces - 1 {
                if res.assignment[vars.alpha[k][i].0] > 0.5 {
                    sel = k + 1;
                }
            }
            *act = sel;
        }
        let polished = fit_partition(&regroup(sorted, &active));
        for cand in [&milp_lines, &polished] {
            let sse = sse_of(cand, sorted);
            if sse < best_sse {
                best_sse = sse;
                best_lines = cand.clone();
            }
        }
        let lower = res.best_bound.max(0.0);
        if best_sse - lower <= KELLEY_REL_GAP * best_sse.max(1.0) {
            break;
        }
        // Deepen the pool at the incumbent's modeled values, retiring the
        // oldest refinement once a point's pool is full. No new location
        // anywhere means another round would solve the same master.
        let mut added = 0usize;
        for i in 0..m {
            if push_cut_location(&mut pool[i], res.assignment[vars.t[i].0]) {
                added += 1;
                if pool[i].len() > seed_len[i] + RECENT_CUTS_PER_POINT {
                    pool[i].remove(seed_len[i]);
                }
            }
        }
        if added == 0 {
            break;
        }
    }
    Ok(best_lines)
}

/// Tangent of `(t - y)²` at `t = u`, as a linear lower bound on `s`.
fn add_square_cut(
    model: &mut ModelIR,
    s: VarId,
    t: VarId,
    y: f64,
    u: f64,
) -> Result<ConstraintId, ModelError> {
    // s ≥ (u-y)² + 2(u-y)(t-u)  ⇔  s - 2(u-y)·t ≥ y² - u²
    model.constrain(
        "square_cut",
        vec![(s, 1.0), (t, -2.0 * (u - y))],
        Sense::Ge,
        y * y - u * u,
    )
}

/// Encodes `power == curve(flow)` into `model` with the incremental
/// formulation: the flow is the left domain edge plus a chain of segment
/// increments, each increment contributes its segment's slope to the power,
/// and fill-order binaries force increments to fill strictly left to right,
/// which makes the encoding an equality rather than an epigraph. A
/// single-segment curve needs no binaries at all.
pub fn emit_pwl_equality(
    model: &mut ModelIR,
    curve: &PwlCurve,
    flow: VarId,
    power: VarId,
) -> Result<Vec<ConstraintId>, PwlError> {
    let n = model.num_vars();
    if flow.0 >= n || power.0 >= n {
        return Err(ModelError::UnknownVariable {
            tag: "pwl_equality".into(),
            var: flow.0.max(power.0),
        }
        .into());
    }
    let (lo, hi) = curve.domain;
    let fv = &model.vars[flow.0];
    if fv.lower < lo - 1e-9 || fv.upper > hi + 1e-9 {
        return Err(PwlError::DomainMismatch {
            flow_lo: fv.lower,
            flow_hi: fv.upper,
            dom_lo: lo,
            dom_hi: hi,
        });
    }
    let flow_name = model.vars[flow.0].name.clone();
    let s = curve.segments.len();
    let mut edges = Vec::with_capacity(s + 1);
    edges.push(lo);
    edges.extend_from_slice(&curve.breakpoints);
    edges.push(hi);

    let y0 = max_affine(&curve.segments, lo);
    let mut deltas = Vec::with_capacity(s);
    for i in 0..s {
        let w = edges[i + 1] - edges[i];
        deltas.push(model.add_continuous(format!("{flow_name}:pwl_d{i}"), 0.0, w)?);
    }
    let mut ids = Vec::new();
    let mut flow_terms = vec![(flow, 1.0)];
    let mut power_terms = vec![(power, 1.0)];
    for (i, &d) in deltas.iter().enumerate() {
        flow_terms.push((d, -1.0));
        power_terms.push((d, -curve.segments[i].0));
    }
    ids.push(model.constrain("pwl_flow_link", flow_terms, Sense::Eq, lo)?);
    ids.push(model.constrain("pwl_power_link", power_terms, Sense::Eq, y0)?);
    for i in 0..s.saturating_sub(1) {
        let z = model.add_binary(format!("{flow_name}:pwl_z{i}"))?;
        let (wi, wn) = (edges[i + 1] - edges[i], edges[i + 2] - edges[i + 1]);
        ids.push(model.constrain(
            "pwl_fill_order",
            vec![(deltas[i], 1.0), (z, -wi)],
            Sense::Ge,
            0.0,
        )?);
        ids.push(model.constrain(
            "pwl_fill_order",
            vec![(deltas[i + 1], 1.0), (z, -wn)],
            Sense::Le,
            0.0,
        )?);
    }
    Ok(ids)
}
