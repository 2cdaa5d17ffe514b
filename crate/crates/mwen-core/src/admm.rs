//! Decentralized coordination between the energy and water operators.
//!
//! The two sides negotiate over a single shared quantity — the water
//! system's electrical consumption profile — using an alternating-direction
//! scheme. Each iteration the energy side proposes the profile it would like
//! to supply, the water side responds with the profile it would like to
//! draw, and a per-interval multiplier (a shadow price on the disagreement)
//! is nudged toward the value that makes both sides agree. Neither side ever
//! sees the other's internals: the energy side never learns flows, levels,
//! or pump data; the water side never learns prices or generator economics.
//!
//! The quadratic consensus penalty enters each subproblem through tangent
//! cuts. Their span is re-centered on the counterpart's latest profile every
//! iteration and shrinks with the disagreement, so early iterations cover
//! the whole plausible range while late iterations resolve the consensus to
//! well below the stopping tolerance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mem::{
    build_mem, extract_mem_solution, MemDispatch, MemError, WaterMode,
};
use crate::model::ModelError;
use crate::mwm::{
    build_mwm, extract_mwm_solution, MwmError, MwmObjective, ScenarioCurves, WaterDispatch,
};
use crate::scenario::Scenario;
use crate::solver::{solve_milp, SolveStatus, Tolerances};

/// How the coordination loop decides it is done.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmmMode {
    /// Stop once the combined residual norm drops below a fixed threshold.
    Standard,
    /// Stop once the energy cost has settled over a trailing window and the
    /// residual norm is no worse than its own trailing mean.
    ObjectiveBased,
}

/// Which operator optimizes first within an iteration. The first mover works
/// against the counterpart's profile from the previous iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubproblemOrder {
    EnergyFirst,
    WaterFirst,
}

/// Tuning for the coordination loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    /// Consensus penalty weight (the multiplier step size).
    pub rho: f64,
    /// Residual-norm stopping threshold for [`AdmmMode::Standard`].
    pub eps_threshold: f64,
    /// Relative settling tolerance on the windowed energy cost for
    /// [`AdmmMode::ObjectiveBased`].
    pub ob_beta: f64,
    /// Trailing window length (iterations) for [`AdmmMode::ObjectiveBased`].
    /// Must be at least 2.
    pub ob_window: usize,
    /// Hard cap on iterations.
    pub max_iters: usize,
    pub mode: AdmmMode,
    /// Tangent cuts per consensus penalty term.
    pub cut_count: usize,
    /// Optional weight on total water consumption in the water subproblem,
    /// used only to break ties between power-equivalent dispatches. Zero
    /// keeps the subproblem a pure consensus responder.
    pub tie_break: f64,
    /// In-process runs may flip the order; the socket protocol always runs
    /// energy-first.
    pub order: SubproblemOrder,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            rho: 0.01,
            eps_threshold: 1e-6,
            ob_beta: 1e-4,
            ob_window: 50,
            max_iters: 500,
            mode: AdmmMode::Standard,
            cut_count: 17,
            tie_break: 0.0,
            order: SubproblemOrder::EnergyFirst,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<(), AdmmError> {
        let positives = [
            ("rho", self.rho),
            ("eps_threshold", self.eps_threshold),
            ("ob_beta", self.ob_beta),
        ];
        for (name, v) in positives {
            if !v.is_finite() || v <= 0.0 {
                return Err(AdmmError::BadConfig(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        if !self.tie_break.is_finite() || self.tie_break < 0.0 {
            return Err(AdmmError::BadConfig(format!(
                "tie_break must be finite and non-negative, got {}",
                self.tie_break
            )));
        }
        if self.ob_window < 2 {
            return Err(AdmmError::BadConfig(format!(
                "ob_window must be at least 2, got {}",
                self.ob_window
            )));
        }
        if self.max_iters == 0 {
            return Err(AdmmError::BadConfig("max_iters must be at least 1".into()));
        }
        if self.cut_count == 0 {
            return Err(AdmmError::BadConfig("cut_count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything both operators can derive locally about one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based iteration counter.
    pub iteration: usize,
    /// The energy side's proposed water-consumption profile (kW per step).
    pub energy_profile: Vec<f64>,
    /// The water side's responded consumption profile (kW per step).
    pub water_profile: Vec<f64>,
    /// Per-step multiplier after this iteration's update.
    pub lambda: Vec<f64>,
    /// Per-step disagreement `energy_profile - water_profile`.
    pub primal_residual: Vec<f64>,
    /// Per-step change in the primal residual since the previous iteration.
    pub dual_residual: Vec<f64>,
    /// Combined residual norm for this iteration.
    pub eps: f64,
    /// The energy side's pure operating cost (no multiplier or penalty
    /// terms) at its proposal.
    pub energy_cost: f64,
    /// The water side's total consumption `Σ_t water_profile[t]`.
    pub water_consumption: f64,
}

/// Why the loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ResidualThreshold,
    ObjectiveSettled,
    IterationLimit,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StopReason::ResidualThreshold => "residual_threshold",
            StopReason::ObjectiveSettled => "objective_settled",
            StopReason::IterationLimit => "iteration_limit",
        };
        f.write_str(s)
    }
}

/// Outcome of a full coordination run.
#[derive(Debug, Clone)]
pub struct DecentralizedSolution {
    /// The energy side's final dispatch, re-solved against the agreed water
    /// profile so it is feasible regardless of any residual disagreement.
    pub mem: MemDispatch,
    /// The water side's final dispatch. Present for in-process runs; absent
    /// when the water side ran behind a transport link and kept its dispatch
    /// to itself.
    pub water: Option<WaterDispatch>,
    /// Cost of `mem` — the number to compare against the combined benchmark.
    pub restored_cost: f64,
    pub log: Vec<IterationRecord>,
    pub stop_reason: StopReason,
}

impl DecentralizedSolution {
    pub fn iterations(&self) -> usize {
        self.log.len()
    }
}

#[derive(Debug, Error)]
pub enum AdmmError {
    #[error("invalid coordination config: {0}")]
    BadConfig(String),
    #[error("{what} length {got} does not match horizon {want}")]
    LengthMismatch {
        what: String,
        want: usize,
        got: usize,
    },
    #[error("{stage} subproblem solve ended {status:?}")]
    SolveFailed {
        stage: &'static str,
        status: SolveStatus,
    },
    #[error("coordination link failed: {0}")]
    Link(String),
    #[error(transparent)]
    Mem(#[from] MemError),
    #[error(transparent)]
    Mwm(#[from] MwmError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A coordination run that failed partway, with the iterations completed
/// before the failure.
#[derive(Debug, Error)]
#[error("coordination aborted at iteration {iteration}: {source}")]
pub struct AdmmAbort {
    /// Iteration being attempted when the failure hit (0 = setup).
    pub iteration: usize,
    #[source]
    pub source: AdmmError,
    pub log: Vec<IterationRecord>,
}

/// The energy side's answer for one iteration.
#[derive(Debug, Clone)]
pub struct EnergyStep {
    /// Proposed water-consumption profile (the coupling variable's values).
    pub water_profile: Vec<f64>,
    /// Pure operating cost at the proposal, with multiplier and penalty
    /// terms stripped out.
    pub cost: f64,
    pub dispatch: MemDispatch,
}

/// The water side's answer for one iteration.
#[derive(Debug, Clone)]
pub struct WaterStep {
    /// Responded consumption profile.
    pub water_profile: Vec<f64>,
    /// Total consumption `Σ_t water_profile[t]`.
    pub consumption: f64,
    pub dispatch: WaterDispatch,
}

/// Upper bound for the energy side's coupling variable: the water system's
/// peak possible draw, every unit at maximum flow with its pump at the
/// matching peak. Both sides can compute this from the shared scenario
/// without seeing each other's operating data.
fn coupling_upper(scenario: &Scenario) -> f64 {
    scenario.max_water_power()
}

/// Half-width of the tangent-cut span for the consensus penalty.
///
/// The cuts only bind the iterate to within half a cut spacing of the
/// penalty center, so a span proportional to the latest disagreement keeps
/// that slack a fixed fraction of the distance still to close: wide early,
/// vanishing near consensus. The floor keeps the span positive at exact
/// consensus; the cap keeps it inside the physically meaningful range.
pub(crate) fn penalty_half_width(prev_residual_inf: f64, range: f64) -> f64 {
    let floor = (1e-9 * range).max(1e-6);
    (4.0 * prev_residual_inf).clamp(floor, range.max(floor))
}

/// Solves the energy side's iteration subproblem: its own operating cost,
/// plus `Σ_t lambda[t]·P_t`, plus tangent cuts of
/// `(rho/2)·(P_t - water_target[t])²` spanning `water_target[t] ± half`,
/// where `P` is the proposed water-consumption profile.
///
/// The returned [`EnergyStep::cost`] is the pure operating cost of the
/// proposal with the coordination terms stripped back out.
pub fn mem_subproblem(
    scenario: &Scenario,
    lambda: &[f64],
    water_target: &[f64],
    rho: f64,
    cut_count: usize,
    half: f64,
) -> Result<EnergyStep, AdmmError> {
    let horizon = scenario.horizon();
    for (what, len) in [("lambda", lambda.len()), ("water target", water_target.len())] {
        if len != horizon {
            return Err(AdmmError::LengthMismatch {
                what: what.into(),
                want: horizon,
                got: len,
            });
        }
    }
    let upper = coupling_upper(scenario);
    let (mut model, map) = build_mem(scenario, &WaterMode::Coupling { upper })?;
    let water_vars = map
        .water
        .as_ref()
        .expect("coupling mode always creates water variables");
    for (t, &pw) in water_vars.iter().enumerate() {
        model.add_objective_term(pw, lambda[t])?;
        let center = water_target[t];
        model.add_quadratic_penalty_epigraph(
            0.5 * rho,
            pw,
            center,
            (center - half, center + half),
            cut_count,
        )?;
    }
    let res = solve_milp(&model, &Tolerances::default());
    if res.status != SolveStatus::Optimal {
        return Err(AdmmError::SolveFailed {
            stage: "energy",
            status: res.status,
        });
    }
    let dispatch = extract_mem_solution(scenario, &map, &res.assignment)?;
    Ok(EnergyStep {
        water_profile: dispatch.water_power.clone(),
        cost: dispatch.total_cost(),
        dispatch,
    })
}

/// Solves the water side's iteration subproblem: `-Σ_t lambda[t]·P_t` plus
/// tangent cuts of `(rho/2)·(P_t - energy_profile[t])²` spanning
/// `energy_profile[t] ± half`, where `P` is the responded consumption
/// profile. `tie_break` adds a small `Σ_t P_t` term when a caller wants
/// power-equivalent dispatches resolved toward lower consumption.
#[allow(clippy::too_many_arguments)]
pub fn mwm_subproblem(
    scenario: &Scenario,
    curves: &ScenarioCurves,
    lambda: &[f64],
    energy_profile: &[f64],
    rho: f64,
    cut_count: usize,
    half: f64,
    tie_break: f64,
) -> Result<WaterStep, AdmmError> {
    let objective = MwmObjective::Admm {
        lambda: lambda.to_vec(),
        energy_target: energy_profile.to_vec(),
        rho,
        cut_count,
        half_width: half,
        tie_break,
    };
    let (model, map) = build_mwm(scenario, curves, &objective)?;
    let res = solve_milp(&model, &Tolerances::default());
    if res.status != SolveStatus::Optimal {
        return Err(AdmmError::SolveFailed {
            stage: "water",
            status: res.status,
        });
    }
    let dispatch = extract_mwm_solution(scenario, &map, &res.assignment)?;
    Ok(WaterStep {
        water_profile: dispatch.water_power.clone(),
        consumption: dispatch.consumption_sum(),
        dispatch,
    })
}

/// One multiplier step: `lambda'[t] = lambda[t] + rho·(p_e[t] - p_w[t])`.
pub fn dual_update(
    lambda: &[f64],
    rho: f64,
    energy_profile: &[f64],
    water_profile: &[f64],
) -> Result<Vec<f64>, AdmmError> {
    let want = lambda.len();
    for (what, len) in [
        ("energy profile", energy_profile.len()),
        ("water profile", water_profile.len()),
    ] {
        if len != want {
            return Err(AdmmError::LengthMismatch {
                what: what.into(),
                want,
                got: len,
            });
        }
    }
    Ok(lambda
        .iter()
        .zip(energy_profile.iter().zip(water_profile))
        .map(|(l, (pe, pw))| l + rho * (pe - pw))
        .collect())
}

/// Per-step residuals for one iteration: the disagreement
/// `r[t] = p_e[t] - p_w[t]` and its change `s[t] = r[t] - prev_r[t]` since
/// the previous iteration. Pass zeros as `prev_r` for the first iteration.
pub fn residuals(
    energy_profile: &[f64],
    water_profile: &[f64],
    prev_primal: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), AdmmError> {
    let want = energy_profile.len();
    for (what, len) in [
        ("water profile", water_profile.len()),
        ("previous residual", prev_primal.len()),
    ] {
        if len != want {
            return Err(AdmmError::LengthMismatch {
                what: what.into(),
                want,
                got: len,
            });
        }
    }
    let r: Vec<f64> = energy_profile
        .iter()
        .zip(water_profile)
        .map(|(pe, pw)| pe - pw)
        .collect();
    let s: Vec<f64> = r.iter().zip(prev_primal).map(|(r, p)| r - p).collect();
    Ok((r, s))
}

/// Combined residual norm `sqrt(‖r‖² + ‖s‖²)`.
pub fn feasibility_metric(primal: &[f64], dual: &[f64]) -> f64 {
    let sq: f64 = primal
        .iter()
        .chain(dual)
        .map(|v| v * v)
        .sum();
    sq.sqrt()
}

/// Objective-settling stop test over a history of per-iteration
/// `(energy_cost, eps)` pairs.
///
/// With `A(k)` the mean energy cost over the last `window` entries and
/// `A(k-1)` the mean over the `window` entries ending one earlier, the loop
/// may stop when the relative change `|A(k) - A(k-1)| / max(|A(k-1)|, tiny)`
/// is at most `beta` **and** the latest `eps` is no greater than the mean
/// `eps` over the last `window` entries (the latest included). Returns
/// `false` until the history holds at least `window + 1` entries.
pub fn ob_stop_check(history: &[(f64, f64)], window: usize, beta: f64) -> bool {
    let n = history.len();
    if window < 2 || n < window + 1 {
        return false;
    }
    let mean_cost = |lo: usize, hi: usize| -> f64 {
        history[lo..hi].iter().map(|(c, _)| c).sum::<f64>() / (hi - lo) as f64
    };
    let current = mean_cost(n - window, n);
    let previous = mean_cost(n - window - 1, n - 1);
    let settled = (current - previous).abs() / previous.abs().max(1e-12) <= beta;
    let eps_mean =
        history[n - window..].iter().map(|(_, e)| e).sum::<f64>() / window as f64;
    let eps_ok = history[n - 1].1 <= eps_mean;
    settled && eps_ok
}

/// The energy-side loop's channel to the water operator.
///
/// The in-process implementation solves the water subproblem directly; the
/// socket implementation forwards the same numbers over a wire. Both carry
/// exactly the data the protocol allows across the boundary: consumption
/// profiles, the energy side's cost scalar, and the stop notice.
pub trait WaterLink {
    /// The water side's solo minimum-consumption profile, used to seed the
    /// loop before any negotiation.
    fn initial_profile(&mut self) -> Result<Vec<f64>, AdmmError>;

    /// Delivers the energy side's proposal for iteration `iteration` along
    /// with its pure cost, and returns the water side's response profile.
    /// `half` is the current penalty span half-width; a remote water side
    /// recomputes it locally from the same residual history instead of
    /// trusting this value.
    fn exchange(
        &mut self,
        iteration: usize,
        energy_profile: &[f64],
        energy_cost: f64,
        half: f64,
    ) -> Result<Vec<f64>, AdmmError>;

    /// Tells the water side the loop is over after `iterations` iterations.
    fn finish(&mut self, iterations: usize) -> Result<(), AdmmError>;

    /// The water side's final dispatch, when this link can see it.
    fn final_dispatch(&self) -> Option<WaterDispatch>;
}

/// In-process [`WaterLink`]: the water operator lives in the same address
/// space and solves its subproblem directly. Keeps its own multiplier copy
/// and steps it with the same arithmetic a remote water agent uses, so the
/// two paths produce identical numbers.
pub struct InProcessLink<'a> {
    scenario: &'a Scenario,
    curves: &'a ScenarioCurves,
    rho: f64,
    cut_count: usize,
    tie_break: f64,
    lambda: Vec<f64>,
    last_dispatch: Option<WaterDispatch>,
}

impl<'a> InProcessLink<'a> {
    pub fn new(scenario: &'a Scenario, curves: &'a ScenarioCurves, config: &AdmmConfig) -> Self {
        InProcessLink {
            scenario,
            curves,
            rho: config.rho,
            cut_count: config.cut_count,
            tie_break: config.tie_break,
            lambda: vec![0.0; scenario.horizon()],
            last_dispatch: None,
        }
    }
}

impl WaterLink for InProcessLink<'_> {
    fn initial_profile(&mut self) -> Result<Vec<f64>, AdmmError> {
        let (model, map) = build_mwm(self.scenario, self.curves, &MwmObjective::MinEnergy)?;
        let res = solve_milp(&model, &Tolerances::default());
        if res.status != SolveStatus::Optimal {
            return Err(AdmmError::SolveFailed {
                stage: "water warm-start",
                status: res.status,
            });
        }
        let dispatch = extract_mwm_solution(self.scenario, &map, &res.assignment)?;
        let profile = dispatch.water_power.clone();
        self.last_dispatch = Some(dispatch);
        Ok(profile)
    }

    fn exchange(
        &mut self,
        _iteration: usize,
        energy_profile: &[f64],
        _energy_cost: f64,
        half: f64,
    ) -> Result<Vec<f64>, AdmmError> {
        let step = mwm_subproblem(
            self.scenario,
            self.curves,
            &self.lambda,
            energy_profile,
            self.rho,
            self.cut_count,
            half,
            self.tie_break,
        )?;
        self.lambda = dual_update(&self.lambda, self.rho, energy_profile, &step.water_profile)?;
        self.last_dispatch = Some(step.dispatch);
        Ok(step.water_profile)
    }

    fn finish(&mut self, _iterations: usize) -> Result<(), AdmmError> {
        Ok(())
    }

    fn final_dispatch(&self) -> Option<WaterDispatch> {
        self.last_dispatch.clone()
    }
}

/// Runs the full coordination loop in-process and restores a feasible
/// energy dispatch against the agreed water profile.
pub fn run_admm(
    scenario: &Scenario,
    curves: &ScenarioCurves,
    config: &AdmmConfig,
) -> Result<DecentralizedSolution, Box<AdmmAbort>> {
    match config.order {
        SubproblemOrder::EnergyFirst => {
            let mut link = InProcessLink::new(scenario, curves, config);
            run_admm_with(scenario, config, &mut link)
        }
        SubproblemOrder::WaterFirst => run_water_first(scenario, curves, config),
    }
}

macro_rules! try_iter {
    ($log:expr, $k:expr, $e:expr) => {
        match $e {
            Ok(v) => v,
            Err(err) => {
                return Err(Box::new(AdmmAbort {
                    iteration: $k,
                    source: err.into(),
                    log: $log,
                }))
            }
        }
    };
}

/// The energy-side driver loop, shared by the in-process and socket paths
/// so both produce identical iteration logs.
pub fn run_admm_with(
    scenario: &Scenario,
    config: &AdmmConfig,
    link: &mut dyn WaterLink,
) -> Result<DecentralizedSolution, Box<AdmmAbort>> {
    let mut log: Vec<IterationRecord> = Vec::new();
    try_iter!(log, 0, config.validate());
    if config.order != SubproblemOrder::EnergyFirst {
        try_iter!(
            log,
            0,
            Err(AdmmError::BadConfig(
                "the linked driver always runs energy-first; use run_admm for other orders".into(),
            ))
        );
    }
    let horizon = scenario.horizon();
    let range = coupling_upper(scenario);

    let mut water = try_iter!(log, 0, link.initial_profile());
    try_iter!(log, 0, expect_len("initial water profile", horizon, water.len()));
    let mut lambda = vec![0.0; horizon];
    let mut prev_r = vec![0.0; horizon];
    let mut half = range.max(1e-6);
    let mut stop = None;

    for k in 1..=config.max_iters {
        let step = try_iter!(
            log,
            k,
            mem_subproblem(scenario, &lambda, &water, config.rho, config.cut_count, half)
        );
        let reply = try_iter!(log, k, link.exchange(k, &step.water_profile, step.cost, half));
        try_iter!(log, k, expect_len("water reply", horizon, reply.len()));
        let (r, s) = try_iter!(log, k, residuals(&step.water_profile, &reply, &prev_r));
        lambda = try_iter!(
            log,
            k,
            dual_update(&lambda, config.rho, &step.water_profile, &reply)
        );
        let eps = feasibility_metric(&r, &s);
        log.push(IterationRecord {
            iteration: k,
            energy_profile: step.water_profile,
            water_profile: reply.clone(),
            lambda: lambda.clone(),
            primal_residual: r.clone(),
            dual_residual: s,
            eps,
            energy_cost: step.cost,
            water_consumption: reply.iter().sum(),
        });

        if let Some(reason) = stop_decision(config, &log) {
            stop = Some(reason);
            water = reply;
            break;
        }
        let r_inf = r.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        half = penalty_half_width(r_inf, range);
        prev_r = r;
        water = reply;
    }

    let iterations = log.len();
    try_iter!(log, iterations, link.finish(iterations));
    let (mem, restored_cost) = try_iter!(log, iterations, restore_feasibility(scenario, &water));
    Ok(DecentralizedSolution {
        mem,
        water: link.final_dispatch(),
        restored_cost,
        log,
        stop_reason: stop.unwrap_or(StopReason::IterationLimit),
    })
}

/// In-process loop with the water side moving first each iteration, against
/// the energy proposal from the previous iteration.
fn run_water_first(
    scenario: &Scenario,
    curves: &ScenarioCurves,
    config: &AdmmConfig,
) -> Result<DecentralizedSolution, Box<AdmmAbort>> {
    let mut log: Vec<IterationRecord> = Vec::new();
    try_iter!(log, 0, config.validate());
    let horizon = scenario.horizon();
    let range = coupling_upper(scenario);

    let mut link = InProcessLink::new(scenario, curves, config);
    let seed = try_iter!(log, 0, link.initial_profile());
    try_iter!(log, 0, expect_len("initial water profile", horizon, seed.len()));
    // Before any energy solve exists, the water side responds to its own
    // solo profile, which leaves it at that profile.
    let mut energy = seed;
    let mut lambda = vec![0.0; horizon];
    let mut prev_r = vec![0.0; horizon];
    let mut half = range.max(1e-6);
    let mut stop = None;
    let mut last_water = None;

    for k in 1..=config.max_iters {
        let reply = try_iter!(
            log,
            k,
            mwm_subproblem(
                scenario,
                curves,
                &lambda,
                &energy,
                config.rho,
                config.cut_count,
                half,
                config.tie_break,
            )
        );
        let step = try_iter!(
            log,
            k,
            mem_subproblem(
                scenario,
                &lambda,
                &reply.water_profile,
                config.rho,
                config.cut_count,
                half
            )
        );
        let (r, s) = try_iter!(
            log,
            k,
            residuals(&step.water_profile, &reply.water_profile, &prev_r)
        );
        lambda = try_iter!(
            log,
            k,
            dual_update(&lambda, config.rho, &step.water_profile, &reply.water_profile)
        );
        let eps = feasibility_metric(&r, &s);
        log.push(IterationRecord {
            iteration: k,
            energy_profile: step.water_profile.clone(),
            water_profile: reply.water_profile.clone(),
            lambda: lambda.clone(),
            primal_residual: r.clone(),
            dual_residual: s,
            eps,
            energy_cost: step.cost,
            water_consumption: reply.consumption,
        });
        last_water = Some(reply.dispatch);

        if let Some(reason) = stop_decision(config, &log) {
            stop = Some(reason);
            energy = reply.water_profile;
            break;
        }
        let r_inf = r.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        half = penalty_half_width(r_inf, range);
        prev_r = r;
        energy = step.water_profile;
    }

    let iterations = log.len();
    let water_final = log
        .last()
        .map(|rec| rec.water_profile.clone())
        .unwrap_or(energy);
    let (mem, restored_cost) =
        try_iter!(log, iterations, restore_feasibility(scenario, &water_final));
    Ok(DecentralizedSolution {
        mem,
        water: last_water,
        restored_cost,
        log,
        stop_reason: stop.unwrap_or(StopReason::IterationLimit),
    })
}

fn expect_len(what: &str, want: usize, got: usize) -> Result<(), AdmmError> {
    if got != want {
        return Err(AdmmError::LengthMismatch {
            what: what.into(),
            want,
            got,
        });
    }
    Ok(())
}

fn stop_decision(config: &AdmmConfig, log: &[IterationRecord]) -> Option<StopReason> {
    let last = log.last()?;
    match config.mode {
        AdmmMode::Standard => {
            (last.eps <= config.eps_threshold).then_some(StopReason::ResidualThreshold)
        }
        AdmmMode::ObjectiveBased => {
            let history: Vec<(f64, f64)> =
                log.iter().map(|r| (r.energy_cost, r.eps)).collect();
            ob_stop_check(&history, config.ob_window, config.ob_beta)
                .then_some(StopReason::ObjectiveSettled)
        }
    }
}

/// Re-solves the energy side against a fixed water-consumption profile,
/// yielding a dispatch that is feasible even when coordination stopped with
/// residual disagreement. Its cost is the decentralized result to report.
pub fn restore_feasibility(
    scenario: &Scenario,
    water_profile: &[f64],
) -> Result<(MemDispatch, f64), AdmmError> {
    let (model, map) = build_mem(scenario, &WaterMode::Fixed(water_profile.to_vec()))?;
    let res = solve_milp(&model, &Tolerances::default());
    if res.status != SolveStatus::Optimal {
        return Err(AdmmError::SolveFailed {
            stage: "feasibility restoration",
            status: res.status,
        });
    }
    let dispatch = extract_mem_solution(scenario, &map, &res.assignment)?;
    let cost = dispatch.total_cost();
    Ok((dispatch, cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::central::solve_central;
    use crate::mwm::{fit_scenario_curves, DEFAULT_CURVE_SAMPLES};
    use crate::pwl::{FitMethod, PumpQuadratic};
    use crate::scenario::{
        validate_scenario, GeneratorSpec, GridTieSpec, PriceSeries, Profiles, StorageTankSpec,
        TimeGrid, TreatmentUnitSpec, WastewaterSpec,
    };
    use crate::solver::brute_force_milp;

    // -- helpers -----------------------------------------------------------

    fn linear_pump(c2: f64) -> PumpQuadratic {
        PumpQuadratic {
            c1: 0.0,
            c2,
            c3: 0.0,
        }
    }

    /// A two-interval community small enough for brute-force cross-checks:
    /// one generator, a tie line, no electrical storage, and a water side
    /// with linear pumps so fitted curves are exact.
    fn small_scenario() -> Scenario {
        validate_scenario(Scenario {
            time: TimeGrid {
                horizon_steps: 2,
                step_hours: 1.0,
            },
            generators: vec![GeneratorSpec {
                no_load_cost: 6.0,
                marginal_cost: 0.04,
                p_min: 40.0,
                p_max: 400.0,
            }],
            storage: vec![],
            grid: GridTieSpec { tie_limit: 300.0 },
            wastewater: WastewaterSpec {
                flow_min: 0.5,
                flow_max: 2.5,
                reclaim_rate: vec![1.0, 1.0],
                reservoir_cap: 37.0,
                reservoir_initial: Some(10.0),
                energy_intensity: 52.0,
                pump: linear_pump(0.2),
            },
            treatment: vec![TreatmentUnitSpec {
                flow_min: 0.5,
                flow_max: 2.5,
                energy_intensity: 0.154,
                pump: linear_pump(0.1),
            }],
            tanks: vec![StorageTankSpec {
                inflow_min: 0.5,
                inflow_max: 2.5,
                outflow_max: 2.5,
                level_min: 0.0,
                level_max: 27.0,
                level_initial: Some(13.0),
                pump: linear_pump(0.05),
            }],
            profiles: Profiles {
                power_demand: vec![150.0, 180.0],
                renewables: vec![20.0, 30.0],
                water_demand: vec![2.0, 2.0],
            },
            prices: PriceSeries {
                import: vec![0.10, 0.12],
                export: vec![0.02, 0.02],
            },
        })
        .unwrap()
    }

    /// Same energy side, but nothing for the water system to do: zero
    /// demand, an empty reservoir with no inflow, and no other units that
    /// could shuffle water around at zero penalty.
    fn idle_water_scenario() -> Scenario {
        let mut s = small_scenario();
        s.wastewater.reclaim_rate = vec![0.0, 0.0];
        s.wastewater.reservoir_initial = Some(0.0);
        s.treatment = vec![];
        s.tanks = vec![];
        s.profiles.water_demand = vec![0.0, 0.0];
        validate_scenario(s).unwrap()
    }

    fn curves_for(scenario: &Scenario) -> ScenarioCurves {
        fit_scenario_curves(
            scenario,
            2,
            FitMethod::PartitionHeuristic,
            DEFAULT_CURVE_SAMPLES,
        )
        .unwrap()
    }

    // -- multiplier and residual arithmetic --------------------------------

    #[test]
    fn dual_update_steps_by_rho_times_disagreement() {
        let lambda = vec![0.0, 1.0];
        let up = dual_update(&lambda, 0.01, &[30.0, 5.0], &[20.0, 5.0]).unwrap();
        assert_eq!(up, vec![0.1, 1.0]);
        // Doubling rho doubles the step, and agreement leaves lambda alone.
        let double = dual_update(&lambda, 0.02, &[30.0, 5.0], &[20.0, 5.0]).unwrap();
        assert!((double[0] - 0.2).abs() < 1e-15 && double[1] == 1.0);
        assert!(matches!(
            dual_update(&lambda, 0.01, &[1.0], &[1.0, 2.0]),
            Err(AdmmError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn residuals_report_disagreement_and_its_change() {
        let (r, s) = residuals(&[5.0, 3.0], &[3.0, 3.0], &[5.0, 0.0]).unwrap();
        assert_eq!(r, vec![2.0, 0.0]);
        assert_eq!(s, vec![-3.0, 0.0]);
        // First iteration: a zero previous residual makes s equal r.
        let (r1, s1) = residuals(&[4.0], &[1.0], &[0.0]).unwrap();
        assert_eq!(r1, s1);
        assert!(matches!(
            residuals(&[1.0], &[1.0], &[0.0, 0.0]),
            Err(AdmmError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn feasibility_metric_is_the_combined_norm() {
        assert!((feasibility_metric(&[3.0], &[4.0]) - 5.0).abs() < 1e-15);
        assert_eq!(feasibility_metric(&[0.0, 0.0], &[0.0]), 0.0);
        // Scaling both residuals scales the metric linearly.
        let base = feasibility_metric(&[1.0, 2.0], &[2.0]);
        let scaled = feasibility_metric(&[3.0, 6.0], &[6.0]);
        assert!((scaled - 3.0 * base).abs() < 1e-12);
    }

    // -- objective-settling stop test --------------------------------------

    #[test]
    fn settling_check_needs_a_full_window_plus_one() {
        let history = vec![(100.0, 1.0), (100.0, 0.5)];
        assert!(!ob_stop_check(&history, 2, 1e-4));
    }

    #[test]
    fn settled_cost_with_falling_residuals_stops() {
        let history = vec![(100.0, 1.0), (100.0, 0.5), (100.0, 0.2), (100.0, 0.1)];
        assert!(ob_stop_check(&history, 2, 1e-4));
    }

    #[test]
    fn rising_residuals_block_the_stop() {
        let history = vec![(100.0, 0.1), (100.0, 0.2), (100.0, 0.5), (100.0, 1.0)];
        // Cost is flat, but the latest eps (1.0) exceeds the window mean
        // (0.75), so the loop keeps going.
        assert!(!ob_stop_check(&history, 2, 1e-4));
    }

    #[test]
    fn moving_cost_blocks_the_stop() {
        let history = vec![(100.0, 1.0), (90.0, 0.5), (81.0, 0.2), (72.9, 0.1)];
        // Window means move by 10% per step, far beyond beta.
        assert!(!ob_stop_check(&history, 2, 1e-4));
        // The same trajectory passes once the tolerance allows 10% drift.
        assert!(ob_stop_check(&history, 2, 0.2));
    }

    // -- subproblems --------------------------------------------------------

    #[test]
    fn energy_subproblem_cost_excludes_coordination_terms() {
        let scenario = small_scenario();
        let lambda = vec![0.5, -0.3];
        let target = vec![20.0, 40.0];
        let rho = 0.5;
        let half = coupling_upper(&scenario);
        let step = mem_subproblem(&scenario, &lambda, &target, rho, 33, half).unwrap();

        // Rebuild the same augmented model and brute-force it; the pure cost
        // must bracket between "objective minus exact quadratic" and
        // "objective minus lambda terms" because the cuts under-approximate.
        let (mut model, map) = build_mem(
            &scenario,
            &WaterMode::Coupling {
                upper: coupling_upper(&scenario),
            },
        )
        .unwrap();
        let water_vars = map.water.clone().unwrap();
        for (t, &pw) in water_vars.iter().enumerate() {
            model.add_objective_term(pw, lambda[t]).unwrap();
            model
                .add_quadratic_penalty_epigraph(
                    0.5 * rho,
                    pw,
                    target[t],
                    (target[t] - half, target[t] + half),
                    33,
                )
                .unwrap();
        }
        let oracle = brute_force_milp(&model, &Tolerances::default(), 14).unwrap();
        assert_eq!(oracle.status, SolveStatus::Optimal);
        let milp = solve_milp(&model, &Tolerances::default());
        assert!(
            (milp.objective - oracle.objective).abs() <= 1e-6,
            "search found {}, enumeration found {}",
            milp.objective,
            oracle.objective
        );

        let lambda_terms: f64 = lambda
            .iter()
            .zip(&step.water_profile)
            .map(|(l, p)| l * p)
            .sum();
        let quad: f64 = step
            .water_profile
            .iter()
            .zip(&target)
            .map(|(p, c)| 0.5 * rho * (p - c) * (p - c))
            .sum();
        assert!(step.cost + lambda_terms <= milp.objective + 1e-6);
        assert!(milp.objective <= step.cost + lambda_terms + quad + 1e-6);
    }

    #[test]
    fn huge_penalty_pins_the_energy_proposal_to_its_target() {
        let scenario = small_scenario();
        let target = vec![30.0, 10.0];
        let cut_count = 257;
        let half = coupling_upper(&scenario);
        let step =
            mem_subproblem(&scenario, &[0.0, 0.0], &target, 1e6, cut_count, half).unwrap();
        let spacing = 2.0 * half / (cut_count - 1) as f64;
        for (t, &p) in step.water_profile.iter().enumerate() {
            assert!(
                (p - target[t]).abs() <= spacing,
                "t{t}: proposal {p} should pin to {} within {spacing}",
                target[t]
            );
        }
    }

    #[test]
    fn free_water_without_penalty_sits_at_zero() {
        // With no multiplier and no penalty weight worth caring about, extra
        // water consumption is pure cost, so the proposal collapses to the
        // coupling variable's lower bound.
        let scenario = small_scenario();
        let step = mem_subproblem(
            &scenario,
            &[0.0, 0.0],
            &[0.0, 0.0],
            1e-12,
            3,
            coupling_upper(&scenario),
        )
        .unwrap();
        for &p in &step.water_profile {
            assert!(p.abs() < 1e-9);
        }
    }

    #[test]
    fn water_subproblem_chases_the_energy_profile() {
        let scenario = small_scenario();
        let curves = curves_for(&scenario);
        let solo = mwm_subproblem(
            &scenario,
            &curves,
            &[0.0, 0.0],
            &[0.0, 0.0],
            1e-12,
            3,
            1.0,
            1.0,
        )
        .unwrap();
        let target: Vec<f64> = solo.water_profile.iter().map(|p| p + 0.2).collect();
        let cut_count = 1025;
        let half = coupling_upper(&scenario);
        let step = mwm_subproblem(
            &scenario,
            &curves,
            &[0.0, 0.0],
            &target,
            1e4,
            cut_count,
            half,
            0.0,
        )
        .unwrap();
        let spacing = 2.0 * half / (cut_count - 1) as f64;
        for (t, &p) in step.water_profile.iter().enumerate() {
            assert!(
                (p - target[t]).abs() <= spacing,
                "t{t}: response {p} should chase {} within {spacing}",
                target[t]
            );
        }
        assert!((step.consumption - step.water_profile.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn subproblem_series_lengths_are_checked() {
        let scenario = small_scenario();
        assert!(matches!(
            mem_subproblem(&scenario, &[0.0], &[0.0, 0.0], 0.01, 17, 10.0),
            Err(AdmmError::LengthMismatch { .. })
        ));
        let curves = curves_for(&scenario);
        assert!(matches!(
            mwm_subproblem(&scenario, &curves, &[0.0, 0.0], &[0.0], 0.01, 17, 10.0, 0.0),
            Err(AdmmError::Mwm(MwmError::SeriesLength { .. }))
        ));
    }

    // -- full runs ----------------------------------------------------------

    #[test]
    fn idle_water_agrees_on_the_first_iteration() {
        // Nothing to negotiate: the water side wants zero power in every
        // interval and the energy side is happy to supply exactly that.
        let scenario = idle_water_scenario();
        let curves = curves_for(&scenario);
        let config = AdmmConfig::default();
        let sol = run_admm(&scenario, &curves, &config).unwrap();
        assert_eq!(sol.iterations(), 1);
        assert_eq!(sol.stop_reason, StopReason::ResidualThreshold);
        let rec = &sol.log[0];
        // Agreement up to the solver's own feasibility tolerance: profiles
        // are vertex values, so they can sit within 1e-9 of their rows.
        assert!(rec.primal_residual.iter().all(|r| r.abs() <= 1e-8));
        assert!(rec.eps <= 1e-8);
        // Agreement at iteration one means restoration reproduces the same
        // dispatch, so the reported costs coincide.
        assert!((sol.restored_cost - rec.energy_cost).abs() < 1e-9);
    }

    #[test]
    fn coordination_run_is_deterministic_and_beats_nothing_below_central() {
        let scenario = small_scenario();
        let curves = curves_for(&scenario);
        let config = AdmmConfig {
            eps_threshold: 1e-4,
            max_iters: 200,
            ..AdmmConfig::default()
        };
        let sol = run_admm(&scenario, &curves, &config).unwrap();
        assert_eq!(sol.stop_reason, StopReason::ResidualThreshold);
        let last = sol.log.last().unwrap();
        assert!(last.eps <= 1e-4, "final eps {}", last.eps);

        // The centralized benchmark can only be at least as good.
        let central = solve_central(&scenario, &curves, &Tolerances::default()).unwrap();
        assert!(
            sol.restored_cost >= central.cost - 1e-6,
            "decentralized {} undercuts the benchmark {}",
            sol.restored_cost,
            central.cost
        );
        // And coordination should land close on a problem this small.
        let gap = (sol.restored_cost - central.cost) / central.cost;
        assert!(gap < 0.05, "gap {gap} vs central {}", central.cost);

        // Re-running reproduces the log bit for bit.
        let again = run_admm(&scenario, &curves, &config).unwrap();
        assert_eq!(sol.log, again.log);
        assert_eq!(sol.restored_cost, again.restored_cost);

        // The final cut span is tight enough that the cut error underneath
        // the quadratic penalty is far below the solver's own tolerances.
        let r_inf = last
            .primal_residual
            .iter()
            .fold(0.0_f64, |a, v| a.max(v.abs()));
        let half = penalty_half_width(r_inf, coupling_upper(&scenario));
        let spacing = 2.0 * half / (config.cut_count - 1) as f64;
        let max_cut_error = 0.5 * config.rho * (0.5 * spacing) * (0.5 * spacing);
        assert!(max_cut_error < 1e-8 * config.rho);
    }

    #[test]
    fn objective_settling_mode_stops_and_reports_it() {
        let scenario = small_scenario();
        let curves = curves_for(&scenario);
        let config = AdmmConfig {
            mode: AdmmMode::ObjectiveBased,
            ob_window: 5,
            max_iters: 200,
            ..AdmmConfig::default()
        };
        let sol = run_admm(&scenario, &curves, &config).unwrap();
        assert_eq!(sol.stop_reason, StopReason::ObjectiveSettled);
        assert!(sol.iterations() > config.ob_window);
        // The settled run still ends close to the benchmark.
        let central = solve_central(&scenario, &curves, &Tolerances::default()).unwrap();
        assert!(sol.restored_cost >= central.cost - 1e-6);
        let gap = (sol.restored_cost - central.cost) / central.cost;
        assert!(gap < 0.05, "gap {gap}");
    }

    #[test]
    fn water_first_order_also_converges() {
        let scenario = small_scenario();
        let curves = curves_for(&scenario);
        let config = AdmmConfig {
            eps_threshold: 1e-4,
            max_iters: 200,
            order: SubproblemOrder::WaterFirst,
            ..AdmmConfig::default()
        };
        let sol = run_admm(&scenario, &curves, &config).unwrap();
        assert_eq!(sol.stop_reason, StopReason::ResidualThreshold);
        let central = solve_central(&scenario, &curves, &Tolerances::default()).unwrap();
        assert!(sol.restored_cost >= central.cost - 1e-6);
    }

    #[test]
    fn iteration_cap_is_honest() {
        let scenario = small_scenario();
        let curves = curves_for(&scenario);
        let config = AdmmConfig {
            max_iters: 2,
            ..AdmmConfig::default()
        };
        let sol = run_admm(&scenario, &curves, &config).unwrap();
        assert_eq!(sol.stop_reason, StopReason::IterationLimit);
        assert_eq!(sol.iterations(), 2);
    }

    #[test]
    fn bad_config_is_rejected_before_any_work() {
        let scenario = small_scenario();
        let curves = curves_for(&scenario);
        for bad in [
            AdmmConfig {
                rho: 0.0,
                ..AdmmConfig::default()
            },
            AdmmConfig {
                ob_window: 1,
                ..AdmmConfig::default()
            },
            AdmmConfig {
                max_iters: 0,
                ..AdmmConfig::default()
            },
        ] {
            let err = run_admm(&scenario, &curves, &bad).unwrap_err();
            assert_eq!(err.iteration, 0);
            assert!(err.log.is_empty());
            assert!(matches!(err.source, AdmmError::BadConfig(_)));
        }
    }

    #[test]
    fn infeasible_water_side_aborts_with_the_log_intact() {
        let mut scenario = small_scenario();
        let curves = curves_for(&scenario);
        // More demand than every source together can deliver makes the water
        // subproblem infeasible from the start.
        scenario.profiles.water_demand = vec![8.0, 8.0];
        scenario.tanks[0].level_initial = Some(0.0);
        let err = run_admm(&scenario, &curves, &AdmmConfig::default()).unwrap_err();
        assert_eq!(err.iteration, 0);
        assert!(matches!(
            err.source,
            AdmmError::SolveFailed {
                stage: "water warm-start",
                ..
            }
        ));
    }

    #[test]
    fn restoration_matches_a_direct_fixed_water_solve() {
        let scenario = small_scenario();
        let curves = curves_for(&scenario);
        let solo = mwm_subproblem(
            &scenario,
            &curves,
            &[0.0, 0.0],
            &[0.0, 0.0],
            1e-12,
            3,
            1.0,
            1.0,
        )
        .unwrap();
        let (dispatch, cost) = restore_feasibility(&scenario, &solo.water_profile).unwrap();
        assert!((cost - dispatch.total_cost()).abs() < 1e-12);
        // Charging the energy side with the water draw can only cost more
        // than serving the community load alone.
        let (bare, bare_cost) = restore_feasibility(&scenario, &[0.0, 0.0]).unwrap();
        assert!(bare_cost <= cost + 1e-9);
        assert!(bare.water_power.iter().all(|p| *p == 0.0));
    }
}
