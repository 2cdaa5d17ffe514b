//! Micro water-management model: a wastewater reclamation unit fed by a
//! sewage-return reservoir, freshwater treatment units (groundwater,
//! desalination, ...), elevated clean-water storage tanks with exclusive
//! fill/drain states, and a per-interval water balance against the
//! community's demand. Every treatment stage consumes electricity in
//! proportion to its flow, and every pump consumes electricity along a
//! piecewise-linear fit of its quadratic pump curve; the sum of those draws
//! is the power profile the energy side ultimately has to serve.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ModelIR, Sense, VarId};
use crate::pwl::{
    emit_pwl_equality, eval_pwl, fit_max_affine, sample_quadratic, FitMethod, PumpQuadratic,
    PwlCurve, PwlError,
};
use crate::scenario::Scenario;

/// Default sample count when discretizing a quadratic pump curve for
/// fitting; small enough for the exact fit, dense enough for a tight SSE.
pub const DEFAULT_CURVE_SAMPLES: usize = 25;

/// Which flow a storage tank's pump power follows. Draining an elevated
/// tank is the delivery path, so the drain flow is the default driver;
/// sites that meter the fill pump instead can charge both directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TankPumpDrive {
    #[default]
    Discharge,
    ChargeAndDischarge,
}

/// Build-time switches for the water model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MwmOptions {
    pub tank_pump_drive: TankPumpDrive,
}

/// Fitted pump curves for every pump in a scenario, in scenario order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioCurves {
    pub wastewater: PwlCurve,
    pub treatment: Vec<PwlCurve>,
    pub tanks: Vec<PwlCurve>,
}

/// The water model's objective: its own total power draw, or the
/// coordination-augmented form built from multipliers and a consensus
/// target received from the energy side.
#[derive(Debug, Clone, PartialEq)]
pub enum MwmObjective {
    /// Minimize the summed power-consumption series.
    MinEnergy,
    /// Minimize `−Σ λ_t·P_t + Σ (ρ/2)·(P_t − target_t)²` (the quadratic
    /// entering through a tangent-cut epigraph whose cuts span
    /// `target_t ± half_width`), plus `tie_break·Σ P_t` to resolve
    /// power-equivalent dispatches when a caller wants that.
    Admm {
        lambda: Vec<f64>,
        energy_target: Vec<f64>,
        rho: f64,
        cut_count: usize,
        half_width: f64,
        tie_break: f64,
    },
}

/// Variable handles into the water model, indexed `[t]`, `[w][t]`, or
/// `[k][t]`.
#[derive(Debug, Clone)]
pub struct MwmVarMap {
    pub ww_flow: Vec<VarId>,
    pub ww_on: Vec<VarId>,
    pub ww_level: Vec<VarId>,
    pub ww_power: Vec<VarId>,
    pub ww_pump: Vec<VarId>,
    pub wt_flow: Vec<Vec<VarId>>,
    pub wt_on: Vec<Vec<VarId>>,
    pub wt_power: Vec<Vec<VarId>>,
    pub wt_pump: Vec<Vec<VarId>>,
    pub tank_charge: Vec<Vec<VarId>>,
    pub tank_discharge: Vec<Vec<VarId>>,
    pub tank_charge_on: Vec<Vec<VarId>>,
    pub tank_discharge_on: Vec<Vec<VarId>>,
    pub tank_level: Vec<Vec<VarId>>,
    pub tank_pump: Vec<Vec<VarId>>,
    /// Total water-side electrical draw per interval, kW.
    pub water_power: Vec<VarId>,
}

/// A solved water dispatch. Flows are m³/h, levels m³, powers kW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterDispatch {
    pub ww_flow: Vec<f64>,
    pub reservoir_level: Vec<f64>,
    pub wt_flow: Vec<Vec<f64>>,
    pub tank_charge: Vec<Vec<f64>>,
    pub tank_discharge: Vec<Vec<f64>>,
    pub tank_level: Vec<Vec<f64>>,
    /// Total electrical draw per interval, kW.
    pub water_power: Vec<f64>,
    /// Step length times the summed power series, kWh.
    pub total_energy_kwh: f64,
}

impl WaterDispatch {
    /// The water system's own objective value: the plain sum of the power
    /// series, without the step-length factor.
    pub fn consumption_sum(&self) -> f64 {
        self.water_power.iter().sum()
    }
}

#[derive(Debug, Error)]
pub enum MwmError {
    #[error("{what}: expected {want} fitted curves, got {got}")]
    CurveCount {
        what: String,
        want: usize,
        got: usize,
    },
    #[error("{what} series length {got} does not match horizon {want}")]
    SeriesLength {
        what: String,
        want: usize,
        got: usize,
    },
    #[error(
        "{what} level at step {t} diverges from its dynamics: recomputed \
         {recomputed}, reported {reported}"
    )]
    LevelMismatch {
        what: String,
        t: usize,
        recomputed: f64,
        reported: f64,
    },
    #[error("tank {unit} fill and drain are both active at step {t}, which the model forbids")]
    BothStatesActive { unit: usize, t: usize },
    #[error("penalty half-width must be finite and positive, got {got}")]
    BadPenaltyWidth { got: f64 },
    #[error("{what} flow {flow} lies outside the fitted curve domain [{lo}, {hi}]")]
    FlowOutsideDomain {
        what: String,
        flow: f64,
        lo: f64,
        hi: f64,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pwl(#[from] PwlError),
}

/// Fits one curve per pump in the scenario: the wastewater pump over
/// `[0, flow_max]`, each treatment pump over its own `[0, flow_max]`, and
/// each tank pump over `[0, max(inflow_max, outflow_max)]` so either drive
/// choice stays inside the fitted domain. A pump whose unit has zero flow
/// capacity gets a constant curve at its standby power.
pub fn fit_scenario_curves(
    scenario: &Scenario,
    pieces: usize,
    method: FitMethod,
    samples: usize,
) -> Result<ScenarioCurves, PwlError> {
    let fit_one = |pump: &PumpQuadratic, hi: f64| -> Result<PwlCurve, PwlError> {
        if hi <= 0.0 {
            return Ok(PwlCurve {
                segments: vec![(0.0, pump.power(0.0))],
                domain: (0.0, 1.0),
                breakpoints: vec![],
                sse: 0.0,
            });
        }
        let data = sample_quadratic(pump, (0.0, hi), samples)?;
        fit_max_affine(&data, pieces, method)
    };
    let wastewater = fit_one(&scenario.wastewater.pump, scenario.wastewater.flow_max)?;
    let mut treatment = Vec::with_capacity(scenario.treatment.len());
    for wt in &scenario.treatment {
        treatment.push(fit_one(&wt.pump, wt.flow_max)?);
    }
    let mut tanks = Vec::with_capacity(scenario.tanks.len());
    for tank in &scenario.tanks {
        tanks.push(fit_one(&tank.pump, tank.inflow_max.max(tank.outflow_max))?);
    }
    Ok(ScenarioCurves {
        wastewater,
        treatment,
        tanks,
    })
}

/// Lowest and highest value a fitted curve can take on its domain. A
/// max-affine function attains its maximum at a domain endpoint and its
/// minimum at an endpoint or a breakpoint.
fn curve_range(curve: &PwlCurve) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut probe = |w: f64| {
        let y = eval_pwl(curve, w);
        lo = lo.min(y);
        hi = hi.max(y);
    };
    probe(curve.domain.0);
    probe(curve.domain.1);
    for &b in &curve.breakpoints {
        probe(b);
    }
    (lo, hi)
}

/// Range of the total water-side electrical draw implied by the fitted
/// curves: treatment terms span `[0, intensity·flow_max]`, and each pump
/// spans its curve's range (a least-squares fit may dip slightly below
/// zero). This is the variable bound used for the per-interval draw on
/// both sides of the coordination, so the two models agree on what
/// profiles are representable.
pub fn water_power_bounds(scenario: &Scenario, curves: &ScenarioCurves) -> (f64, f64) {
    let mut lo = 0.0_f64;
    let mut hi = scenario.wastewater.energy_intensity * scenario.wastewater.flow_max;
    for wt in &scenario.treatment {
        hi += wt.energy_intensity * wt.flow_max;
    }
    let mut pump = |curve: &PwlCurve| {
        let (c_lo, c_hi) = curve_range(curve);
        lo += c_lo.min(0.0);
        hi += c_hi.max(0.0);
    };
    pump(&curves.wastewater);
    for c in &curves.treatment {
        pump(c);
    }
    for c in &curves.tanks {
        pump(c);
    }
    (lo.min(0.0), hi.max(0.0))
}

/// Builds the water MILP with the default build options.
pub fn build_mwm(
    scenario: &Scenario,
    curves: &ScenarioCurves,
    objective: &MwmObjective,
) -> Result<(ModelIR, MwmVarMap), MwmError> {
    build_mwm_with(scenario, curves, objective, MwmOptions::default())
}

/// Builds the water MILP: wastewater flow limits gated by commitment,
/// sewage-reservoir dynamics and caps, flow-proportional treatment power,
/// tank fill/drain limits with exclusive status binaries, tank level
/// dynamics and bounds, the water demand balance, the per-pump
/// piecewise-linear power equalities, the per-interval total-draw
/// composition, and the objective for `objective`. Unservable demand
/// surfaces as infeasibility at solve time.
pub fn build_mwm_with(
    scenario: &Scenario,
    curves: &ScenarioCurves,
    objective: &MwmObjective,
    options: MwmOptions,
) -> Result<(ModelIR, MwmVarMap), MwmError> {
    let horizon = scenario.horizon();
    if let MwmObjective::Admm {
        lambda,
        energy_target,
        half_width,
        ..
    } = objective
    {
        for (what, len) in [("lambda", lambda.len()), ("energy target", energy_target.len())] {
            if len != horizon {
                return Err(MwmError::SeriesLength {
                    what: what.into(),
                    want: horizon,
                    got: len,
                });
            }
        }
        if !half_width.is_finite() || *half_width <= 0.0 {
            return Err(MwmError::BadPenaltyWidth { got: *half_width });
        }
    }

    let mut model = ModelIR::new("mwm");
    let map = emit_mwm(&mut model, scenario, curves, options)?;

    match objective {
        MwmObjective::MinEnergy => {
            for &pw in &map.water_power {
                model.add_objective_term(pw, 1.0)?;
            }
        }
        MwmObjective::Admm {
            lambda,
            energy_target,
            rho,
            cut_count,
            half_width,
            tie_break,
        } => {
            let half = *half_width;
            for (t, &pw) in map.water_power.iter().enumerate() {
                model.add_objective_term(pw, tie_break - lambda[t])?;
                let center = energy_target[t];
                model.add_quadratic_penalty_epigraph(
                    0.5 * rho,
                    pw,
                    center,
                    (center - half, center + half),
                    *cut_count,
                )?;
            }
        }
    }
    Ok((model, map))
}

/// Emits the water model's variables and constraints into `model` without
/// touching the objective, so the combined benchmark can share the model.
pub(crate) fn emit_mwm(
    model: &mut ModelIR,
    scenario: &Scenario,
    curves: &ScenarioCurves,
    options: MwmOptions,
) -> Result<MwmVarMap, MwmError> {
    let horizon = scenario.horizon();
    let dt = scenario.time.step_hours;
    for (what, want, got) in [
        ("treatment", scenario.treatment.len(), curves.treatment.len()),
        ("tanks", scenario.tanks.len(), curves.tanks.len()),
    ] {
        if want != got {
            return Err(MwmError::CurveCount {
                what: what.into(),
                want,
                got,
            });
        }
    }

    let ww = &scenario.wastewater;

    let mut ww_flow = Vec::with_capacity(horizon);
    let mut ww_on = Vec::with_capacity(horizon);
    let mut ww_level = Vec::with_capacity(horizon);
    let mut ww_power = Vec::with_capacity(horizon);
    let mut ww_pump = Vec::with_capacity(horizon);
    let ww_pump_range = curve_range(&curves.wastewater);
    for t in 0..horizon {
        let w = model.add_continuous(format!("ww_flow_t{t}"), 0.0, ww.flow_max)?;
        let u = model.add_binary(format!("ww_on_t{t}"))?;
        let lv = model.add_continuous(format!("ww_level_t{t}"), 0.0, ww.reservoir_cap)?;
        let p = model.add_continuous(
            format!("ww_power_t{t}"),
            0.0,
            ww.energy_intensity * ww.flow_max,
        )?;
        let pp = model.add_continuous(
            format!("ww_pump_t{t}"),
            ww_pump_range.0 - 1e-9,
            ww_pump_range.1 + 1e-9,
        )?;
        model.constrain(
            "wastewater_flow_limits",
            vec![(w, 1.0), (u, -ww.flow_min)],
            Sense::Ge,
            0.0,
        )?;
        model.constrain(
            "wastewater_flow_limits",
            vec![(w, 1.0), (u, -ww.flow_max)],
            Sense::Le,
            0.0,
        )?;
        // level_t - level_{t-1} = dt * (reclaim_t - flow_t)
        let mut terms = vec![(lv, 1.0), (w, dt)];
        let mut rhs = dt * ww.reclaim_rate[t];
        if t == 0 {
            rhs += ww.initial_level();
        } else {
            terms.push((ww_level[t - 1], -1.0));
        }
        model.constrain("reservoir_dynamics", terms, Sense::Eq, rhs)?;
        model.constrain(
            "wastewater_power",
            vec![(p, 1.0), (w, -ww.energy_intensity)],
            Sense::Eq,
            0.0,
        )?;
        emit_pwl_equality(model, &curves.wastewater, w, pp)?;
        ww_flow.push(w);
        ww_on.push(u);
        ww_level.push(lv);
        ww_power.push(p);
        ww_pump.push(pp);
    }

    let nw = scenario.treatment.len();
    let mut wt_flow = Vec::with_capacity(nw);
    let mut wt_on = Vec::with_capacity(nw);
    let mut wt_power = Vec::with_capacity(nw);
    let mut wt_pump = Vec::with_capacity(nw);
    for (w, wt) in scenario.treatment.iter().enumerate() {
        let pump_range = curve_range(&curves.treatment[w]);
        let mut f_row = Vec::with_capacity(horizon);
        let mut u_row = Vec::with_capacity(horizon);
        let mut p_row = Vec::with_capacity(horizon);
        let mut pp_row = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let f = model.add_continuous(format!("wt{w}_flow_t{t}"), 0.0, wt.flow_max)?;
            let u = model.add_binary(format!("wt{w}_on_t{t}"))?;
            let p = model.add_continuous(
                format!("wt{w}_power_t{t}"),
                0.0,
                wt.energy_intensity * wt.flow_max,
            )?;
            let pp = model.add_continuous(
                format!("wt{w}_pump_t{t}"),
                pump_range.0 - 1e-9,
                pump_range.1 + 1e-9,
            )?;
            model.constrain(
                "treatment_flow_limits",
                vec![(f, 1.0), (u, -wt.flow_min)],
                Sense::Ge,
                0.0,
            )?;
            model.constrain(
                "treatment_flow_limits",
                vec![(f, 1.0), (u, -wt.flow_max)],
                Sense::Le,
                0.0,
            )?;
            model.constrain(
                "treatment_power",
                vec![(p, 1.0), (f, -wt.energy_intensity)],
                Sense::Eq,
                0.0,
            )?;
            emit_pwl_equality(model, &curves.treatment[w], f, pp)?;
            f_row.push(f);
            u_row.push(u);
            p_row.push(p);
            pp_row.push(pp);
        }
        wt_flow.push(f_row);
        wt_on.push(u_row);
        wt_power.push(p_row);
        wt_pump.push(pp_row);
    }

    let nk = scenario.tanks.len();
    let mut tank_charge = Vec::with_capacity(nk);
    let mut tank_discharge = Vec::with_capacity(nk);
    let mut tank_charge_on = Vec::with_capacity(nk);
    let mut tank_discharge_on = Vec::with_capacity(nk);
    let mut tank_level = Vec::with_capacity(nk);
    let mut tank_pump = Vec::with_capacity(nk);
    for (k, tank) in scenario.tanks.iter().enumerate() {
        let pump_range = curve_range(&curves.tanks[k]);
        let mut c_row = Vec::with_capacity(horizon);
        let mut d_row = Vec::with_capacity(horizon);
        let mut sc_row = Vec::with_capacity(horizon);
        let mut sd_row = Vec::with_capacity(horizon);
        let mut l_row = Vec::with_capacity(horizon);
        let mut pp_row = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let c = model.add_continuous(format!("tank{k}_charge_t{t}"), 0.0, tank.inflow_max)?;
            let d = model.add_continuous(format!("tank{k}_discharge_t{t}"), 0.0, tank.outflow_max)?;
            let sc = model.add_binary(format!("tank{k}_charge_on_t{t}"))?;
            let sd = model.add_binary(format!("tank{k}_discharge_on_t{t}"))?;
            let lv = model.add_continuous(
                format!("tank{k}_level_t{t}"),
                tank.level_min,
                tank.level_max,
            )?;
            let pp = model.add_continuous(
                format!("tank{k}_pump_t{t}"),
                pump_range.0 - 1e-9,
                pump_range.1 + 1e-9,
            )?;
            model.constrain(
                "tank_inflow_limits",
                vec![(c, 1.0), (sc, -tank.inflow_min)],
                Sense::Ge,
                0.0,
            )?;
            model.constrain(
                "tank_inflow_limits",
                vec![(c, 1.0), (sc, -tank.inflow_max)],
                Sense::Le,
                0.0,
            )?;
            model.constrain(
                "tank_outflow_limit",
                vec![(d, 1.0), (sd, -tank.outflow_max)],
                Sense::Le,
                0.0,
            )?;
            model.constrain(
                "tank_exclusivity",
                vec![(sc, 1.0), (sd, 1.0)],
                Sense::Le,
                1.0,
            )?;
            // level_t - level_{t-1} = dt * (charge_t - discharge_t)
            let mut terms = vec![(lv, 1.0), (c, -dt), (d, dt)];
            let rhs = if t == 0 {
                tank.initial_level()
            } else {
                terms.push((l_row[t - 1], -1.0));
                0.0
            };
            model.constrain("tank_level_dynamics", terms, Sense::Eq, rhs)?;
            match options.tank_pump_drive {
                TankPumpDrive::Discharge => {
                    emit_pwl_equality(model, &curves.tanks[k], d, pp)?;
                }
                TankPumpDrive::ChargeAndDischarge => {
                    // Exclusivity makes the sum equal whichever flow is
                    // active, so one curve covers both directions.
                    let drive = model.add_continuous(
                        format!("tank{k}_pump_flow_t{t}"),
                        0.0,
                        tank.inflow_max.max(tank.outflow_max),
                    )?;
                    model.constrain(
                        "tank_pump_flow",
                        vec![(drive, 1.0), (c, -1.0), (d, -1.0)],
                        Sense::Eq,
                        0.0,
                    )?;
                    emit_pwl_equality(model, &curves.tanks[k], drive, pp)?;
                }
            }
            c_row.push(c);
            d_row.push(d);
            sc_row.push(sc);
            sd_row.push(sd);
            l_row.push(lv);
            pp_row.push(pp);
        }
        tank_charge.push(c_row);
        tank_discharge.push(d_row);
        tank_charge_on.push(sc_row);
        tank_discharge_on.push(sd_row);
        tank_level.push(l_row);
        tank_pump.push(pp_row);
    }

    for t in 0..horizon {
        let mut terms = vec![(ww_flow[t], 1.0)];
        for row in &wt_flow {
            terms.push((row[t], 1.0));
        }
        for k in 0..nk {
            terms.push((tank_discharge[k][t], 1.0));
            terms.push((tank_charge[k][t], -1.0));
        }
        model.constrain(
            "water_balance",
            terms,
            Sense::Eq,
            scenario.profiles.water_demand[t],
        )?;
    }

    let (draw_lo, draw_hi) = water_power_bounds(scenario, curves);
    let mut water_power = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let pw =
            model.add_continuous(format!("water_power_t{t}"), draw_lo - 1e-9, draw_hi + 1e-9)?;
        let mut terms = vec![
            (pw, 1.0),
            (ww_power[t], -1.0),
            (ww_pump[t], -1.0),
        ];
        for w in 0..nw {
            terms.push((wt_power[w][t], -1.0));
            terms.push((wt_pump[w][t], -1.0));
        }
        for pump in tank_pump.iter().take(nk) {
            terms.push((pump[t], -1.0));
        }
        model.constrain("water_power_composition", terms, Sense::Eq, 0.0)?;
        water_power.push(pw);
    }

    let map = MwmVarMap {
        ww_flow,
        ww_on,
        ww_level,
        ww_power,
        ww_pump,
        wt_flow,
        wt_on,
        wt_power,
        wt_pump,
        tank_charge,
        tank_discharge,
        tank_charge_on,
        tank_discharge_on,
        tank_level,
        tank_pump,
        water_power,
    };
    Ok(map)
}

/// Recomputes the per-interval water-side electrical draw from a dispatch
/// and the fitted curves, with the default build options: flow-proportional
/// treatment terms plus each pump's curve value at its driving flow.
pub fn water_power(
    dispatch: &WaterDispatch,
    scenario: &Scenario,
    curves: &ScenarioCurves,
) -> Result<Vec<f64>, MwmError> {
    water_power_with(dispatch, scenario, curves, MwmOptions::default())
}

/// [`water_power`] under explicit build options.
pub fn water_power_with(
    dispatch: &WaterDispatch,
    scenario: &Scenario,
    curves: &ScenarioCurves,
    options: MwmOptions,
) -> Result<Vec<f64>, MwmError> {
    let horizon = scenario.horizon();
    let curve_at = |what: &str, curve: &PwlCurve, flow: f64| -> Result<f64, MwmError> {
        let (lo, hi) = curve.domain;
        if flow < lo - 1e-9 || flow > hi + 1e-9 {
            return Err(MwmError::FlowOutsideDomain {
                what: what.into(),
                flow,
                lo,
                hi,
            });
        }
        Ok(eval_pwl(curve, flow.clamp(lo, hi)))
    };
    let mut series = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut total = scenario.wastewater.energy_intensity * dispatch.ww_flow[t]
            + curve_at("wastewater pump", &curves.wastewater, dispatch.ww_flow[t])?;
        for (w, wt) in scenario.treatment.iter().enumerate() {
            total += wt.energy_intensity * dispatch.wt_flow[w][t]
                + curve_at(
                    &format!("treatment {w} pump"),
                    &curves.treatment[w],
                    dispatch.wt_flow[w][t],
                )?;
        }
        for k in 0..scenario.tanks.len() {
            let flow = match options.tank_pump_drive {
                TankPumpDrive::Discharge => dispatch.tank_discharge[k][t],
                TankPumpDrive::ChargeAndDischarge => {
                    dispatch.tank_charge[k][t] + dispatch.tank_discharge[k][t]
                }
            };
            total += curve_at(&format!("tank {k} pump"), &curves.tanks[k], flow)?;
        }
        series.push(total);
    }
    Ok(series)
}

/// Reads a solved assignment back into a water dispatch, recomputing the
/// reservoir and tank level trajectories from the flow series and
/// cross-checking them against the model's level variables, and rejecting
/// any solution where a tank fills and drains simultaneously.
pub fn extract_mwm_solution(
    scenario: &Scenario,
    map: &MwmVarMap,
    assignment: &[f64],
) -> Result<WaterDispatch, MwmError> {
    let horizon = scenario.horizon();
    let dt = scenario.time.step_hours;
    let series = |ids: &[VarId]| -> Vec<f64> { ids.iter().map(|v| assignment[v.0]).collect() };

    let ww_flow = series(&map.ww_flow);
    let reservoir_level = series(&map.ww_level);
    let wt_flow: Vec<Vec<f64>> = map.wt_flow.iter().map(|r| series(r)).collect();
    let tank_charge: Vec<Vec<f64>> = map.tank_charge.iter().map(|r| series(r)).collect();
    let tank_discharge: Vec<Vec<f64>> = map.tank_discharge.iter().map(|r| series(r)).collect();
    let tank_level: Vec<Vec<f64>> = map.tank_level.iter().map(|r| series(r)).collect();
    let water_power = series(&map.water_power);

    let mut running = scenario.wastewater.initial_level();
    for t in 0..horizon {
        running += dt * (scenario.wastewater.reclaim_rate[t] - ww_flow[t]);
        if (running - reservoir_level[t]).abs() > 1e-6 {
            return Err(MwmError::LevelMismatch {
                what: "sewage reservoir".into(),
                t,
                recomputed: running,
                reported: reservoir_level[t],
            });
        }
    }
    for (k, tank) in scenario.tanks.iter().enumerate() {
        let mut running = tank.initial_level();
        for t in 0..horizon {
            if assignment[map.tank_charge_on[k][t].0] > 0.5
                && assignment[map.tank_discharge_on[k][t].0] > 0.5
            {
                return Err(MwmError::BothStatesActive { unit: k, t });
            }
            running += dt * (tank_charge[k][t] - tank_discharge[k][t]);
            if (running - tank_level[k][t]).abs() > 1e-6 {
                return Err(MwmError::LevelMismatch {
                    what: format!("tank {k}"),
                    t,
                    recomputed: running,
                    reported: tank_level[k][t],
                });
            }
        }
    }

    let total_energy_kwh = dt * water_power.iter().sum::<f64>();
    Ok(WaterDispatch {
        ww_flow,
        reservoir_level,
        wt_flow,
        tank_charge,
        tank_discharge,
        tank_level,
        water_power,
        total_energy_kwh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{
        validate_scenario, GeneratorSpec, GridTieSpec, PriceSeries, Profiles,
        StorageTankSpec, TimeGrid, TreatmentUnitSpec, WastewaterSpec,
    };
    use crate::solver::{brute_force_milp, solve_milp, SolveStatus, Tolerances};

    fn pump_off() -> PumpQuadratic {
        PumpQuadratic {
            c1: 0.0,
            c2: 0.0,
            c3: 0.0,
        }
    }

    fn water_scenario(horizon: usize) -> Scenario {
        validate_scenario(Scenario {
            time: TimeGrid {
                horizon_steps: horizon,
                step_hours: 1.0,
            },
            generators: vec![GeneratorSpec {
                no_load_cost: 6.0,
                marginal_cost: 0.04,
                p_min: 40.0,
                p_max: 400.0,
            }],
            storage: vec![],
            grid: GridTieSpec { tie_limit: 1200.0 },
            wastewater: WastewaterSpec {
                flow_min: 0.5,
                flow_max: 2.5,
                reclaim_rate: vec![1.0; horizon],
                reservoir_cap: 37.0,
                reservoir_initial: Some(10.0),
                energy_intensity: 52.0,
                pump: PumpQuadratic {
                    c1: 0.1,
                    c2: 0.2,
                    c3: 0.0,
                },
            },
            treatment: vec![TreatmentUnitSpec {
                flow_min: 0.5,
                flow_max: 2.5,
                energy_intensity: 0.154,
                pump: PumpQuadratic {
                    c1: 0.05,
                    c2: 0.1,
                    c3: 0.0,
                },
            }],
            tanks: vec![StorageTankSpec {
                inflow_min: 0.5,
                inflow_max: 2.5,
                outflow_max: 2.5,
                level_min: 0.0,
                level_max: 27.0,
                level_initial: Some(13.0),
                pump: PumpQuadratic {
                    c1: 0.02,
                    c2: 0.05,
                    c3: 0.0,
                },
            }],
            profiles: Profiles {
                power_demand: vec![150.0; horizon],
                renewables: vec![20.0; horizon],
                water_demand: vec![2.0; horizon],
            },
            prices: PriceSeries {
                import: vec![0.10; horizon],
                export: vec![0.08; horizon],
            },
        })
        .unwrap()
    }

    fn fitted(scenario: &Scenario, pieces: usize) -> ScenarioCurves {
        fit_scenario_curves(scenario, pieces, FitMethod::PartitionHeuristic, 25).unwrap()
    }

    #[test]
    fn unit_status_binary_count_matches_hand_enumeration() {
        // One wastewater unit, one treatment unit, one tank, two steps:
        // four unit statuses per step. Single-segment curves add no
        // adjacency binaries, isolating the count.
        let mut scenario = water_scenario(2);
        scenario.wastewater.pump = pump_off();
        scenario.treatment[0].pump = pump_off();
        scenario.tanks[0].pump = pump_off();
        let curves = fitted(&scenario, 1);
        let (model, _) = build_mwm(&scenario, &curves, &MwmObjective::MinEnergy).unwrap();
        assert_eq!(model.num_binaries(), 8);
    }

    #[test]
    fn energy_intensity_hand_values() {
        let scenario = water_scenario(1);
        let mut curves = fitted(&scenario, 2);
        // Flatten the pumps so only the treatment terms remain.
        for c in [&mut curves.wastewater, &mut curves.treatment[0], &mut curves.tanks[0]] {
            c.segments = vec![(0.0, 0.0)];
            c.breakpoints.clear();
        }
        let dispatch = WaterDispatch {
            ww_flow: vec![2.0],
            reservoir_level: vec![9.0],
            wt_flow: vec![vec![2.0]],
            tank_charge: vec![vec![0.0]],
            tank_discharge: vec![vec![0.0]],
            tank_level: vec![vec![13.0]],
            water_power: vec![0.0],
            total_energy_kwh: 0.0,
        };
        let series = water_power(&dispatch, &scenario, &curves).unwrap();
        assert!((series[0] - (52.0 * 2.0 + 0.154 * 2.0)).abs() < 1e-9);
    }

    #[test]
    fn zero_demand_dispatch_is_all_off() {
        // Linear pumps fit exactly, so the all-off dispatch draws exactly
        // zero; a curved pump's least-squares fit dips a hair below zero
        // at zero flow, which would blur the assertion.
        let mut scenario = water_scenario(2);
        scenario.profiles.water_demand = vec![0.0, 0.0];
        scenario.wastewater.reclaim_rate = vec![0.0, 0.0];
        for pump in [
            &mut scenario.wastewater.pump,
            &mut scenario.treatment[0].pump,
            &mut scenario.tanks[0].pump,
        ] {
            pump.c1 = 0.0;
        }
        let scenario = validate_scenario(scenario).unwrap();
        let curves = fitted(&scenario, 2);
        let (model, map) = build_mwm(&scenario, &curves, &MwmObjective::MinEnergy).unwrap();
        let res = solve_milp(&model, &Tolerances::default());
        assert_eq!(res.status, SolveStatus::Optimal);
        let d = extract_mwm_solution(&scenario, &map, &res.assignment).unwrap();
        assert!(d.consumption_sum().abs() <= 1e-7);
        assert!(res.objective.abs() <= 1e-7);
    }

    #[test]
    fn unservable_demand_is_infeasible() {
        let mut scenario = water_scenario(1);
        // Max supply rate: 2.5 (wastewater) + 2.5 (treatment) + 2.5 (tank
        // drain) = 7.5 m³/h; ask for more with the tank already empty.
        scenario.profiles.water_demand = vec![8.0];
        scenario.tanks[0].level_initial = Some(0.0);
        scenario.tanks[0].level_min = 0.0;
        let scenario = validate_scenario(scenario).unwrap();
        let curves = fitted(&scenario, 2);
        let (model, _) = build_mwm(&scenario, &curves, &MwmObjective::MinEnergy).unwrap();
        let res = solve_milp(&model, &Tolerances::default());
        assert_eq!(res.status, SolveStatus::Infeasible);
    }

    #[test]
    fn reservoir_and_tank_dynamics_hand_values() {
        let scenario = water_scenario(1);
        let curves = fitted(&scenario, 2);
        let (model, map) = build_mwm(&scenario, &curves, &MwmObjective::MinEnergy).unwrap();
        let mut assignment = vec![0.0; model.num_vars()];
        // Reclaim 2 into a reservoir at 5 while treating 0.5 for one hour.
        let mut scenario2 = scenario.clone();
        scenario2.wastewater.reservoir_initial = Some(5.0);
        scenario2.wastewater.reclaim_rate = vec![2.0];
        scenario2.tanks[0].level_initial = Some(10.0);
        assignment[map.ww_flow[0].0] = 0.5;
        assignment[map.ww_level[0].0] = 6.5;
        // Tank fills at 1 m³/h from level 10.
        assignment[map.tank_charge[0][0].0] = 1.0;
        assignment[map.tank_level[0][0].0] = 11.0;
        assignment[map.tank_charge_on[0][0].0] = 1.0;
        let d = extract_mwm_solution(&scenario2, &map, &assignment).unwrap();
        assert_eq!(d.reservoir_level, vec![6.5]);
        assert_eq!(d.tank_level, vec![vec![11.0]]);

        // A stale level is caught.
        assignment[map.tank_level[0][0].0] = 10.0;
        assert!(matches!(
            extract_mwm_solution(&scenario2, &map, &assignment),
            Err(MwmError::LevelMismatch { .. })
        ));
    }

    #[test]
    fn simultaneous_fill_and_drain_is_rejected() {
        let scenario = water_scenario(1);
        let curves = fitted(&scenario, 2);
        let (model, map) = build_mwm(&scenario, &curves, &MwmObjective::MinEnergy).unwrap();
        let mut assignment = vec![0.0; model.num_vars()];
        assignment[map.ww_level[0].0] =
            scenario.wastewater.initial_level() + scenario.wastewater.reclaim_rate[0];
        assignment[map.tank_charge_on[0][0].0] = 1.0;
        assignment[map.tank_discharge_on[0][0].0] = 1.0;
        assignment[map.tank_level[0][0].0] = scenario.tanks[0].initial_level();
        assert!(matches!(
            extract_mwm_solution(&scenario, &map, &assignment),
            Err(MwmError::BothStatesActive { unit: 0, t: 0 })
        ));
    }

    #[test]
    fn optimum_balances_water_and_conserves_volume() {
        let scenario = water_scenario(3);
        let curves = fitted(&scenario, 2);
        let (model, map) = build_mwm(&scenario, &curves, &MwmObjective::MinEnergy).unwrap();
        let res = solve_milp(&model, &Tolerances::default());
        assert_eq!(res.status, SolveStatus::Optimal);
        let eval = model.evaluate(&res.assignment).unwrap();
        assert!(eval.max_violation <= 1e-6);
        let d = extract_mwm_solution(&scenario, &map, &res.assignment).unwrap();
        let delivered: f64 = (0..3)
            .map(|t| {
                d.ww_flow[t] + d.wt_flow[0][t] + d.tank_discharge[0][t] - d.tank_charge[0][t]
            })
            .sum();
        let demanded: f64 = scenario.profiles.water_demand.iter().sum();
        assert!((delivered - demanded).abs() <= 1e-6);
        assert!((d.total_energy_kwh - d.consumption_sum()).abs() <= 1e-9);
    }

    #[test]
    fn model_power_matches_curve_recomputation() {
        let scenario = water_scenario(2);
        let curves = fitted(&scenario, 3);
        let (model, map) = build_mwm(&scenario, &curves, &MwmObjective::MinEnergy).unwrap();
        let res = solve_milp(&model, &Tolerances::default());
        assert_eq!(res.status, SolveStatus::Optimal);
        let d = extract_mwm_solution(&scenario, &map, &res.assignment).unwrap();
        let recomputed = water_power(&d, &scenario, &curves).unwrap();
        for (t, got) in recomputed.iter().enumerate() {
            assert!(
                (got - d.water_power[t]).abs() <= 1e-6,
                "t{t}: {} vs {}",
                got,
                d.water_power[t]
            );
        }
    }

    #[test]
    fn doubling_demand_never_cuts_consumption() {
        let scenario = water_scenario(2);
        let curves = fitted(&scenario, 2);
        let (model, _) = build_mwm(&scenario, &curves, &MwmObjective::MinEnergy).unwrap();
        let base = solve_milp(&model, &Tolerances::default());
        let mut doubled = scenario.clone();
        for w in &mut doubled.profiles.water_demand {
            *w *= 2.0;
        }
        let curves2 = fitted(&doubled, 2);
        let (model2, _) = build_mwm(&doubled, &curves2, &MwmObjective::MinEnergy).unwrap();
        let more = solve_milp(&model2, &Tolerances::default());
        assert_eq!(base.status, SolveStatus::Optimal);
        assert_eq!(more.status, SolveStatus::Optimal);
        assert!(more.objective >= base.objective - 1e-9);
    }

    #[test]
    fn min_energy_matches_brute_force() {
        let mut scenario = water_scenario(1);
        scenario.wastewater.pump = pump_off();
        scenario.treatment[0].pump = pump_off();
        scenario.tanks[0].pump = pump_off();
        let curves = fitted(&scenario, 1);
        let (model, _) = build_mwm(&scenario, &curves, &MwmObjective::MinEnergy).unwrap();
        let tol = Tolerances::default();
        let fast = solve_milp(&model, &tol);
        let slow = brute_force_milp(&model, &tol, 14).unwrap();
        assert_eq!(fast.status, SolveStatus::Optimal);
        assert!((fast.objective - slow.objective).abs() <= 1e-6);
    }

    #[test]
    fn coordination_objective_tracks_its_target() {
        // With a huge penalty weight and no multipliers, the water side
        // should reproduce the target profile as closely as physics allows.
        let scenario = water_scenario(2);
        let curves = fitted(&scenario, 2);
        let (probe_model, probe_map) =
            build_mwm(&scenario, &curves, &MwmObjective::MinEnergy).unwrap();
        let probe = solve_milp(&probe_model, &Tolerances::default());
        assert_eq!(probe.status, SolveStatus::Optimal);
        let natural: Vec<f64> = probe_map
            .water_power
            .iter()
            .map(|v| probe.assignment[v.0])
            .collect();
        // Target the natural profile shifted up by 0.3 kW — inside the
        // band the treatment units can tune continuously (committing the
        // wastewater unit would jump the draw by tens of kW).
        let target: Vec<f64> = natural.iter().map(|p| p + 0.3).collect();
        let cut_count = 1025;
        let (lo, hi) = water_power_bounds(&scenario, &curves);
        let half = 0.5 * (hi - lo);
        let objective = MwmObjective::Admm {
            lambda: vec![0.0; 2],
            energy_target: target.clone(),
            rho: 1e4,
            cut_count,
            half_width: half,
            tie_break: 0.0,
        };
        let (model, map) = build_mwm(&scenario, &curves, &objective).unwrap();
        let res = solve_milp(&model, &Tolerances::default());
        assert_eq!(res.status, SolveStatus::Optimal);
        // The tangent-cut penalty is flat within half a cut spacing of its
        // center, so agreement is only forced to that resolution.
        let spacing = 2.0 * half / (cut_count - 1) as f64;
        for (t, &pw) in map.water_power.iter().enumerate() {
            let got = res.assignment[pw.0];
            assert!(
                (got - target[t]).abs() <= spacing,
                "t{t}: water power {got} should chase target {} within {spacing}",
                target[t]
            );
        }
    }

    #[test]
    fn admm_series_lengths_are_checked() {
        let scenario = water_scenario(2);
        let curves = fitted(&scenario, 2);
        let objective = MwmObjective::Admm {
            lambda: vec![0.0],
            energy_target: vec![0.0, 0.0],
            rho: 0.01,
            cut_count: 17,
            half_width: 10.0,
            tie_break: 0.0,
        };
        assert!(matches!(
            build_mwm(&scenario, &curves, &objective),
            Err(MwmError::SeriesLength { .. })
        ));
        let objective = MwmObjective::Admm {
            lambda: vec![0.0; 2],
            energy_target: vec![0.0, 0.0],
            rho: 0.01,
            cut_count: 17,
            half_width: 0.0,
            tie_break: 0.0,
        };
        assert!(matches!(
            build_mwm(&scenario, &curves, &objective),
            Err(MwmError::BadPenaltyWidth { .. })
        ));
        let missing = ScenarioCurves {
            wastewater: curves.wastewater.clone(),
            treatment: vec![],
            tanks: curves.tanks.clone(),
        };
        assert!(matches!(
            build_mwm(&scenario, &missing, &MwmObjective::MinEnergy),
            Err(MwmError::CurveCount { .. })
        ));
    }

    #[test]
    fn out_of_domain_flow_is_reported() {
        let scenario = water_scenario(1);
        let curves = fitted(&scenario, 2);
        let dispatch = WaterDispatch {
            ww_flow: vec![99.0],
            reservoir_level: vec![9.0],
            wt_flow: vec![vec![0.0]],
            tank_charge: vec![vec![0.0]],
            tank_discharge: vec![vec![0.0]],
            tank_level: vec![vec![13.0]],
            water_power: vec![0.0],
            total_energy_kwh: 0.0,
        };
        assert!(matches!(
            water_power(&dispatch, &scenario, &curves),
            Err(MwmError::FlowOutsideDomain { .. })
        ));
    }

    #[test]
    fn charge_and_discharge_drive_prices_both_directions() {
        let scenario = water_scenario(2);
        let curves = fitted(&scenario, 2);
        let options = MwmOptions {
            tank_pump_drive: TankPumpDrive::ChargeAndDischarge,
        };
        let (model, map) =
            build_mwm_with(&scenario, &curves, &MwmObjective::MinEnergy, options).unwrap();
        let res = solve_milp(&model, &Tolerances::default());
        assert_eq!(res.status, SolveStatus::Optimal);
        let d = extract_mwm_solution(&scenario, &map, &res.assignment).unwrap();
        let recomputed = water_power_with(&d, &scenario, &curves, options).unwrap();
        for (got, want) in recomputed.iter().zip(&d.water_power) {
            assert!((got - want).abs() <= 1e-6);
        }
    }

    #[test]
    fn zero_capacity_unit_gets_a_constant_curve() {
        let mut scenario = water_scenario(1);
        scenario.wastewater.flow_min = 0.0;
        scenario.wastewater.flow_max = 0.0;
        scenario.wastewater.reclaim_rate = vec![0.0];
        scenario.wastewater.pump = PumpQuadratic {
            c1: 1.0,
            c2: 1.0,
            c3: 7.0,
        };
        let scenario = validate_scenario(scenario).unwrap();
        let curves = fitted(&scenario, 3);
        assert_eq!(curves.wastewater.segments, vec![(0.0, 7.0)]);
        let (model, _) = build_mwm(&scenario, &curves, &MwmObjective::MinEnergy).unwrap();
        let res = solve_milp(&model, &Tolerances::default());
        assert_eq!(res.status, SolveStatus::Optimal);
    }
}
