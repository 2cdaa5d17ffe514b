//! Centralized benchmark: the energy and water systems combined into one
//! MILP. The objective is the energy side's operating cost alone; the
//! water side's electrical draw enters the power balance as a shared
//! per-interval series, so shifting water work toward cheap hours is
//! rewarded through the energy cost, not through a water term of its own.

use thiserror::Error;

use crate::mem::{self, extract_mem_solution, MemDispatch, MemError, MemVarMap, WaterTerms};
use crate::model::{ModelError, ModelIR};
use crate::mwm::{
    self, extract_mwm_solution, MwmError, MwmOptions, MwmVarMap, ScenarioCurves, WaterDispatch,
};
use crate::scenario::Scenario;
use crate::solver::{solve_milp, SolveResult, SolveStatus, Tolerances};

/// Solve metadata worth reporting alongside a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveStats {
    pub status: SolveStatus,
    pub simplex_iterations: u64,
    pub nodes: u64,
}

impl SolveStats {
    fn of(res: &SolveResult) -> Self {
        SolveStats {
            status: res.status,
            simplex_iterations: res.simplex_iterations,
            nodes: res.nodes,
        }
    }
}

/// The combined optimum: both dispatches, the operating cost, and the
/// water side's total electrical energy (a reported metric, not an
/// objective term).
#[derive(Debug, Clone)]
pub struct CentralSolution {
    pub mem: MemDispatch,
    pub water: WaterDispatch,
    pub cost: f64,
    pub water_energy_kwh: f64,
    pub stats: SolveStats,
}

#[derive(Debug, Error)]
pub enum CentralError {
    #[error("combined model did not reach optimality: {status:?}")]
    Solve { status: SolveStatus },
    #[error(transparent)]
    Mem(#[from] MemError),
    #[error(transparent)]
    Mwm(#[from] MwmError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Builds the combined MILP with default water-side options: the water
/// constraints and draw composition first, then the energy constraints
/// with the water draw wired into each interval's power balance.
pub fn build_central(
    scenario: &Scenario,
    curves: &ScenarioCurves,
) -> Result<(ModelIR, MemVarMap, MwmVarMap), CentralError> {
    build_central_with(scenario, curves, MwmOptions::default())
}

/// [`build_central`] under explicit water-side build options.
pub fn build_central_with(
    scenario: &Scenario,
    curves: &ScenarioCurves,
    options: MwmOptions,
) -> Result<(ModelIR, MemVarMap, MwmVarMap), CentralError> {
    let mut model = ModelIR::new("central");
    let water_map = mwm::emit_mwm(&mut model, scenario, curves, options)?;
    let mem_map = mem::emit_mem(
        &mut model,
        scenario,
        WaterTerms::Existing(&water_map.water_power),
    )?;
    Ok((model, mem_map, water_map))
}

/// Solves the combined model and extracts both dispatches, cross-checking
/// their dynamics. Any non-optimal solver outcome is returned as an error
/// carrying the status.
pub fn solve_central(
    scenario: &Scenario,
    curves: &ScenarioCurves,
    tol: &Tolerances,
) -> Result<CentralSolution, CentralError> {
    let (model, mem_map, water_map) = build_central(scenario, curves)?;
    let res = solve_milp(&model, tol);
    if res.status != SolveStatus::Optimal {
        return Err(CentralError::Solve { status: res.status });
    }
    let mem = extract_mem_solution(scenario, &mem_map, &res.assignment)?;
    let water = extract_mwm_solution(scenario, &water_map, &res.assignment)?;
    Ok(CentralSolution {
        cost: res.objective,
        water_energy_kwh: water.total_energy_kwh,
        stats: SolveStats::of(&res),
        mem,
        water,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwl::{FitMethod, PumpQuadratic};
    use crate::scenario::{
        validate_scenario, GeneratorSpec, GridTieSpec, PriceSeries, Profiles, StorageTankSpec,
        TimeGrid, TreatmentUnitSpec, WastewaterSpec,
    };
    use crate::solver::brute_force_milp;

    fn pump_off() -> PumpQuadratic {
        PumpQuadratic {
            c1: 0.0,
            c2: 0.0,
            c3: 0.0,
        }
    }

    /// A scenario whose water side is a zero-capacity stub, leaving only
    /// the energy decisions.
    fn energy_only(horizon: usize, load: f64) -> Scenario {
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
                flow_min: 0.0,
                flow_max: 0.0,
                reclaim_rate: vec![0.0; horizon],
                reservoir_cap: 10.0,
                reservoir_initial: None,
                energy_intensity: 0.0,
                pump: pump_off(),
            },
            treatment: vec![],
            tanks: vec![],
            profiles: Profiles {
                power_demand: vec![load; horizon],
                renewables: vec![0.0; horizon],
                water_demand: vec![0.0; horizon],
            },
            // Export priced below the generator's marginal cost so selling
            // surplus is never profitable and hand values stay two-sided.
            prices: PriceSeries {
                import: vec![0.10; horizon],
                export: vec![0.02; horizon],
            },
        })
        .unwrap()
    }

    /// A small combined scenario with real water units, sized so the T=2
    /// build stays within the brute-force binary budget when the pump
    /// curves are single segments.
    fn combined_scenario(horizon: usize) -> Scenario {
        let mut scenario = energy_only(horizon, 150.0);
        scenario.treatment = vec![TreatmentUnitSpec {
            flow_min: 0.5,
            flow_max: 2.5,
            energy_intensity: 0.154,
            pump: PumpQuadratic {
                c1: 0.0,
                c2: 0.1,
                c3: 0.0,
            },
        }];
        scenario.tanks = vec![StorageTankSpec {
            inflow_min: 0.5,
            inflow_max: 2.5,
            outflow_max: 2.5,
            level_min: 0.0,
            level_max: 27.0,
            level_initial: Some(13.0),
            pump: PumpQuadratic {
                c1: 0.0,
                c2: 0.05,
                c3: 0.0,
            },
        }];
        scenario.wastewater = WastewaterSpec {
            flow_min: 0.5,
            flow_max: 2.5,
            reclaim_rate: vec![1.0; horizon],
            reservoir_cap: 37.0,
            reservoir_initial: Some(10.0),
            energy_intensity: 52.0,
            pump: PumpQuadratic {
                c1: 0.0,
                c2: 0.2,
                c3: 0.0,
            },
        };
        scenario.profiles.water_demand = vec![2.0; horizon];
        validate_scenario(scenario).unwrap()
    }

    fn fitted(scenario: &Scenario, pieces: usize) -> ScenarioCurves {
        mwm::fit_scenario_curves(scenario, pieces, FitMethod::PartitionHeuristic, 25).unwrap()
    }

    #[test]
    fn self_generation_beats_import_hand_value() {
        // Load 200 kW for one hour: generating costs 6 + 0.04·200 = 14 $,
        // importing costs 0.10·200 = 20 $.
        let scenario = energy_only(1, 200.0);
        let curves = fitted(&scenario, 2);
        let sol = solve_central(&scenario, &curves, &Tolerances::default()).unwrap();
        assert!((sol.cost - 14.0).abs() <= 1e-9, "cost {}", sol.cost);
        assert!(sol.water_energy_kwh.abs() <= 1e-9);
    }

    #[test]
    fn zero_load_costs_nothing() {
        let scenario = energy_only(2, 0.0);
        let curves = fitted(&scenario, 2);
        let sol = solve_central(&scenario, &curves, &Tolerances::default()).unwrap();
        assert!(sol.cost.abs() <= 1e-9);
        for t in 0..2 {
            assert!(sol.mem.gen_power[0][t].abs() <= 1e-9);
            assert!(sol.mem.grid_import[t].abs() <= 1e-9);
        }
    }

    #[test]
    fn islanded_overload_is_infeasible() {
        let mut scenario = energy_only(1, 500.0);
        scenario.grid.tie_limit = 0.0;
        let scenario = validate_scenario(scenario).unwrap();
        let curves = fitted(&scenario, 2);
        match solve_central(&scenario, &curves, &Tolerances::default()) {
            Err(CentralError::Solve {
                status: SolveStatus::Infeasible,
            }) => {}
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn matches_brute_force_on_a_small_combined_model() {
        let scenario = combined_scenario(2);
        let curves = fitted(&scenario, 1);
        let (model, _, _) = build_central(&scenario, &curves).unwrap();
        assert!(model.num_binaries() <= 14, "binaries {}", model.num_binaries());
        let tol = Tolerances::default();
        let fast = solve_milp(&model, &tol);
        let slow = brute_force_milp(&model, &tol, 14).unwrap();
        assert_eq!(fast.status, SolveStatus::Optimal);
        assert!((fast.objective - slow.objective).abs() <= 1e-6);
    }

    #[test]
    fn dispatches_are_consistent_with_the_objective() {
        let scenario = combined_scenario(2);
        let curves = fitted(&scenario, 2);
        let sol = solve_central(&scenario, &curves, &Tolerances::default()).unwrap();
        // The reported cost is exactly the energy-side cost of the MEM
        // dispatch, and the water series the balance used is the water
        // side's own draw.
        assert!((sol.mem.total_cost() - sol.cost).abs() <= 1e-6);
        let recomputed = mwm::water_power(&sol.water, &scenario, &curves).unwrap();
        for (t, want) in sol.mem.water_power.iter().enumerate() {
            assert!((recomputed[t] - want).abs() <= 1e-6);
            assert!((sol.water.water_power[t] - want).abs() <= 1e-9);
        }
        assert!(
            (sol.water_energy_kwh
                - scenario.time.step_hours * sol.water.consumption_sum())
            .abs()
                <= 1e-9
        );
    }

    #[test]
    fn doubling_import_prices_weakly_increases_cost() {
        let scenario = combined_scenario(2);
        let curves = fitted(&scenario, 2);
        let base = solve_central(&scenario, &curves, &Tolerances::default()).unwrap();
        let mut pricier = scenario.clone();
        for p in &mut pricier.prices.import {
            *p *= 2.0;
        }
        let pricier = validate_scenario(pricier).unwrap();
        let bumped = solve_central(&pricier, &curves, &Tolerances::default()).unwrap();
        assert!(bumped.cost >= base.cost - 1e-9);
    }

    #[test]
    fn removing_the_tank_weakly_increases_cost() {
        let scenario = combined_scenario(2);
        let curves = fitted(&scenario, 2);
        let with_tank = solve_central(&scenario, &curves, &Tolerances::default()).unwrap();
        let mut without = scenario.clone();
        without.tanks.clear();
        let without = validate_scenario(without).unwrap();
        let curves2 = fitted(&without, 2);
        let stripped = solve_central(&without, &curves2, &Tolerances::default()).unwrap();
        assert!(stripped.cost >= with_tank.cost - 1e-9);
    }

    #[test]
    fn dropping_any_constraint_family_never_raises_the_optimum() {
        let scenario = combined_scenario(1);
        let curves = fitted(&scenario, 1);
        let (model, _, _) = build_central(&scenario, &curves).unwrap();
        let tol = Tolerances::default();
        let full = solve_milp(&model, &tol);
        assert_eq!(full.status, SolveStatus::Optimal);
        let mut tags: Vec<String> = model.constraints.iter().map(|c| c.tag.clone()).collect();
        tags.sort();
        tags.dedup();
        for tag in tags {
            // Equality families define quantities (levels, linked powers);
            // dropping one leaves the definition dangling rather than
            // relaxing the feasible set, so only inequality families are
            // probed.
            let all_eq = model
                .constraints
                .iter()
                .filter(|c| c.tag == tag)
                .all(|c| c.sense == crate::model::Sense::Eq);
            if all_eq {
                continue;
            }
            let mut relaxed = model.clone();
            relaxed.constraints.retain(|c| c.tag != tag);
            let res = solve_milp(&relaxed, &tol);
            assert_eq!(res.status, SolveStatus::Optimal, "tag {tag}");
            assert!(
                res.objective <= full.objective + 1e-9,
                "dropping {tag} raised the optimum: {} > {}",
                res.objective,
                full.objective
            );
        }
    }
}
