//! Three ready-made synthetic communities for day-ahead studies.
//!
//! Each is a 24-hour, 1-hour-step scenario built from published-style
//! component ratings (generator cost curves, battery rating, treatment
//! energy intensities, flow and reservoir limits). The demand, renewable,
//! price, and reclaimed-water profiles are hand-drawn synthetic shapes —
//! plausible daily curves, not measurements of any real community.
//!
//! - [`suburban`]: grid-tied, one natural-gas generator, groundwater
//!   treatment. The reference system for desk checks and examples.
//! - [`coastal`]: grid-tied, one diesel generator, desalination.
//! - [`islanded`]: no main-grid tie, natural-gas plus diesel generators,
//!   desalination.
//!
//! All three share the same wastewater plant, battery (88.3% round-trip
//! efficiency split evenly between directions), and storage-tank ratings.
//! Battery and tank floors are set equal to their initial levels, so
//! storage does intraday cycling only and never mines its starting charge
//! for free energy. Initial reservoir levels are chosen so the day's
//! reclaimed inflow cannot fit unprocessed: wastewater treatment must run
//! for some hours, and choosing *which* hours is part of the dispatch
//! problem.
//!
//! The same scenarios ship as JSON files under `scenarios/` in the
//! repository root; a test pins the files to these builders field for
//! field.

use crate::pwl::PumpQuadratic;
use crate::scenario::{
    derive_directional_efficiencies, validate_scenario, EnergyStorageSpec, GeneratorSpec,
    GridTieSpec, PriceSeries, Profiles, Scenario, StorageTankSpec, TimeGrid, TreatmentUnitSpec,
    WastewaterSpec,
};

/// Hours in every bundled scenario.
pub const HORIZON: usize = 24;

/// Natural-gas generator: cheap energy, moderate no-load cost.
fn natural_gas() -> GeneratorSpec {
    GeneratorSpec {
        no_load_cost: 6.00,
        marginal_cost: 0.04,
        p_min: 40.0,
        p_max: 400.0,
    }
}

/// Diesel generator: expensive energy, runs only at price spikes.
fn diesel() -> GeneratorSpec {
    GeneratorSpec {
        no_load_cost: 5.00,
        marginal_cost: 0.24,
        p_min: 50.0,
        p_max: 500.0,
    }
}

/// The shared battery: 550 kW / 2750 kWh, 88.3% round trip split evenly.
/// The floor equals the initial level, so the plan can only cycle energy
/// it first banks.
fn battery() -> EnergyStorageSpec {
    let (eff_charge, eff_discharge) =
        derive_directional_efficiencies(0.883).expect("in range");
    EnergyStorageSpec {
        rated_power: 550.0,
        eff_charge,
        eff_discharge,
        level_min: 550.0,
        level_max: 2750.0,
        level_initial: Some(550.0),
    }
}

/// The shared wastewater plant. `reservoir_initial` is per-community: set
/// high enough that the day's reclaim inflow overflows the reservoir
/// unless some of it is treated.
fn wastewater(reclaim_rate: [f64; HORIZON], reservoir_initial: f64) -> WastewaterSpec {
    WastewaterSpec {
        flow_min: 0.681,
        flow_max: 2.725,
        reclaim_rate: reclaim_rate.to_vec(),
        reservoir_cap: 37.854,
        reservoir_initial: Some(reservoir_initial),
        energy_intensity: 52.0,
        pump: PumpQuadratic {
            c1: 0.9,
            c2: 2.2,
            c3: 0.8,
        },
    }
}

/// The shared clean-water tank; the floor equals the initial level.
fn storage_tank(level_initial: f64) -> StorageTankSpec {
    StorageTankSpec {
        inflow_min: 0.681,
        inflow_max: 2.725,
        outflow_max: 2.725,
        level_min: level_initial,
        level_max: 27.255,
        level_initial: Some(level_initial),
        pump: PumpQuadratic {
            c1: 0.5,
            c2: 1.1,
            c3: 0.3,
        },
    }
}

fn groundwater() -> TreatmentUnitSpec {
    TreatmentUnitSpec {
        flow_min: 0.681,
        flow_max: 2.725,
        energy_intensity: 0.154,
        pump: PumpQuadratic {
            c1: 0.6,
            c2: 1.4,
            c3: 0.4,
        },
    }
}

fn desalination() -> TreatmentUnitSpec {
    TreatmentUnitSpec {
        flow_min: 0.681,
        flow_max: 2.725,
        energy_intensity: 3.6,
        pump: PumpQuadratic {
            c1: 1.2,
            c2: 3.0,
            c3: 1.0,
        },
    }
}

/// Export is pegged at 80% of import in every community.
fn prices(import: [f64; HORIZON]) -> PriceSeries {
    PriceSeries {
        export: import.iter().map(|p| 0.8 * p).collect(),
        import: import.to_vec(),
    }
}

fn day() -> TimeGrid {
    TimeGrid {
        horizon_steps: HORIZON,
        step_hours: 1.0,
    }
}

/// Wholesale-style import price: cheap overnight, a ramp through the
/// afternoon, one scarcity spike in the early evening.
const IMPORT_PRICE: [f64; HORIZON] = [
    0.022, 0.020, 0.019, 0.018, 0.018, 0.021, 0.028, 0.042, 0.038, 0.034, 0.032, 0.035, 0.040,
    0.048, 0.060, 0.075, 0.110, 0.165, 0.240, 0.180, 0.095, 0.055, 0.035, 0.026,
];

/// Grid-tied suburb: one natural-gas generator, groundwater treatment,
/// and a 1200 kW tie line. Roughly seventy homes plus a few shops: a
/// morning shoulder and a tall early-evening peak.
pub fn suburban() -> Scenario {
    validate_scenario(Scenario {
        time: day(),
        generators: vec![natural_gas()],
        storage: vec![battery()],
        grid: GridTieSpec { tie_limit: 1200.0 },
        wastewater: wastewater(
            [
                0.75, 0.68, 0.60, 0.55, 0.52, 0.55, 0.75, 1.15, 1.50, 1.55, 1.40, 1.25, 1.15,
                1.10, 1.05, 1.00, 1.05, 1.20, 1.45, 1.60, 1.55, 1.35, 1.10, 0.90,
            ],
            20.0,
        ),
        treatment: vec![groundwater()],
        tanks: vec![storage_tank(4.0)],
        profiles: Profiles {
            power_demand: vec![
                168.0, 158.0, 150.0, 146.0, 144.0, 150.0, 178.0, 232.0, 262.0, 270.0, 266.0,
                258.0, 252.0, 248.0, 252.0, 268.0, 300.0, 352.0, 412.0, 448.0, 430.0, 380.0,
                300.0, 220.0,
            ],
            renewables: vec![
                0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 6.0, 30.0, 70.0, 110.0, 140.0, 158.0, 162.0,
                150.0, 126.0, 92.0, 54.0, 20.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0,
            ],
            water_demand: vec![
                0.90, 0.75, 0.65, 0.60, 0.65, 0.90, 1.70, 2.60, 2.90, 2.50, 2.10, 1.90, 1.80,
                1.70, 1.60, 1.70, 2.00, 2.50, 3.00, 3.20, 2.80, 2.20, 1.60, 1.10,
            ],
        },
        prices: prices(IMPORT_PRICE),
    })
    .expect("bundled suburban scenario is valid")
}

/// Grid-tied coastal town: one diesel generator, desalination, a 1400 kW
/// tie line, and steady wind through the night. Prices run a notch above
/// the suburban curve, with a spike that briefly beats diesel.
pub fn coastal() -> Scenario {
    validate_scenario(Scenario {
        time: day(),
        generators: vec![diesel()],
        storage: vec![battery()],
        grid: GridTieSpec { tie_limit: 1400.0 },
        wastewater: wastewater(
            [
                0.90, 0.80, 0.72, 0.66, 0.63, 0.66, 0.90, 1.40, 1.80, 1.85, 1.70, 1.50, 1.40,
                1.32, 1.26, 1.20, 1.26, 1.45, 1.75, 1.90, 1.85, 1.60, 1.32, 1.08,
            ],
            22.0,
        ),
        treatment: vec![desalination()],
        tanks: vec![storage_tank(4.0)],
        profiles: Profiles {
            power_demand: vec![
                232.0, 218.0, 208.0, 202.0, 200.0, 208.0, 246.0, 320.0, 362.0, 372.0, 366.0,
                356.0, 348.0, 342.0, 348.0, 370.0, 415.0, 488.0, 570.0, 618.0, 595.0, 525.0,
                415.0, 305.0,
            ],
            renewables: vec![
                55.0, 60.0, 64.0, 66.0, 62.0, 56.0, 48.0, 40.0, 42.0, 50.0, 62.0, 74.0, 80.0,
                78.0, 70.0, 60.0, 50.0, 44.0, 40.0, 42.0, 46.0, 50.0, 52.0, 54.0,
            ],
            water_demand: vec![
                1.10, 0.95, 0.80, 0.75, 0.80, 1.10, 2.10, 3.20, 3.60, 3.10, 2.60, 2.35, 2.20,
                2.10, 2.00, 2.10, 2.50, 3.10, 3.70, 3.90, 3.40, 2.70, 2.00, 1.35,
            ],
        },
        prices: prices([
            0.025, 0.022, 0.021, 0.020, 0.020, 0.024, 0.031, 0.047, 0.043, 0.038, 0.036, 0.039,
            0.045, 0.054, 0.067, 0.084, 0.123, 0.185, 0.269, 0.202, 0.106, 0.062, 0.039, 0.029,
        ]),
    })
    .expect("bundled coastal scenario is valid")
}

/// Remote island: no main-grid tie, so a natural-gas and a diesel
/// generator carry everything, with desalination for fresh water. A small
/// community — the generators dwarf the load, but the wastewater plant's
/// energy intensity makes water timing a real dispatch lever.
pub fn islanded() -> Scenario {
    validate_scenario(Scenario {
        time: day(),
        generators: vec![natural_gas(), diesel()],
        storage: vec![battery()],
        grid: GridTieSpec { tie_limit: 0.0 },
        wastewater: wastewater(
            [
                0.50, 0.46, 0.42, 0.40, 0.40, 0.42, 0.50, 0.65, 0.75, 0.78, 0.72, 0.65, 0.60,
                0.56, 0.54, 0.52, 0.55, 0.65, 0.76, 0.80, 0.78, 0.68, 0.58, 0.50,
            ],
            28.0,
        ),
        treatment: vec![desalination()],
        tanks: vec![storage_tank(3.0)],
        profiles: Profiles {
            power_demand: vec![
                26.0, 24.0, 23.0, 22.0, 22.0, 24.0, 30.0, 40.0, 46.0, 48.0, 47.0, 46.0, 45.0,
                44.0, 45.0, 48.0, 54.0, 63.0, 72.0, 75.0, 70.0, 58.0, 44.0, 33.0,
            ],
            renewables: vec![
                0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 8.0, 16.0, 24.0, 30.0, 34.0, 35.0, 32.0,
                27.0, 20.0, 12.0, 5.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0,
            ],
            water_demand: vec![
                0.65, 0.60, 0.60, 0.60, 0.60, 0.65, 0.80, 1.10, 1.25, 1.15, 1.00, 0.95, 0.90,
                0.85, 0.85, 0.90, 1.05, 1.25, 1.40, 1.45, 1.30, 1.05, 0.85, 0.70,
            ],
        },
        prices: prices(IMPORT_PRICE),
    })
    .expect("bundled islanded scenario is valid")
}

/// All bundled communities with their file-stem names, in the order they
/// are reported.
pub fn all() -> Vec<(&'static str, Scenario)> {
    vec![
        ("suburban", suburban()),
        ("coastal", coastal()),
        ("islanded", islanded()),
    ]
}

/// Fetches one bundled community by its [`all`] name.
pub fn by_name(name: &str) -> Option<Scenario> {
    match name {
        "suburban" => Some(suburban()),
        "coastal" => Some(coastal()),
        "islanded" => Some(islanded()),
        _ => None,
    }
}
