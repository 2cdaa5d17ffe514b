//! Community scenario data: the time grid, every energy- and water-side
//! component, demand/renewable/price profiles, and the validation pass that
//! turns a parsed record into a trustworthy input.
//!
//! A scenario file is a single JSON document with top-level keys `time`,
//! `generators`, `storage`, `grid`, `wastewater`, `treatment`, `tanks`,
//! `profiles`, and `prices`; unknown keys anywhere are rejected. Validated
//! scenarios are immutable and safe to share read-only across threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pwl::PumpQuadratic;

/// Dispatch horizon: `horizon_steps` intervals of `step_hours` each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub horizon_steps: usize,
    pub step_hours: f64,
}

/// A dispatchable generator: fixed hourly no-load cost while committed,
/// linear marginal cost, and output limits that bind only when committed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    /// $/h while the unit is on.
    pub no_load_cost: f64,
    /// $/kWh of output.
    pub marginal_cost: f64,
    /// kW floor when committed.
    pub p_min: f64,
    /// kW ceiling when committed.
    pub p_max: f64,
}

/// A battery energy storage unit. `level_max` is interpreted as kWh of
/// stored energy (capacity figures quoted in kW in some sources are taken
/// as kWh here). An omitted `level_initial` defaults to 50% of `level_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyStorageSpec {
    /// kW cap on both charge and discharge rate.
    pub rated_power: f64,
    /// Charge efficiency in (0, 1].
    pub eff_charge: f64,
    /// Discharge efficiency in (0, 1].
    pub eff_discharge: f64,
    /// kWh floor of the stored level.
    pub level_min: f64,
    /// kWh ceiling of the stored level.
    pub level_max: f64,
    /// kWh at the start of the horizon; defaults to half of `level_max`.
    #[serde(default)]
    pub level_initial: Option<f64>,
}

impl EnergyStorageSpec {
    /// Starting level with the 50%-of-capacity default applied.
    pub fn initial_level(&self) -> f64 {
        self.level_initial.unwrap_or(0.5 * self.level_max)
    }
}

/// Main-grid interconnection. A `tie_limit` of zero means the community is
/// islanded; import/export prices live in [`PriceSeries`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridTieSpec {
    /// kW thermal limit of the tie line in both directions.
    pub tie_limit: f64,
}

/// Per-interval grid prices in $/kWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceSeries {
    pub import: Vec<f64>,
    pub export: Vec<f64>,
}

/// The wastewater treatment plant: its inflow is the reclaimed sewage
/// series, buffered in an untreated-water reservoir, and its treated
/// outflow counts toward the water balance. An omitted `reservoir_initial`
/// defaults to 50% of `reservoir_cap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WastewaterSpec {
    /// m³/h treated-outflow floor when running.
    pub flow_min: f64,
    /// m³/h treated-outflow ceiling.
    pub flow_max: f64,
    /// m³/h of reclaimed water arriving each interval.
    pub reclaim_rate: Vec<f64>,
    /// m³ capacity of the untreated-water reservoir.
    pub reservoir_cap: f64,
    /// m³ in the reservoir at the start; defaults to half the capacity.
    #[serde(default)]
    pub reservoir_initial: Option<f64>,
    /// kWh consumed per m³ treated.
    pub energy_intensity: f64,
    pub pump: PumpQuadratic,
}

impl WastewaterSpec {
    /// Starting reservoir level with the 50%-of-capacity default applied.
    pub fn initial_level(&self) -> f64 {
        self.reservoir_initial.unwrap_or(0.5 * self.reservoir_cap)
    }
}

/// A source-water treatment unit (groundwater, desalination, …): an
/// unlimited source behind a treatment process with flow limits and a
/// linear energy intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreatmentUnitSpec {
    /// m³/h floor when running.
    pub flow_min: f64,
    /// m³/h ceiling.
    pub flow_max: f64,
    /// kWh consumed per m³ treated.
    pub energy_intensity: f64,
    pub pump: PumpQuadratic,
}

/// A clean-water storage tank. An omitted `level_initial` defaults to 50%
/// of `level_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageTankSpec {
    /// m³/h inflow floor when charging.
    pub inflow_min: f64,
    /// m³/h inflow ceiling.
    pub inflow_max: f64,
    /// m³/h outflow ceiling.
    pub outflow_max: f64,
    /// m³ level floor.
    pub level_min: f64,
    /// m³ level ceiling.
    pub level_max: f64,
    /// m³ at the start of the horizon; defaults to half of `level_max`.
    #[serde(default)]
    pub level_initial: Option<f64>,
    pub pump: PumpQuadratic,
}

impl StorageTankSpec {
    /// Starting level with the 50%-of-capacity default applied.
    pub fn initial_level(&self) -> f64 {
        self.level_initial.unwrap_or(0.5 * self.level_max)
    }
}

/// Exogenous per-interval series: electric demand, renewable output, and
/// potable-water demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profiles {
    /// kW electric demand per interval.
    pub power_demand: Vec<f64>,
    /// kW renewable generation per interval.
    pub renewables: Vec<f64>,
    /// m³/h potable-water demand per interval.
    pub water_demand: Vec<f64>,
}

/// A complete community description. Construct by parsing JSON or building
/// the fields directly, then pass through [`validate_scenario`] before
/// handing it to any model builder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub time: TimeGrid,
    pub generators: Vec<GeneratorSpec>,
    pub storage: Vec<EnergyStorageSpec>,
    pub grid: GridTieSpec,
    pub wastewater: WastewaterSpec,
    pub treatment: Vec<TreatmentUnitSpec>,
    pub tanks: Vec<StorageTankSpec>,
    pub profiles: Profiles,
    pub prices: PriceSeries,
}

/// One validation failure: which field broke which rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{}", render_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("round-trip efficiency {0} outside (0, 1]")]
    EfficiencyOutOfRange(f64),
    #[error("scenario JSON: {0}")]
    Json(#[from] serde_json::Error),
}

fn render_violations(violations: &[Violation]) -> String {
    let mut s = format!("scenario validation failed ({} violations):", violations.len());
    for v in violations {
        s.push_str(&format!("\n  {}: {}", v.field, v.rule));
    }
    s
}

impl Scenario {
    /// Parses a scenario from its JSON document form. The result is
    /// unvalidated; follow with [`validate_scenario`].
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Serializes to the same JSON document form `from_json` accepts.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Horizon length in steps.
    pub fn horizon(&self) -> usize {
        self.time.horizon_steps
    }

    /// True when the community has no main-grid connection.
    pub fn is_islanded(&self) -> bool {
        self.grid.tie_limit == 0.0
    }

    /// A copy shortened to the first `steps` intervals: every per-interval
    /// series is cut to that length, everything else kept. Useful for
    /// desk-sized cross-checks against exhaustive solvers. `steps` must be
    /// between 1 and the current horizon.
    pub fn truncated(&self, steps: usize) -> Scenario {
        assert!(
            steps >= 1 && steps <= self.horizon(),
            "truncation length {steps} outside 1..={}",
            self.horizon()
        );
        let cut = |series: &[f64]| series[..steps].to_vec();
        let mut out = self.clone();
        out.time.horizon_steps = steps;
        out.wastewater.reclaim_rate = cut(&self.wastewater.reclaim_rate);
        out.profiles.power_demand = cut(&self.profiles.power_demand);
        out.profiles.renewables = cut(&self.profiles.renewables);
        out.profiles.water_demand = cut(&self.profiles.water_demand);
        out.prices.import = cut(&self.prices.import);
        out.prices.export = cut(&self.prices.export);
        out
    }

    /// Physical ceiling of the water system's total electrical draw, from
    /// every unit at maximum flow plus each pump's peak over its flow
    /// range. Convexity puts each pump's peak at a range endpoint.
    pub fn max_water_power(&self) -> f64 {
        let pump_peak = |p: &PumpQuadratic, hi: f64| p.power(0.0).max(p.power(hi));
        let mut total = self.wastewater.energy_intensity * self.wastewater.flow_max
            + pump_peak(&self.wastewater.pump, self.wastewater.flow_max);
        for w in &self.treatment {
            total += w.energy_intensity * w.flow_max + pump_peak(&w.pump, w.flow_max);
        }
        for k in &self.tanks {
            total += pump_peak(&k.pump, k.outflow_max.max(k.inflow_max));
        }
        total
    }
}

struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn require(&mut self, ok: bool, field: &str, rule: impl Into<String>) {
        if !ok {
            self.violations.push(Violation {
                field: field.to_string(),
                rule: rule.into(),
            });
        }
    }

    fn series(&mut self, field: &str, series: &[f64], horizon: usize, nonnegative: bool) {
        self.require(
            series.len() == horizon,
            field,
            format!("series length {} must equal horizon {horizon}", series.len()),
        );
        self.require(
            series.iter().all(|v| v.is_finite()),
            field,
            "series values must be finite",
        );
        if nonnegative {
            self.require(
                series.iter().all(|&v| v >= 0.0),
                field,
                "series values must be nonnegative",
            );
        }
    }

    fn ordered_range(&mut self, field: &str, lo: f64, hi: f64) {
        self.require(
            lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi,
            field,
            format!("bounds must satisfy 0 <= {lo} <= {hi}"),
        );
    }

    fn pump(&mut self, field: &str, pump: &PumpQuadratic) {
        self.require(
            pump.c1.is_finite() && pump.c2.is_finite() && pump.c3.is_finite(),
            field,
            "pump coefficients must be finite",
        );
        self.require(pump.c1 >= 0.0, field, "pump curve must be convex (c1 >= 0)");
    }

    fn initial_level(&mut self, field: &str, level: f64, lo: f64, hi: f64) {
        self.require(
            level.is_finite() && lo <= level && level <= hi,
            field,
            format!("initial level {level} must lie in [{lo}, {hi}]"),
        );
    }
}

/// Checks every structural invariant of a parsed scenario and fills the
/// 50%-of-capacity defaults for omitted initial storage levels. Returns the
/// scenario with defaults made explicit, so validating an already-validated
/// scenario changes nothing. Non-fatal concerns (an unservable community, a
/// reclaim inflow no treatment rate can keep up with) are logged as
/// warnings, not errors; [`advisories`] lists them programmatically.
pub fn validate_scenario(raw: Scenario) -> Result<Scenario, ScenarioError> {
    let mut s = raw;
    let mut c = Checker {
        violations: Vec::new(),
    };
    let horizon = s.time.horizon_steps;
    c.require(horizon >= 1, "time.horizon_steps", "horizon must be at least 1");
    c.require(
        s.time.step_hours.is_finite() && s.time.step_hours > 0.0,
        "time.step_hours",
        "step length must be positive",
    );

    for (g, gen) in s.generators.iter().enumerate() {
        let field = format!("generators[{g}]");
        c.ordered_range(&format!("{field}.p_min/p_max"), gen.p_min, gen.p_max);
        c.require(
            gen.no_load_cost.is_finite() && gen.no_load_cost >= 0.0,
            &format!("{field}.no_load_cost"),
            "cost must be nonnegative",
        );
        c.require(
            gen.marginal_cost.is_finite() && gen.marginal_cost >= 0.0,
            &format!("{field}.marginal_cost"),
            "cost must be nonnegative",
        );
    }

    for (b, es) in s.storage.iter_mut().enumerate() {
        let field = format!("storage[{b}]");
        c.require(
            es.rated_power.is_finite() && es.rated_power >= 0.0,
            &format!("{field}.rated_power"),
            "rated power must be nonnegative",
        );
        for (name, eff) in [("eff_charge", es.eff_charge), ("eff_discharge", es.eff_discharge)] {
            c.require(
                eff.is_finite() && 0.0 < eff && eff <= 1.0,
                &format!("{field}.{name}"),
                "efficiency must lie in (0, 1]",
            );
        }
        c.ordered_range(&format!("{field}.level_min/level_max"), es.level_min, es.level_max);
        let init = es.initial_level();
        c.initial_level(&format!("{field}.level_initial"), init, es.level_min, es.level_max);
        es.level_initial = Some(init);
    }

    c.require(
        s.grid.tie_limit.is_finite() && s.grid.tie_limit >= 0.0,
        "grid.tie_limit",
        "tie limit must be nonnegative",
    );
    c.series("prices.import", &s.prices.import, horizon, true);
    c.series("prices.export", &s.prices.export, horizon, true);

    {
        let ww = &mut s.wastewater;
        c.ordered_range("wastewater.flow_min/flow_max", ww.flow_min, ww.flow_max);
        c.require(
            ww.reservoir_cap.is_finite() && ww.reservoir_cap >= 0.0,
            "wastewater.reservoir_cap",
            "capacity must be nonnegative",
        );
        c.require(
            ww.energy_intensity.is_finite() && ww.energy_intensity >= 0.0,
            "wastewater.energy_intensity",
            "intensity must be nonnegative",
        );
        c.series("wastewater.reclaim_rate", &ww.reclaim_rate, horizon, true);
        c.pump("wastewater.pump", &ww.pump);
        let init = ww.initial_level();
        c.initial_level("wastewater.reservoir_initial", init, 0.0, ww.reservoir_cap);
        ww.reservoir_initial = Some(init);
    }

    for (w, wt) in s.treatment.iter().enumerate() {
        let field = format!("treatment[{w}]");
        c.ordered_range(&format!("{field}.flow_min/flow_max"), wt.flow_min, wt.flow_max);
        c.require(
            wt.energy_intensity.is_finite() && wt.energy_intensity >= 0.0,
            &format!("{field}.energy_intensity"),
            "intensity must be nonnegative",
        );
        c.pump(&format!("{field}.pump"), &wt.pump);
    }

    for (k, st) in s.tanks.iter_mut().enumerate() {
        let field = format!("tanks[{k}]");
        c.ordered_range(&format!("{field}.inflow_min/inflow_max"), st.inflow_min, st.inflow_max);
        c.require(
            st.outflow_max.is_finite() && st.outflow_max >= 0.0,
            &format!("{field}.outflow_max"),
            "outflow ceiling must be nonnegative",
        );
        c.ordered_range(&format!("{field}.level_min/level_max"), st.level_min, st.level_max);
        c.pump(&format!("{field}.pump"), &st.pump);
        let init = st.initial_level();
        c.initial_level(&format!("{field}.level_initial"), init, st.level_min, st.level_max);
        st.level_initial = Some(init);
    }

    c.series("profiles.power_demand", &s.profiles.power_demand, horizon, true);
    c.series("profiles.renewables", &s.profiles.renewables, horizon, true);
    c.series("profiles.water_demand", &s.profiles.water_demand, horizon, true);

    if !c.violations.is_empty() {
        return Err(ScenarioError::Invalid(c.violations));
    }
    for note in advisories(&s) {
        log::warn!("{note}");
    }
    Ok(s)
}

/// Non-fatal structural concerns worth surfacing: conditions that do not
/// make the record invalid but usually make the scenario infeasible or
/// unintended.
pub fn advisories(s: &Scenario) -> Vec<String> {
    let mut notes = Vec::new();
    let gen_cap: f64 = s.generators.iter().map(|g| g.p_max).sum();
    let any_load = s.profiles.power_demand.iter().any(|&v| v > 0.0);
    if s.grid.tie_limit == 0.0 && gen_cap == 0.0 && any_load {
        notes.push(
            "unservable scenario: no tie line and no generation capacity against positive load"
                .to_string(),
        );
    }
    let total_reclaim: f64 = s.wastewater.reclaim_rate.iter().sum();
    let max_treated = s.wastewater.flow_max * s.wastewater.reclaim_rate.len() as f64;
    if total_reclaim > max_treated {
        notes.push(format!(
            "wastewater reclaim inflow {total_reclaim} m3 exceeds maximum treatable volume \
             {max_treated} m3 over the horizon; the reservoir will overflow"
        ));
    }
    notes
}

/// Splits a round-trip storage efficiency equally between the charge and
/// discharge directions: each becomes the square root of the round trip.
pub fn derive_directional_efficiencies(round_trip: f64) -> Result<(f64, f64), ScenarioError> {
    if !round_trip.is_finite() || round_trip <= 0.0 || round_trip > 1.0 {
        return Err(ScenarioError::EfficiencyOutOfRange(round_trip));
    }
    let each = round_trip.sqrt();
    Ok((each, each))
}

/// Net electric load at step `t`: demand minus renewables plus the water
/// system's draw. May be negative under renewable surplus.
pub fn net_load(power_demand: &[f64], renewables: &[f64], water_power: &[f64], t: usize) -> f64 {
    power_demand[t] - renewables[t] + water_power[t]
}
