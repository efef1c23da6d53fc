//! Experiment drivers: baseline, single-route removal, deletion sweeps,
//! one-factor-at-a-time checks, weight perturbation, distribution
//! comparison and per-dimension regressions.

mod ofat;
mod perturb;
mod regress;
mod sweep;
mod validate;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use ofat::{run_ofat, OfatReport, OfatScenario};
pub use perturb::{
    quantile, run_perturbation, write_perturbation_csv, IqrGap, PerturbConfig, PerturbMode, PerturbSample,
    PerturbationReport,
};
pub use regress::{regress_dimensions, removal_effects, DimensionRegression, RegressionTable};
pub use sweep::{removal_count, run_sweep, write_sweep_csv, SweepCurve, SweepMode, SweepPoint};
pub use validate::{trip_times, validate_distributions, DistributionComparison, KdeCurves, ValidationReport};

use crate::config::SimConfig;
use crate::data::{Dataset, Group, SensitivityProfile};
use crate::engine::{run_simulation, SimResult};
use crate::error::Error;
use crate::network::{build_network, Network};
use crate::planner::{plan_all, replan_affected, TripPlan};

/// Network, plans and simulation for the unmodified dataset.
#[derive(Debug, Clone)]
pub struct Baseline {
    pub network: Network,
    pub plans: Vec<TripPlan>,
    pub sim: SimResult,
}

pub fn run_baseline(dataset: &Dataset, profile: &SensitivityProfile, config: &SimConfig) -> Result<Baseline, Error> {
    config.validate()?;
    let network = build_network(dataset, config);
    let plans = plan_all(&network, dataset.trips(), profile, config)?;
    let sim = run_simulation(&network, dataset.trips(), &plans, profile, config)?;
    Ok(Baseline { network, plans, sim })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario_id: String,
    pub removed_routes: Vec<String>,
    pub mean_d: BTreeMap<Group, f64>,
    pub overall_mean_d: f64,
    /// Mean D over completed trips minus the baseline's.
    pub delta_d: f64,
    pub delta_d_by_group: BTreeMap<Group, f64>,
    pub failure_rate: f64,
    pub mean_waiting_min: f64,
    pub mean_load_ratio: f64,
    /// Trips whose plan had to change.
    pub affected_trips: usize,
}

impl ScenarioResult {
    pub fn from_sim(scenario_id: &str, removed: Vec<String>, sim: &SimResult, baseline: &SimResult, affected: usize) -> Self {
        let a = &sim.aggregates;
        let b = &baseline.aggregates;
        let mean_d = Group::ALL.iter().map(|&g| (g, a.group(g).mean_d)).collect();
        let delta_d_by_group = Group::ALL.iter().map(|&g| (g, a.group(g).mean_d - b.group(g).mean_d)).collect();
        ScenarioResult {
            scenario_id: scenario_id.to_string(),
            removed_routes: removed,
            mean_d,
            overall_mean_d: a.overall.mean_d,
            delta_d: a.overall.mean_d - b.overall.mean_d,
            delta_d_by_group,
            failure_rate: a.overall.failure_rate,
            mean_waiting_min: a.overall.mean_waiting_min,
            mean_load_ratio: a.system_mean_load_ratio,
            affected_trips: affected,
        }
    }
}

/// Outcome of removing routes from the baseline network.
#[derive(Debug, Clone)]
pub struct RemovalRun {
    pub network: Network,
    pub plans: Vec<TripPlan>,
    pub sim: SimResult,
    pub result: ScenarioResult,
}

/// Removes `route_id`, replans the trips that used it and re-simulates.
pub fn run_single_removal(
    dataset: &Dataset,
    baseline: &Baseline,
    route_id: &str,
    profile: &SensitivityProfile,
    config: &SimConfig,
) -> Result<RemovalRun, Error> {
    let network = baseline.network.remove_route(route_id)?;
    let re = replan_affected(&network, &baseline.plans, dataset.trips(), profile, config)?;
    let sim = run_simulation(&network, dataset.trips(), &re.plans, profile, config)?;
    let result = ScenarioResult::from_sim(&format!("remove:{route_id}"), vec![route_id.to_string()], &sim, &baseline.sim, re.affected.len());
    Ok(RemovalRun { network, plans: re.plans, sim, result })
}

/// Route ids of the active routes, in route-table order.
pub fn active_route_ids(network: &Network) -> Vec<String> {
    network.active_routes().map(|r| network.route(r).route_id.clone()).collect()
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Runtime(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| crate::error::DataError::io(path, e).into())
}

#[cfg(test)]
mod tests;
