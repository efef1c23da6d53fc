use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Baseline;
use crate::config::SimConfig;
use crate::data::{write_csv, Dataset, Group, SensitivityProfile};
use crate::engine::run_simulation;
use crate::error::{DataError, Error};
use crate::features::{compute_route_features, score_routes, Dimension, Feature};
use crate::network::Network;
use crate::planner::{replan_affected, TripPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    /// Rank once on the baseline network and remove in that order.
    #[default]
    Static,
    /// Re-rank the remaining routes after every removal.
    Dynamic,
}

impl std::str::FromStr for SweepMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "static" => Ok(SweepMode::Static),
            "dynamic" => Ok(SweepMode::Dynamic),
            _ => Err(format!("unknown sweep mode {s:?} (expected static or dynamic)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub step: usize,
    pub removed_route: Option<String>,
    pub overall_d: f64,
    pub d_by_group: [f64; 4],
    pub failure_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub dimension: Dimension,
    pub mode: SweepMode,
    pub points: Vec<SweepPoint>,
}

impl SweepCurve {
    /// Change in overall mean D at each removal step (index 0 is step 1).
    pub fn step_deltas(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| w[1].overall_d - w[0].overall_d).collect()
    }
}

/// Number of removals in a sweep over `routes` routes: sixty per cent,
/// rounded up.
pub fn removal_count(routes: usize) -> usize {
    (6 * routes).div_ceil(10)
}

fn lowest_scoring(
    network: &Network,
    plans: &[TripPlan],
    dataset: &Dataset,
    dimension: Dimension,
    weights: &[(Feature, f64)],
    config: &SimConfig,
) -> Vec<String> {
    let table = compute_route_features(network, plans, dataset.pois(), config);
    score_routes(&table.routes, dimension, weights).into_iter().map(|s| s.route_id).collect()
}

/// Removes routes in ascending feature-score order until sixty per cent
/// are gone, replanning affected trips and re-simulating after each step.
pub fn run_sweep(
    dataset: &Dataset,
    baseline: &Baseline,
    dimension: Dimension,
    weights: &[(Feature, f64)],
    mode: SweepMode,
    profile: &SensitivityProfile,
    config: &SimConfig,
) -> Result<SweepCurve, Error> {
    let n_remove = removal_count(baseline.network.active_route_count());
    let order = lowest_scoring(&baseline.network, &baseline.plans, dataset, dimension, weights, config);

    let point = |step: usize, removed: Option<String>, agg: &crate::engine::AggregateReport| SweepPoint {
        step,
        removed_route: removed,
        overall_d: agg.overall.mean_d,
        d_by_group: Group::ALL.map(|g| agg.group(g).mean_d),
        failure_rate: agg.overall.failure_rate,
    };
    let mut points = vec![point(0, None, &baseline.sim.aggregates)];

    // Planning is a chain, so it runs in sequence; simulations of a batch
    // of steps run in parallel. Batching bounds how many plan sets are
    // held at once.
    let batch = rayon::current_num_threads().max(1);
    let mut pending: Vec<(Option<String>, Network, Vec<TripPlan>)> = Vec::with_capacity(batch);
    let (mut net, mut plans) = (baseline.network.clone(), baseline.plans.clone());
    for step in 0..n_remove {
        let next = match mode {
            SweepMode::Static => order[step].clone(),
            SweepMode::Dynamic => lowest_scoring(&net, &plans, dataset, dimension, weights, config).remove(0),
        };
        log::info!("{dimension} sweep step {}: removing {next}", step + 1);
        net = net.remove_route(&next)?;
        plans = replan_affected(&net, &plans, dataset.trips(), profile, config)?.plans;
        pending.push((Some(next), net.clone(), plans.clone()));
        if pending.len() == batch || step + 1 == n_remove {
            let sims: Vec<Result<_, Error>> = pending
                .par_iter()
                .map(|(_, n, p)| run_simulation(n, dataset.trips(), p, profile, config))
                .collect();
            for (sim, (removed, _, _)) in sims.into_iter().zip(pending.drain(..)) {
                let step = points.len();
                points.push(point(step, removed, &sim?.aggregates));
            }
        }
    }
    Ok(SweepCurve { dimension, mode, points })
}

#[derive(Serialize)]
struct SweepRow<'a> {
    dimension: Dimension,
    step: usize,
    removed_route: &'a str,
    #[serde(rename = "overall_D")]
    overall_d: f64,
    #[serde(rename = "D_general")]
    d_general: f64,
    #[serde(rename = "D_student")]
    d_student: f64,
    #[serde(rename = "D_elderly")]
    d_elderly: f64,
    #[serde(rename = "D_disabled")]
    d_disabled: f64,
    failure_rate: f64,
}

pub fn write_sweep_csv(path: &Path, curves: &[SweepCurve]) -> Result<(), DataError> {
    let rows: Vec<SweepRow> = curves
        .iter()
        .flat_map(|c| {
            c.points.iter().map(move |p| SweepRow {
                dimension: c.dimension,
                step: p.step,
                removed_route: p.removed_route.as_deref().unwrap_or(""),
                overall_d: p.overall_d,
                d_general: p.d_by_group[0],
                d_student: p.d_by_group[1],
                d_elderly: p.d_by_group[2],
                d_disabled: p.d_by_group[3],
                failure_rate: p.failure_rate,
            })
        })
        .collect();
    write_csv(path, &rows)
}
