//! One-factor-at-a-time checks of group sensitivity.
//!
//! A single driver is changed on the dataset, the baseline plans are kept
//! (everything else held fixed) and the trips are simulated again. Group
//! responses are compared on a common trip mix: each group's weights are
//! applied to the pooled mean components of all completed trips before
//! and after the change, so differences between groups come only from
//! their weights and not from who happens to travel where. Elasticities
//! share one reference level (the pooled baseline mean D) so that their
//! order reflects the size of each group's response.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Baseline;
use crate::config::SimConfig;
use crate::data::{Dataset, Group, RouteDef, SensitivityProfile};
use crate::engine::{run_simulation, AggregateReport};
use crate::error::Error;
use crate::network::build_network;
use crate::stats::{tie_aware_spearman, RankTestResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OfatScenario {
    /// Multiply every headway.
    #[serde(rename = "WAIT+")]
    WaitPlus,
    /// Multiply every off-peak speed.
    #[serde(rename = "TIME+")]
    TimePlus,
    /// Multiply every vehicle capacity.
    #[serde(rename = "CROWD+")]
    CrowdPlus,
    /// Multiply the headways of routes that baseline plans board after a
    /// transfer.
    #[serde(rename = "XFER+")]
    XferPlus,
}

impl OfatScenario {
    pub const ALL: [OfatScenario; 4] =
        [OfatScenario::WaitPlus, OfatScenario::TimePlus, OfatScenario::CrowdPlus, OfatScenario::XferPlus];

    pub fn name(self) -> &'static str {
        match self {
            OfatScenario::WaitPlus => "WAIT+",
            OfatScenario::TimePlus => "TIME+",
            OfatScenario::CrowdPlus => "CROWD+",
            OfatScenario::XferPlus => "XFER+",
        }
    }

    /// Component whose weight predicts the group order: L, T, W or C.
    pub fn component(self) -> usize {
        match self {
            OfatScenario::TimePlus => 0,
            OfatScenario::XferPlus => 1,
            OfatScenario::WaitPlus => 2,
            OfatScenario::CrowdPlus => 3,
        }
    }

    /// Level of the underlying burden relative to baseline when the
    /// parameter is multiplied by `magnitude`: longer headways raise waits
    /// in proportion, lower speed or capacity raise time or crowding
    /// inversely.
    pub fn driver_level(self, magnitude: f64) -> f64 {
        match self {
            OfatScenario::WaitPlus | OfatScenario::XferPlus => magnitude,
            OfatScenario::TimePlus | OfatScenario::CrowdPlus => 1.0 / magnitude,
        }
    }
}

impl fmt::Display for OfatScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OfatScenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.trim().to_ascii_uppercase().replace("PLUS", "+").replace(['_', '-'], "");
        OfatScenario::ALL
            .into_iter()
            .find(|x| x.name() == norm || x.name().trim_end_matches('+') == norm)
            .ok_or_else(|| format!("unknown scenario {s:?} (expected WAIT+, TIME+, CROWD+ or XFER+)"))
    }
}

/// Baseline load ratio below which crowding responses are too weak to rank.
pub const LOW_CROWDING_LOAD_RATIO: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfatReport {
    pub scenario: OfatScenario,
    pub magnitude: f64,
    pub driver_base: f64,
    pub driver_new: f64,
    /// Routes whose parameter changed.
    pub changed_routes: Vec<String>,
    /// Pooled mean L, T, W, C over completed trips.
    pub pooled_components_base: [f64; 4],
    pub pooled_components_new: [f64; 4],
    pub reference_mean_d: f64,
    /// Group mean D on the pooled trip mix.
    pub reweighted_d_base: BTreeMap<Group, f64>,
    pub reweighted_d_new: BTreeMap<Group, f64>,
    /// `None` where undefined.
    pub elasticities: BTreeMap<Group, Option<f64>>,
    /// Weights of the predicting component, per group.
    pub expected_weights: BTreeMap<Group, f64>,
    pub rank_test: RankTestResult,
    /// Raw (not reweighted) group means, for inspection.
    pub mean_waiting_min_base: BTreeMap<Group, f64>,
    pub mean_waiting_min_new: BTreeMap<Group, f64>,
    pub mean_d_base: BTreeMap<Group, f64>,
    pub mean_d_new: BTreeMap<Group, f64>,
    pub baseline_load_ratio: f64,
    pub low_signal: bool,
    pub notes: Vec<String>,
}

fn apply(dataset: &Dataset, baseline: &Baseline, scenario: OfatScenario, m: f64) -> Result<(Dataset, Vec<String>), Error> {
    let mut transfer_routes = vec![false; dataset.routes().len()];
    for p in &baseline.plans {
        for leg in p.legs.iter().skip(1) {
            transfer_routes[leg.route] = true;
        }
    }
    let mut changed = Vec::new();
    let routes: Vec<RouteDef> = dataset
        .routes()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut r = r.clone();
            let hit = match scenario {
                OfatScenario::WaitPlus => {
                    r.headway_min *= m;
                    true
                }
                OfatScenario::TimePlus => {
                    r.v_off_kmh *= m;
                    true
                }
                OfatScenario::CrowdPlus => {
                    r.capacity = ((r.capacity as f64 * m).round() as u32).max(1);
                    true
                }
                OfatScenario::XferPlus if transfer_routes[i] => {
                    r.headway_min *= m;
                    true
                }
                OfatScenario::XferPlus => false,
            };
            if hit && m != 1.0 {
                changed.push(r.route_id.clone());
            }
            r
        })
        .collect();
    Ok((dataset.with_routes(routes)?, changed))
}

fn pooled(a: &AggregateReport) -> [f64; 4] {
    a.overall.mean_components
}

fn by_group(f: impl Fn(Group) -> f64) -> BTreeMap<Group, f64> {
    Group::ALL.iter().map(|&g| (g, f(g))).collect()
}

/// Rounds values that agree to nine significant digits of the largest one,
/// so rounding noise cannot split a genuine tie.
fn snap(values: &[f64]) -> Vec<f64> {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return values.to_vec();
    }
    values.iter().map(|v| (v / scale * 1e9).round()).collect()
}

pub fn run_ofat(
    dataset: &Dataset,
    baseline: &Baseline,
    scenario: OfatScenario,
    magnitude: f64,
    profile: &SensitivityProfile,
    config: &SimConfig,
) -> Result<OfatReport, Error> {
    if !(magnitude > 0.0 && magnitude.is_finite()) {
        return Err(Error::Config(format!("OFAT magnitude must be positive, got {magnitude}")));
    }
    let (modified, changed_routes) = apply(dataset, baseline, scenario, magnitude)?;
    let network = build_network(&modified, config);
    let sim = run_simulation(&network, modified.trips(), &baseline.plans, profile, config)?;

    let base_agg = &baseline.sim.aggregates;
    let new_agg = &sim.aggregates;
    let m_base = pooled(base_agg);
    let m_new = pooled(new_agg);
    let dot = |w: [f64; 4], m: [f64; 4]| w.iter().zip(m).map(|(a, b)| a * b).sum::<f64>();
    let reweighted_d_base = by_group(|g| dot(profile.get(g).as_array(), m_base));
    let reweighted_d_new = by_group(|g| dot(profile.get(g).as_array(), m_new));
    let reference_mean_d = base_agg.overall.mean_d;

    let driver_base = 1.0;
    let driver_new = scenario.driver_level(magnitude);
    let mut notes = Vec::new();
    let elasticities: BTreeMap<Group, Option<f64>> = Group::ALL
        .iter()
        .map(|&g| {
            let dy = reweighted_d_new[&g] - reweighted_d_base[&g];
            let e = if driver_new == driver_base {
                (dy == 0.0).then_some(0.0)
            } else if reference_mean_d == 0.0 {
                None
            } else {
                Some((dy / reference_mean_d) / ((driver_new - driver_base) / driver_base))
            };
            (g, e)
        })
        .collect();
    if elasticities.values().any(|e| e.is_none()) {
        notes.push("some elasticities are undefined (zero baseline dissatisfaction)".into());
    }

    let expected_weights = by_group(|g| profile.get(g).as_array()[scenario.component()]);
    let observed: Vec<f64> = Group::ALL.iter().map(|g| elasticities[g].unwrap_or(f64::NAN)).collect();
    let expected: Vec<f64> = Group::ALL.iter().map(|g| expected_weights[g]).collect();
    let statistic = if observed.iter().any(|v| v.is_nan()) {
        Err(crate::error::StatsError::Undefined("undefined elasticity".into()))
    } else {
        tie_aware_spearman(&snap(&observed), &expected)
    };
    let tie_note = {
        let mut ties = Vec::new();
        for (i, a) in Group::ALL.iter().enumerate() {
            for b in &Group::ALL[i + 1..] {
                if expected_weights[a] == expected_weights[b] {
                    ties.push(format!("{a} = {b}"));
                }
            }
        }
        if ties.is_empty() {
            "no ties in expected weights".to_string()
        } else {
            format!("expected weights tied for {}; observed ranks averaged within the tie", ties.join(", "))
        }
    };
    let rank_test = RankTestResult::judge("spearman (tie-aware)", statistic, tie_note, 1.0);

    let baseline_load_ratio = base_agg.system_mean_load_ratio;
    let mut low_signal = false;
    if scenario == OfatScenario::CrowdPlus && baseline_load_ratio < LOW_CROWDING_LOAD_RATIO {
        low_signal = true;
        notes.push(format!(
            "baseline load ratio {baseline_load_ratio:.3} is below {LOW_CROWDING_LOAD_RATIO}: crowding is too rare for a reliable ranking"
        ));
    }
    if magnitude != 1.0 && m_new == m_base {
        low_signal = true;
        notes.push("the change left every mean component unchanged".into());
    }

    Ok(OfatReport {
        scenario,
        magnitude,
        driver_base,
        driver_new,
        changed_routes,
        pooled_components_base: m_base,
        pooled_components_new: m_new,
        reference_mean_d,
        reweighted_d_base,
        reweighted_d_new,
        elasticities,
        expected_weights,
        rank_test,
        mean_waiting_min_base: by_group(|g| base_agg.group(g).mean_waiting_min),
        mean_waiting_min_new: by_group(|g| new_agg.group(g).mean_waiting_min),
        mean_d_base: by_group(|g| base_agg.group(g).mean_d),
        mean_d_new: by_group(|g| new_agg.group(g).mean_d),
        baseline_load_ratio,
        low_signal,
        notes,
    })
}
