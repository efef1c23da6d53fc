//! Per-route feature vectors and coefficient-weighted scores.
//!
//! Network-level structure metrics are attributed to a route by leaving it
//! out: `density` is how much network density drops without the route and
//! `avg_path_length` is how much the mean hop distance grows without it.
//! `avg_betweenness` is the mean betweenness of the route's own stops.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::data::{write_csv, PoiRecord};
use crate::error::{DataError, Error};
use crate::geo::{haversine_m, LatLon};
use crate::network::{betweenness, topology_metrics, Network};
use crate::planner::TripPlan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteFeatures {
    pub route_id: String,
    /// Trips whose plan rides the route.
    pub ridership: f64,
    /// Network density minus density with the route removed.
    pub density: f64,
    /// Mean betweenness of the route's distinct stops.
    pub avg_betweenness: f64,
    /// Mean hop length with the route removed minus the current one; zero
    /// when either is undefined.
    pub avg_path_length: f64,
    /// Share of the route's stops whose nearest other stop is farther than
    /// the sparse distance.
    pub sparse_station_ratio: f64,
    /// Shannon entropy (natural log) of POI categories near the route.
    pub amenity_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub routes: Vec<RouteFeatures>,
    /// False when no POI data was supplied; entropy is then zero throughout.
    pub pois_present: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Capacity,
    Structure,
    Function,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Capacity, Dimension::Structure, Dimension::Function];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Capacity => "capacity",
            Dimension::Structure => "structure",
            Dimension::Function => "function",
        }
    }

    pub fn features(self) -> &'static [Feature] {
        match self {
            Dimension::Capacity => &[Feature::Ridership],
            Dimension::Structure => &[Feature::Density, Feature::AvgBetweenness, Feature::AvgPathLength],
            Dimension::Function => &[Feature::SparseStationRatio, Feature::AmenityEntropy],
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dimension {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown dimension {s:?} (expected capacity, structure or function)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Feature {
    Ridership,
    Density,
    AvgBetweenness,
    AvgPathLength,
    SparseStationRatio,
    AmenityEntropy,
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::Ridership,
        Feature::Density,
        Feature::AvgBetweenness,
        Feature::AvgPathLength,
        Feature::SparseStationRatio,
        Feature::AmenityEntropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Ridership => "ridership",
            Feature::Density => "density",
            Feature::AvgBetweenness => "avg_betweenness",
            Feature::AvgPathLength => "avg_path_length",
            Feature::SparseStationRatio => "sparse_station_ratio",
            Feature::AmenityEntropy => "amenity_entropy",
        }
    }

    pub fn value(self, f: &RouteFeatures) -> f64 {
        match self {
            Feature::Ridership => f.ridership,
            Feature::Density => f.density,
            Feature::AvgBetweenness => f.avg_betweenness,
            Feature::AvgPathLength => f.avg_path_length,
            Feature::SparseStationRatio => f.sparse_station_ratio,
            Feature::AmenityEntropy => f.amenity_entropy,
        }
    }
}

/// Distance from each node to its nearest other node, metres. Infinite for
/// a network with a single stop.
pub fn nearest_neighbour_m(positions: &[LatLon]) -> Vec<f64> {
    positions
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            positions
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| haversine_m(*p, *q))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Shannon entropy of category counts, natural log.
pub fn shannon_entropy<'a>(counts: impl IntoIterator<Item = &'a usize>) -> f64 {
    let counts: Vec<usize> = counts.into_iter().copied().filter(|&c| c > 0).collect();
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let h: f64 = counts.iter().map(|&c| {
        let p = c as f64 / n;
        -p * p.ln()
    }).sum();
    h.max(0.0)
}

fn distinct_stops(network: &Network, r: usize) -> Vec<usize> {
    let set: BTreeSet<usize> = network.route(r).stops.iter().copied().collect();
    set.into_iter().collect()
}

/// Features for every active route, in route-table order.
pub fn compute_route_features(
    network: &Network,
    plans: &[TripPlan],
    pois: Option<&[PoiRecord]>,
    config: &SimConfig,
) -> FeatureTable {
    let active: Vec<usize> = network.active_routes().collect();
    let mut ridership = vec![0usize; network.routes().len()];
    for p in plans {
        let used: BTreeSet<usize> = p.legs.iter().map(|l| l.route).collect();
        for r in used {
            ridership[r] += 1;
        }
    }

    let base = topology_metrics(network);
    let bc = betweenness(network);
    let nearest = nearest_neighbour_m(network.positions());

    // POIs within the buffer of each stop
    let near_poi: Option<Vec<Vec<usize>>> = pois.map(|pois| {
        network
            .positions()
            .par_iter()
            .map(|s| {
                pois.iter()
                    .enumerate()
                    .filter(|(_, p)| haversine_m(*s, LatLon::new(p.lat, p.lon)) <= config.poi_buffer_m)
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect()
    });

    let routes = active
        .par_iter()
        .map(|&r| {
            let line = network.route(r);
            let stops = distinct_stops(network, r);
            let without = network.remove_route(&line.route_id).expect("active route");
            let loo = topology_metrics(&without);
            let apl_delta = match (loo.avg_path_length, base.avg_path_length) {
                (Some(a), Some(b)) => a - b,
                _ => 0.0,
            };
            let sparse = stops.iter().filter(|&&s| nearest[s] > config.sparse_distance_m).count();
            let entropy = match (&near_poi, pois) {
                (Some(near), Some(pois)) => {
                    let seen: BTreeSet<usize> = stops.iter().flat_map(|&s| near[s].iter().copied()).collect();
                    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                    for i in seen {
                        *counts.entry(pois[i].category.as_str()).or_default() += 1;
                    }
                    shannon_entropy(counts.values())
                }
                _ => 0.0,
            };
            RouteFeatures {
                route_id: line.route_id.clone(),
                ridership: ridership[r] as f64,
                density: base.density - loo.density,
                avg_betweenness: stops.iter().map(|&s| bc[s]).sum::<f64>() / stops.len() as f64,
                avg_path_length: apl_delta,
                sparse_station_ratio: sparse as f64 / stops.len() as f64,
                amenity_entropy: entropy,
            }
        })
        .collect();
    if pois.is_none() {
        log::warn!("no POI data supplied; amenity entropy is zero for every route");
    }
    FeatureTable { routes, pois_present: pois.is_some() }
}

/// Regression weights per dimension and feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<Dimension, BTreeMap<String, f64>>", into = "BTreeMap<Dimension, BTreeMap<String, f64>>")]
pub struct Coefficients {
    weights: BTreeMap<Dimension, Vec<(Feature, f64)>>,
}

const DEFAULT_COEFFICIENTS: &str = include_str!("../data/coefficients.json");

impl Coefficients {
    /// Weights estimated for the reference district.
    pub fn reference() -> Self {
        serde_json::from_str(DEFAULT_COEFFICIENTS).expect("bundled coefficients.json is valid")
    }

    pub fn from_json_file(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| DataError::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn dimension(&self, d: Dimension) -> Option<&[(Feature, f64)]> {
        self.weights.get(&d).map(|v| v.as_slice())
    }

    pub fn set(&mut self, d: Dimension, weights: Vec<(Feature, f64)>) {
        self.weights.insert(d, weights);
    }

    pub fn empty() -> Self {
        Coefficients { weights: BTreeMap::new() }
    }
}

impl TryFrom<BTreeMap<Dimension, BTreeMap<String, f64>>> for Coefficients {
    type Error = String;
    fn try_from(m: BTreeMap<Dimension, BTreeMap<String, f64>>) -> Result<Self, String> {
        let mut weights = BTreeMap::new();
        for (d, fs) in m {
            let mut v = Vec::new();
            for (name, w) in fs {
                let f = d
                    .features()
                    .iter()
                    .find(|f| f.name() == name)
                    .ok_or_else(|| format!("feature {name:?} does not belong to dimension {d}"))?;
                if !w.is_finite() {
                    return Err(format!("coefficient {d}.{name} is not finite"));
                }
                v.push((*f, w));
            }
            v.sort_by_key(|(f, _)| *f);
            weights.insert(d, v);
        }
        Ok(Coefficients { weights })
    }
}

impl From<Coefficients> for BTreeMap<Dimension, BTreeMap<String, f64>> {
    fn from(c: Coefficients) -> Self {
        c.weights
            .into_iter()
            .map(|(d, v)| (d, v.into_iter().map(|(f, w)| (f.name().to_string(), w)).collect()))
            .collect()
    }
}

/// z-scores with the sample standard deviation; `None` when the values
/// have zero variance (or fewer than two values).
pub fn zscores(values: &[f64]) -> Option<Vec<f64>> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 1e-12 * (1.0 + mean.abs())) {
        return None;
    }
    Some(values.iter().map(|v| (v - mean) / sd).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub route_id: String,
    pub dimension: Dimension,
    pub score: f64,
    /// 1 for the lowest score; removal order in a sweep.
    pub rank: usize,
}

/// Scores routes in one dimension and returns them in ascending score
/// order, ties broken by route id.
pub fn score_routes(features: &[RouteFeatures], dimension: Dimension, weights: &[(Feature, f64)]) -> Vec<FeatureScore> {
    let mut scores = vec![0.0; features.len()];
    for &(f, w) in weights {
        let raw: Vec<f64> = features.iter().map(|r| f.value(r)).collect();
        match zscores(&raw) {
            Some(z) => {
                for (s, z) in scores.iter_mut().zip(z) {
                    *s += w * z;
                }
            }
            None => log::warn!("feature {} has zero variance across routes; its contribution is zero", f.name()),
        }
    }
    let mut out: Vec<FeatureScore> = features
        .iter()
        .zip(scores)
        .map(|(r, score)| FeatureScore { route_id: r.route_id.clone(), dimension, score, rank: 0 })
        .collect();
    out.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.route_id.cmp(&b.route_id)));
    for (i, s) in out.iter_mut().enumerate() {
        s.rank = i + 1;
    }
    out
}

pub fn write_features_csv(path: &Path, table: &FeatureTable) -> Result<(), DataError> {
    write_csv(path, &table.routes)
}

pub fn write_scores_csv(path: &Path, scores: &[FeatureScore]) -> Result<(), DataError> {
    write_csv(path, scores)
}

/// Coefficients for `dimension`, or an error naming what is missing.
pub fn require_dimension(c: &Coefficients, dimension: Dimension) -> Result<&[(Feature, f64)], Error> {
    c.dimension(dimension)
        .filter(|w| !w.is_empty())
        .ok_or_else(|| Error::Config(format!("coefficients for dimension {dimension} are missing")))
}
