//! Seeded synthetic networks and demand.
//!
//! Two layouts are available. `Grid` places stops on a square lattice and
//! runs routes along rows, columns and (if more are needed) staircase
//! diagonals. `HubSpoke` arranges radial spoke routes around an inner
//! circulator (`HUB`) and links their outer ends with a slow `RING` route.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Group, PoiRecord, RouteDef, Stop, TripRecord};
use crate::error::Error;
use crate::geo::LatLon;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Grid,
    HubSpoke,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub topology: Topology,
    pub n_routes: usize,
    pub n_stops: usize,
    pub n_trips: usize,
    /// Relative shares of General, Student, Elderly, Disabled.
    pub group_mix: [f64; 4],
    /// Fraction of departures drawn from the 7-9 and 17-18 peaks.
    pub peak_share: f64,
    pub stop_spacing_m: f64,
    pub headway_choices: Vec<f64>,
    pub capacity: u32,
    pub v_off_range: (f64, f64),
    pub n_pois: usize,
    pub poi_categories: Vec<String>,
    pub origin: LatLon,
    /// Service day bounds for off-peak departures, minutes since midnight.
    pub service_span: (u32, u32),
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            topology: Topology::Grid,
            n_routes: 10,
            n_stops: 40,
            n_trips: 2000,
            group_mix: [0.35, 0.15, 0.40, 0.10],
            peak_share: 0.6,
            stop_spacing_m: 400.0,
            headway_choices: vec![15.0, 30.0],
            capacity: 60,
            v_off_range: (20.0, 30.0),
            n_pois: 120,
            poi_categories: ["food", "retail", "school", "health", "office", "park"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            origin: LatLon::new(40.316, 116.632),
            service_span: (360, 1260),
        }
    }
}

impl SynthSpec {
    /// District-scale preset: 79 routes and 72,750 trips, elderly-dominant.
    pub fn district_scale() -> Self {
        SynthSpec {
            n_routes: 79,
            n_stops: 900,
            n_trips: 72_750,
            group_mix: [0.33, 0.12, 0.48, 0.07],
            n_pois: 2000,
            ..SynthSpec::default()
        }
    }
}

/// Splits `n` items over `shares` by largest remainder; every count is
/// within one of its exact share.
pub fn apportion(n: usize, shares: &[f64]) -> Vec<usize> {
    let total: f64 = shares.iter().sum();
    let exact: Vec<f64> = shares.iter().map(|s| s / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

struct Layout {
    positions: Vec<LatLon>,
    ids: Vec<String>,
    routes: Vec<(String, Vec<usize>)>,
}

fn grid_layout(spec: &SynthSpec) -> Result<Layout, Error> {
    let n = spec.n_stops;
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let at = |r: usize, c: usize| -> Option<usize> {
        let i = r * cols + c;
        (r < rows && c < cols && i < n).then_some(i)
    };
    let positions: Vec<LatLon> = (0..n)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            spec.origin.offset_m(-(r as f64) * spec.stop_spacing_m, c as f64 * spec.stop_spacing_m)
        })
        .collect();
    let ids = (0..n).map(|i| format!("S{:04}", i)).collect();

    let row_lines: Vec<Vec<usize>> = (0..rows)
        .map(|r| (0..cols).filter_map(|c| at(r, c)).collect::<Vec<_>>())
        .filter(|l| l.len() >= 2)
        .collect();
    let col_lines: Vec<Vec<usize>> = (0..cols)
        .map(|c| (0..rows).filter_map(|r| at(r, c)).collect::<Vec<_>>())
        .filter(|l| l.len() >= 2)
        .collect();
    let mut stairs: Vec<Vec<usize>> = Vec::new();
    for start in 0..cols.saturating_sub(1) {
        let (mut r, mut c) = (0, start);
        let mut line = vec![at(r, c).unwrap()];
        let mut right = true;
        loop {
            if right {
                c += 1
            } else {
                r += 1
            }
            right = !right;
            match at(r, c) {
                Some(i) => line.push(i),
                None => break,
            }
        }
        if line.len() >= 3 {
            stairs.push(line);
        }
    }

    let want = spec.n_routes;
    let base = row_lines.len() + col_lines.len();
    if want > base + stairs.len() {
        return Err(Error::Config(format!(
            "grid of {n} stops supports at most {} routes, {want} requested",
            base + stairs.len()
        )));
    }
    let pick = |lines: &[Vec<usize>], k: usize| -> Vec<Vec<usize>> {
        (0..k).map(|j| lines[j * lines.len() / k].clone()).collect()
    };
    let mut chosen = Vec::with_capacity(want);
    if want <= base {
        let mut n_rows = ((want * row_lines.len()) as f64 / base as f64).round() as usize;
        if want >= 2 {
            n_rows = n_rows.clamp(1, want - 1);
        }
        n_rows = n_rows.min(row_lines.len());
        let n_cols = (want - n_rows).min(col_lines.len());
        let n_rows = want - n_cols;
        let rows_sel = pick(&row_lines, n_rows);
        let cols_sel = pick(&col_lines, n_cols);
        // interleave so route ids alternate orientation
        let mut ri = rows_sel.into_iter();
        let mut ci = cols_sel.into_iter();
        loop {
            match (ri.next(), ci.next()) {
                (None, None) => break,
                (a, b) => chosen.extend(a.into_iter().chain(b)),
            }
        }
    } else {
        chosen.extend(row_lines.iter().cloned());
        chosen.extend(col_lines.iter().cloned());
        chosen.extend(pick(&stairs, want - base));
    }
    let routes = chosen
        .into_iter()
        .enumerate()
        .map(|(i, s)| (format!("R{:03}", i + 1), s))
        .collect();
    Ok(Layout { positions, ids, routes })
}

fn hub_spoke_layout(spec: &SynthSpec) -> Result<Layout, Error> {
    if spec.n_routes < 4 {
        return Err(Error::Config("hub-spoke layout needs at least 4 routes".into()));
    }
    let spokes = spec.n_routes - 2;
    if spec.n_stops < spokes * 2 {
        return Err(Error::Config(format!(
            "hub-spoke layout with {spokes} spokes needs at least {} stops",
            spokes * 2
        )));
    }
    let per_spoke = apportion(spec.n_stops, &vec![1.0; spokes]);
    let s = spec.stop_spacing_m;
    let inner_radius = s / (2.0 * (std::f64::consts::PI / spokes as f64).sin());
    let mut positions = Vec::new();
    let mut ids = Vec::new();
    let mut spoke_lines = Vec::new();
    for (k, &m) in per_spoke.iter().enumerate() {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / spokes as f64;
        let mut line = Vec::with_capacity(m);
        for j in 0..m {
            let rad = inner_radius + j as f64 * s;
            line.push(positions.len());
            positions.push(spec.origin.offset_m(rad * theta.cos(), rad * theta.sin()));
            ids.push(format!("K{:02}S{:02}", k + 1, j));
        }
        spoke_lines.push(line);
    }
    let mut hub: Vec<usize> = spoke_lines.iter().map(|l| l[0]).collect();
    hub.push(hub[0]);
    let mut ring: Vec<usize> = spoke_lines.iter().map(|l| *l.last().unwrap()).collect();
    ring.push(ring[0]);
    let mut routes = vec![("HUB".to_string(), hub), ("RING".to_string(), ring)];
    for (k, l) in spoke_lines.into_iter().enumerate() {
        routes.push((format!("SPK{:02}", k + 1), l));
    }
    Ok(Layout { positions, ids, routes })
}

fn departure(rng: &mut ChaCha8Rng, spec: &SynthSpec) -> u32 {
    if rng.random::<f64>() < spec.peak_share {
        if rng.random_bool(2.0 / 3.0) {
            rng.random_range(420..540)
        } else {
            rng.random_range(1020..1080)
        }
    } else {
        rng.random_range(spec.service_span.0..spec.service_span.1)
    }
}

/// Builds a dataset from `spec`. Identical `(spec, seed)` pairs give
/// identical datasets.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<Dataset, Error> {
    if spec.n_routes == 0 || spec.n_stops < 2 {
        return Err(Error::Config("need at least one route and two stops".into()));
    }
    if spec.group_mix.iter().any(|s| !(*s >= 0.0)) || spec.group_mix.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Config("group_mix shares must be non-negative with a positive sum".into()));
    }
    if spec.headway_choices.is_empty() || spec.headway_choices.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::Config("headway_choices must be positive".into()));
    }
    if spec.service_span.0 >= spec.service_span.1 {
        return Err(Error::Config("service_span must be a non-empty interval".into()));
    }
    let layout = match spec.topology {
        Topology::Grid => grid_layout(spec)?,
        Topology::HubSpoke => hub_spoke_layout(spec)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let stops: Vec<Stop> = layout
        .ids
        .iter()
        .zip(&layout.positions)
        .map(|(id, p)| Stop { stop_id: id.clone(), lat: p.lat, lon: p.lon })
        .collect();

    let routes: Vec<RouteDef> = layout
        .routes
        .iter()
        .map(|(rid, seq)| {
            let headway = *spec.headway_choices.choose(&mut rng).unwrap();
            let (lo, hi) = spec.v_off_range;
            let v_off = if hi > lo { (rng.random_range(lo..=hi) * 2.0).round() / 2.0 } else { lo };
            let offset = rng.random_range(0..headway.ceil() as u32);
            RouteDef {
                route_id: rid.clone(),
                stops: seq.iter().map(|&i| layout.ids[i].clone()).collect(),
                headway_min: headway,
                capacity: spec.capacity,
                v_off_kmh: v_off,
                first_departure_min: spec.service_span.0.saturating_sub(30) + offset,
            }
        })
        .collect();

    let mut served: Vec<usize> = layout.routes.iter().flat_map(|(_, s)| s.iter().copied()).collect();
    served.sort_unstable();
    served.dedup();

    let counts = apportion(spec.n_trips, &spec.group_mix);
    let mut groups: Vec<Group> = Group::ALL
        .iter()
        .zip(&counts)
        .flat_map(|(g, &c)| std::iter::repeat_n(*g, c))
        .collect();
    groups.shuffle(&mut rng);

    let width = spec.n_trips.max(1).to_string().len();
    let trips = groups
        .into_iter()
        .enumerate()
        .map(|(i, group)| {
            let o = served[rng.random_range(0..served.len())];
            let d = loop {
                let d = served[rng.random_range(0..served.len())];
                if d != o {
                    break d;
                }
            };
            TripRecord {
                passenger_id: format!("P{:0width$}", i + 1),
                group,
                origin_stop: layout.ids[o].clone(),
                dest_stop: layout.ids[d].clone(),
                departure_min: departure(&mut rng, spec),
            }
        })
        .collect();

    let pois = if spec.n_pois > 0 && !spec.poi_categories.is_empty() {
        let (min_lat, max_lat, min_lon, max_lon) = layout.positions.iter().fold(
            (f64::MAX, f64::MIN, f64::MAX, f64::MIN),
            |(a, b, c, d), p| (a.min(p.lat), b.max(p.lat), c.min(p.lon), d.max(p.lon)),
        );
        Some(
            (0..spec.n_pois)
                .map(|i| PoiRecord {
                    poi_id: format!("POI{:05}", i + 1),
                    lat: rng.random_range(min_lat..=max_lat),
                    lon: rng.random_range(min_lon..=max_lon),
                    category: spec.poi_categories.choose(&mut rng).unwrap().clone(),
                })
                .collect(),
        )
    } else {
        None
    };

    Ok(Dataset::new(stops, routes, trips, pois)?)
}
