//! Independent reference implementations and fixture builders shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};

use busnet::data::{RouteDef, Stop, TripRecord};
use busnet::engine::{Components, SimEvent};
use busnet::geo::{haversine_m, LatLon};
use busnet::planner::TripPlan;
use busnet::{Dataset, Group, Weights};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Hop distances from `s` by breadth-first search.
pub fn bfs(adj: &[Vec<usize>], s: usize) -> Vec<Option<usize>> {
    let mut d = vec![None; adj.len()];
    d[s] = Some(0);
    let mut q = VecDeque::from([s]);
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            if d[v].is_none() {
                d[v] = Some(d[u].unwrap() + 1);
                q.push_back(v);
            }
        }
    }
    d
}

/// Lists every shortest s-t path explicitly.
fn shortest_paths(adj: &[Vec<usize>], dist: &[Vec<Option<usize>>], s: usize, t: usize) -> Vec<Vec<usize>> {
    let Some(target) = dist[s][t] else { return Vec::new() };
    let mut out = Vec::new();
    let mut stack = vec![vec![s]];
    while let Some(path) = stack.pop() {
        let u = *path.last().unwrap();
        if u == t {
            out.push(path);
            continue;
        }
        let here = path.len() - 1;
        for &v in &adj[u] {
            // stay on a geodesic: v must be one hop further from s and still reach t in time
            if dist[s][v] == Some(here + 1) && dist[v][t].is_some_and(|r| here + 1 + r == target) {
                let mut p = path.clone();
                p.push(v);
                stack.push(p);
            }
        }
    }
    out
}

/// Betweenness by enumerating all shortest paths between every ordered pair,
/// plus the mean hop count over connected ordered pairs.
pub fn brute_topology(adj: &[Vec<usize>]) -> (Vec<f64>, Option<f64>) {
    let n = adj.len();
    let dist: Vec<Vec<Option<usize>>> = (0..n).map(|s| bfs(adj, s)).collect();
    let mut bc = vec![0.0; n];
    let (mut sum, mut count) = (0usize, 0usize);
    for s in 0..n {
        for t in 0..n {
            if s == t {
                continue;
            }
            let Some(d) = dist[s][t] else { continue };
            sum += d;
            count += 1;
            let paths = shortest_paths(adj, &dist, s, t);
            let total = paths.len() as f64;
            for p in &paths {
                for &v in &p[1..p.len() - 1] {
                    bc[v] += 1.0 / total;
                }
            }
        }
    }
    (bc, (count > 0).then(|| sum as f64 / count as f64))
}

/// Random directed graph with `n` nodes and edge probability `p`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<Vec<usize>> {
    (0..n)
        .map(|u| (0..n).filter(|&v| v != u && rng.random_bool(p)).collect())
        .collect()
}

/// Cheapest planning cost with at most `max_legs` rides, by dynamic
/// programming over every possible leg (route, board position, alight
/// position) with walks between legs. Returns `None` when unreachable.
pub fn oracle_plan_cost(
    ds: &Dataset,
    active: &[bool],
    w: &Weights,
    origin: &str,
    dest: &str,
    max_legs: usize,
    step_min: u32,
    radius_m: f64,
) -> Option<f64> {
    let n = ds.stops().len();
    let pos: Vec<LatLon> = ds.stops().iter().map(|s| LatLon::new(s.lat, s.lon)).collect();
    let walk: Vec<Vec<usize>> = (0..n)
        .map(|a| (0..n).filter(|&b| b != a && haversine_m(pos[a], pos[b]) <= radius_m).collect())
        .collect();
    let idx = |id: &str| ds.stop_idx(id).unwrap();
    let (o, d) = (idx(origin), idx(dest));
    // partial cost without the transfer term
    let mut boardable: Vec<Option<f64>> = vec![None; n];
    boardable[o] = Some(0.0);
    let mut best: Option<f64> = None;
    for k in 1..=max_legs {
        let mut alighted: Vec<Option<f64>> = vec![None; n];
        for (r, route) in ds.routes().iter().enumerate() {
            if !active[r] {
                continue;
            }
            let stops: Vec<usize> = route.stops.iter().map(|s| idx(s)).collect();
            let wait = route.headway_min / 2.0 / step_min as f64;
            for i in 0..stops.len() {
                let Some(c0) = boardable[stops[i]] else { continue };
                for j in 0..stops.len() {
                    if i == j {
                        continue;
                    }
                    let c = c0 + w.l * i.abs_diff(j) as f64 + w.w * wait;
                    let slot = &mut alighted[stops[j]];
                    if slot.is_none_or(|x| c < x) {
                        *slot = Some(c);
                    }
                }
            }
        }
        if let Some(c) = alighted[d] {
            let total = c + w.t * (k - 1) as f64;
            if best.is_none_or(|b| total < b) {
                best = Some(total);
            }
        }
        let mut next = alighted.clone();
        for v in 0..n {
            for &u in &walk[v] {
                if let Some(c) = alighted[u] {
                    if next[v].is_none_or(|x| c < x) {
                        next[v] = Some(c);
                    }
                }
            }
        }
        boardable = next;
    }
    best
}

/// Components rebuilt from the event log alone.
pub fn replay(events: &[SimEvent], plans: &[TripPlan], threshold: f64, final_step: u32) -> Vec<Components> {
    let n = plans.len();
    let mut comps = vec![Components::default(); n];
    let mut ready: Vec<Option<u32>> = vec![None; n];
    let mut legs_done = vec![0usize; n];
    let mut boardings = vec![0u32; n];
    let mut onboard: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for e in events {
        match *e {
            SimEvent::Activate { step, passenger, .. } => {
                if plans[passenger].feasible {
                    ready[passenger] = Some(step);
                }
            }
            SimEvent::Arrive { bus, .. } => {
                for &p in onboard.get(&bus).map(Vec::as_slice).unwrap_or(&[]) {
                    comps[p].l += 1;
                }
            }
            SimEvent::Alight { step, bus, passenger, .. } => {
                onboard.get_mut(&bus).unwrap().retain(|&p| p != passenger);
                legs_done[passenger] += 1;
                if legs_done[passenger] < plans[passenger].legs.len() {
                    ready[passenger] = Some(step);
                }
            }
            SimEvent::Board { step, bus, passenger, .. } => {
                comps[passenger].w += step - ready[passenger].take().expect("boarded while not waiting");
                boardings[passenger] += 1;
                comps[passenger].t = boardings[passenger] - 1;
                onboard.entry(bus).or_default().push(passenger);
            }
            SimEvent::BusLoad { bus, load, capacity, .. } => {
                let riders = onboard.get(&bus).map(Vec::as_slice).unwrap_or(&[]);
                assert_eq!(riders.len(), load, "logged load disagrees with replay");
                assert!(load as u32 <= capacity, "bus over capacity");
                if load as f64 / capacity as f64 >= threshold {
                    for &p in riders {
                        comps[p].c += 1;
                    }
                }
            }
            SimEvent::Fail { passenger, .. } => {
                if let Some(r) = ready[passenger].take() {
                    comps[passenger].w += final_step - r;
                }
            }
            SimEvent::Dispatch { .. } | SimEvent::StepEnd { .. } => {}
        }
    }
    comps
}

/// Ordinary least squares with intercept through the Moore-Penrose
/// pseudo-inverse. Returns (slopes, intercept, R squared).
pub fn pinv_ols(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64, f64) {
    let n = y.len();
    let p = x[0].len();
    let design = nalgebra::DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let yv = nalgebra::DVector::from_column_slice(y);
    let beta = design.clone().pseudo_inverse(1e-12).unwrap() * &yv;
    let fitted = &design * &beta;
    let ybar = yv.mean();
    let ss_res: f64 = (&yv - &fitted).iter().map(|e| e * e).sum();
    let ss_tot: f64 = yv.iter().map(|v| (v - ybar).powi(2)).sum();
    (beta.iter().skip(1).copied().collect(), beta[0], 1.0 - ss_res / ss_tot)
}

/// Largest gap between two empirical CDFs, checked at every sample point.
pub fn ecdf_gap(a: &[f64], b: &[f64]) -> f64 {
    let cdf = |s: &[f64], x: f64| s.iter().filter(|v| **v <= x).count() as f64 / s.len() as f64;
    a.iter().chain(b).map(|&x| (cdf(a, x) - cdf(b, x)).abs()).fold(0.0, f64::max)
}

/// Small random network: up to `max_stops` stops on a jittered lattice (so
/// some pairs fall inside walking range), up to `max_routes` routes over
/// distinct stops and a handful of trips.
pub fn random_fixture(seed: u64, max_stops: usize, max_routes: usize, n_trips: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(4..=max_stops);
    let origin = LatLon::new(30.0, 110.0);
    let stops: Vec<Stop> = (0..n)
        .map(|i| {
            let (r, c) = ((i / 4) as f64, (i % 4) as f64);
            let p = origin.offset_m(
                r * 380.0 + rng.random_range(-120.0..120.0),
                c * 380.0 + rng.random_range(-120.0..120.0),
            );
            Stop { stop_id: format!("S{i:02}"), lat: p.lat, lon: p.lon }
        })
        .collect();
    let n_routes = rng.random_range(1..=max_routes);
    let routes: Vec<RouteDef> = (0..n_routes)
        .map(|r| {
            let len = rng.random_range(2..=n.min(6));
            let mut ids: Vec<usize> = (0..n).collect();
            let mut seq = Vec::with_capacity(len);
            for _ in 0..len {
                let k = rng.random_range(0..ids.len());
                seq.push(ids.swap_remove(k));
            }
            RouteDef {
                route_id: format!("R{r}"),
                stops: seq.iter().map(|i| format!("S{i:02}")).collect(),
                headway_min: *[10.0, 15.0, 20.0, 30.0].choose(&mut rng).unwrap(),
                capacity: rng.random_range(1..=4),
                v_off_kmh: rng.random_range(15.0..30.0),
                first_departure_min: 360 + rng.random_range(0..30),
            }
        })
        .collect();
    let trips: Vec<TripRecord> = (0..n_trips)
        .map(|i| {
            let o = rng.random_range(0..n);
            let mut d = rng.random_range(0..n - 1);
            if d >= o {
                d += 1;
            }
            TripRecord {
                passenger_id: format!("P{i:03}"),
                group: *Group::ALL.choose(&mut rng).unwrap(),
                origin_stop: format!("S{o:02}"),
                dest_stop: format!("S{d:02}"),
                departure_min: 350 + rng.random_range(0..120),
            }
        })
        .collect();
    Dataset::new(stops, routes, trips, None).unwrap()
}
