//! Stop-to-stop transit graph.
//!
//! Ride edges are route-tagged (one edge per route per direction per
//! segment, so shared segments appear once per route); walking transfer
//! edges join distinct stops no more than `transfer_radius_m` apart.
//! Topology metrics run on the simple directed graph obtained by
//! collapsing parallel ride edges and adding transfers in both
//! directions, every edge counting one hop.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::data::{write_csv, Dataset, RouteDef};
use crate::error::{DataError, NetworkError};
use crate::geo::{haversine_m, LatLon, EARTH_RADIUS_M};

/// Static description of one route as the graph and the engine see it.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteLine {
    pub route_id: String,
    /// Node indices in forward order.
    pub stops: Vec<usize>,
    /// Cumulative distance from the first stop, metres.
    pub cum_m: Vec<f64>,
    pub headway_min: f64,
    pub capacity: u32,
    pub v_off_kmh: f64,
    pub first_departure_min: u32,
}

impl RouteLine {
    pub fn segment_count(&self) -> usize {
        self.stops.len() - 1
    }

    pub fn length_m(&self) -> f64 {
        *self.cum_m.last().unwrap()
    }

    /// Length of the segment between positions `i` and `i + 1`.
    pub fn segment_m(&self, i: usize) -> f64 {
        self.cum_m[i + 1] - self.cum_m[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RideEdge {
    pub from: usize,
    pub to: usize,
    pub route: usize,
    pub length_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferEdge {
    pub a: usize,
    pub b: usize,
    pub walk_m: f64,
}

#[derive(Debug, PartialEq)]
struct Static {
    stop_ids: Vec<String>,
    node_index: HashMap<String, usize>,
    positions: Vec<LatLon>,
    routes: Vec<RouteLine>,
    transfers: Vec<TransferEdge>,
    /// Walking neighbours per node, ascending by node index.
    walk_adj: Vec<Vec<(usize, f64)>>,
    /// `(route, position)` pairs for every node, all routes.
    serving: Vec<Vec<(usize, usize)>>,
}

/// The transit graph. Cheap to clone: everything but the active route
/// set and the derived ride edges is shared.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    inner: Arc<Static>,
    active: Vec<bool>,
    ride_edges: Vec<RideEdge>,
}

fn cumulative(positions: &[LatLon], stops: &[usize], route_id: &str) -> Vec<f64> {
    let mut cum = Vec::with_capacity(stops.len());
    cum.push(0.0);
    for w in stops.windows(2) {
        let d = haversine_m(positions[w[0]], positions[w[1]]);
        if d == 0.0 {
            log::warn!("route {route_id}: zero-length segment between node {} and {}", w[0], w[1]);
        }
        cum.push(cum.last().unwrap() + d);
    }
    cum
}

/// All unordered stop pairs within `radius_m`, ascending by `(a, b)`.
fn transfer_pairs(positions: &[LatLon], radius_m: f64) -> Vec<TransferEdge> {
    let mut order: Vec<usize> = (0..positions.len()).collect();
    order.sort_by(|&i, &j| positions[i].lat.total_cmp(&positions[j].lat).then(i.cmp(&j)));
    // latitude window in degrees, padded against rounding
    let window = radius_m / (EARTH_RADIUS_M * std::f64::consts::PI / 180.0) * 1.01 + 1e-9;
    let mut out = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if positions[j].lat - positions[i].lat > window {
                break;
            }
            let d = haversine_m(positions[i], positions[j]);
            if d <= radius_m {
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                out.push(TransferEdge { a, b, walk_m: d });
            }
        }
    }
    out.sort_by(|x, y| (x.a, x.b).cmp(&(y.a, y.b)));
    out
}

fn ride_edges_for(routes: &[RouteLine], active: &[bool]) -> Vec<RideEdge> {
    let mut edges = Vec::new();
    for (r, line) in routes.iter().enumerate().filter(|(r, _)| active[*r]) {
        for i in 0..line.segment_count() {
            edges.push(RideEdge { from: line.stops[i], to: line.stops[i + 1], route: r, length_m: line.segment_m(i) });
        }
        for i in (0..line.segment_count()).rev() {
            edges.push(RideEdge { from: line.stops[i + 1], to: line.stops[i], route: r, length_m: line.segment_m(i) });
        }
    }
    edges
}

/// Builds the graph for every route of `dataset`.
pub fn build_network(dataset: &Dataset, config: &SimConfig) -> Network {
    let positions: Vec<LatLon> = dataset.stops().iter().map(|s| s.position()).collect();
    let stop_ids: Vec<String> = dataset.stops().iter().map(|s| s.stop_id.clone()).collect();
    let node_index = stop_ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    let routes: Vec<RouteLine> = dataset
        .routes()
        .iter()
        .map(|r: &RouteDef| {
            let stops: Vec<usize> = r.stops.iter().map(|s| dataset.stop_idx(s).unwrap()).collect();
            RouteLine {
                route_id: r.route_id.clone(),
                cum_m: cumulative(&positions, &stops, &r.route_id),
                stops,
                headway_min: r.headway_min,
                capacity: r.capacity,
                v_off_kmh: r.v_off_kmh,
                first_departure_min: r.first_departure_min,
            }
        })
        .collect();
    let transfers = transfer_pairs(&positions, config.transfer_radius_m);
    let mut walk_adj = vec![Vec::new(); positions.len()];
    for t in &transfers {
        walk_adj[t.a].push((t.b, t.walk_m));
        walk_adj[t.b].push((t.a, t.walk_m));
    }
    for adj in &mut walk_adj {
        adj.sort_by_key(|(n, _)| *n);
    }
    let mut serving = vec![Vec::new(); positions.len()];
    for (r, line) in routes.iter().enumerate() {
        for (pos, &s) in line.stops.iter().enumerate() {
            serving[s].push((r, pos));
        }
    }
    let active = vec![true; routes.len()];
    let ride_edges = ride_edges_for(&routes, &active);
    Network {
        inner: Arc::new(Static { stop_ids, node_index, positions, routes, transfers, walk_adj, serving }),
        active,
        ride_edges,
    }
}

impl Network {
    pub fn node_count(&self) -> usize {
        self.inner.positions.len()
    }

    pub fn stop_ids(&self) -> &[String] {
        &self.inner.stop_ids
    }

    pub fn stop_id(&self, node: usize) -> &str {
        &self.inner.stop_ids[node]
    }

    pub fn node_of(&self, stop_id: &str) -> Option<usize> {
        self.inner.node_index.get(stop_id).copied()
    }

    pub fn position(&self, node: usize) -> LatLon {
        self.inner.positions[node]
    }

    pub fn positions(&self) -> &[LatLon] {
        &self.inner.positions
    }

    /// Every route the network was built with, active or not.
    pub fn routes(&self) -> &[RouteLine] {
        &self.inner.routes
    }

    pub fn route(&self, r: usize) -> &RouteLine {
        &self.inner.routes[r]
    }

    pub fn route_index(&self, route_id: &str) -> Option<usize> {
        self.inner.routes.iter().position(|r| r.route_id == route_id)
    }

    pub fn is_active(&self, r: usize) -> bool {
        self.active[r]
    }

    pub fn active_routes(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().enumerate().filter(|(_, a)| **a).map(|(r, _)| r)
    }

    pub fn active_route_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn ride_edges(&self) -> &[RideEdge] {
        &self.ride_edges
    }

    pub fn transfer_edges(&self) -> &[TransferEdge] {
        &self.inner.transfers
    }

    pub fn walk_neighbours(&self, node: usize) -> &[(usize, f64)] {
        &self.inner.walk_adj[node]
    }

    /// Active `(route, position)` pairs serving `node`.
    pub fn serving(&self, node: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.inner.serving[node].iter().copied().filter(|(r, _)| self.active[*r])
    }

    /// Copy of the network without `route_id`'s ride edges.
    pub fn remove_route(&self, route_id: &str) -> Result<Network, NetworkError> {
        let r = self
            .route_index(route_id)
            .ok_or_else(|| NetworkError::UnknownRoute(route_id.to_string()))?;
        if !self.active[r] {
            return Err(NetworkError::InactiveRoute(route_id.to_string()));
        }
        let mut active = self.active.clone();
        active[r] = false;
        Ok(Network {
            inner: Arc::clone(&self.inner),
            ride_edges: self.ride_edges.iter().copied().filter(|e| e.route != r).collect(),
            active,
        })
    }

    /// Copy of the network with a previously removed route restored.
    pub fn restore_route(&self, route_id: &str) -> Result<Network, NetworkError> {
        let r = self
            .route_index(route_id)
            .ok_or_else(|| NetworkError::UnknownRoute(route_id.to_string()))?;
        let mut active = self.active.clone();
        active[r] = true;
        Ok(Network { inner: Arc::clone(&self.inner), ride_edges: ride_edges_for(&self.inner.routes, &active), active })
    }

    /// Simple directed adjacency used for topology: collapsed ride edges
    /// plus transfers in both directions. Neighbour lists are sorted.
    pub fn hop_graph(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for e in &self.ride_edges {
            adj[e.from].push(e.to);
        }
        for t in &self.inner.transfers {
            adj[t.a].push(t.b);
            adj[t.b].push(t.a);
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    /// Number of distinct ordered stop pairs joined by at least one ride edge.
    pub fn ride_pair_count(&self) -> usize {
        let mut pairs: Vec<(usize, usize)> = self.ride_edges.iter().map(|e| (e.from, e.to)).collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs.len()
    }

    /// Writes `edges.csv` with ride and transfer edges.
    pub fn write_edges_csv(&self, path: &Path) -> Result<(), DataError> {
        #[derive(Serialize)]
        struct Row<'a> {
            from: &'a str,
            to: &'a str,
            route_id: &'a str,
            length_m: f64,
            kind: &'static str,
        }
        let mut rows: Vec<Row> = self
            .ride_edges
            .iter()
            .map(|e| Row {
                from: self.stop_id(e.from),
                to: self.stop_id(e.to),
                route_id: &self.inner.routes[e.route].route_id,
                length_m: e.length_m,
                kind: "ride",
            })
            .collect();
        rows.extend(self.inner.transfers.iter().map(|t| Row {
            from: self.stop_id(t.a),
            to: self.stop_id(t.b),
            route_id: "",
            length_m: t.walk_m,
            kind: "transfer",
        }));
        write_csv(path, &rows)
    }
}

/// Single-source shortest-path data from one BFS, then Brandes
/// back-propagation of dependencies.
fn brandes_source(adj: &[Vec<usize>], s: usize, acc: &mut [f64]) -> (u64, u64) {
    let n = adj.len();
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![u32::MAX; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = std::collections::VecDeque::new();
    sigma[s] = 1.0;
    dist[s] = 0;
    queue.push_back(s);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &w in &adj[v] {
            if dist[w] == u32::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
            if dist[w] == dist[v] + 1 {
                sigma[w] += sigma[v];
            }
        }
    }
    // Dependencies are pulled from successors on the shortest-path DAG in
    // reverse BFS order, so no predecessor lists are needed.
    let mut delta = vec![0.0f64; n];
    for &v in order.iter().rev() {
        let mut d = 0.0;
        for &w in &adj[v] {
            if dist[w] != u32::MAX && dist[w] == dist[v] + 1 {
                d += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
        }
        delta[v] = d;
        if v != s {
            acc[v] += d;
        }
    }
    let mut sum = 0u64;
    let mut count = 0u64;
    for (v, &d) in dist.iter().enumerate() {
        if v != s && d != u32::MAX {
            sum += d as u64;
            count += 1;
        }
    }
    (sum, count)
}

/// Unnormalised node betweenness plus all-pairs hop totals.
fn brandes_all(adj: &[Vec<usize>]) -> (Vec<f64>, u64, u64) {
    const CHUNK: usize = 32;
    let n = adj.len();
    let sources: Vec<usize> = (0..n).collect();
    let partials: Vec<(Vec<f64>, u64, u64)> = sources
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; n];
            let (mut sum, mut count) = (0, 0);
            for &s in chunk {
                let (a, b) = brandes_source(adj, s, &mut acc);
                sum += a;
                count += b;
            }
            (acc, sum, count)
        })
        .collect();
    let mut bc = vec![0.0; n];
    let (mut sum, mut count) = (0, 0);
    for (acc, a, b) in partials {
        for (x, y) in bc.iter_mut().zip(acc) {
            *x += y;
        }
        sum += a;
        count += b;
    }
    (bc, sum, count)
}

/// Node betweenness on an arbitrary directed adjacency list.
pub fn betweenness_of(adj: &[Vec<usize>]) -> Vec<f64> {
    brandes_all(adj).0
}

/// Node betweenness indexed by node.
pub fn betweenness(network: &Network) -> Vec<f64> {
    betweenness_of(&network.hop_graph())
}

/// Node betweenness keyed by stop id.
pub fn betweenness_by_stop(network: &Network) -> BTreeMap<String, f64> {
    network.stop_ids().iter().cloned().zip(betweenness(network)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologyMetrics {
    pub n_nodes: usize,
    pub ride_pairs: usize,
    pub density: f64,
    pub avg_betweenness: f64,
    /// Mean hop count over connected ordered pairs; `None` when no pair is connected.
    pub avg_path_length: Option<f64>,
    /// Share of ordered pairs that are connected.
    pub connected_fraction: f64,
}

/// Topology metrics on an adjacency list with `ride_pairs` ride pairs.
pub fn topology_of(adj: &[Vec<usize>], ride_pairs: usize) -> TopologyMetrics {
    let n = adj.len();
    let possible = n.saturating_mul(n.saturating_sub(1));
    let (bc, sum, count) = brandes_all(adj);
    TopologyMetrics {
        n_nodes: n,
        ride_pairs,
        density: if possible == 0 { 0.0 } else { ride_pairs as f64 / possible as f64 },
        avg_betweenness: if n == 0 { 0.0 } else { bc.iter().sum::<f64>() / n as f64 },
        avg_path_length: (count > 0).then(|| sum as f64 / count as f64),
        connected_fraction: if possible == 0 { 0.0 } else { count as f64 / possible as f64 },
    }
}

pub fn topology_metrics(network: &Network) -> TopologyMetrics {
    topology_of(&network.hop_graph(), network.ride_pair_count())
}
