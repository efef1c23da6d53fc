//! Generalised-cost trip planning.
//!
//! A plan is a sequence of ride legs; consecutive legs meet at the same
//! stop or at the two ends of one walking transfer edge. Its planned cost
//! is
//!
//! ```text
//! beta_L * segments + beta_T * transfers + beta_W * expected_wait_steps
//! ```
//!
//! where each boarding expects half a headway of waiting. Crowding is not
//! knowable when planning and is left out.
//!
//! The search is layered by leg count. Layer `k + 1` scans every active
//! route in both directions once, carrying the best boarding seen so far
//! (the classic round-based route scan), then relaxes walking transfers.
//! Within a layer labels are ordered by `(cost, route-id sequence)`, and
//! across layers by `(cost, transfers, route-id sequence)`, which makes
//! the chosen plan unique for any input.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::data::{SensitivityProfile, TripRecord, Weights};
use crate::error::NetworkError;
use crate::network::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Reverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub route_id: String,
    pub board_stop: String,
    pub alight_stop: String,
    /// Route index in the network's route table.
    pub route: usize,
    /// Positions along the route's forward stop list.
    pub board_pos: usize,
    pub alight_pos: usize,
}

impl Leg {
    pub fn direction(&self) -> Direction {
        if self.alight_pos > self.board_pos {
            Direction::Forward
        } else {
            Direction::Reverse
        }
    }

    pub fn segments(&self) -> usize {
        self.board_pos.abs_diff(self.alight_pos)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripPlan {
    pub legs: Vec<Leg>,
    /// `None` when infeasible.
    pub planned_cost: Option<f64>,
    pub feasible: bool,
    pub planned_segments: u32,
    pub expected_wait_steps: f64,
}

impl TripPlan {
    pub fn infeasible() -> Self {
        TripPlan { legs: Vec::new(), planned_cost: None, feasible: false, planned_segments: 0, expected_wait_steps: 0.0 }
    }

    pub fn transfers(&self) -> usize {
        self.legs.len().saturating_sub(1)
    }

    pub fn uses_route(&self, route: usize) -> bool {
        self.legs.iter().any(|l| l.route == route)
    }

    pub fn route_ids(&self) -> Vec<&str> {
        self.legs.iter().map(|l| l.route_id.as_str()).collect()
    }
}

/// Planning cost of a plan with the given components.
pub fn plan_cost(w: &Weights, segments: u32, transfers: usize, wait_steps: f64) -> f64 {
    w.l * segments as f64 + w.t * transfers as f64 + w.w * wait_steps
}

/// Expected wait, in steps, when boarding a route with this headway.
pub fn expected_wait_steps(headway_min: f64, step_min: u32) -> f64 {
    headway_min / 2.0 / step_min as f64
}

#[derive(Debug, Clone, Copy)]
enum Via {
    Origin,
    /// Alighted after riding `route` from `board_node` (label in the
    /// previous boarding layer).
    Ride { route: u32, board_node: u32, board_pos: u32, alight_pos: u32 },
    /// Boardable because the passenger alighted here.
    Stay,
    /// Boardable after walking from `from`, where the passenger alighted.
    Walk { from: u32 },
}

#[derive(Debug, Clone, Copy)]
struct Label {
    segs: u32,
    wait: f64,
    cost: f64,
    via: Via,
}

/// One-to-all search tree from a single origin for one weight vector.
struct Search<'a> {
    net: &'a Network,
    weights: Weights,
    /// alighted[k][node], k legs used
    alighted: Vec<Vec<Option<Label>>>,
    /// boardable[k][node]
    boardable: Vec<Vec<Option<Label>>>,
    rank: &'a [u32],
}

/// Position of each route id in sorted order, for lexicographic tie-breaks.
fn route_ranks(net: &Network) -> Vec<u32> {
    let mut order: Vec<usize> = (0..net.routes().len()).collect();
    order.sort_by(|&a, &b| net.route(a).route_id.cmp(&net.route(b).route_id));
    let mut rank = vec![0; order.len()];
    for (i, r) in order.into_iter().enumerate() {
        rank[r] = i as u32;
    }
    rank
}

impl<'a> Search<'a> {
    fn run(net: &'a Network, origin: usize, weights: Weights, config: &SimConfig, rank: &'a [u32]) -> Self {
        let n = net.node_count();
        let max_legs = config.max_transfers + 1;
        let mut s = Search {
            net,
            weights,
            alighted: vec![vec![None; n]],
            boardable: vec![vec![None; n]],
            rank,
        };
        s.boardable[0][origin] = Some(Label { segs: 0, wait: 0.0, cost: 0.0, via: Via::Origin });
        for k in 0..max_legs {
            let alighted = s.scan_routes(k, config);
            s.alighted.push(alighted);
            if k + 1 < max_legs {
                let boardable = s.relax_walks(k + 1);
                s.boardable.push(boardable);
            }
        }
        s
    }

    fn cost(&self, segs: u32, transfers: usize, wait: f64) -> f64 {
        plan_cost(&self.weights, segs, transfers, wait)
    }

    fn seq_boardable(&self, k: usize, node: usize, out: &mut Vec<u32>) {
        match self.boardable[k][node].expect("chain").via {
            Via::Origin => {}
            Via::Stay => self.seq_alighted(k, node, out),
            Via::Walk { from } => self.seq_alighted(k, from as usize, out),
            Via::Ride { .. } => unreachable!(),
        }
    }

    fn seq_alighted(&self, k: usize, node: usize, out: &mut Vec<u32>) {
        match self.alighted[k][node].expect("chain").via {
            Via::Ride { route, board_node, .. } => {
                self.seq_boardable(k - 1, board_node as usize, out);
                out.push(self.rank[route as usize]);
            }
            _ => unreachable!(),
        }
    }

    /// Route sequence of a label that would extend boardable[k][node] by `route`.
    fn seq_via(&self, k: usize, node: usize, route: Option<u32>) -> Vec<u32> {
        let mut v = Vec::with_capacity(k + 1);
        self.seq_boardable(k, node, &mut v);
        if let Some(r) = route {
            v.push(self.rank[r as usize]);
        }
        v
    }

    fn scan_routes(&self, k: usize, config: &SimConfig) -> Vec<Option<Label>> {
        let n = self.net.node_count();
        let mut best: Vec<Option<Label>> = vec![None; n];
        // cached route sequence of the current best at each node
        let mut best_seq: Vec<Option<Vec<u32>>> = vec![None; n];
        let prev = &self.boardable[k];
        for r in self.net.active_routes() {
            let line = self.net.route(r);
            let wait_add = expected_wait_steps(line.headway_min, config.step_min);
            let len = line.stops.len();
            for dir in [Direction::Forward, Direction::Reverse] {
                // carried boarding: (board_node, board_pos, segs at boarding, wait incl. this boarding)
                let mut carry: Option<(usize, usize, u32, f64)> = None;
                let mut carry_seq: Option<Vec<u32>> = None;
                for step in 0..len {
                    let pos = match dir {
                        Direction::Forward => step,
                        Direction::Reverse => len - 1 - step,
                    };
                    let node = line.stops[pos];
                    if let Some((bn, bp, segs0, wait)) = carry {
                        let segs = segs0 + bp.abs_diff(pos) as u32;
                        let cost = self.cost(segs, k, wait);
                        let better = match &best[node] {
                            None => true,
                            Some(cur) => match cost.total_cmp(&cur.cost) {
                                Ordering::Less => true,
                                Ordering::Greater => false,
                                Ordering::Equal => {
                                    let cur_seq = best_seq[node].as_ref().unwrap();
                                    carry_seq.as_ref().unwrap() < cur_seq
                                }
                            },
                        };
                        if better {
                            best[node] = Some(Label {
                                segs,
                                wait,
                                cost,
                                via: Via::Ride {
                                    route: r as u32,
                                    board_node: bn as u32,
                                    board_pos: bp as u32,
                                    alight_pos: pos as u32,
                                },
                            });
                            best_seq[node] = carry_seq.clone();
                        }
                    }
                    if step + 1 == len {
                        break;
                    }
                    if let Some(b) = prev[node] {
                        let wait = b.wait + wait_add;
                        let cand_cost = self.cost(b.segs, k, wait);
                        let take = match carry {
                            None => true,
                            Some((_, bp, segs0, cw)) => {
                                let cur_cost = self.cost(segs0 + bp.abs_diff(pos) as u32, k, cw);
                                match cand_cost.total_cmp(&cur_cost) {
                                    Ordering::Less => true,
                                    Ordering::Greater => false,
                                    Ordering::Equal => {
                                        let s = self.seq_via(k, node, Some(r as u32));
                                        s < *carry_seq.as_ref().unwrap()
                                    }
                                }
                            }
                        };
                        if take {
                            carry = Some((node, pos, b.segs, wait));
                            carry_seq = Some(self.seq_via(k, node, Some(r as u32)));
                        }
                    }
                }
            }
        }
        best
    }

    fn relax_walks(&self, k: usize) -> Vec<Option<Label>> {
        let n = self.net.node_count();
        let a = &self.alighted[k];
        let mut out: Vec<Option<Label>> = a.iter().map(|l| l.map(|l| Label { via: Via::Stay, ..l })).collect();
        for v in 0..n {
            for &(u, _) in self.net.walk_neighbours(v) {
                let Some(src) = a[u] else { continue };
                let better = match &out[v] {
                    None => true,
                    Some(cur) => match src.cost.total_cmp(&cur.cost) {
                        Ordering::Less => true,
                        Ordering::Greater => false,
                        Ordering::Equal => {
                            let mut s_new = Vec::new();
                            self.seq_alighted(k, u, &mut s_new);
                            let mut s_cur = Vec::new();
                            match cur.via {
                                Via::Stay => self.seq_alighted(k, v, &mut s_cur),
                                Via::Walk { from } => self.seq_alighted(k, from as usize, &mut s_cur),
                                _ => unreachable!(),
                            }
                            s_new < s_cur
                        }
                    },
                };
                if better {
                    out[v] = Some(Label { via: Via::Walk { from: u as u32 }, ..src });
                }
            }
        }
        out
    }

    fn plan_to(&self, dest: usize) -> TripPlan {
        let mut best: Option<(f64, usize, Vec<u32>)> = None;
        for k in 1..self.alighted.len() {
            let Some(l) = self.alighted[k][dest] else { continue };
            let mut seq = Vec::new();
            self.seq_alighted(k, dest, &mut seq);
            let cand = (l.cost, k, seq);
            let better = match &best {
                None => true,
                Some(cur) => cand.0.total_cmp(&cur.0).then(cand.1.cmp(&cur.1)).then(cand.2.cmp(&cur.2)) == Ordering::Less,
            };
            if better {
                best = Some(cand);
            }
        }
        let Some((cost, k, _)) = best else { return TripPlan::infeasible() };
        let label = self.alighted[k][dest].unwrap();
        let mut legs = Vec::with_capacity(k);
        let (mut layer, mut node) = (k, dest);
        while layer > 0 {
            let Via::Ride { route, board_node, board_pos, alight_pos } = self.alighted[layer][node].unwrap().via else {
                unreachable!()
            };
            let line = self.net.route(route as usize);
            legs.push(Leg {
                route_id: line.route_id.clone(),
                board_stop: self.net.stop_id(board_node as usize).to_string(),
                alight_stop: self.net.stop_id(node).to_string(),
                route: route as usize,
                board_pos: board_pos as usize,
                alight_pos: alight_pos as usize,
            });
            layer -= 1;
            node = match self.boardable[layer][board_node as usize].unwrap().via {
                Via::Walk { from } => from as usize,
                _ => board_node as usize,
            };
        }
        legs.reverse();
        TripPlan {
            legs,
            planned_cost: Some(cost),
            feasible: true,
            planned_segments: label.segs,
            expected_wait_steps: label.wait,
        }
    }
}

/// Plans one trip.
pub fn plan_trip(
    network: &Network,
    trip: &TripRecord,
    profile: &SensitivityProfile,
    config: &SimConfig,
) -> Result<TripPlan, NetworkError> {
    let origin = network.node_of(&trip.origin_stop).ok_or_else(|| NetworkError::UnknownStop(trip.origin_stop.clone()))?;
    let dest = network.node_of(&trip.dest_stop).ok_or_else(|| NetworkError::UnknownStop(trip.dest_stop.clone()))?;
    let rank = route_ranks(network);
    let search = Search::run(network, origin, *profile.get(trip.group), config, &rank);
    Ok(search.plan_to(dest))
}

/// Plans the trips at `indices`, sharing one search per (origin, group).
fn plan_subset(
    network: &Network,
    trips: &[TripRecord],
    indices: &[usize],
    profile: &SensitivityProfile,
    config: &SimConfig,
) -> Result<Vec<(usize, TripPlan)>, NetworkError> {
    let mut batches: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
    for &i in indices {
        let t = &trips[i];
        let o = network.node_of(&t.origin_stop).ok_or_else(|| NetworkError::UnknownStop(t.origin_stop.clone()))?;
        let d = network.node_of(&t.dest_stop).ok_or_else(|| NetworkError::UnknownStop(t.dest_stop.clone()))?;
        batches.entry((o, t.group.index())).or_default().push((i, d));
    }
    let rank = route_ranks(network);
    let batches: Vec<_> = batches.into_iter().collect();
    let planned: Vec<Vec<(usize, TripPlan)>> = batches
        .par_iter()
        .map(|((origin, g), members)| {
            let search = Search::run(network, *origin, profile.all()[*g], config, &rank);
            members.iter().map(|&(i, d)| (i, search.plan_to(d))).collect()
        })
        .collect();
    Ok(planned.into_iter().flatten().collect())
}

/// Plans every trip; the result is indexed like `trips`.
pub fn plan_all(
    network: &Network,
    trips: &[TripRecord],
    profile: &SensitivityProfile,
    config: &SimConfig,
) -> Result<Vec<TripPlan>, NetworkError> {
    let indices: Vec<usize> = (0..trips.len()).collect();
    let mut plans = vec![TripPlan::infeasible(); trips.len()];
    for (i, p) in plan_subset(network, trips, &indices, profile, config)? {
        plans[i] = p;
    }
    Ok(plans)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replanned {
    pub plans: Vec<TripPlan>,
    /// Trips whose previous plan rode a route no longer active.
    pub affected: Vec<usize>,
}

/// Replans only the trips whose current plan uses a route that is not
/// active in `network_after`. Everyone else keeps their plan verbatim.
pub fn replan_affected(
    network_after: &Network,
    plans_before: &[TripPlan],
    trips: &[TripRecord],
    profile: &SensitivityProfile,
    config: &SimConfig,
) -> Result<Replanned, NetworkError> {
    let affected: Vec<usize> = plans_before
        .iter()
        .enumerate()
        .filter(|(_, p)| p.feasible && p.legs.iter().any(|l| !network_after.is_active(l.route)))
        .map(|(i, _)| i)
        .collect();
    let mut plans = plans_before.to_vec();
    for (i, p) in plan_subset(network_after, trips, &affected, profile, config)? {
        plans[i] = p;
    }
    Ok(Replanned { plans, affected })
}
