//! Stepped simulation of buses and passengers.
//!
//! The clock advances in fixed steps. Within a step every bus moves at the
//! speed evaluated at the step start; stop arrivals and passenger
//! activations are placed at their exact minute inside the step and
//! processed in time order (activations first on ties, then bus id).
//! At each arrival onboard passengers whose leg ends there alight, then
//! waiting passengers board in queue order while seats remain.
//!
//! Accumulators follow the scoring components: `L` counts stop arrivals
//! while aboard (segments ridden), `T` is boardings minus one, `W` counts
//! step boundaries spent waiting, and `C` counts step boundaries spent
//! aboard a bus whose load ratio is at or above the crowding threshold.

mod bus;
mod speed;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use bus::{position_in_travel, BusState, StopArrival};
pub use speed::{speed_at, step_distance_m};

use crate::config::SimConfig;
use crate::data::{read_csv, write_csv, Group, SensitivityProfile, TripRecord, Weights};
use crate::error::{DataError, Error};
use crate::network::Network;
use crate::planner::{Direction, TripPlan};

/// Scoring components of one trip.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Components {
    pub l: u32,
    pub t: u32,
    pub w: u32,
    pub c: u32,
}

impl Components {
    pub fn as_array(&self) -> [f64; 4] {
        [self.l as f64, self.t as f64, self.w as f64, self.c as f64]
    }
}

/// Weighted dissatisfaction of a set of components.
pub fn compute_dissatisfaction(c: &Components, w: &Weights) -> f64 {
    w.l * c.l as f64 + w.t * c.t as f64 + w.w * c.w as f64 + w.c * c.c as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TripStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    NoPath,
    Horizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripOutcome {
    pub passenger_id: String,
    pub group: Group,
    pub status: TripStatus,
    pub failure: Option<FailureReason>,
    pub components: Components,
    /// `None` for failed trips.
    pub d: Option<f64>,
    pub in_vehicle_min: f64,
    pub waiting_min: f64,
    pub crowded_min: f64,
}

impl TripOutcome {
    pub fn completed(&self) -> bool {
        self.status == TripStatus::Completed
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupAggregate {
    pub trips: usize,
    pub completed: usize,
    pub failed: usize,
    pub failure_rate: f64,
    pub mean_in_vehicle_min: f64,
    pub mean_transfers: f64,
    pub mean_waiting_min: f64,
    pub mean_crowded_min: f64,
    pub mean_d: f64,
    /// Load ratio averaged over the steps this group spent aboard.
    pub mean_load_ratio: f64,
    /// Mean L, T, W, C over completed trips.
    pub mean_components: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub groups: BTreeMap<Group, GroupAggregate>,
    pub overall: GroupAggregate,
    /// Load ratio averaged over every bus in service at every step end.
    pub system_mean_load_ratio: f64,
    pub start_min: f64,
    pub steps: u32,
}

impl AggregateReport {
    pub fn group(&self, g: Group) -> &GroupAggregate {
        &self.groups[&g]
    }

    /// Mean D per group in `Group::ALL` order.
    pub fn mean_d_by_group(&self) -> [f64; 4] {
        Group::ALL.map(|g| self.group(g).mean_d)
    }
}

/// Everything the engine can log, for replay checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SimEvent {
    Activate { step: u32, time: f64, passenger: usize },
    Dispatch { step: u32, time: f64, bus: usize, route: usize, direction: Direction },
    Arrive { step: u32, time: f64, bus: usize, pos: usize },
    Alight { step: u32, time: f64, bus: usize, passenger: usize },
    Board { step: u32, time: f64, bus: usize, passenger: usize },
    BusLoad { step: u32, bus: usize, load: usize, capacity: u32 },
    StepEnd { step: u32, time: f64 },
    Fail { passenger: usize, reason: FailureReason },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimOptions {
    pub record_events: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub outcomes: Vec<TripOutcome>,
    pub aggregates: AggregateReport,
    pub events: Option<Vec<SimEvent>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Pending,
    Waiting,
    Onboard,
    Arrived,
    Failed(FailureReason),
}

#[derive(Debug, Clone)]
struct Pax {
    phase: Phase,
    leg: usize,
    comps: Components,
    boardings: u32,
    ready_step: u32,
    board_time: f64,
    in_vehicle: f64,
    load_sum: f64,
    load_steps: u32,
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    Activate(usize),
    Arrive { bus: usize, pos: usize, first: bool },
}

struct Timed {
    time: f64,
    class: u8,
    key: usize,
    seq: usize,
    ev: Ev,
}

/// Runs one simulation over `trips` with the given plans (indexed like
/// `trips`).
pub fn run_simulation(
    network: &Network,
    trips: &[TripRecord],
    plans: &[TripPlan],
    profile: &SensitivityProfile,
    config: &SimConfig,
) -> Result<SimResult, Error> {
    run_simulation_with(network, trips, plans, profile, config, SimOptions::default())
}

pub fn run_simulation_with(
    network: &Network,
    trips: &[TripRecord],
    plans: &[TripPlan],
    profile: &SensitivityProfile,
    config: &SimConfig,
    options: SimOptions,
) -> Result<SimResult, Error> {
    config.validate()?;
    if trips.len() != plans.len() {
        return Err(Error::Runtime(format!("{} trips but {} plans", trips.len(), plans.len())));
    }
    for (i, p) in plans.iter().enumerate() {
        for leg in &p.legs {
            if !network.is_active(leg.route) {
                return Err(Error::Runtime(format!(
                    "plan for {} uses inactive route {}",
                    trips[i].passenger_id, leg.route_id
                )));
            }
        }
    }
    for r in network.active_routes() {
        let line = network.route(r);
        if line.v_off_kmh < config.speed.v_min {
            return Err(Error::Config(format!(
                "route {} off-peak speed {} is below speed.v_min {}",
                line.route_id, line.v_off_kmh, config.speed.v_min
            )));
        }
    }
    Ok(Engine::new(network, trips, plans, config, options).run(profile))
}

struct Engine<'a> {
    net: &'a Network,
    trips: &'a [TripRecord],
    plans: &'a [TripPlan],
    config: &'a SimConfig,
    step: f64,
    pax: Vec<Pax>,
    pid_rank: Vec<usize>,
    /// Activation order: trip indices sorted by departure, then rank.
    activation: Vec<usize>,
    next_activation: usize,
    /// Boarding queues keyed by (route, direction, position).
    queue_base: Vec<usize>,
    queues: Vec<BTreeSet<(u32, usize)>>,
    buses: Vec<BusState>,
    dispatch_time: Vec<f64>,
    in_service: Vec<usize>,
    next_dispatch: Vec<u32>,
    live: usize,
    system_load_sum: f64,
    system_load_n: u64,
    events: Option<Vec<SimEvent>>,
}

impl<'a> Engine<'a> {
    fn new(
        net: &'a Network,
        trips: &'a [TripRecord],
        plans: &'a [TripPlan],
        config: &'a SimConfig,
        options: SimOptions,
    ) -> Self {
        let mut by_id: Vec<usize> = (0..trips.len()).collect();
        by_id.sort_by(|&a, &b| trips[a].passenger_id.cmp(&trips[b].passenger_id).then(a.cmp(&b)));
        let mut pid_rank = vec![0; trips.len()];
        for (rank, &i) in by_id.iter().enumerate() {
            pid_rank[i] = rank;
        }
        let mut activation: Vec<usize> = (0..trips.len()).collect();
        activation.sort_by_key(|&i| (trips[i].departure_min, pid_rank[i]));

        let mut queue_base = Vec::with_capacity(net.routes().len());
        let mut n = 0;
        for line in net.routes() {
            queue_base.push(n);
            n += 2 * line.stops.len();
        }
        let pax = vec![
            Pax {
                phase: Phase::Pending,
                leg: 0,
                comps: Components::default(),
                boardings: 0,
                ready_step: 0,
                board_time: 0.0,
                in_vehicle: 0.0,
                load_sum: 0.0,
                load_steps: 0,
            };
            trips.len()
        ];
        Engine {
            net,
            trips,
            plans,
            config,
            step: config.step_min as f64,
            pax,
            pid_rank,
            activation,
            next_activation: 0,
            queue_base,
            queues: vec![BTreeSet::new(); n],
            buses: Vec::new(),
            dispatch_time: Vec::new(),
            in_service: Vec::new(),
            next_dispatch: vec![0; net.routes().len()],
            live: trips.len(),
            system_load_sum: 0.0,
            system_load_n: 0,
            events: options.record_events.then(Vec::new),
        }
    }

    fn log(&mut self, e: SimEvent) {
        if let Some(ev) = self.events.as_mut() {
            ev.push(e);
        }
    }

    fn queue_key(&self, route: usize, dir: Direction, pos: usize) -> usize {
        let len = self.net.route(route).stops.len();
        self.queue_base[route] + if dir == Direction::Forward { 0 } else { len } + pos
    }

    fn enqueue(&mut self, p: usize, step: u32) {
        let leg = &self.plans[p].legs[self.pax[p].leg];
        let key = self.queue_key(leg.route, leg.direction(), leg.board_pos);
        self.pax[p].phase = Phase::Waiting;
        self.pax[p].ready_step = step;
        self.queues[key].insert((step, self.pid_rank[p]));
    }

    fn start_min(&self) -> f64 {
        let first_dep = self.trips.iter().map(|t| t.departure_min).min();
        let first_bus = self.net.active_routes().map(|r| self.net.route(r).first_departure_min).min();
        let t = match (first_dep, first_bus) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) => a,
            _ => 0,
        };
        (t as f64 / self.step).floor() * self.step
    }

    fn run(mut self, profile: &SensitivityProfile) -> SimResult {
        let t0 = self.start_min();
        let horizon_end = t0 + self.config.horizon_min as f64;
        let mut by_rank = vec![0; self.trips.len()];
        for (i, &r) in self.pid_rank.iter().enumerate() {
            by_rank[r] = i;
        }
        let mut k: u32 = 0;
        while self.live > 0 {
            let t_start = t0 + k as f64 * self.step;
            if t_start >= horizon_end {
                break;
            }
            self.run_step(k, t_start, &by_rank);
            k += 1;
        }
        // anything still live ran out of horizon
        for p in 0..self.pax.len() {
            match self.pax[p].phase {
                Phase::Waiting => {
                    self.pax[p].comps.w += k - self.pax[p].ready_step;
                }
                Phase::Pending | Phase::Onboard => {}
                _ => continue,
            }
            self.pax[p].phase = Phase::Failed(FailureReason::Horizon);
            self.log(SimEvent::Fail { passenger: p, reason: FailureReason::Horizon });
        }
        self.finish(profile, t0, k)
    }

    fn run_step(&mut self, k: u32, t_start: f64, by_rank: &[usize]) {
        let t_end = t_start + self.step;
        let mut evs: Vec<Timed> = Vec::new();

        while self.next_activation < self.activation.len() {
            let p = self.activation[self.next_activation];
            let dep = self.trips[p].departure_min as f64;
            if dep >= t_end {
                break;
            }
            evs.push(Timed { time: dep, class: 0, key: self.pid_rank[p], seq: 0, ev: Ev::Activate(p) });
            self.next_activation += 1;
        }

        let routes: Vec<usize> = self.net.active_routes().collect();
        for r in routes {
            let line = self.net.route(r);
            loop {
                let t = line.first_departure_min as f64 + self.next_dispatch[r] as f64 * line.headway_min;
                if t >= t_end {
                    break;
                }
                self.next_dispatch[r] += 1;
                for dir in [Direction::Forward, Direction::Reverse] {
                    let id = self.buses.len();
                    self.buses.push(BusState::at_terminal(r, line, dir));
                    self.dispatch_time.push(t);
                    self.in_service.push(id);
                    self.log(SimEvent::Dispatch { step: k, time: t, bus: id, route: r, direction: dir });
                }
            }
        }

        for &b in &self.in_service {
            let line = self.net.route(self.buses[b].route);
            let dispatched = self.dispatch_time[b];
            let start = dispatched.max(t_start);
            let mut seq = 0;
            if dispatched >= t_start {
                let pos = position_in_travel(line, self.buses[b].direction, 0);
                evs.push(Timed { time: dispatched, class: 1, key: b, seq, ev: Ev::Arrive { bus: b, pos, first: true } });
                seq += 1;
            }
            let m_per_min = step_distance_m(&self.config.speed, line.v_off_kmh, t_start, 1);
            for a in self.buses[b].advance(line, m_per_min * (t_end - start)) {
                evs.push(Timed {
                    time: start + a.at_m / m_per_min,
                    class: 1,
                    key: b,
                    seq,
                    ev: Ev::Arrive { bus: b, pos: a.pos, first: false },
                });
                seq += 1;
            }
        }

        evs.sort_by(|a, b| {
            a.time
                .total_cmp(&b.time)
                .then(a.class.cmp(&b.class))
                .then(a.key.cmp(&b.key))
                .then(a.seq.cmp(&b.seq))
        });

        for e in evs {
            match e.ev {
                Ev::Activate(p) => {
                    self.log(SimEvent::Activate { step: k, time: e.time, passenger: p });
                    if self.plans[p].feasible {
                        self.enqueue(p, k);
                    } else {
                        self.pax[p].phase = Phase::Failed(FailureReason::NoPath);
                        self.live -= 1;
                        self.log(SimEvent::Fail { passenger: p, reason: FailureReason::NoPath });
                    }
                }
                Ev::Arrive { bus, pos, first } => self.arrive(k, e.time, bus, pos, first, by_rank),
            }
        }

        self.in_service.retain(|&b| !self.buses[b].finished);
        let thr = self.config.crowding_threshold;
        for i in 0..self.in_service.len() {
            let b = self.in_service[i];
            let ratio = self.buses[b].load_ratio();
            self.system_load_sum += ratio;
            self.system_load_n += 1;
            let crowded = ratio >= thr;
            for &p in &self.buses[b].onboard {
                let px = &mut self.pax[p];
                px.load_sum += ratio;
                px.load_steps += 1;
                if crowded {
                    px.comps.c += 1;
                }
            }
            if self.events.is_some() {
                let load = self.buses[b].onboard.len();
                let capacity = self.buses[b].capacity;
                self.log(SimEvent::BusLoad { step: k, bus: b, load, capacity });
            }
        }
        self.log(SimEvent::StepEnd { step: k, time: t_end });
    }

    fn arrive(&mut self, k: u32, time: f64, b: usize, pos: usize, first: bool, by_rank: &[usize]) {
        self.log(SimEvent::Arrive { step: k, time, bus: b, pos });
        if !first {
            for &p in &self.buses[b].onboard {
                self.pax[p].comps.l += 1;
            }
        }

        let mut leaving: Vec<usize> = self.buses[b]
            .onboard
            .iter()
            .copied()
            .filter(|&p| self.plans[p].legs[self.pax[p].leg].alight_pos == pos)
            .collect();
        if !leaving.is_empty() {
            leaving.sort_by_key(|&p| self.pid_rank[p]);
            self.buses[b].onboard.retain(|p| !leaving.contains(p));
            for p in leaving {
                self.log(SimEvent::Alight { step: k, time, bus: b, passenger: p });
                let px = &mut self.pax[p];
                px.in_vehicle += time - px.board_time;
                px.leg += 1;
                if px.leg == self.plans[p].legs.len() {
                    px.phase = Phase::Arrived;
                    self.live -= 1;
                } else {
                    self.enqueue(p, k);
                }
            }
        }
        let line = self.net.route(self.buses[b].route);
        if pos == position_in_travel(line, self.buses[b].direction, line.segment_count()) {
            // far terminal: the bus retires here
            debug_assert!(self.buses[b].onboard.is_empty());
            return;
        }

        let key = self.queue_key(self.buses[b].route, self.buses[b].direction, pos);
        while (self.buses[b].onboard.len() as u32) < self.buses[b].capacity {
            let Some((ready, rank)) = self.queues[key].pop_first() else { break };
            let p = by_rank[rank];
            let px = &mut self.pax[p];
            debug_assert_eq!(px.phase, Phase::Waiting);
            px.comps.w += k - ready;
            px.boardings += 1;
            px.comps.t = px.boardings - 1;
            px.board_time = time;
            px.phase = Phase::Onboard;
            self.buses[b].onboard.push(p);
            assert!(self.buses[b].onboard.len() as u32 <= self.buses[b].capacity);
            self.log(SimEvent::Board { step: k, time, bus: b, passenger: p });
        }
    }

    fn finish(self, profile: &SensitivityProfile, t0: f64, steps: u32) -> SimResult {
        let step = self.step;
        let outcomes: Vec<TripOutcome> = self
            .pax
            .iter()
            .zip(self.trips)
            .map(|(px, trip)| {
                let completed = px.phase == Phase::Arrived;
                TripOutcome {
                    passenger_id: trip.passenger_id.clone(),
                    group: trip.group,
                    status: if completed { TripStatus::Completed } else { TripStatus::Failed },
                    failure: match px.phase {
                        Phase::Failed(r) => Some(r),
                        _ => None,
                    },
                    components: px.comps,
                    d: completed.then(|| compute_dissatisfaction(&px.comps, profile.get(trip.group))),
                    in_vehicle_min: px.in_vehicle,
                    waiting_min: px.comps.w as f64 * step,
                    crowded_min: px.comps.c as f64 * step,
                }
            })
            .collect();
        let loads: Vec<(f64, u32)> = self.pax.iter().map(|p| (p.load_sum, p.load_steps)).collect();
        let system = if self.system_load_n == 0 { 0.0 } else { self.system_load_sum / self.system_load_n as f64 };
        let aggregates = aggregate(&outcomes, Some(&loads), system, t0, steps);
        SimResult { outcomes, aggregates, events: self.events }
    }
}

fn summarize<'o>(items: impl Iterator<Item = (&'o TripOutcome, (f64, u32))>) -> GroupAggregate {
    let mut a = GroupAggregate::default();
    let mut sums = [0.0; 8];
    let (mut load_sum, mut load_steps) = (0.0, 0u64);
    for (o, (ls, lsteps)) in items {
        a.trips += 1;
        load_sum += ls;
        load_steps += lsteps as u64;
        if !o.completed() {
            a.failed += 1;
            continue;
        }
        a.completed += 1;
        let c = o.components.as_array();
        for j in 0..4 {
            sums[j] += c[j];
        }
        sums[4] += o.in_vehicle_min;
        sums[5] += o.waiting_min;
        sums[6] += o.crowded_min;
        sums[7] += o.d.unwrap_or(0.0);
    }
    if a.trips > 0 {
        a.failure_rate = a.failed as f64 / a.trips as f64;
    }
    if a.completed > 0 {
        let n = a.completed as f64;
        for j in 0..4 {
            a.mean_components[j] = sums[j] / n;
        }
        a.mean_transfers = a.mean_components[1];
        a.mean_in_vehicle_min = sums[4] / n;
        a.mean_waiting_min = sums[5] / n;
        a.mean_crowded_min = sums[6] / n;
        a.mean_d = sums[7] / n;
    }
    if load_steps > 0 {
        a.mean_load_ratio = load_sum / load_steps as f64;
    }
    a
}

/// Per-group and overall summaries. Means are over completed trips; with
/// no completed trips every mean is zero.
pub fn aggregate(
    outcomes: &[TripOutcome],
    loads: Option<&[(f64, u32)]>,
    system_mean_load_ratio: f64,
    start_min: f64,
    steps: u32,
) -> AggregateReport {
    let load = |i: usize| loads.map(|l| l[i]).unwrap_or((0.0, 0));
    let groups = Group::ALL
        .iter()
        .map(|&g| {
            let items = outcomes.iter().enumerate().filter(|(_, o)| o.group == g).map(|(i, o)| (o, load(i)));
            (g, summarize(items))
        })
        .collect();
    let overall = summarize(outcomes.iter().enumerate().map(|(i, o)| (o, load(i))));
    AggregateReport { groups, overall, system_mean_load_ratio, start_min, steps }
}

#[derive(Serialize, Deserialize)]
struct OutcomeRow {
    passenger_id: String,
    group: Group,
    status: TripStatus,
    #[serde(rename = "L")]
    l: u32,
    #[serde(rename = "T")]
    t: u32,
    #[serde(rename = "W")]
    w: u32,
    #[serde(rename = "C")]
    c: u32,
    #[serde(rename = "D")]
    d: Option<f64>,
    in_vehicle_min: f64,
    waiting_min: f64,
    crowded_min: f64,
}

const OUTCOME_COLUMNS: [&str; 11] =
    ["passenger_id", "group", "status", "L", "T", "W", "C", "D", "in_vehicle_min", "waiting_min", "crowded_min"];

pub fn write_outcomes_csv(path: &Path, outcomes: &[TripOutcome]) -> Result<(), DataError> {
    let rows: Vec<OutcomeRow> = outcomes
        .iter()
        .map(|o| OutcomeRow {
            passenger_id: o.passenger_id.clone(),
            group: o.group,
            status: o.status,
            l: o.components.l,
            t: o.components.t,
            w: o.components.w,
            c: o.components.c,
            d: o.d,
            in_vehicle_min: o.in_vehicle_min,
            waiting_min: o.waiting_min,
            crowded_min: o.crowded_min,
        })
        .collect();
    write_csv(path, &rows)
}

/// Reads a file written by [`write_outcomes_csv`]. The failure reason is not
/// stored there, so it comes back as `None`.
pub fn read_outcomes_csv(path: &Path) -> Result<Vec<TripOutcome>, DataError> {
    let (rows, _) = read_csv::<OutcomeRow>(path, &OUTCOME_COLUMNS)?;
    Ok(rows
        .into_iter()
        .map(|r| TripOutcome {
            passenger_id: r.passenger_id,
            group: r.group,
            status: r.status,
            failure: None,
            components: Components { l: r.l, t: r.t, w: r.w, c: r.c },
            d: r.d,
            in_vehicle_min: r.in_vehicle_min,
            waiting_min: r.waiting_min,
            crowded_min: r.crowded_min,
        })
        .collect())
}
