use crate::network::RouteLine;
use crate::planner::Direction;

/// A bus travelling one direction of a route, terminal to terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct BusState {
    pub route: usize,
    pub direction: Direction,
    /// Segment being travelled, counted in travel order.
    pub segment_index: usize,
    /// Metres left to the next stop.
    pub residual_m: f64,
    pub capacity: u32,
    /// Passenger indices currently aboard.
    pub onboard: Vec<usize>,
    /// Set once the far terminal has been reached.
    pub finished: bool,
}

/// A stop reached during one advance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopArrival {
    /// Position in the route's forward stop list.
    pub pos: usize,
    /// Distance into the advance at which the stop was reached.
    pub at_m: f64,
}

/// Route position of the `i`-th stop in travel order.
pub fn position_in_travel(line: &RouteLine, direction: Direction, i: usize) -> usize {
    match direction {
        Direction::Forward => i,
        Direction::Reverse => line.stops.len() - 1 - i,
    }
}

fn travel_segment_m(line: &RouteLine, direction: Direction, s: usize) -> f64 {
    match direction {
        Direction::Forward => line.segment_m(s),
        Direction::Reverse => line.segment_m(line.stops.len() - 2 - s),
    }
}

impl BusState {
    /// A bus standing at the starting terminal of `direction`.
    pub fn at_terminal(route: usize, line: &RouteLine, direction: Direction) -> Self {
        BusState {
            route,
            direction,
            segment_index: 0,
            residual_m: travel_segment_m(line, direction, 0),
            capacity: line.capacity,
            onboard: Vec::new(),
            finished: false,
        }
    }

    pub fn load_ratio(&self) -> f64 {
        self.onboard.len() as f64 / self.capacity as f64
    }

    /// Moves the bus `distance_m` along the route and returns every stop
    /// reached, in order. Distance left after a stop carries into the next
    /// segment. Reaching the far terminal finishes the trip and discards
    /// the rest of the advance.
    pub fn advance(&mut self, line: &RouteLine, distance_m: f64) -> Vec<StopArrival> {
        let mut out = Vec::new();
        if self.finished {
            return out;
        }
        let mut left = distance_m;
        let mut used = 0.0;
        while left >= self.residual_m {
            left -= self.residual_m;
            used += self.residual_m;
            self.segment_index += 1;
            out.push(StopArrival { pos: position_in_travel(line, self.direction, self.segment_index), at_m: used });
            if self.segment_index == line.segment_count() {
                self.finished = true;
                self.residual_m = 0.0;
                return out;
            }
            self.residual_m = travel_segment_m(line, self.direction, self.segment_index);
        }
        self.residual_m -= left;
        out
    }
}
