//! Small fixtures shared by unit tests.

use crate::data::{Dataset, Group, RouteDef, Stop, TripRecord};
use crate::geo::LatLon;

/// Stops `N0..` along the equator with the given gaps in metres.
pub(crate) fn stops_on_line(spacings_m: &[f64]) -> Vec<Stop> {
    let origin = LatLon::new(0.0, 0.0);
    let mut east = 0.0;
    (0..=spacings_m.len())
        .map(|i| {
            if i > 0 {
                east += spacings_m[i - 1];
            }
            let p = origin.offset_m(0.0, east);
            Stop { stop_id: format!("N{i}"), lat: p.lat, lon: p.lon }
        })
        .collect()
}

/// Route over `N{i}` stops; headway 15, capacity 50, 24 km/h, first bus 06:00.
pub(crate) fn route(id: &str, seq: &[usize]) -> RouteDef {
    RouteDef {
        route_id: id.to_string(),
        stops: seq.iter().map(|i| format!("N{i}")).collect(),
        headway_min: 15.0,
        capacity: 50,
        v_off_kmh: 24.0,
        first_departure_min: 360,
    }
}

pub(crate) fn trip(pid: &str, group: Group, o: usize, d: usize, dep: u32) -> TripRecord {
    TripRecord {
        passenger_id: pid.to_string(),
        group,
        origin_stop: format!("N{o}"),
        dest_stop: format!("N{d}"),
        departure_min: dep,
    }
}

pub(crate) fn dataset(spacings_m: &[f64], routes: Vec<RouteDef>, trips: Vec<TripRecord>) -> Dataset {
    Dataset::new(stops_on_line(spacings_m), routes, trips, None).unwrap()
}
