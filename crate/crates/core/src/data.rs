//! Record types, CSV ingestion and validation.
//!
//! A [`Dataset`] can only be obtained through [`Dataset::new`] or
//! [`load_dataset`], both of which check every record invariant and resolve
//! every cross reference. Once built it is immutable.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::geo::LatLon;

/// Passenger categories carried on the fare card.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    #[serde(alias = "general")]
    General,
    #[serde(alias = "student")]
    Student,
    #[serde(alias = "elderly")]
    Elderly,
    #[serde(alias = "disabled")]
    Disabled,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::General, Group::Student, Group::Elderly, Group::Disabled];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::General => "General",
            Group::Student => "Student",
            Group::Elderly => "Elderly",
            Group::Disabled => "Disabled",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "General" => Ok(Group::General),
            "Student" => Ok(Group::Student),
            "Elderly" => Ok(Group::Elderly),
            "Disabled" => Ok(Group::Disabled),
            other => Err(format!("unknown passenger group {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub stop_id: String,
    pub lat: f64,
    pub lon: f64,
}

impl Stop {
    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteDef {
    pub route_id: String,
    pub stops: Vec<String>,
    pub headway_min: f64,
    pub capacity: u32,
    pub v_off_kmh: f64,
    pub first_departure_min: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub passenger_id: String,
    pub group: Group,
    pub origin_stop: String,
    pub dest_stop: String,
    pub departure_min: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiRecord {
    pub poi_id: String,
    pub lat: f64,
    pub lon: f64,
    pub category: String,
}

/// The four dissatisfaction weights of one passenger group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    /// Travel segments.
    #[serde(rename = "L")]
    pub l: f64,
    /// Transfers.
    #[serde(rename = "T")]
    pub t: f64,
    /// Waiting steps.
    #[serde(rename = "W")]
    pub w: f64,
    /// Crowded steps.
    #[serde(rename = "C")]
    pub c: f64,
}

impl Weights {
    pub fn new(l: f64, t: f64, w: f64, c: f64) -> Self {
        Self { l, t, w, c }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.l, self.t, self.w, self.c]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.l * factor, self.t * factor, self.w * factor, self.c * factor)
    }
}

/// Per-group sensitivity weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<Group, Weights>", into = "BTreeMap<Group, Weights>")]
pub struct SensitivityProfile {
    weights: [Weights; 4],
}

const DEFAULT_SENSITIVITY: &str = include_str!("../data/sensitivity.json");

impl SensitivityProfile {
    pub fn new(weights: [Weights; 4]) -> Result<Self, DataError> {
        for (g, w) in Group::ALL.iter().zip(weights.iter()) {
            if w.as_array().iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(DataError::Invalid(format!(
                    "sensitivity weights for {g} must be finite and non-negative: {w:?}"
                )));
            }
        }
        Ok(Self { weights })
    }

    /// The calibrated default weights.
    pub fn calibrated_default() -> Self {
        serde_json::from_str(DEFAULT_SENSITIVITY).expect("bundled sensitivity.json is valid")
    }

    pub fn uniform(w: Weights) -> Result<Self, DataError> {
        Self::new([w; 4])
    }

    pub fn get(&self, group: Group) -> &Weights {
        &self.weights[group.index()]
    }

    pub fn set(&mut self, group: Group, w: Weights) -> Result<(), DataError> {
        let mut next = self.weights;
        next[group.index()] = w;
        *self = Self::new(next)?;
        Ok(())
    }

    pub fn all(&self) -> &[Weights; 4] {
        &self.weights
    }

    /// Column of one component across groups, in `Group::ALL` order.
    pub fn column(&self, component: usize) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (i, w) in self.weights.iter().enumerate() {
            out[i] = w.as_array()[component];
        }
        out
    }

    pub fn from_json_file(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| DataError::Invalid(format!("{}: {e}", path.display())))
    }
}

impl TryFrom<BTreeMap<Group, Weights>> for SensitivityProfile {
    type Error = DataError;

    fn try_from(map: BTreeMap<Group, Weights>) -> Result<Self, Self::Error> {
        let mut weights = [Weights::new(0.0, 0.0, 0.0, 0.0); 4];
        for g in Group::ALL {
            weights[g.index()] = *map
                .get(&g)
                .ok_or_else(|| DataError::Invalid(format!("sensitivity profile is missing group {g}")))?;
        }
        Self::new(weights)
    }
}

impl From<SensitivityProfile> for BTreeMap<Group, Weights> {
    fn from(p: SensitivityProfile) -> Self {
        Group::ALL.iter().map(|g| (*g, p.weights[g.index()])).collect()
    }
}

/// A fully validated transit dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    stops: Vec<Stop>,
    routes: Vec<RouteDef>,
    trips: Vec<TripRecord>,
    pois: Option<Vec<PoiRecord>>,
    stop_index: HashMap<String, usize>,
}

/// Where a batch of records came from, for error messages.
#[derive(Debug, Default, Clone)]
struct Provenance {
    stops: Source,
    routes: Source,
    trips: Source,
    pois: Source,
}

#[derive(Debug, Clone)]
struct Source {
    file: String,
    lines: Vec<u64>,
}

impl Default for Source {
    fn default() -> Self {
        Source { file: "<memory>".into(), lines: Vec::new() }
    }
}

impl Source {
    fn line(&self, i: usize) -> Option<u64> {
        self.lines.get(i).copied()
    }
}

impl Dataset {
    pub fn new(
        stops: Vec<Stop>,
        routes: Vec<RouteDef>,
        trips: Vec<TripRecord>,
        pois: Option<Vec<PoiRecord>>,
    ) -> Result<Self, DataError> {
        Self::validated(stops, routes, trips, pois, &Provenance::default())
    }

    fn validated(
        stops: Vec<Stop>,
        routes: Vec<RouteDef>,
        trips: Vec<TripRecord>,
        pois: Option<Vec<PoiRecord>>,
        src: &Provenance,
    ) -> Result<Self, DataError> {
        let mut stop_index = HashMap::with_capacity(stops.len());
        for (i, s) in stops.iter().enumerate() {
            let loc = |msg: String| DataError::record(&src.stops.file, src.stops.line(i), msg);
            if s.stop_id.is_empty() {
                return Err(loc("empty stop_id".into()));
            }
            if !s.position().is_valid() {
                return Err(DataError::CoordinateOutOfRange {
                    file: src.stops.file.clone(),
                    line: src.stops.line(i),
                    id: s.stop_id.clone(),
                    lat: s.lat,
                    lon: s.lon,
                });
            }
            if stop_index.insert(s.stop_id.clone(), i).is_some() {
                return Err(DataError::DuplicateKey {
                    file: src.stops.file.clone(),
                    line: src.stops.line(i),
                    key: s.stop_id.clone(),
                });
            }
        }

        let mut route_ids = HashSet::with_capacity(routes.len());
        for (i, r) in routes.iter().enumerate() {
            let line = src.routes.line(i);
            let loc = |msg: String| DataError::record(&src.routes.file, line, msg);
            if r.route_id.is_empty() {
                return Err(loc("empty route_id".into()));
            }
            if !route_ids.insert(r.route_id.as_str()) {
                return Err(DataError::DuplicateKey {
                    file: src.routes.file.clone(),
                    line,
                    key: r.route_id.clone(),
                });
            }
            if r.stops.len() < 2 {
                return Err(loc(format!("route {} needs at least two stops", r.route_id)));
            }
            for s in &r.stops {
                if !stop_index.contains_key(s) {
                    return Err(DataError::DanglingStop {
                        file: src.routes.file.clone(),
                        line,
                        stop_id: s.clone(),
                    });
                }
            }
            if let Some(w) = r.stops.windows(2).find(|w| w[0] == w[1]) {
                return Err(loc(format!(
                    "route {} repeats stop {} consecutively",
                    r.route_id, w[0]
                )));
            }
            if !(r.headway_min.is_finite() && r.headway_min > 0.0) {
                return Err(loc(format!("route {} headway must be positive", r.route_id)));
            }
            if r.capacity == 0 {
                return Err(loc(format!("route {} capacity must be positive", r.route_id)));
            }
            if !(r.v_off_kmh.is_finite() && r.v_off_kmh > 0.0) {
                return Err(loc(format!("route {} v_off must be positive", r.route_id)));
            }
        }

        let mut passenger_ids = HashSet::with_capacity(trips.len());
        for (i, t) in trips.iter().enumerate() {
            let line = src.trips.line(i);
            for s in [&t.origin_stop, &t.dest_stop] {
                if !stop_index.contains_key(s) {
                    return Err(DataError::DanglingStop {
                        file: src.trips.file.clone(),
                        line,
                        stop_id: s.clone(),
                    });
                }
            }
            if t.origin_stop == t.dest_stop {
                return Err(DataError::record(
                    &src.trips.file,
                    line,
                    format!("trip {} has identical origin and destination", t.passenger_id),
                ));
            }
            if !passenger_ids.insert(t.passenger_id.as_str()) {
                return Err(DataError::DuplicateKey {
                    file: src.trips.file.clone(),
                    line,
                    key: t.passenger_id.clone(),
                });
            }
        }

        if let Some(pois) = &pois {
            let mut ids = HashSet::with_capacity(pois.len());
            for (i, p) in pois.iter().enumerate() {
                let line = src.pois.line(i);
                if !LatLon::new(p.lat, p.lon).is_valid() {
                    return Err(DataError::CoordinateOutOfRange {
                        file: src.pois.file.clone(),
                        line,
                        id: p.poi_id.clone(),
                        lat: p.lat,
                        lon: p.lon,
                    });
                }
                if p.category.trim().is_empty() {
                    return Err(DataError::record(
                        &src.pois.file,
                        line,
                        format!("poi {} has an empty category", p.poi_id),
                    ));
                }
                if !ids.insert(p.poi_id.as_str()) {
                    return Err(DataError::DuplicateKey {
                        file: src.pois.file.clone(),
                        line,
                        key: p.poi_id.clone(),
                    });
                }
            }
        }

        Ok(Dataset { stops, routes, trips, pois, stop_index })
    }

    pub fn stops(&self) -> &[Stop] {
        &self.stops
    }

    pub fn routes(&self) -> &[RouteDef] {
        &self.routes
    }

    pub fn trips(&self) -> &[TripRecord] {
        &self.trips
    }

    pub fn pois(&self) -> Option<&[PoiRecord]> {
        self.pois.as_deref()
    }

    pub fn stop_idx(&self, stop_id: &str) -> Option<usize> {
        self.stop_index.get(stop_id).copied()
    }

    pub fn route_idx(&self, route_id: &str) -> Option<usize> {
        self.routes.iter().position(|r| r.route_id == route_id)
    }

    /// Copy with the route table replaced (re-validated).
    pub fn with_routes(&self, routes: Vec<RouteDef>) -> Result<Dataset, DataError> {
        Dataset::new(self.stops.clone(), routes, self.trips.clone(), self.pois.clone())
    }

    /// Copy with the trip table replaced (re-validated).
    pub fn with_trips(&self, trips: Vec<TripRecord>) -> Result<Dataset, DataError> {
        Dataset::new(self.stops.clone(), self.routes.clone(), trips, self.pois.clone())
    }

    /// Writes `stops.csv`, `routes.csv`, `trips.csv` and, when present,
    /// `pois.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), DataError> {
        fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
        write_csv(&dir.join("stops.csv"), &self.stops)?;
        let rows: Vec<RouteRow> = self.routes.iter().map(RouteRow::from).collect();
        write_csv(&dir.join("routes.csv"), &rows)?;
        write_csv(&dir.join("trips.csv"), &self.trips)?;
        if let Some(pois) = &self.pois {
            write_csv(&dir.join("pois.csv"), pois)?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RouteRow {
    route_id: String,
    stop_sequence: String,
    headway_min: f64,
    capacity: u32,
    v_off_kmh: f64,
    first_departure_min: u32,
}

impl From<&RouteDef> for RouteRow {
    fn from(r: &RouteDef) -> Self {
        RouteRow {
            route_id: r.route_id.clone(),
            stop_sequence: r.stops.join("|"),
            headway_min: r.headway_min,
            capacity: r.capacity,
            v_off_kmh: r.v_off_kmh,
            first_departure_min: r.first_departure_min,
        }
    }
}

impl From<RouteRow> for RouteDef {
    fn from(r: RouteRow) -> Self {
        RouteDef {
            route_id: r.route_id,
            stops: r.stop_sequence.split('|').map(|s| s.trim().to_string()).collect(),
            headway_min: r.headway_min,
            capacity: r.capacity,
            v_off_kmh: r.v_off_kmh,
            first_departure_min: r.first_departure_min,
        }
    }
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| DataError::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| DataError::csv(path, e))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))?;
    Ok(())
}

/// Reads a headed CSV file into typed rows, returning the 1-based line of
/// each record alongside it.
pub(crate) fn read_csv<T: for<'de> Deserialize<'de>>(
    path: &Path,
    expected: &[&str],
) -> Result<(Vec<T>, Vec<u64>), DataError> {
    let file = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DataError::csv(path, e))?;
    let headers = rdr.headers().map_err(|e| DataError::csv(path, e))?.clone();
    for col in expected {
        if !headers.iter().any(|h| h == *col) {
            return Err(DataError::Csv {
                file,
                line: Some(1),
                column: Some((*col).to_string()),
                message: "missing column in header".into(),
            });
        }
    }
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for result in rdr.records() {
        let record = result.map_err(|e| DataError::csv(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: T = record.deserialize(Some(&headers)).map_err(|e| {
            let column = match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err
                    .field()
                    .and_then(|f| headers.get(f as usize))
                    .map(str::to_string),
                _ => None,
            };
            DataError::Csv { file: file.clone(), line: Some(line), column, message: e.to_string() }
        })?;
        rows.push(row);
        lines.push(line);
    }
    Ok((rows, lines))
}

/// Loads and validates the four CSV inputs. `pois_path` may be `None`.
pub fn load_dataset(
    stops_path: &Path,
    routes_path: &Path,
    trips_path: &Path,
    pois_path: Option<&Path>,
) -> Result<Dataset, DataError> {
    let (stops, stop_lines) = read_csv::<Stop>(stops_path, &["stop_id", "lat", "lon"])?;
    let (route_rows, route_lines) = read_csv::<RouteRow>(
        routes_path,
        &["route_id", "stop_sequence", "headway_min", "capacity", "v_off_kmh", "first_departure_min"],
    )?;
    let (trips, trip_lines) = read_csv::<TripRecord>(
        trips_path,
        &["passenger_id", "group", "origin_stop", "dest_stop", "departure_min"],
    )?;
    let (pois, poi_lines) = match pois_path {
        Some(p) => {
            let (rows, lines) = read_csv::<PoiRecord>(p, &["poi_id", "lat", "lon", "category"])?;
            (Some(rows), lines)
        }
        None => (None, Vec::new()),
    };
    let src = Provenance {
        stops: Source { file: stops_path.display().to_string(), lines: stop_lines },
        routes: Source { file: routes_path.display().to_string(), lines: route_lines },
        trips: Source { file: trips_path.display().to_string(), lines: trip_lines },
        pois: Source {
            file: pois_path.map(|p| p.display().to_string()).unwrap_or_default(),
            lines: poi_lines,
        },
    };
    let routes = route_rows.into_iter().map(RouteDef::from).collect();
    Dataset::validated(stops, routes, trips, pois, &src)
}

/// Loads `stops.csv`, `routes.csv`, `trips.csv` and an optional `pois.csv`
/// from one directory.
pub fn load_dataset_dir(dir: &Path) -> Result<Dataset, DataError> {
    let pois = dir.join("pois.csv");
    load_dataset(
        &dir.join("stops.csv"),
        &dir.join("routes.csv"),
        &dir.join("trips.csv"),
        pois.exists().then_some(pois.as_path()),
    )
}
