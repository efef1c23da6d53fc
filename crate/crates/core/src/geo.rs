//! Great-circle distances on a spherical Earth.

use serde::{Deserialize, Serialize};

/// Mean Earth radius in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// A WGS84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }

    /// Point displaced by `north_m` / `east_m` metres using a local
    /// equirectangular approximation. Good enough for laying out synthetic
    /// networks a few tens of kilometres across.
    pub fn offset_m(&self, north_m: f64, east_m: f64) -> LatLon {
        let m_per_deg = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        let lat = self.lat + north_m / m_per_deg;
        let lon = self.lon + east_m / (m_per_deg * self.lat.to_radians().cos());
        LatLon { lat, lon }
    }
}

/// Haversine distance in metres.
pub fn haversine_m(a: LatLon, b: LatLon) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}
