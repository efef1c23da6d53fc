use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Shape of the two-peak slowdown shared by all routes. The off-peak speed
/// is per route and lives on the route definition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedParams {
    /// Morning peak centre, minutes since midnight.
    pub t_m: f64,
    /// Evening peak centre, minutes since midnight.
    pub t_e: f64,
    /// Peak width in minutes.
    pub sigma: f64,
    /// Slowdown magnitude at a peak centre.
    pub k: f64,
    /// Speed floor, km/h.
    pub v_min: f64,
}

impl Default for SpeedParams {
    fn default() -> Self {
        SpeedParams { t_m: 480.0, t_e: 1050.0, sigma: 60.0, k: 0.4, v_min: 8.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FailPolicy {
    /// Failed trips carry no score; the failure rate is reported separately.
    #[default]
    ExcludeFromMeanD,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub step_min: u32,
    pub transfer_radius_m: f64,
    pub crowding_threshold: f64,
    pub speed: SpeedParams,
    pub sparse_distance_m: f64,
    pub poi_buffer_m: f64,
    pub rng_seed: u64,
    pub fail_policy: FailPolicy,
    /// Simulated span after the first event before unfinished trips fail.
    pub horizon_min: u32,
    /// Transfer cap used by the planner.
    pub max_transfers: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            step_min: 5,
            transfer_radius_m: 300.0,
            crowding_threshold: 0.8,
            speed: SpeedParams::default(),
            sparse_distance_m: 800.0,
            poi_buffer_m: 300.0,
            rng_seed: 0,
            fail_policy: FailPolicy::ExcludeFromMeanD,
            horizon_min: 24 * 60,
            max_transfers: 3,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.step_min == 0 {
            return bad("step_min must be positive");
        }
        if !(self.transfer_radius_m >= 0.0 && self.transfer_radius_m.is_finite()) {
            return bad("transfer_radius_m must be finite and non-negative");
        }
        if !(self.crowding_threshold > 0.0 && self.crowding_threshold <= 1.0) {
            return bad("crowding_threshold must lie in (0, 1]");
        }
        if !(self.sparse_distance_m > 0.0 && self.poi_buffer_m > 0.0) {
            return bad("sparse_distance_m and poi_buffer_m must be positive");
        }
        if self.horizon_min == 0 {
            return bad("horizon_min must be positive");
        }
        let s = &self.speed;
        if !(s.v_min > 0.0) {
            return bad("speed.v_min must be positive");
        }
        if !(0.0..1.0).contains(&s.k) {
            return bad("speed.k must lie in [0, 1)");
        }
        if !(s.sigma > 0.0) {
            return bad("speed.sigma must be positive");
        }
        if !(s.t_m < s.t_e) {
            return bad("speed.t_m must precede speed.t_e");
        }
        Ok(())
    }
}
