//! Comparison of simulated trip-time and transfer distributions against a
//! reference set of outcomes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::TripOutcome;
use crate::error::{Error, StatsError};
use crate::stats::{gaussian_kde, histogram, ks_statistic, scott_bandwidth, total_variation, trapezoid};

/// Door-to-door minutes (waiting plus riding) of completed trips.
pub fn trip_times(outcomes: &[TripOutcome]) -> Vec<f64> {
    outcomes.iter().filter(|o| o.completed()).map(|o| o.in_vehicle_min + o.waiting_min).collect()
}

fn transfers(outcomes: &[TripOutcome]) -> Vec<f64> {
    outcomes.iter().filter(|o| o.completed()).map(|o| o.components.t as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeCurves {
    pub grid: Vec<f64>,
    pub simulated: Vec<f64>,
    pub reference: Vec<f64>,
    pub bandwidth_simulated: f64,
    pub bandwidth_reference: f64,
    pub integral_simulated: f64,
    pub integral_reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionComparison {
    pub n_simulated: usize,
    pub n_reference: usize,
    pub ks: f64,
    /// Total-variation distance between histograms with `bin_width`.
    pub tv: f64,
    pub bin_width: f64,
    pub histogram_simulated: BTreeMap<i64, f64>,
    pub histogram_reference: BTreeMap<i64, f64>,
    pub kde: Option<KdeCurves>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub trip_time: DistributionComparison,
    pub transfers: DistributionComparison,
}

fn kde_curves(a: &[f64], b: &[f64]) -> Result<KdeCurves, StatsError> {
    let ha = scott_bandwidth(a)?;
    let hb = scott_bandwidth(b)?;
    let h = ha.max(hb);
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min) - 6.0 * h;
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max) + 6.0 * h;
    // at least eight grid points per narrower bandwidth
    let points = (((hi - lo) / (ha.min(hb) / 8.0)).ceil() as usize).clamp(512, 20_000);
    let step = (hi - lo) / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    let simulated = gaussian_kde(a, Some(ha), &grid)?;
    let reference = gaussian_kde(b, Some(hb), &grid)?;
    Ok(KdeCurves {
        integral_simulated: trapezoid(&grid, &simulated),
        integral_reference: trapezoid(&grid, &reference),
        grid,
        simulated,
        reference,
        bandwidth_simulated: ha,
        bandwidth_reference: hb,
    })
}

fn compare(a: &[f64], b: &[f64], bin_width: f64, with_kde: bool) -> Result<DistributionComparison, Error> {
    let ks = ks_statistic(a, b)?;
    let ha = histogram(a, bin_width);
    let hb = histogram(b, bin_width);
    let (kde, note) = if with_kde {
        match kde_curves(a, b) {
            Ok(k) => (Some(k), None),
            Err(e) => (None, Some(format!("no density estimate: {e}"))),
        }
    } else {
        (None, None)
    };
    Ok(DistributionComparison {
        n_simulated: a.len(),
        n_reference: b.len(),
        ks,
        tv: total_variation(&ha, &hb),
        bin_width,
        histogram_simulated: ha,
        histogram_reference: hb,
        kde,
        note,
    })
}

/// Compares completed trips of `simulated` and `reference`. Trip times are
/// binned at `bin_width_min` for the total-variation distance and smoothed
/// with a Gaussian kernel; transfer counts use unit bins.
pub fn validate_distributions(
    simulated: &[TripOutcome],
    reference: &[TripOutcome],
    bin_width_min: f64,
) -> Result<ValidationReport, Error> {
    if !(bin_width_min > 0.0) {
        return Err(Error::Config(format!("bin width must be positive, got {bin_width_min}")));
    }
    let (ta, tb) = (trip_times(simulated), trip_times(reference));
    if ta.is_empty() || tb.is_empty() {
        return Err(StatsError::TooFewObservations { needed: 1, got: 0 }.into());
    }
    Ok(ValidationReport {
        trip_time: compare(&ta, &tb, bin_width_min, true)?,
        transfers: compare(&transfers(simulated), &transfers(reference), 1.0, false)?,
    })
}
