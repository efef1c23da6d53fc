use std::f64::consts::PI;

use super::sample_sd;
use crate::error::StatsError;

/// Scott's rule: sample standard deviation times n^(-1/5).
pub fn scott_bandwidth(samples: &[f64]) -> Result<f64, StatsError> {
    if samples.len() < 2 {
        return Err(StatsError::TooFewObservations { needed: 2, got: samples.len() });
    }
    let sd = sample_sd(samples);
    if !(sd > 0.0) {
        return Err(StatsError::ZeroVariance("samples"));
    }
    Ok(sd * (samples.len() as f64).powf(-0.2))
}

/// Gaussian kernel density of `samples` evaluated at each grid point.
/// The bandwidth defaults to Scott's rule.
pub fn gaussian_kde(samples: &[f64], bandwidth: Option<f64>, grid: &[f64]) -> Result<Vec<f64>, StatsError> {
    let scott = scott_bandwidth(samples)?;
    let h = bandwidth.unwrap_or(scott);
    if !(h > 0.0 && h.is_finite()) {
        return Err(StatsError::Undefined(format!("bandwidth {h} is not positive")));
    }
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * PI).sqrt());
    Ok(grid
        .iter()
        .map(|&g| {
            let s: f64 = samples
                .iter()
                .map(|&x| {
                    let z = (g - x) / h;
                    (-0.5 * z * z).exp()
                })
                .sum();
            s * norm
        })
        .collect())
}

/// Evenly spaced grid from six bandwidths below the smallest sample to six
/// above the largest.
pub fn kde_grid(samples: &[f64], bandwidth: f64, points: usize) -> Vec<f64> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 6.0 * bandwidth;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 6.0 * bandwidth;
    let points = points.max(2);
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| lo + step * i as f64).collect()
}

/// Trapezoid-rule integral of `y` over `x`.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

/// Grid point of the highest density.
pub fn mode_of(grid: &[f64], density: &[f64]) -> f64 {
    let i = (0..density.len()).max_by(|&a, &b| density[a].total_cmp(&density[b])).unwrap_or(0);
    grid[i]
}
