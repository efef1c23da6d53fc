//! Statistics used by the experiments: least squares, kernel densities,
//! rank correlations, elasticities and distribution distances.

mod kde;
mod ols;
mod rank;

use std::collections::BTreeMap;

pub use kde::{gaussian_kde, kde_grid, mode_of, scott_bandwidth, trapezoid};
pub use ols::{ols, stars, RegressionResult};
pub use rank::{average_ranks, kendall, spearman, tie_aware_spearman, RankTestResult};

use crate::error::StatsError;

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Standard deviation with n - 1 in the denominator; zero below two values.
pub fn sample_sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// z-scores using the sample standard deviation; `None` for constant input.
pub fn zscore_column(x: &[f64]) -> Option<Vec<f64>> {
    let sd = sample_sd(x);
    if !(sd > 0.0) {
        return None;
    }
    let m = mean(x);
    Some(x.iter().map(|v| (v - m) / sd).collect())
}

/// Pearson correlation; `None` when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Relative response over relative change: (dy / y) / (dx / x).
pub fn elasticity(y_base: f64, y_new: f64, x_base: f64, x_new: f64) -> Result<f64, StatsError> {
    if y_base == 0.0 {
        return Err(StatsError::Undefined("elasticity: baseline response is zero".into()));
    }
    if x_base == 0.0 {
        return Err(StatsError::Undefined("elasticity: baseline driver is zero".into()));
    }
    if x_new == x_base {
        return Err(StatsError::Undefined("elasticity: driver unchanged".into()));
    }
    Ok(((y_new - y_base) / y_base) / ((x_new - x_base) / x_base))
}

/// Two-sample Kolmogorov-Smirnov statistic: the largest gap between the
/// empirical CDFs.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::TooFewObservations { needed: 1, got: 0 });
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Probability mass per bin `floor(x / width)`.
pub fn histogram(x: &[f64], width: f64) -> BTreeMap<i64, f64> {
    let mut h = BTreeMap::new();
    for v in x {
        *h.entry((v / width).floor() as i64).or_insert(0.0) += 1.0;
    }
    let n = x.len() as f64;
    for m in h.values_mut() {
        *m /= n;
    }
    h
}

/// Total-variation distance between two binned distributions.
pub fn total_variation(p: &BTreeMap<i64, f64>, q: &BTreeMap<i64, f64>) -> f64 {
    let keys: std::collections::BTreeSet<&i64> = p.keys().chain(q.keys()).collect();
    let s: f64 = keys
        .into_iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum();
    (0.5 * s).min(1.0)
}
