use serde::{Deserialize, Serialize};

use super::pearson;
use crate::error::StatsError;

/// 1-based ranks with tied values sharing the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn check(a: &[f64], b: &[f64]) -> Result<(), StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(StatsError::TooFewObservations { needed: 2, got: a.len() });
    }
    Ok(())
}

/// Spearman's rho with average ranks for ties. Undefined when either input
/// is entirely tied.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    check(a, b)?;
    pearson(&average_ranks(a), &average_ranks(b))
        .ok_or_else(|| StatsError::Undefined("spearman: an input has all values tied".into()))
}

/// Kendall's tau-b.
pub fn kendall(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    check(a, b)?;
    let n = a.len();
    let (mut conc, mut disc, mut tie_a, mut tie_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = a[i].total_cmp(&a[j]) as i64;
            let db = b[i].total_cmp(&b[j]) as i64;
            match (da, db) {
                (0, 0) => {
                    tie_a += 1;
                    tie_b += 1;
                }
                (0, _) => tie_a += 1,
                (_, 0) => tie_b += 1,
                _ if da == db => conc += 1,
                _ => disc += 1,
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = (((n0 - tie_a) * (n0 - tie_b)) as f64).sqrt();
    if denom == 0.0 {
        return Err(StatsError::Undefined("kendall: an input has all values tied".into()));
    }
    Ok((conc - disc) as f64 / denom)
}

/// Spearman agreement between `observed` values and an `expected` ordering
/// that may contain ties. Within each group of tied expected values the
/// observed ranks are replaced by their mean, so the order inside a tie is
/// not penalised but the tie group as a whole must sit where expected.
pub fn tie_aware_spearman(observed: &[f64], expected: &[f64]) -> Result<f64, StatsError> {
    check(observed, expected)?;
    let obs = average_ranks(observed);
    let exp = average_ranks(expected);
    let mut adjusted = obs.clone();
    for i in 0..exp.len() {
        let members: Vec<usize> = (0..exp.len()).filter(|&j| exp[j] == exp[i]).collect();
        adjusted[i] = members.iter().map(|&j| obs[j]).sum::<f64>() / members.len() as f64;
    }
    pearson(&adjusted, &exp).ok_or_else(|| StatsError::Undefined("tie-aware spearman: degenerate ranks".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTestResult {
    pub method: String,
    /// `None` when the statistic is undefined.
    pub statistic: Option<f64>,
    pub tie_note: String,
    pub threshold: f64,
    pub pass: bool,
}

impl RankTestResult {
    /// Passes when the statistic reaches `threshold` less a rounding slack.
    pub fn judge(method: &str, statistic: Result<f64, StatsError>, tie_note: String, threshold: f64) -> Self {
        let statistic = statistic.ok();
        RankTestResult {
            method: method.to_string(),
            statistic,
            tie_note,
            threshold,
            pass: statistic.is_some_and(|s| s >= threshold - 1e-12),
        }
    }
}
