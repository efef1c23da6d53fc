use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use super::{mean, zscore_column};
use crate::error::StatsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub std_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub intercept_std_error: f64,
    pub intercept_p_value: f64,
    pub r_squared: f64,
    pub f_statistic: f64,
    pub f_p_value: f64,
    pub n: usize,
    /// True when both the regressors and the response were z-scored.
    pub standardized: bool,
}

/// Significance stars: `***` p < 0.01, `**` p < 0.05, `*` p < 0.1.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

/// Inverts a symmetric positive semi-definite matrix by Gauss-Jordan
/// elimination with partial pivoting. A pivot that vanishes relative to the
/// largest diagonal entry means that column is a combination of earlier ones.
fn invert(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, StatsError> {
    let p = a.len();
    let scale = (0..p).map(|i| a[i][i].abs()).fold(0.0, f64::max);
    let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..p).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..p {
        let piv = (col..p)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        if m[piv][col].abs() <= tol {
            return Err(StatsError::RankDeficient(col));
        }
        m.swap(col, piv);
        let d = m[col][col];
        for v in m[col].iter_mut() {
            *v /= d;
        }
        for r in 0..p {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * p {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    Ok(m.into_iter().map(|r| r[p..].to_vec()).collect())
}

fn two_sided_t(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return 1.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// Least squares with an intercept. `x` holds one row per observation.
/// With `standardize` every regressor column and the response are z-scored
/// first, so coefficients are standardized betas and the intercept is zero
/// up to rounding.
pub fn ols(x: &[Vec<f64>], y: &[f64], standardize: bool) -> Result<RegressionResult, StatsError> {
    let n = y.len();
    if x.len() != n {
        return Err(StatsError::LengthMismatch(x.len(), n));
    }
    let p = x.first().map_or(0, |r| r.len());
    if x.iter().any(|r| r.len() != p) {
        return Err(StatsError::LengthMismatch(p, x.iter().map(|r| r.len()).find(|&l| l != p).unwrap()));
    }
    if n < p + 2 {
        return Err(StatsError::TooFewObservations { needed: p + 2, got: n });
    }

    let mut cols: Vec<Vec<f64>> = (0..p).map(|j| x.iter().map(|r| r[j]).collect()).collect();
    let mut y = y.to_vec();
    if standardize {
        for (j, c) in cols.iter_mut().enumerate() {
            *c = zscore_column(c).ok_or(StatsError::RankDeficient(j))?;
        }
        y = zscore_column(&y).ok_or(StatsError::ZeroVariance("response"))?;
    }

    let xbar: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
    let ybar = mean(&y);
    let xc: Vec<Vec<f64>> = cols.iter().zip(&xbar).map(|(c, m)| c.iter().map(|v| v - m).collect()).collect();
    let yc: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    let sst: f64 = yc.iter().map(|v| v * v).sum();
    if !(sst > 0.0) {
        return Err(StatsError::ZeroVariance("response"));
    }

    let xtx: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| xc[i].iter().zip(&xc[j]).map(|(a, b)| a * b).sum()).collect())
        .collect();
    let xty: Vec<f64> = (0..p).map(|i| xc[i].iter().zip(&yc).map(|(a, b)| a * b).sum()).collect();
    let inv = invert(&xtx)?;
    let b: Vec<f64> = (0..p).map(|i| (0..p).map(|j| inv[i][j] * xty[j]).sum()).collect();
    let intercept = ybar - b.iter().zip(&xbar).map(|(b, m)| b * m).sum::<f64>();

    let sse: f64 = (0..n)
        .map(|i| {
            let fit: f64 = (0..p).map(|j| b[j] * xc[j][i]).sum();
            (yc[i] - fit).powi(2)
        })
        .sum();
    let df = (n - p - 1) as f64;
    let sigma2 = sse / df;
    let r_squared = (1.0 - sse / sst).clamp(0.0, 1.0);

    let std_errors: Vec<f64> = (0..p).map(|i| (sigma2 * inv[i][i]).max(0.0).sqrt()).collect();
    let t_values: Vec<f64> = b.iter().zip(&std_errors).map(|(b, s)| b / s).collect();
    let p_values = t_values.iter().map(|&t| two_sided_t(t, df)).collect();
    let quad: f64 = (0..p).map(|i| (0..p).map(|j| xbar[i] * inv[i][j] * xbar[j]).sum::<f64>()).sum();
    let intercept_std_error = (sigma2 * (1.0 / n as f64 + quad)).max(0.0).sqrt();
    let intercept_p_value = two_sided_t(intercept / intercept_std_error, df);

    let (f_statistic, f_p_value) = if p == 0 {
        (0.0, 1.0)
    } else {
        let f = ((sst - sse) / p as f64) / sigma2;
        let pv = if f.is_finite() {
            FisherSnedecor::new(p as f64, df).expect("positive degrees of freedom").sf(f).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (f, pv)
    };

    Ok(RegressionResult {
        coefficients: b,
        intercept,
        std_errors,
        t_values,
        p_values,
        intercept_std_error,
        intercept_p_value,
        r_squared,
        f_statistic,
        f_p_value,
        n,
        standardized: standardize,
    })
}
