//! Per-dimension regressions of single-removal effects on route features.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{active_route_ids, run_single_removal, Baseline};
use crate::config::SimConfig;
use crate::data::{Dataset, SensitivityProfile};
use crate::error::Error;
use crate::features::{Coefficients, Dimension, Feature, FeatureTable};
use crate::stats::{ols, stars, RegressionResult};

/// Change in overall mean D when each active route is removed on its own,
/// in route-table order.
pub fn removal_effects(
    dataset: &Dataset,
    baseline: &Baseline,
    profile: &SensitivityProfile,
    config: &SimConfig,
) -> Result<Vec<(String, f64)>, Error> {
    active_route_ids(&baseline.network)
        .par_iter()
        .map(|id| {
            let run = run_single_removal(dataset, baseline, id, profile, config)?;
            log::debug!("removal of {id}: dD = {:.6}", run.result.delta_d);
            Ok((id.clone(), run.result.delta_d))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionRegression {
    pub dimension: Dimension,
    /// Features entered in the fit, in coefficient order.
    pub features: Vec<String>,
    /// Features left out because they do not vary across routes.
    pub dropped: Vec<String>,
    /// `None` when the fit is impossible (see `note`).
    pub fit: Option<RegressionResult>,
    pub stars: Vec<String>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTable {
    pub response: String,
    pub standardized: bool,
    pub dimensions: Vec<DimensionRegression>,
}

impl RegressionTable {
    /// Fitted coefficients as feature-score weights, for dimensions that
    /// could be fitted.
    pub fn coefficients(&self) -> Coefficients {
        let mut c = Coefficients::empty();
        for d in &self.dimensions {
            if let Some(fit) = &d.fit {
                let named = d.dimension.features().iter().filter_map(|f| {
                    d.features.iter().position(|n| n == f.name()).map(|i| (*f, fit.coefficients[i]))
                });
                c.set(d.dimension, named.collect());
            }
        }
        c
    }
}

/// Regresses `effects` (route id, response) on each dimension's features.
/// Routes missing from either side are skipped.
pub fn regress_dimensions(table: &FeatureTable, effects: &[(String, f64)], standardize: bool) -> RegressionTable {
    let effect: BTreeMap<&str, f64> = effects.iter().map(|(id, v)| (id.as_str(), *v)).collect();
    let rows: Vec<_> = table.routes.iter().filter_map(|f| effect.get(f.route_id.as_str()).map(|y| (f, *y))).collect();
    let y: Vec<f64> = rows.iter().map(|(_, y)| *y).collect();
    let dimensions = Dimension::ALL
        .into_iter()
        .map(|dim| {
            let (kept, dropped): (Vec<Feature>, Vec<Feature>) = dim.features().iter().partition(|ft| {
                let v: Vec<f64> = rows.iter().map(|(f, _)| ft.value(f)).collect();
                v.iter().any(|x| *x != v[0])
            });
            let x: Vec<Vec<f64>> = rows.iter().map(|(f, _)| kept.iter().map(|ft| ft.value(f)).collect()).collect();
            let features = kept.iter().map(|f| f.name().to_string()).collect();
            let dropped: Vec<String> = dropped.iter().map(|f| f.name().to_string()).collect();
            let fit = if kept.is_empty() {
                Err("every feature is constant across routes".to_string())
            } else {
                ols(&x, &y, standardize).map_err(|e| e.to_string())
            };
            match fit {
                Ok(fit) => DimensionRegression {
                    dimension: dim,
                    features,
                    note: (!dropped.is_empty()).then(|| format!("constant across routes: {}", dropped.join(", "))),
                    dropped,
                    stars: fit.p_values.iter().map(|p| stars(*p).to_string()).collect(),
                    fit: Some(fit),
                },
                Err(e) => DimensionRegression { dimension: dim, features, dropped, fit: None, stars: Vec::new(), note: Some(e) },
            }
        })
        .collect();
    RegressionTable { response: "delta_mean_d".into(), standardized: standardize, dimensions }
}
