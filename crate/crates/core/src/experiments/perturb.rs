//! Robustness of the group ordering to perturbed sensitivity weights.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Baseline;
use crate::config::SimConfig;
use crate::data::{write_csv, Dataset, Group, SensitivityProfile, Weights};
use crate::engine::run_simulation;
use crate::error::{DataError, Error};
use crate::network::build_network;
use crate::planner::plan_all;
use crate::stats::{kendall, mean, sample_sd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbMode {
    /// Re-score the baseline trip components with each perturbed profile.
    #[default]
    Fast,
    /// Re-plan and re-simulate under each perturbed profile.
    Full,
}

impl std::str::FromStr for PerturbMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "fast" => Ok(PerturbMode::Fast),
            "full" => Ok(PerturbMode::Full),
            _ => Err(format!("unknown perturbation mode {s:?} (expected fast or full)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub n_samples: usize,
    /// Half-width of the factor applied to all sixteen weights.
    pub global_range: f64,
    /// Half-width of the independent factor on each weight.
    pub individual_range: f64,
    pub seed: u64,
    pub mode: PerturbMode,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig { n_samples: 600, global_range: 0.15, individual_range: 0.10, seed: 0, mode: PerturbMode::Fast }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbSample {
    pub sample: usize,
    pub g: f64,
    /// Individual factors, by group then L, T, W, C.
    pub u: [[f64; 4]; 4],
    /// Mean D per group in `Group::ALL` order.
    pub d: [f64; 4],
    /// `d` standardized over all groups and samples together.
    pub z: [f64; 4],
    /// Kendall tau-b against the baseline group means; `None` if undefined.
    pub tau: Option<f64>,
    pub retained: bool,
}

/// Interquartile range of the per-sample difference between two groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqrGap {
    pub higher: Group,
    pub lower: Group,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub z_q1: f64,
    pub z_median: f64,
    pub z_q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub config: PerturbConfig,
    pub baseline_d: [f64; 4],
    /// True when every pair of baseline group means differs by more than
    /// the individual factors can close, so the ordering cannot change.
    pub gaps_exceed_envelope: bool,
    pub samples: Vec<PerturbSample>,
    pub retention_rate: f64,
    pub min_tau: Option<f64>,
    pub mean_tau: Option<f64>,
    pub iqr_gaps: Vec<IqrGap>,
}

/// Sample quantile with linear interpolation between order statistics
/// (the common "type 7" definition). `p` is clamped to [0, 1].
pub fn quantile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn factor(rng: &mut ChaCha8Rng, range: f64) -> f64 {
    1.0 + range * (2.0 * rng.random::<f64>() - 1.0)
}

struct Draw {
    g: f64,
    u: [[f64; 4]; 4],
}

fn draws(cfg: &PerturbConfig) -> Vec<Draw> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.n_samples)
        .map(|_| {
            let g = factor(&mut rng, cfg.global_range);
            let mut u = [[0.0; 4]; 4];
            for row in u.iter_mut() {
                for x in row.iter_mut() {
                    *x = factor(&mut rng, cfg.individual_range);
                }
            }
            Draw { g, u }
        })
        .collect()
}

fn perturbed(profile: &SensitivityProfile, d: &Draw) -> [[f64; 4]; 4] {
    Group::ALL.map(|g| {
        let w = profile.get(g).as_array();
        let u = d.u[g.index()];
        [0, 1, 2, 3].map(|k| w[k] * d.g * u[k])
    })
}

fn gaps_exceed_envelope(base: &[f64; 4], individual: f64) -> bool {
    if individual >= 1.0 {
        return false;
    }
    let ratio = (1.0 + individual) / (1.0 - individual);
    let mut v = base.to_vec();
    v.sort_by(f64::total_cmp);
    v.windows(2).all(|w| w[0] > 0.0 && w[1] > w[0] * ratio)
}

pub fn run_perturbation(
    dataset: &Dataset,
    baseline: &Baseline,
    profile: &SensitivityProfile,
    config: &SimConfig,
    cfg: &PerturbConfig,
) -> Result<PerturbationReport, Error> {
    if !(cfg.global_range >= 0.0 && cfg.individual_range >= 0.0) {
        return Err(Error::Config("perturbation ranges must be non-negative".into()));
    }
    let baseline_d = baseline.sim.aggregates.mean_d_by_group();
    let draws = draws(cfg);

    let ds: Vec<[f64; 4]> = match cfg.mode {
        PerturbMode::Fast => {
            let comps = Group::ALL.map(|g| baseline.sim.aggregates.group(g).mean_components);
            draws
                .iter()
                .map(|d| {
                    let w = perturbed(profile, d);
                    [0, 1, 2, 3].map(|gi| (0..4).map(|k| w[gi][k] * comps[gi][k]).sum())
                })
                .collect()
        }
        PerturbMode::Full => {
            let network = build_network(dataset, config);
            draws
                .par_iter()
                .map(|d| {
                    let w = perturbed(profile, d);
                    let p = SensitivityProfile::new(w.map(Weights::from_array))?;
                    let plans = plan_all(&network, dataset.trips(), &p, config)?;
                    let sim = run_simulation(&network, dataset.trips(), &plans, &p, config)?;
                    Ok(sim.aggregates.mean_d_by_group())
                })
                .collect::<Result<_, Error>>()?
        }
    };

    let pooled: Vec<f64> = ds.iter().flatten().copied().collect();
    let (m, sd) = (mean(&pooled), sample_sd(&pooled));
    let z = |v: f64| if sd > 0.0 { (v - m) / sd } else { 0.0 };

    let samples: Vec<PerturbSample> = draws
        .iter()
        .zip(&ds)
        .enumerate()
        .map(|(i, (draw, d))| {
            let tau = if d == &baseline_d { Some(1.0) } else { kendall(d, &baseline_d).ok() };
            PerturbSample {
                sample: i,
                g: draw.g,
                u: draw.u,
                d: *d,
                z: d.map(z),
                tau,
                retained: tau.is_some_and(|t| t >= 1.0 - 1e-12),
            }
        })
        .collect();

    let n = samples.len();
    let retention_rate = if n == 0 { 1.0 } else { samples.iter().filter(|s| s.retained).count() as f64 / n as f64 };
    let taus: Vec<f64> = samples.iter().filter_map(|s| s.tau).collect();
    let (min_tau, mean_tau) = if taus.len() == n && n > 0 {
        (Some(taus.iter().copied().fold(f64::INFINITY, f64::min)), Some(mean(&taus)))
    } else {
        (None, None)
    };

    let iqr_gaps = [(Group::Elderly, Group::Student), (Group::Disabled, Group::General)]
        .into_iter()
        .map(|(hi, lo)| {
            let raw: Vec<f64> = samples.iter().map(|s| s.d[hi.index()] - s.d[lo.index()]).collect();
            let zs: Vec<f64> = samples.iter().map(|s| s.z[hi.index()] - s.z[lo.index()]).collect();
            IqrGap {
                higher: hi,
                lower: lo,
                q1: quantile(&raw, 0.25),
                median: quantile(&raw, 0.5),
                q3: quantile(&raw, 0.75),
                z_q1: quantile(&zs, 0.25),
                z_median: quantile(&zs, 0.5),
                z_q3: quantile(&zs, 0.75),
            }
        })
        .collect();

    Ok(PerturbationReport {
        config: *cfg,
        baseline_d,
        gaps_exceed_envelope: gaps_exceed_envelope(&baseline_d, cfg.individual_range),
        samples,
        retention_rate,
        min_tau,
        mean_tau,
        iqr_gaps,
    })
}

#[derive(Serialize)]
struct PerturbRow {
    sample: usize,
    g: f64,
    #[serde(rename = "D_general")]
    d_general: f64,
    #[serde(rename = "D_student")]
    d_student: f64,
    #[serde(rename = "D_elderly")]
    d_elderly: f64,
    #[serde(rename = "D_disabled")]
    d_disabled: f64,
    z_general: f64,
    z_student: f64,
    z_elderly: f64,
    z_disabled: f64,
    tau: Option<f64>,
    retained: bool,
}

pub fn write_perturbation_csv(path: &Path, report: &PerturbationReport) -> Result<(), DataError> {
    let rows: Vec<PerturbRow> = report
        .samples
        .iter()
        .map(|s| PerturbRow {
            sample: s.sample,
            g: s.g,
            d_general: s.d[0],
            d_student: s.d[1],
            d_elderly: s.d[2],
            d_disabled: s.d[3],
            z_general: s.z[0],
            z_student: s.z[1],
            z_elderly: s.z[2],
            z_disabled: s.z[3],
            tau: s.tau,
            retained: s.retained,
        })
        .collect();
    write_csv(path, &rows)
}
