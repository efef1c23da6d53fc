//! `busnet` command-line driver.

mod manifest;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use busnet::data::load_dataset_dir;
use busnet::engine::{read_outcomes_csv, write_outcomes_csv};
use busnet::experiments::{
    regress_dimensions, removal_effects, run_baseline, run_ofat, run_perturbation, run_single_removal, run_sweep,
    validate_distributions, write_perturbation_csv, write_sweep_csv, Baseline, OfatScenario, PerturbConfig,
    PerturbMode, SweepMode,
};
use busnet::features::{
    compute_route_features, require_dimension, score_routes, write_features_csv, write_scores_csv, Coefficients,
    Dimension,
};
use busnet::network::{betweenness_by_stop, build_network, topology_metrics};
use busnet::synth::{generate_synthetic, SynthSpec, Topology};
use busnet::{Dataset, SensitivityProfile, SimConfig};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use manifest::Run;

#[derive(Parser, Debug)]
#[command(name = "busnet", version, about = "Agent-based bus network simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML file with simulation settings; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for synthetic data and weight perturbation.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads for concurrent scenarios (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct Inputs {
    /// Directory with stops.csv, routes.csv, trips.csv and optional pois.csv.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// JSON file with per-group sensitivity weights (default: calibrated).
    #[arg(long, value_name = "PATH")]
    sensitivity: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate input data.
    #[command(subcommand)]
    Gen(GenCmd),
    /// Inspect the transit graph.
    #[command(subcommand)]
    Net(NetCmd),
    /// Run simulations.
    #[command(subcommand)]
    Sim(SimCmd),
    /// Run route-removal and sensitivity experiments.
    #[command(subcommand)]
    Exp(ExpCmd),
    /// Statistical analyses.
    #[command(subcommand)]
    Stats(StatsCmd),
    /// Compare simulated outcomes with reference outcomes.
    #[command(subcommand)]
    Validate(ValidateCmd),
}

#[derive(Subcommand, Debug)]
enum GenCmd {
    /// Seeded synthetic network and demand.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// TOML file with generator settings.
    #[arg(long, value_name = "PATH")]
    spec: Option<PathBuf>,
    /// Start from the district-scale preset (79 routes, 72,750 trips).
    #[arg(long)]
    district: bool,
    #[arg(long, value_parser = parse_topology)]
    topology: Option<Topology>,
    #[arg(long)]
    routes: Option<usize>,
    #[arg(long)]
    stops: Option<usize>,
    #[arg(long)]
    trips: Option<usize>,
    #[arg(long)]
    capacity: Option<u32>,
}

#[derive(Subcommand, Debug)]
enum NetCmd {
    /// Build the graph and write edges and topology metrics.
    Build(Inputs),
}

#[derive(Subcommand, Debug)]
enum SimCmd {
    /// Plan and simulate every trip on the full network.
    Baseline(Inputs),
}

#[derive(Subcommand, Debug)]
enum ExpCmd {
    /// Remove one route and compare with the baseline.
    Remove {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        route: String,
    },
    /// Remove routes in ascending feature-score order.
    Sweep {
        #[command(flatten)]
        inputs: Inputs,
        /// capacity, structure, function or all.
        #[arg(long)]
        dimension: String,
        /// JSON file with per-dimension feature weights.
        #[arg(long, value_name = "PATH")]
        coefficients: Option<PathBuf>,
        /// Use the bundled reference weights instead of a file.
        #[arg(long, conflicts_with = "coefficients")]
        reference_coefficients: bool,
        #[arg(long, default_value = "static")]
        mode: SweepMode,
    },
    /// One-factor-at-a-time check of group responses.
    Ofat {
        #[command(flatten)]
        inputs: Inputs,
        /// WAIT+, TIME+, CROWD+, XFER+ or all.
        #[arg(long, default_value = "all")]
        scenario: String,
        /// Change factor (default: 2 for WAIT+/XFER+, 0.7 for TIME+, 0.5 for CROWD+).
        #[arg(long)]
        magnitude: Option<f64>,
    },
    /// Perturb sensitivity weights and check the group ordering.
    Perturb {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value_t = 600)]
        samples: usize,
        #[arg(long, default_value_t = 0.15)]
        global_range: f64,
        #[arg(long, default_value_t = 0.10)]
        individual_range: f64,
        #[arg(long, default_value = "fast")]
        mode: PerturbMode,
    },
}

#[derive(Subcommand, Debug)]
enum StatsCmd {
    /// Regress single-removal effects on route features per dimension.
    Regress {
        #[command(flatten)]
        inputs: Inputs,
        /// Fit on raw features instead of z-scores.
        #[arg(long)]
        raw: bool,
    },
}

#[derive(Subcommand, Debug)]
enum ValidateCmd {
    /// Compare trip-time and transfer distributions of two outcomes files.
    Compare {
        #[arg(long, value_name = "PATH")]
        simulated: PathBuf,
        #[arg(long, value_name = "PATH")]
        reference: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        bin_width: f64,
    },
}

fn parse_topology(s: &str) -> std::result::Result<Topology, String> {
    match s {
        "grid" => Ok(Topology::Grid),
        "hub-spoke" => Ok(Topology::HubSpoke),
        _ => Err(format!("unknown topology {s:?} (expected grid or hub-spoke)")),
    }
}

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<busnet::Error> for CliError {
    fn from(e: busnet::Error) -> Self {
        if e.is_validation() {
            CliError::Invalid(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<busnet::error::DataError> for CliError {
    fn from(e: busnet::error::DataError) -> Self {
        busnet::Error::from(e).into()
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn load_config(common: &Common) -> Result<SimConfig> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?
        }
        None => SimConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.rng_seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_inputs(inputs: &Inputs, run: &mut Run) -> Result<(Dataset, SensitivityProfile)> {
    for name in ["stops.csv", "routes.csv", "trips.csv", "pois.csv"] {
        let p = inputs.data.join(name);
        if p.exists() {
            run.input(&p)?;
        }
    }
    log::info!("loading dataset from {}", inputs.data.display());
    let ds = load_dataset_dir(&inputs.data)?;
    let profile = match &inputs.sensitivity {
        Some(p) => {
            run.input(p)?;
            SensitivityProfile::from_json_file(p)?
        }
        None => SensitivityProfile::calibrated_default(),
    };
    log::info!("{} stops, {} routes, {} trips", ds.stops().len(), ds.routes().len(), ds.trips().len());
    Ok((ds, profile))
}

fn baseline(ds: &Dataset, profile: &SensitivityProfile, cfg: &SimConfig) -> Result<Baseline> {
    log::info!("planning and simulating the baseline");
    let b = run_baseline(ds, profile, cfg)?;
    let a = &b.sim.aggregates.overall;
    log::info!("baseline mean D {:.4}, failure rate {:.4}", a.mean_d, a.failure_rate);
    Ok(b)
}

fn run(cli: Cli) -> Result<()> {
    let common = cli.common;
    if let Some(n) = common.jobs {
        if n == 0 {
            return Err(CliError::Invalid("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let cfg = load_config(&common)?;
    let mut run = Run::new(&common.out, &cfg)?;
    if let Some(p) = &common.config {
        run.input(p)?;
    }

    match cli.command {
        Command::Gen(GenCmd::Synth(a)) => {
            let mut spec = match &a.spec {
                Some(p) => {
                    run.input(p)?;
                    let text =
                        fs::read_to_string(p).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?;
                    toml::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?
                }
                None if a.district => SynthSpec::district_scale(),
                None => SynthSpec::default(),
            };
            if let Some(t) = a.topology {
                spec.topology = t;
            }
            if let Some(n) = a.routes {
                spec.n_routes = n;
            }
            if let Some(n) = a.stops {
                spec.n_stops = n;
            }
            if let Some(n) = a.trips {
                spec.n_trips = n;
            }
            if let Some(c) = a.capacity {
                spec.capacity = c;
            }
            run.set_command("gen synth", json!({ "spec": spec }));
            log::info!("generating {} routes and {} trips (seed {})", spec.n_routes, spec.n_trips, cfg.rng_seed);
            let ds = generate_synthetic(&spec, cfg.rng_seed)?;
            ds.write_dir(&common.out)?;
            for f in ["stops.csv", "routes.csv", "trips.csv", "pois.csv"] {
                if common.out.join(f).exists() {
                    run.output(f);
                }
            }
        }

        Command::Net(NetCmd::Build(inputs)) => {
            run.set_command("net build", json!({}));
            let (ds, _) = load_inputs(&inputs, &mut run)?;
            let net = build_network(&ds, &cfg);
            net.write_edges_csv(&run.path("edges.csv"))?;
            run.output("edges.csv");
            let topo = topology_metrics(&net);
            run.json("topology.json", &json!({ "metrics": topo, "betweenness": betweenness_by_stop(&net) }))?;
        }

        Command::Sim(SimCmd::Baseline(inputs)) => {
            run.set_command("sim baseline", json!({}));
            let (ds, profile) = load_inputs(&inputs, &mut run)?;
            let b = baseline(&ds, &profile, &cfg)?;
            run.json("aggregates.json", &b.sim.aggregates)?;
            write_outcomes_csv(&run.path("outcomes.csv"), &b.sim.outcomes)?;
            run.output("outcomes.csv");
        }

        Command::Exp(ExpCmd::Remove { inputs, route }) => {
            run.set_command("exp remove", json!({ "route": route }));
            let (ds, profile) = load_inputs(&inputs, &mut run)?;
            let b = baseline(&ds, &profile, &cfg)?;
            log::info!("removing route {route}");
            let r = run_single_removal(&ds, &b, &route, &profile, &cfg)?;
            run.json("scenario_result.json", &r.result)?;
            write_outcomes_csv(&run.path("outcomes.csv"), &r.sim.outcomes)?;
            run.output("outcomes.csv");
        }

        Command::Exp(ExpCmd::Sweep { inputs, dimension, coefficients, reference_coefficients, mode }) => {
            let dims: Vec<Dimension> = if dimension.eq_ignore_ascii_case("all") {
                Dimension::ALL.to_vec()
            } else {
                vec![dimension.parse().map_err(CliError::Invalid)?]
            };
            let coefs = match (&coefficients, reference_coefficients) {
                (Some(p), _) => {
                    run.input(p)?;
                    Coefficients::from_json_file(p)?
                }
                (None, true) => Coefficients::reference(),
                (None, false) => {
                    return Err(CliError::Invalid(format!(
                        "missing input: --coefficients PATH (feature weights for the {dimension} dimension; \
                         pass --reference-coefficients to use the bundled ones)"
                    )))
                }
            };
            for d in &dims {
                require_dimension(&coefs, *d)?;
            }
            run.set_command(
                "exp sweep",
                json!({ "dimensions": dims, "mode": mode, "reference_coefficients": reference_coefficients }),
            );
            let (ds, profile) = load_inputs(&inputs, &mut run)?;
            let b = baseline(&ds, &profile, &cfg)?;
            let table = compute_route_features(&b.network, &b.plans, ds.pois(), &cfg);
            write_features_csv(&run.path("features.csv"), &table)?;
            run.output("features.csv");
            let mut scores = Vec::new();
            let mut curves = Vec::new();
            for d in dims {
                let w = require_dimension(&coefs, d)?;
                scores.extend(score_routes(&table.routes, d, w));
                curves.push(run_sweep(&ds, &b, d, w, mode, &profile, &cfg)?);
            }
            write_scores_csv(&run.path("scores.csv"), &scores)?;
            run.output("scores.csv");
            write_sweep_csv(&run.path("sweep_curve.csv"), &curves)?;
            run.stamp_csv("sweep_curve.csv")?;
        }

        Command::Exp(ExpCmd::Ofat { inputs, scenario, magnitude }) => {
            let scenarios: Vec<OfatScenario> = if scenario.eq_ignore_ascii_case("all") {
                OfatScenario::ALL.to_vec()
            } else {
                vec![scenario.parse().map_err(CliError::Invalid)?]
            };
            let plan: Vec<(OfatScenario, f64)> =
                scenarios.into_iter().map(|s| (s, magnitude.unwrap_or_else(|| default_magnitude(s)))).collect();
            run.set_command("exp ofat", json!({ "scenarios": plan }));
            let (ds, profile) = load_inputs(&inputs, &mut run)?;
            let b = baseline(&ds, &profile, &cfg)?;
            let mut reports = Vec::new();
            for (s, m) in plan {
                log::info!("{s} with magnitude {m}");
                let r = run_ofat(&ds, &b, s, m, &profile, &cfg)?;
                log::info!("{s}: rank test {}", if r.rank_test.pass { "pass" } else { "fail" });
                reports.push(r);
            }
            run.json("ofat_report.json", &json!({ "reports": reports }))?;
        }

        Command::Exp(ExpCmd::Perturb { inputs, samples, global_range, individual_range, mode }) => {
            let pc = PerturbConfig { n_samples: samples, global_range, individual_range, seed: cfg.rng_seed, mode };
            run.set_command("exp perturb", json!({ "perturbation": pc }));
            let (ds, profile) = load_inputs(&inputs, &mut run)?;
            let b = baseline(&ds, &profile, &cfg)?;
            log::info!("drawing {samples} perturbed profiles ({mode:?} mode)");
            let report = run_perturbation(&ds, &b, &profile, &cfg, &pc)?;
            log::info!("rank retention {:.4}", report.retention_rate);
            write_perturbation_csv(&run.path("perturbation.csv"), &report)?;
            run.stamp_csv("perturbation.csv")?;
            run.json("perturbation_report.json", &report)?;
        }

        Command::Stats(StatsCmd::Regress { inputs, raw }) => {
            run.set_command("stats regress", json!({ "standardized": !raw }));
            let (ds, profile) = load_inputs(&inputs, &mut run)?;
            let b = baseline(&ds, &profile, &cfg)?;
            let table = compute_route_features(&b.network, &b.plans, ds.pois(), &cfg);
            write_features_csv(&run.path("features.csv"), &table)?;
            run.output("features.csv");
            log::info!("removing each of {} routes in turn", table.routes.len());
            let effects = removal_effects(&ds, &b, &profile, &cfg)?;
            let reg = regress_dimensions(&table, &effects, !raw);
            let effects: Vec<Value> =
                effects.iter().map(|(id, d)| json!({ "route_id": id, "delta_mean_d": d })).collect();
            run.json("regression_table.json", &json!({ "table": reg, "removal_effects": effects }))?;
            // coefficients.json stays in the input format accepted by `exp sweep`
            run.plain_json("coefficients.json", &reg.coefficients())?;
        }

        Command::Validate(ValidateCmd::Compare { simulated, reference, bin_width }) => {
            run.set_command("validate compare", json!({ "bin_width": bin_width }));
            run.input(&simulated)?;
            run.input(&reference)?;
            let a = read_outcomes_csv(&simulated)?;
            let b = read_outcomes_csv(&reference)?;
            let report = validate_distributions(&a, &b, bin_width)?;
            log::info!("trip-time KS {:.4}, TV {:.4}", report.trip_time.ks, report.trip_time.tv);
            run.json("validation_report.json", &report)?;
        }
    }
    run.finish()
}

fn default_magnitude(s: OfatScenario) -> f64 {
    match s {
        OfatScenario::WaitPlus | OfatScenario::XferPlus => 2.0,
        OfatScenario::TimePlus => 0.7,
        OfatScenario::CrowdPlus => 0.5,
    }
}
