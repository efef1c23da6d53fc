//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion prints exactly one PASS/FAIL line, then exits non-zero if any
//! failed.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use busnet::engine::{compute_dissatisfaction, speed_at, Components};
use busnet::experiments::{
    removal_count, run_baseline, run_ofat, run_perturbation, run_sweep, validate_distributions, OfatScenario,
    PerturbConfig, PerturbMode, SweepMode,
};
use busnet::features::{Coefficients, Dimension};
use busnet::network::{betweenness_of, build_network, topology_of};
use busnet::planner::{plan_all, plan_trip, replan_affected};
use busnet::stats::ols;
use busnet::synth::{generate_synthetic, SynthSpec, Topology};
use busnet::{Dataset, Group, SensitivityProfile, SimConfig, SpeedParams, Weights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- 1

fn dissatisfaction_formula() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let c = Components {
            l: rng.random_range(0..60),
            t: rng.random_range(0..4),
            w: rng.random_range(0..40),
            c: rng.random_range(0..30),
        };
        let b = Weights::new(rng.random(), rng.random(), rng.random(), rng.random());
        let want = b.l * c.l as f64 + b.t * c.t as f64 + b.w * c.w as f64 + b.c * c.c as f64;
        worst = worst.max((compute_dissatisfaction(&c, &b) - want).abs());
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;

    let prof = SensitivityProfile::calibrated_default();
    let general = compute_dissatisfaction(&Components { l: 2, t: 1, w: 3, c: 0 }, prof.get(Group::General));
    let disabled = compute_dissatisfaction(&Components { l: 1, t: 0, w: 0, c: 2 }, prof.get(Group::Disabled));
    ensure((general - 1.986).abs() < 1e-12, || format!("General example gives {general}"))?;
    ensure((disabled - 1.950).abs() < 1e-12, || format!("Disabled example gives {disabled}"))?;

    // scores the engine reports for simulated trips obey the same formula
    let ds = generate_synthetic(&SynthSpec { n_trips: 400, ..SynthSpec::default() }, 3).map_err(|e| e.to_string())?;
    let b = run_baseline(&ds, &prof, &SimConfig::default()).map_err(|e| e.to_string())?;
    for o in b.sim.outcomes.iter().filter(|o| o.completed()) {
        let w = prof.get(o.group);
        let c = &o.components;
        let want = w.l * c.l as f64 + w.t * c.t as f64 + w.w * c.w as f64 + w.c * c.c as f64;
        let got = o.d.ok_or("completed trip without a score")?;
        ensure((got - want).abs() <= 1e-12, || format!("{}: engine D {got} vs {want}", o.passenger_id))?;
    }
    Ok(format!("1000 draws, max deviation {worst:e}; examples {general:.3} and {disabled:.3}"))
}

// ---------------------------------------------------------------- 2

fn speed_envelope() -> Check {
    let p = SpeedParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1_000_000 {
        let t = rng.random_range(-200.0..1700.0);
        let v_off = rng.random_range(p.v_min..60.0);
        let v = speed_at(&p, v_off, t);
        ensure(v >= p.v_min && v <= v_off, || format!("speed {v} outside [{}, {v_off}] at t={t}", p.v_min))?;
    }
    let flat = SpeedParams { k: 0.0, ..p };
    for i in 0..1440 {
        let v = speed_at(&flat, 27.5, i as f64);
        ensure(v == 27.5, || format!("k=0 gives {v} at t={i}"))?;
    }
    let peak = speed_at(&p, 30.0, p.t_m);
    ensure((peak - 18.0).abs() <= 0.01, || format!("peak speed {peak}"))?;
    Ok(format!("10^6 draws inside the envelope; morning peak {peak:.4} km/h"))
}

// ---------------------------------------------------------------- 3

fn graph_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for g in 0..50 {
        let n = rng.random_range(2..=15);
        let p = rng.random_range(0.05..0.6);
        let adj = oracles::random_graph(&mut rng, n, p);
        let (bc_want, apl_want) = oracles::brute_topology(&adj);
        let bc = betweenness_of(&adj);
        for (a, b) in bc.iter().zip(&bc_want) {
            worst = worst.max((a - b).abs());
        }
        let pairs = adj.iter().map(Vec::len).sum();
        let apl = topology_of(&adj, pairs).avg_path_length;
        match (apl, apl_want) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
            (a, b) => ensure(a == b, || format!("graph {g}: path length {a:?} vs {b:?}"))?,
        }
    }
    ensure(worst <= 1e-9, || format!("max deviation {worst:e}"))?;
    Ok(format!("50 graphs, max deviation {worst:e}"))
}

// ---------------------------------------------------------------- 4

fn planner_optimality() -> Check {
    let cfg = SimConfig::default();
    let prof = SensitivityProfile::calibrated_default();
    let (mut checked, mut removals) = (0, 0);
    for seed in 0..20 {
        let ds = oracles::random_fixture(seed, 12, 6, 16);
        let net = build_network(&ds, &cfg);
        let active = vec![true; ds.routes().len()];
        for t in ds.trips() {
            let plan = plan_trip(&net, t, &prof, &cfg).map_err(|e| e.to_string())?;
            let want = oracles::oracle_plan_cost(
                &ds,
                &active,
                prof.get(t.group),
                &t.origin_stop,
                &t.dest_stop,
                cfg.max_transfers + 1,
                cfg.step_min,
                cfg.transfer_radius_m,
            );
            match (plan.planned_cost, want) {
                (Some(a), Some(b)) => {
                    ensure((a - b).abs() < 1e-9, || format!("fixture {seed} {}: {a} vs {b}", t.passenger_id))?
                }
                (a, b) => ensure(a == b, || format!("fixture {seed} {}: {a:?} vs {b:?}", t.passenger_id))?,
            }
            checked += 1;
        }
        let before = plan_all(&net, ds.trips(), &prof, &cfg).map_err(|e| e.to_string())?;
        for r in ds.routes() {
            let after_net = net.remove_route(&r.route_id).map_err(|e| e.to_string())?;
            let after = replan_affected(&after_net, &before, ds.trips(), &prof, &cfg).map_err(|e| e.to_string())?;
            for (b, a) in before.iter().zip(&after.plans) {
                ensure(b.feasible || !a.feasible, || format!("fixture {seed}: removal made a trip feasible"))?;
                if let (Some(x), Some(y)) = (b.planned_cost, a.planned_cost) {
                    ensure(y >= x - 1e-12, || format!("fixture {seed}: cost fell {x} -> {y}"))?;
                }
            }
            removals += 1;
        }
    }
    Ok(format!("{checked} trips match exhaustive search; {removals} removals monotone"))
}

// ---------------------------------------------------------------- 5

fn ofat_protocol() -> Check {
    // capacity 12 gives the network enough crowding to carry the
    // time and transfer signals
    let ds = generate_synthetic(&SynthSpec { capacity: 12, ..SynthSpec::default() }, 1).map_err(|e| e.to_string())?;
    ensure(ds.routes().len() == 10 && ds.trips().len() == 2000, || "unexpected fixture size".into())?;
    let prof = SensitivityProfile::calibrated_default();
    let cfg = SimConfig::default();
    let b = run_baseline(&ds, &prof, &cfg).map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    for (s, m) in [(OfatScenario::WaitPlus, 2.0), (OfatScenario::TimePlus, 0.7), (OfatScenario::XferPlus, 2.0)] {
        let r = run_ofat(&ds, &b, s, m, &prof, &cfg).map_err(|e| e.to_string())?;
        let rho = r.rank_test.statistic.unwrap_or(f64::NAN);
        ensure(r.rank_test.pass && (rho - 1.0).abs() < 1e-12, || format!("{s}: rho {rho}, {:?}", r.elasticities))?;
        summary.push(format!("{s} rho={rho:.3}"));
    }
    let crowd = run_ofat(&ds, &b, OfatScenario::CrowdPlus, 0.5, &prof, &cfg).map_err(|e| e.to_string())?;
    ensure(crowd.baseline_load_ratio < 0.3 && crowd.low_signal, || {
        format!("CROWD+ load {} low_signal {}", crowd.baseline_load_ratio, crowd.low_signal)
    })?;
    summary.push(format!("CROWD+ low-signal (load {:.3})", crowd.baseline_load_ratio));
    Ok(summary.join(", "))
}

// ---------------------------------------------------------------- 6

/// Reassigns groups by quartile of planned cost under a single weight
/// set (Student cheapest, then General, Elderly, Disabled) so that group
/// means sit far apart.
fn spread_groups(ds: &Dataset, cfg: &SimConfig) -> Result<Dataset, String> {
    let flat = SensitivityProfile::uniform(Weights::new(1.0, 1.0, 1.0, 1.0)).map_err(|e| e.to_string())?;
    let plans = plan_all(&build_network(ds, cfg), ds.trips(), &flat, cfg).map_err(|e| e.to_string())?;
    let mut order: Vec<(f64, usize)> =
        plans.iter().enumerate().map(|(i, p)| (p.planned_cost.unwrap_or(f64::INFINITY), i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut trips = ds.trips().to_vec();
    let ladder = [Group::Student, Group::General, Group::Elderly, Group::Disabled];
    for (rank, (_, i)) in order.iter().enumerate() {
        trips[*i].group = ladder[rank * 4 / order.len()];
    }
    ds.with_trips(trips).map_err(|e| e.to_string())
}

fn perturbation_robustness() -> Check {
    let prof = SensitivityProfile::calibrated_default();
    let cfg = SimConfig::default();
    let ds = spread_groups(&generate_synthetic(&SynthSpec::default(), 4).map_err(|e| e.to_string())?, &cfg)?;
    let b = run_baseline(&ds, &prof, &cfg).map_err(|e| e.to_string())?;
    let pc = PerturbConfig {
        n_samples: 600,
        global_range: 0.15,
        individual_range: 0.10,
        seed: 6,
        mode: PerturbMode::Fast,
    };
    let r = run_perturbation(&ds, &b, &prof, &cfg, &pc).map_err(|e| e.to_string())?;
    ensure(r.gaps_exceed_envelope, || format!("fixture gaps too small: {:?}", r.baseline_d))?;
    let min_tau = r.min_tau.unwrap_or(f64::NAN);
    ensure(r.samples.len() == 600, || "wrong sample count".into())?;
    ensure(r.samples.iter().all(|s| s.tau == Some(1.0)), || format!("min tau {min_tau}"))?;
    ensure(r.retention_rate == 1.0, || format!("retention {}", r.retention_rate))?;
    Ok(format!("baseline D {:.3?}; min tau {min_tau}, retention {:.1}%", r.baseline_d, 100.0 * r.retention_rate))
}

// ---------------------------------------------------------------- 7

fn sweep_protocol() -> Check {
    let prof = SensitivityProfile::calibrated_default();
    let cfg = SimConfig::default();
    let coefs = Coefficients::reference();
    let ds = generate_synthetic(&SynthSpec::default(), 7).map_err(|e| e.to_string())?;
    let b = run_baseline(&ds, &prof, &cfg).map_err(|e| e.to_string())?;
    ensure(removal_count(10) == 6, || "removal count for 10 routes is not 6".into())?;
    for dim in Dimension::ALL {
        let w = coefs.dimension(dim).ok_or("missing reference coefficients")?;
        let curve = run_sweep(&ds, &b, dim, w, SweepMode::Static, &prof, &cfg).map_err(|e| e.to_string())?;
        let removed = curve.points.iter().filter(|p| p.removed_route.is_some()).count();
        ensure(removed == 6, || format!("{dim} sweep removed {removed} routes"))?;
        let fr: Vec<f64> = curve.points.iter().map(|p| p.failure_rate).collect();
        ensure(fr.windows(2).all(|w| w[1] >= w[0]), || format!("{dim} failure rates {fr:?}"))?;
    }

    // hub-and-spoke: open the outer ring so the inner circulator is the
    // only route joining every spoke
    let hs = generate_synthetic(&SynthSpec { topology: Topology::HubSpoke, ..SynthSpec::default() }, 7)
        .map_err(|e| e.to_string())?;
    let routes = hs
        .routes()
        .iter()
        .cloned()
        .map(|mut r| {
            if r.route_id == "RING" {
                r.stops.pop();
            }
            r
        })
        .collect();
    let hs = hs.with_routes(routes).map_err(|e| e.to_string())?;
    ensure(hs.routes().len() == 10, || "hub-and-spoke fixture should have 10 routes".into())?;
    let hb = run_baseline(&hs, &prof, &cfg).map_err(|e| e.to_string())?;
    let w = coefs.dimension(Dimension::Structure).unwrap();
    let curve = run_sweep(&hs, &hb, Dimension::Structure, w, SweepMode::Static, &prof, &cfg).map_err(|e| e.to_string())?;
    let deltas = curve.step_deltas();
    let (best, best_delta) = deltas
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, d)| if *d > acc.1 { (i, *d) } else { acc });
    let hub_step = curve.points.iter().position(|p| p.removed_route.as_deref() == Some("HUB")).ok_or("HUB never removed")?;
    ensure(best + 1 == hub_step, || format!("largest step is {best} ({best_delta}); HUB removed at {hub_step}; {deltas:?}"))?;
    let second = deltas.iter().enumerate().filter(|(i, _)| *i != best).map(|(_, d)| *d).fold(f64::NEG_INFINITY, f64::max);
    Ok(format!("3 sweeps x 6 removals, failures non-decreasing; HUB step dD {best_delta:.3} vs next {second:.3}"))
}

// ---------------------------------------------------------------- 8

fn regression_oracle() -> Check {
    let hand = ols(&[vec![0.0], vec![1.0], vec![2.0]], &[1.0, 2.0, 2.0], false).map_err(|e| e.to_string())?;
    ensure(
        (hand.coefficients[0] - 0.5).abs() < 1e-10
            && (hand.intercept - 7.0 / 6.0).abs() < 1e-10
            && (hand.r_squared - 0.75).abs() < 1e-10,
        || format!("hand example gives {hand:?}"),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut worst, mut worst_icpt) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = rng.random_range(6..60);
        let p = rng.random_range(1..=4);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| 1.5 + r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(-2.0..2.0))
            .collect();
        let fit = ols(&x, &y, false).map_err(|e| e.to_string())?;
        let (b, b0, r2) = oracles::pinv_ols(&x, &y);
        for (u, v) in fit.coefficients.iter().zip(&b) {
            worst = worst.max((u - v).abs() / (1.0 + v.abs()));
        }
        worst = worst.max((fit.intercept - b0).abs() / (1.0 + b0.abs())).max((fit.r_squared - r2).abs());
        let z = ols(&x, &y, true).map_err(|e| e.to_string())?;
        worst_icpt = worst_icpt.max(z.intercept.abs());
    }
    ensure(worst <= 1e-8, || format!("max deviation from pseudo-inverse {worst:e}"))?;
    ensure(worst_icpt < 1e-10, || format!("z-scored intercept {worst_icpt:e}"))?;
    Ok(format!("hand example exact; 100 instances within {worst:.1e}; max |z intercept| {worst_icpt:.1e}"))
}

// ---------------------------------------------------------------- 9

fn busnet(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_busnet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("busnet {} exited {:?}: {}", args.join(" "), out.status.code(), String::from_utf8_lossy(&out.stderr))
    })
}

/// File name to contents, with the manifest timestamp dropped.
fn snapshot(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut m = BTreeMap::new();
    for e in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let p = e.map_err(|e| e.to_string())?.path();
        let name = p.file_name().unwrap().to_string_lossy().to_string();
        let mut bytes = std::fs::read(&p).map_err(|e| e.to_string())?;
        if name == "manifest.json" {
            let mut v: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
            v.as_object_mut().unwrap().remove("timestamp_unix");
            bytes = v.to_string().into_bytes();
        }
        m.insert(name, bytes);
    }
    Ok(m)
}

fn twice(root: &Path, tag: &str, args: &[&str]) -> Result<(usize, Duration), String> {
    let mut snaps = Vec::new();
    let mut slowest = Duration::ZERO;
    for i in 0..2 {
        let out: PathBuf = root.join(format!("{tag}{i}"));
        let mut a = args.to_vec();
        let o = out.to_string_lossy().to_string();
        a.extend(["--out", &o]);
        let t = Instant::now();
        busnet(&a)?;
        slowest = slowest.max(t.elapsed());
        snaps.push(snapshot(&out)?);
    }
    ensure(snaps[0].len() > 1, || format!("{tag}: nothing written"))?;
    for (name, bytes) in &snaps[0] {
        ensure(snaps[1].get(name) == Some(bytes), || format!("{tag}: {name} differs between runs"))?;
    }
    ensure(snaps[0].len() == snaps[1].len(), || format!("{tag}: different file sets"))?;
    Ok((snaps[0].len(), slowest))
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let s = |p: PathBuf| p.to_string_lossy().to_string();

    twice(root, "gen", &["gen", "synth", "--seed", "7"])?;
    let small = s(root.join("gen0"));
    twice(root, "base", &["sim", "baseline", "--data", &small, "--seed", "7"])?;
    let sweep = ["exp", "sweep", "--dimension", "all", "--reference-coefficients", "--data", &small, "--seed", "7"];
    twice(root, "sweep", &sweep)?;

    let district = s(root.join("district"));
    busnet(&["gen", "synth", "--district", "--seed", "42", "--out", &district])?;
    let (_, base_time) = twice(root, "dbase", &["sim", "baseline", "--data", &district, "--seed", "42"])?;
    ensure(base_time < Duration::from_secs(300), || format!("district baseline took {base_time:?}"))?;
    let dsweep = ["exp", "sweep", "--dimension", "structure", "--reference-coefficients", "--data", &district];
    let (_, sweep_time) = twice(root, "dsweep", &dsweep)?;
    Ok(format!(
        "byte-identical reruns; district baseline {:.1}s, district sweep {:.1}s",
        base_time.as_secs_f64(),
        sweep_time.as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 10

fn distribution_validation() -> Check {
    let ds = generate_synthetic(&SynthSpec::default(), 10).map_err(|e| e.to_string())?;
    let b = run_baseline(&ds, &SensitivityProfile::calibrated_default(), &SimConfig::default())
        .map_err(|e| e.to_string())?;
    let r = validate_distributions(&b.sim.outcomes, &b.sim.outcomes, 5.0).map_err(|e| e.to_string())?;
    for (name, c) in [("trip time", &r.trip_time), ("transfers", &r.transfers)] {
        ensure(c.ks == 0.0 && c.tv == 0.0, || format!("{name}: KS {} TV {}", c.ks, c.tv))?;
    }
    let k = r.trip_time.kde.as_ref().ok_or("no density estimate")?;
    for v in [k.integral_simulated, k.integral_reference] {
        ensure((v - 1.0).abs() <= 1e-3, || format!("density integrates to {v}"))?;
    }
    Ok(format!("KS 0, TV 0; density integral {:.6}", k.integral_simulated))
}

fn main() {
    let criteria: [(&str, fn() -> Check, Option<u64>); 10] = [
        ("1 dissatisfaction formula", dissatisfaction_formula, Some(1)),
        ("2 speed envelope", speed_envelope, Some(5)),
        ("3 graph oracles", graph_oracles, Some(30)),
        ("4 planner optimality and monotonicity", planner_optimality, Some(60)),
        ("5 one-factor-at-a-time protocol", ofat_protocol, Some(120)),
        ("6 perturbation robustness", perturbation_robustness, Some(60)),
        ("7 sweep protocol", sweep_protocol, Some(120)),
        ("8 regression oracle", regression_oracle, Some(10)),
        ("9 end-to-end determinism", determinism, None),
        ("10 distribution validation", distribution_validation, None),
    ];
    let mut failed = 0;
    for (name, f, budget) in criteria {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = t.elapsed().as_secs_f64();
        let outcome = match (outcome, budget) {
            (Ok(_), Some(b)) if secs > b as f64 => Err(format!("took {secs:.2}s, budget {b}s")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS ({secs:.2}s) {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL ({secs:.2}s) {detail}");
            }
        }
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
