use super::*;
use crate::data::TripRecord;
use crate::engine::{Components, TripStatus};
use crate::features::Coefficients;
use crate::features::Dimension;
use crate::synth::{generate_synthetic, SynthSpec};
use crate::testutil::{dataset, route, trip};

fn prof() -> SensitivityProfile {
    SensitivityProfile::calibrated_default()
}

fn cfg() -> SimConfig {
    SimConfig::default()
}

#[test]
fn empty_demand_baseline() {
    let ds = dataset(&[1000.0], vec![route("A", &[0, 1])], vec![]);
    let b = run_baseline(&ds, &prof(), &cfg()).unwrap();
    assert_eq!(b.sim.aggregates.overall.failure_rate, 0.0);
    assert_eq!(b.sim.aggregates.overall.mean_d, 0.0);
}

#[test]
fn direct_trip_has_no_transfers() {
    let ds = dataset(&[800.0, 800.0], vec![route("A", &[0, 1, 2])], vec![trip("p", Group::Student, 0, 2, 400)]);
    let b = run_baseline(&ds, &prof(), &cfg()).unwrap();
    assert_eq!(b.sim.aggregates.overall.mean_transfers, 0.0);
}

// A runs N0-N2, B runs N2-N4, C runs straight through N0-N4. Far apart
// stops, so no walking links.
fn two_route_fixture(trips: Vec<TripRecord>) -> Dataset {
    dataset(
        &[900.0; 4],
        vec![route("A", &[0, 1, 2]), route("B", &[2, 3, 4]), route("C", &[0, 1, 2, 3, 4]), route("U", &[3, 4])],
        trips,
    )
}

#[test]
fn removing_unused_route_changes_nothing() {
    let ds = two_route_fixture(vec![trip("p", Group::General, 0, 2, 400)]);
    let b = run_baseline(&ds, &prof(), &cfg()).unwrap();
    let r = run_single_removal(&ds, &b, "U", &prof(), &cfg()).unwrap();
    assert_eq!(r.result.delta_d, 0.0);
    assert_eq!(r.result.affected_trips, 0);
    assert_eq!(r.sim.outcomes, b.sim.outcomes);
}

#[test]
fn removing_sole_route_fails_trips() {
    let ds = dataset(&[900.0, 900.0], vec![route("A", &[0, 1]), route("B", &[1, 2])], vec![trip("p", Group::General, 0, 1, 400)]);
    let b = run_baseline(&ds, &prof(), &cfg()).unwrap();
    let r = run_single_removal(&ds, &b, "A", &prof(), &cfg()).unwrap();
    assert!(r.result.failure_rate > 0.0);
    assert!(run_single_removal(&ds, &b, "nope", &prof(), &cfg()).is_err());
}

#[test]
fn transfer_alternative_raises_every_affected_d() {
    let trips: Vec<TripRecord> = Group::ALL
        .iter()
        .enumerate()
        .map(|(i, &g)| trip(&format!("p{i}"), g, 0, 4, 400 + 7 * i as u32))
        .collect();
    let ds = two_route_fixture(trips);
    let b = run_baseline(&ds, &prof(), &cfg()).unwrap();
    assert!(b.plans.iter().all(|p| p.route_ids() == vec!["C"]));
    let r = run_single_removal(&ds, &b, "C", &prof(), &cfg()).unwrap();
    assert_eq!(r.result.affected_trips, 4);
    for (before, after) in b.sim.outcomes.iter().zip(&r.sim.outcomes) {
        assert_eq!(after.status, TripStatus::Completed);
        assert_eq!(after.components.t, 1);
        assert!(after.d.unwrap() > before.d.unwrap(), "{before:?} -> {after:?}");
    }
}

fn small_synth() -> Dataset {
    let spec = SynthSpec { n_trips: 300, ..SynthSpec::default() };
    generate_synthetic(&spec, 3).unwrap()
}

#[test]
fn sweep_removes_sixty_percent_and_failures_grow() {
    let ds = small_synth();
    let b = run_baseline(&ds, &prof(), &cfg()).unwrap();
    let coef = Coefficients::reference();
    for dim in Dimension::ALL {
        let c = run_sweep(&ds, &b, dim, coef.dimension(dim).unwrap(), SweepMode::Static, &prof(), &cfg()).unwrap();
        assert_eq!(c.points.len(), 7);
        let removed: std::collections::BTreeSet<_> = c.points.iter().filter_map(|p| p.removed_route.clone()).collect();
        assert_eq!(removed.len(), 6);
        for w in c.points.windows(2) {
            assert!(w[1].failure_rate >= w[0].failure_rate);
        }
    }
    assert_eq!(removal_count(10), 6);
    assert_eq!(removal_count(79), 48);
    assert_eq!(removal_count(1), 1);
}

#[test]
fn dynamic_sweep_matches_static_length() {
    let ds = small_synth();
    let b = run_baseline(&ds, &prof(), &cfg()).unwrap();
    let coef = Coefficients::reference();
    let w = coef.dimension(Dimension::Capacity).unwrap();
    let c = run_sweep(&ds, &b, Dimension::Capacity, w, SweepMode::Dynamic, &prof(), &cfg()).unwrap();
    assert_eq!(c.points.len(), 7);
    assert_eq!(c.points[0].overall_d, b.sim.aggregates.overall.mean_d);
}

#[test]
fn ofat_unit_magnitude_gives_zero_elasticities() {
    let ds = small_synth();
    let b = run_baseline(&ds, &prof(), &cfg()).unwrap();
    for s in OfatScenario::ALL {
        let r = run_ofat(&ds, &b, s, 1.0, &prof(), &cfg()).unwrap();
        assert!(r.elasticities.values().all(|e| *e == Some(0.0)), "{s}: {:?}", r.elasticities);
        assert!(r.changed_routes.is_empty());
    }
}

#[test]
fn ofat_doubling_headways_raises_waits() {
    let ds = small_synth();
    let b = run_baseline(&ds, &prof(), &cfg()).unwrap();
    let r = run_ofat(&ds, &b, OfatScenario::WaitPlus, 2.0, &prof(), &cfg()).unwrap();
    for g in Group::ALL {
        assert!(r.mean_waiting_min_new[&g] > r.mean_waiting_min_base[&g], "{g}");
    }
    assert_eq!(r.driver_new, 2.0);
    assert!(r.elasticities.values().all(|e| e.unwrap() > 0.0));
}

#[test]
fn ofat_rejects_bad_magnitude() {
    let ds = dataset(&[1000.0], vec![route("A", &[0, 1])], vec![]);
    let b = run_baseline(&ds, &prof(), &cfg()).unwrap();
    assert!(run_ofat(&ds, &b, OfatScenario::TimePlus, 0.0, &prof(), &cfg()).is_err());
}

#[test]
fn scenario_names_parse() {
    for s in OfatScenario::ALL {
        assert_eq!(s.name().parse::<OfatScenario>().unwrap(), s);
    }
    assert_eq!("xfer".parse::<OfatScenario>().unwrap(), OfatScenario::XferPlus);
    assert!("FOO+".parse::<OfatScenario>().is_err());
}

#[test]
fn quantile_type7() {
    let v = [4.0, 1.0, 3.0, 2.0];
    assert_eq!(quantile(&v, 0.0), 1.0);
    assert_eq!(quantile(&v, 1.0), 4.0);
    assert_eq!(quantile(&v, 0.5), 2.5);
    assert!((quantile(&v, 0.25) - 1.75).abs() < 1e-15);
}

#[test]
fn zero_ranges_reproduce_baseline() {
    let ds = small_synth();
    let b = run_baseline(&ds, &prof(), &cfg()).unwrap();
    let pc = PerturbConfig { n_samples: 50, global_range: 0.0, individual_range: 0.0, seed: 1, mode: PerturbMode::Fast };
    let r = run_perturbation(&ds, &b, &prof(), &cfg(), &pc).unwrap();
    assert_eq!(r.samples.len(), 50);
    assert_eq!(r.retention_rate, 1.0);
    for s in &r.samples {
        assert_eq!(s.tau, Some(1.0));
        for k in 0..4 {
            assert!((s.d[k] - r.baseline_d[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn wide_individual_range_breaks_ranking() {
    let ds = small_synth();
    let b = run_baseline(&ds, &prof(), &cfg()).unwrap();
    let pc = PerturbConfig { n_samples: 200, individual_range: 0.95, seed: 2, ..PerturbConfig::default() };
    let r = run_perturbation(&ds, &b, &prof(), &cfg(), &pc).unwrap();
    assert!(!r.gaps_exceed_envelope);
    assert!(r.retention_rate < 1.0);
}

#[test]
fn fast_perturbation_equals_per_trip_rescoring() {
    let ds = small_synth();
    let b = run_baseline(&ds, &prof(), &cfg()).unwrap();
    let pc = PerturbConfig { n_samples: 20, seed: 9, ..PerturbConfig::default() };
    let r = run_perturbation(&ds, &b, &prof(), &cfg(), &pc).unwrap();
    for s in &r.samples {
        for g in Group::ALL {
            let w = prof().get(g).as_array();
            let ds: Vec<f64> = b
                .sim
                .outcomes
                .iter()
                .filter(|o| o.group == g && o.completed())
                .map(|o| {
                    let c = o.components.as_array();
                    (0..4).map(|k| w[k] * s.g * s.u[g.index()][k] * c[k]).sum::<f64>()
                })
                .collect();
            let direct = ds.iter().sum::<f64>() / ds.len() as f64;
            assert!((direct - s.d[g.index()]).abs() < 1e-9 * direct.max(1.0));
        }
    }
}

#[test]
fn perturbation_is_seeded() {
    let ds = small_synth();
    let b = run_baseline(&ds, &prof(), &cfg()).unwrap();
    let pc = PerturbConfig { n_samples: 30, seed: 5, ..PerturbConfig::default() };
    let a = run_perturbation(&ds, &b, &prof(), &cfg(), &pc).unwrap();
    let c = run_perturbation(&ds, &b, &prof(), &cfg(), &pc).unwrap();
    assert_eq!(a, c);
    let other = run_perturbation(&ds, &b, &prof(), &cfg(), &PerturbConfig { seed: 6, ..pc }).unwrap();
    assert_ne!(a.samples[0].g, other.samples[0].g);
}

#[test]
fn full_mode_runs() {
    let ds = small_synth();
    let b = run_baseline(&ds, &prof(), &cfg()).unwrap();
    let pc = PerturbConfig { n_samples: 3, global_range: 0.0, individual_range: 0.0, seed: 5, mode: PerturbMode::Full };
    let r = run_perturbation(&ds, &b, &prof(), &cfg(), &pc).unwrap();
    for s in &r.samples {
        assert_eq!(s.d, r.baseline_d);
    }
}

fn outcome(minutes: f64, transfers: u32) -> crate::engine::TripOutcome {
    crate::engine::TripOutcome {
        passenger_id: String::new(),
        group: Group::General,
        status: TripStatus::Completed,
        failure: None,
        components: Components { t: transfers, ..Default::default() },
        d: Some(0.0),
        in_vehicle_min: minutes,
        waiting_min: 0.0,
        crowded_min: 0.0,
    }
}

#[test]
fn identical_distributions() {
    let a: Vec<_> = (0..50).map(|i| outcome(10.0 + (i * 7 % 23) as f64, (i % 3) as u32)).collect();
    let r = validate_distributions(&a, &a, 5.0).unwrap();
    assert_eq!(r.trip_time.ks, 0.0);
    assert_eq!(r.trip_time.tv, 0.0);
    assert_eq!(r.transfers.ks, 0.0);
    assert_eq!(r.transfers.tv, 0.0);
    let k = r.trip_time.kde.unwrap();
    assert!((k.integral_simulated - 1.0).abs() < 1e-3);
    assert!((k.integral_reference - 1.0).abs() < 1e-3);
}

#[test]
fn disjoint_distributions() {
    let a: Vec<_> = (0..10).map(|i| outcome(i as f64, 0)).collect();
    let b: Vec<_> = (0..10).map(|i| outcome(100.0 + i as f64, 2)).collect();
    let r = validate_distributions(&a, &b, 5.0).unwrap();
    assert_eq!(r.trip_time.tv, 1.0);
    assert_eq!(r.trip_time.ks, 1.0);
    assert_eq!(r.transfers.tv, 1.0);
}

#[test]
fn constant_times_have_no_density() {
    let a: Vec<_> = (0..5).map(|_| outcome(12.0, 0)).collect();
    let r = validate_distributions(&a, &a, 5.0).unwrap();
    assert!(r.trip_time.kde.is_none());
    assert!(r.trip_time.note.is_some());
    assert!(validate_distributions(&[], &a, 5.0).is_err());
}

#[test]
fn regression_on_removal_effects() {
    let ds = small_synth();
    let b = run_baseline(&ds, &prof(), &cfg()).unwrap();
    let effects = removal_effects(&ds, &b, &prof(), &cfg()).unwrap();
    assert_eq!(effects.len(), 10);
    let table = crate::features::compute_route_features(&b.network, &b.plans, ds.pois(), &cfg());
    let t = regress_dimensions(&table, &effects, true);
    assert_eq!(t.dimensions.len(), 3);
    for d in &t.dimensions {
        if let Some(fit) = &d.fit {
            assert!(fit.intercept.abs() < 1e-10);
            assert_eq!(fit.coefficients.len(), d.features.len());
            assert_eq!(d.features.len() + d.dropped.len(), d.dimension.features().len());
            assert_eq!(d.stars.len(), fit.p_values.len());
        } else {
            assert!(d.note.is_some());
        }
    }
    let c = t.coefficients();
    assert!(c.dimension(Dimension::Capacity).is_some());
}

#[test]
fn constant_features_are_dropped_from_the_fit() {
    use crate::features::{FeatureTable, RouteFeatures};
    let routes: Vec<RouteFeatures> = (0..6)
        .map(|i| RouteFeatures {
            route_id: format!("R{i}"),
            ridership: 10.0 + i as f64,
            density: 0.25,
            avg_betweenness: (i * i) as f64,
            avg_path_length: (i % 3) as f64,
            sparse_station_ratio: 0.0,
            amenity_entropy: 0.0,
        })
        .collect();
    let effects: Vec<(String, f64)> = (0..6).map(|i| (format!("R{i}"), 0.1 * i as f64 + 0.01 * (i % 2) as f64)).collect();
    let t = regress_dimensions(&FeatureTable { routes, pois_present: false }, &effects, false);
    let structure = &t.dimensions[1];
    assert_eq!(structure.dropped, vec!["density".to_string()]);
    assert_eq!(structure.features, vec!["avg_betweenness".to_string(), "avg_path_length".to_string()]);
    assert!(structure.fit.is_some());
    let function = &t.dimensions[2];
    assert!(function.fit.is_none() && function.note.is_some());
    let c = t.coefficients();
    let w = c.dimension(Dimension::Structure).unwrap();
    assert_eq!(w.len(), 2);
    assert!(c.dimension(Dimension::Function).is_none());
}
