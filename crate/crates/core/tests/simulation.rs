use abiot_core::config::RunConfig;
use abiot_core::flight::EventKind;
use abiot_core::geometry::Point2;
use abiot_core::sim::{habituation_experiment, run, Scenario};

fn scenario(overrides: &[&str]) -> Scenario {
    let ov: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    Scenario::from_config(&RunConfig::default().with_overrides(&ov).unwrap()).unwrap()
}

fn effectiveness(overrides: &[&str]) -> f64 {
    run(&scenario(overrides)).unwrap().metrics.effectiveness
}

#[test]
fn effectiveness_is_monotone_in_laps() {
    for seed in ["sim.seed=1", "sim.seed=2"] {
        let e: Vec<f64> = ["path.laps=2", "path.laps=4", "path.laps=6"]
            .iter()
            .map(|l| effectiveness(&["species.count=400", seed, l]))
            .collect();
        assert!(e[0] <= e[1] && e[1] <= e[2], "{e:?}");
        assert!(e[0] < e[2]);
    }
}

#[test]
fn effectiveness_is_monotone_in_power() {
    let e: Vec<f64> = ["0.25", "1.0", "4.0"]
        .iter()
        .map(|p| effectiveness(&["species.count=400", &format!("emitter.acoustic_power_w={p}")]))
        .collect();
    assert!(e[0] <= e[1] && e[1] <= e[2], "{e:?}");
}

#[test]
fn pests_out_of_range_are_never_removed() {
    // The path covers [0,4]²; pests at 15 m or less from it, and well beyond.
    let near = [[2.0, 2.0], [3.0, 15.0], [18.0, 3.0]];
    let far = [[30.0, 30.0], [3.0, 19.5], [20.0, 20.0], [39.0, 1.0]];
    let positions: Vec<[f64; 2]> = near.iter().chain(&far).copied().collect();
    let pos_json = serde_json::to_string(&positions).unwrap();
    for seed in 1..=20 {
        let sc = scenario(&[
            "field.width_m=40",
            "field.length_m=40",
            r#"path.region={"x0":0,"y0":0,"x1":4,"y1":4}"#,
            "path.dense_spacing_m=1",
            "sim.calibration.k=50",
            "sim.days=3",
            &format!("species.positions={pos_json}"),
            &format!("sim.seed={seed}"),
        ]);
        let out = run(&sc).unwrap();
        for p in &out.population.individuals[near.len()..] {
            assert!(p.present, "far pest at {:?} removed", p.position);
            assert_eq!(p.habituation, 0.0);
        }
        for e in &out.metrics.per_day_effectiveness {
            assert!(*e <= 3.0 / 7.0 + 1e-12);
        }
    }
}

#[test]
fn energy_stays_within_battery_and_runs_end_safely() {
    for (capacity, agents_mode) in [
        ("360000", "sim.mode=standalone"),
        ("60000", "sim.mode=standalone"),
        ("5000", "sim.mode=standalone"),
        ("30000", "sim.mode=coordinated"),
    ] {
        let sc = scenario(&[
            &format!("tricopter.battery_capacity_j={capacity}"),
            agents_mode,
            "sim.days=2",
            "species.count=50",
        ]);
        let agents = sc.agent_plans().unwrap().len();
        let out = run(&sc).unwrap();
        let cap: f64 = capacity.parse().unwrap();
        assert!(out.metrics.energy_used_j <= cap * agents as f64 * 2.0 + 1e-6);
        for day in 0..2 {
            for agent in 0..agents {
                let kinds: Vec<EventKind> = out
                    .events
                    .iter()
                    .filter(|e| e.day == day && e.agent == agent)
                    .map(|e| e.kind)
                    .collect();
                let last = *kinds.last().unwrap();
                assert!(matches!(last, EventKind::LandedHome | EventKind::BeaconPing), "{capacity}: {kinds:?}");
                assert!(kinds.iter().filter(|k| **k == EventKind::LowBatteryAlarm).count() <= 1);
            }
        }
    }
}

#[test]
fn low_battery_turns_the_agent_home() {
    let out = run(&scenario(&["tricopter.battery_capacity_j=60000", "species.count=10"])).unwrap();
    let kinds: Vec<EventKind> = out.events.iter().map(|e| e.kind).collect();
    let alarm = kinds.iter().position(|k| *k == EventKind::LowBatteryAlarm).unwrap();
    assert_eq!(kinds[alarm + 1], EventKind::ReturnInitiated);
    assert_eq!(*kinds.last().unwrap(), EventKind::LandedHome);
    assert!(out.metrics.laps_completed < 6);
    let landed = out.events.last().unwrap().position;
    assert!(Point2::new(landed.x, landed.y).distance(Point2::new(0.0, 0.0)) <= 0.1);
}

#[test]
fn coordinated_agents_fly_less_than_one_standalone_agent() {
    let solo = run(&scenario(&["species.count=10"])).unwrap();
    let solo_dist = solo.distance_m[0][0];
    for n in [2, 3, 4, 6] {
        let out = run(&scenario(&[
            "species.count=10",
            "sim.mode=coordinated",
            &format!("swarm.agents={n}"),
        ]))
        .unwrap();
        assert_eq!(out.distance_m[0].len(), n);
        for d in &out.distance_m[0] {
            assert!(*d < solo_dist, "n={n}: {d} vs {solo_dist}");
        }
    }
}

#[test]
fn habituation_only_bites_without_rf() {
    let base = scenario(&["species.count=300"]);
    let s = habituation_experiment(&base, 20).unwrap();
    assert_eq!(s.ultrasonic_only.len(), 20);
    assert_eq!(s.ultrasonic_only[0], s.with_rf[0]);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&s.ultrasonic_only[11..20]) < mean(&s.ultrasonic_only[0..8]));
    assert!(mean(&s.with_rf[11..20]) >= mean(&s.with_rf[0..8]) - 0.02);
}

#[test]
fn rf_is_inert_for_species_that_ignore_it() {
    let base = scenario(&["species.count=300", "species.rf_susceptible=false"]);
    let s = habituation_experiment(&base, 12).unwrap();
    assert_eq!(s.ultrasonic_only, s.with_rf);
}

#[test]
fn sparse_path_saves_energy() {
    let dense = run(&scenario(&["species.count=10"])).unwrap().metrics;
    let sparse = run(&scenario(&["species.count=10", "sim.density=sparse"])).unwrap().metrics;
    assert!(sparse.energy_used_j < 0.6 * dense.energy_used_j);
    assert_eq!(sparse.laps_completed, 6);
}
