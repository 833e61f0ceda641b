use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use teastore_core::scenarios::{
    builtin_names, builtin_scenario, generate_workload, parse_scenario, run_scenario, Assertion, ProfileError,
    RequestMix, ScenarioError, WorkloadProfile,
};
use teastore_core::services::webui::RequestKind;

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(42)
}

#[test]
fn ten_per_second_for_ten_seconds() {
    let p = WorkloadProfile { rate_per_s: 10.0, ..WorkloadProfile::baseline() };
    let a = generate_workload(&p, 0, 10_000, &mut rng()).unwrap();
    assert_eq!(a.len(), 89);
    assert!(a.windows(2).all(|w| w[0].t <= w[1].t));
    assert!(a.iter().all(|x| x.t < 10_000));
    assert_eq!(a, generate_workload(&p, 0, 10_000, &mut rng()).unwrap());
}

#[test]
fn benign_traffic_cycles_the_pool() {
    let a = generate_workload(&WorkloadProfile::baseline(), 0, 40_000, &mut rng()).unwrap();
    let sessions: std::collections::BTreeSet<_> = a.iter().take(100).map(|x| x.session.clone()).collect();
    assert_eq!(sessions.len(), 20);
}

#[test]
fn malicious_traffic_uses_three_sessions_and_one_kind() {
    let p = WorkloadProfile {
        name: "flood".into(),
        rate_per_s: 100.0,
        mix: RequestMix::LOGIN_ONLY,
        session_pool: 50,
        malicious: true,
        session_diversity: None,
    };
    let a = generate_workload(&p, 0, 5000, &mut rng()).unwrap();
    let sessions: std::collections::BTreeSet<_> = a.iter().map(|x| x.session.clone()).collect();
    assert!(sessions.len() <= 3);
    assert!(a.iter().all(|x| x.kind == RequestKind::Login));
}

#[test]
fn diversity_profile_lands_near_its_target() {
    let p = WorkloadProfile { session_diversity: Some(0.3), rate_per_s: 120.0, ..WorkloadProfile::baseline() };
    let a = generate_workload(&p, 0, 5000, &mut rng()).unwrap();
    let sessions: std::collections::BTreeSet<_> = a.iter().map(|x| x.session.clone()).collect();
    let d = sessions.len() as f64 / a.len() as f64;
    assert!((0.25..0.35).contains(&d), "diversity {d}");
}

#[test]
fn invalid_profiles_are_rejected() {
    let mut p = WorkloadProfile::baseline();
    p.rate_per_s = 0.0;
    assert_eq!(generate_workload(&p, 0, 1000, &mut rng()), Err(ProfileError::Rate));
    let mut p = WorkloadProfile::baseline();
    p.mix.login = 0.5;
    assert_eq!(generate_workload(&p, 0, 1000, &mut rng()), Err(ProfileError::Mix));
}

#[test]
fn every_builtin_passes_its_assertions() {
    for name in builtin_names() {
        let script = builtin_scenario(name).unwrap();
        let report = run_scenario(&script, 42).unwrap().report;
        assert_eq!(report.assertions.len(), script.assertions.len());
        for a in &report.assertions {
            assert!(a.passed && a.evaluated, "{name}: {} {}", a.check, a.evidence);
        }
    }
}

#[test]
fn same_seed_same_log() {
    let script = builtin_scenario("provider_outage").unwrap();
    let a = run_scenario(&script, 7).unwrap().report;
    let b = run_scenario(&script, 7).unwrap().report;
    assert_eq!(a.log_hash, b.log_hash);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let c = run_scenario(&script, 8).unwrap().report;
    assert_ne!(a.log_hash, c.log_hash);
}

#[test]
fn scripts_round_trip_through_json() {
    for name in builtin_names() {
        let script = builtin_scenario(name).unwrap();
        let json = serde_json::to_string_pretty(&script).unwrap();
        assert_eq!(parse_scenario(&json).unwrap(), script, "{name}");
    }
}

#[test]
fn hand_written_script_with_level_names() {
    let json = r#"{
        "name": "short_outage",
        "initial_config": "L2",
        "phases": [{ "start_ms": 0, "end_ms": 20000, "profile": {
            "name": "base", "rate_per_s": 5.0, "session_pool": 20,
            "mix": { "product_page": 0.6, "category_page": 0.25, "login": 0.05, "add_to_cart": 0.1 } } }],
        "injections": [
            { "at_ms": 5000, "action": "advisory", "advisory": "security_takedown" },
            { "at_ms": 12000, "action": "advisory", "advisory": "restoration" }
        ],
        "assertions": [
            { "check": "config_restored", "at_ms": 5000 },
            { "check": "timeline_sequence", "configs": ["L2", { "image": "local_static", "persistence": "local_static", "auth": "absent", "recommender": "low_power" }, "L2"] },
            { "check": "liveness" }
        ],
        "duration_ms": 20000,
        "seed": 3
    }"#;
    let script = parse_scenario(json).unwrap();
    let report = run_scenario(&script, script.seed).unwrap().report;
    assert!(report.passed, "{:#?}", report.assertions);
}

#[test]
fn zero_duration_evaluates_nothing() {
    let mut script = builtin_scenario("db_unavailable").unwrap();
    script.duration_ms = 0;
    script.injections.clear();
    script.phases.iter_mut().for_each(|p| p.end_ms = 0);
    let report = run_scenario(&script, 1).unwrap().report;
    assert!(report.config_timeline.is_empty());
    assert!(report.metrics_timeline.is_empty());
    assert!(report.assertions.iter().all(|a| a.passed && !a.evaluated));
}

#[test]
fn out_of_range_injection_is_an_error() {
    let mut script = builtin_scenario("db_unavailable").unwrap();
    script.duration_ms = 5000;
    script.phases.iter_mut().for_each(|p| p.end_ms = 5000);
    assert!(matches!(run_scenario(&script, 1), Err(ScenarioError::InjectionOutOfRange { .. })));
}

#[test]
fn invalid_initial_config_is_an_error() {
    let mut script = builtin_scenario("devops_change").unwrap();
    script.initial_config.auth = teastore_core::variability::AuthMode::Standard;
    assert!(matches!(run_scenario(&script, 1), Err(ScenarioError::InvalidConfig(_))));
}

#[test]
fn failing_assertion_is_reported_not_raised() {
    let mut script = builtin_scenario("devops_change").unwrap();
    script.injections.clear();
    let report = run_scenario(&script, 42).unwrap().report;
    assert!(!report.passed);
    let zero = report.assertions.iter().find(|a| a.check == "zero_downtime").unwrap();
    assert!(!zero.evaluated);
    let within = report.assertions.iter().find(|a| a.check == "config_within").unwrap();
    assert!(!within.passed);
}

#[test]
fn unknown_builtin() {
    assert!(builtin_scenario("nope").is_none());
    assert_eq!(builtin_names().len(), 7);
    assert_eq!(Assertion::Liveness.name(), "liveness");
}
