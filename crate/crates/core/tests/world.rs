use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use teastore_core::adaptation::{Condition, PlanError};
use teastore_core::scenarios::{generate_workload, WorkloadProfile};
use teastore_core::simnet::{Endpoint, FaultSpec, ServiceId};
use teastore_core::variability::{canonical_level, Level, PartialConfiguration, PersistenceSource, RecommenderMode};
use teastore_core::world::{build, Action};

fn run_level(level: Level, ms: u64) -> teastore_core::simnet::Simulation<teastore_core::world::World> {
    let mut sim = build(canonical_level(level), 42).unwrap();
    let arrivals = generate_workload(&WorkloadProfile::baseline(), 0, ms, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    sim.handler.add_arrivals(&mut sim.net, arrivals).unwrap();
    sim.run_until(ms).unwrap();
    sim
}

fn webui_targets(sim: &teastore_core::simnet::Simulation<teastore_core::world::World>) -> BTreeSet<String> {
    sim.net.log().records().iter().filter(|r| r.kind == "send" && r.from == "webui").map(|r| r.to.clone()).collect()
}

#[test]
fn barebone_never_calls_optional_or_external_services() {
    let sim = run_level(Level::L0Barebone, 10_000);
    let targets = webui_targets(&sim);
    assert!(!targets.is_empty());
    for t in &targets {
        let e: Endpoint = t.parse().unwrap();
        assert!(!e.is_external() && e.service != ServiceId::Recommender, "{t}");
    }
}

#[test]
fn barebone_with_recommender_adds_only_the_recommender() {
    let targets = webui_targets(&run_level(Level::L1BareboneRec, 10_000));
    assert!(targets.contains("recommender"));
    for t in &targets {
        assert!(!t.parse::<Endpoint>().unwrap().is_external(), "{t}");
    }
}

#[test]
fn full_level_reaches_the_providers_through_cache_fronts() {
    let sim = run_level(Level::L2Full, 10_000);
    let targets = webui_targets(&sim);
    for t in ["recommender", "auth", "local_cache_db", "local_cache_img"] {
        assert!(targets.contains(t), "{t} missing from {targets:?}");
    }
    let front: BTreeSet<String> =
        sim.net.log().records().iter().filter(|r| r.kind == "send" && r.from == "local_cache_db").map(|r| r.to.clone()).collect();
    assert_eq!(front, BTreeSet::from(["persistence_ext".to_owned()]));
}

#[test]
fn pages_are_answered_in_steady_state() {
    for level in Level::ALL {
        let sim = run_level(level, 10_000);
        let records = sim.net.log().records();
        let sent = records.iter().filter(|r| r.kind == "client_request").count();
        let ok = records.iter().filter(|r| r.kind == "page" && r.detail["status"] == "ok").count();
        assert!(sent > 30);
        assert_eq!(ok, sent, "{level:?}");
    }
}

#[test]
fn replica_copies_training_data() {
    let mut sim = run_level(Level::L1BareboneRec, 2000);
    let e = sim.handler.start_recommender_replica(&mut sim.net);
    assert_eq!(e, Endpoint::new(ServiceId::Recommender, 1));
    sim.run_until(4000).unwrap();
    let a = sim.handler.recommender_state(0).unwrap();
    let b = sim.handler.recommender_state(1).unwrap();
    assert_eq!(a, b);
    assert!(!b.model.is_empty());
}

#[test]
fn starting_a_downed_service_fails_the_step() {
    let mut sim = build(canonical_level(Level::L0Barebone), 42).unwrap();
    let down = FaultSpec::Down { targets: vec![Endpoint::primary(ServiceId::Recommender)] };
    sim.handler.apply_action(&mut sim.net, Action::InjectFault { label: None, spec: down }).unwrap();
    let request = PartialConfiguration { recommender: Some(RecommenderMode::LowPower), ..Default::default() };
    sim.handler.apply_action(&mut sim.net, Action::DevOps { request }).unwrap();
    sim.run_until(5000).unwrap();
    let report = sim.handler.reports.last().unwrap();
    let failed = report.failed.as_ref().expect("step failure recorded");
    assert!(failed.reason.contains("down"), "{}", failed.reason);
    assert_eq!(sim.handler.config(), canonical_level(Level::L0Barebone));
    assert!(sim.net.log().records().iter().any(|r| r.kind == "step_failed"));
}

#[test]
fn unsatisfiable_devops_request_is_refused() {
    let mut sim = build(canonical_level(Level::L2Full), 42).unwrap();
    let request = PartialConfiguration {
        persistence: Some(PersistenceSource::LocalStatic),
        auth: Some(teastore_core::variability::AuthMode::Standard),
        ..Default::default()
    };
    assert!(matches!(sim.handler.submit_devops(&mut sim.net, request), Err(PlanError::Unsatisfiable(_))));
    assert!(!sim.handler.is_executing());
}

#[test]
fn devops_requests_chain_on_the_queued_target() {
    let mut sim = build(canonical_level(Level::L0Barebone), 42).unwrap();
    let r1 = PartialConfiguration { recommender: Some(RecommenderMode::LowPower), ..Default::default() };
    let r2 = PartialConfiguration { persistence: Some(PersistenceSource::External), ..Default::default() };
    let (t1, id1) = sim.handler.submit_devops(&mut sim.net, r1).unwrap();
    let (t2, id2) = sim.handler.submit_devops(&mut sim.net, r2).unwrap();
    assert!(id2 > id1);
    assert_eq!(t2.recommender, t1.recommender);
    sim.run_until(20_000).unwrap();
    assert_eq!(sim.handler.config(), t2);
}

#[test]
fn invalid_configuration_is_not_built() {
    let mut c = canonical_level(Level::L0Barebone);
    c.recommender = RecommenderMode::Full;
    assert!(build(c, 1).is_err());
}

#[test]
fn unknown_fault_label() {
    let mut sim = build(canonical_level(Level::L0Barebone), 42).unwrap();
    assert!(sim.handler.apply_action(&mut sim.net, Action::ClearFault { label: "x".into() }).is_err());
}

#[test]
fn surge_timeouts_are_not_a_provider_outage() {
    let mut sim = build(canonical_level(Level::L2Full), 42).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut arrivals = generate_workload(&WorkloadProfile::baseline(), 0, 20_000, &mut rng).unwrap();
    let surge = WorkloadProfile { rate_per_s: 120.0, session_pool: 1000, ..WorkloadProfile::baseline() };
    arrivals.extend(generate_workload(&surge, 10_000, 20_000, &mut rng).unwrap());
    arrivals.sort_by_key(|a| a.t);
    sim.handler.add_arrivals(&mut sim.net, arrivals).unwrap();
    sim.run_until(20_000).unwrap();
    let conditions: Vec<&Condition> = sim.handler.conditions.iter().map(|c| &c.condition).collect();
    assert!(conditions.iter().any(|c| matches!(c, Condition::TrafficSurge { .. })), "{conditions:?}");
    assert!(!conditions.iter().any(|c| matches!(c, Condition::ExternalOutage)), "{conditions:?}");
}
