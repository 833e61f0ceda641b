use teastore_core::simnet::{Endpoint, FaultSpec, ServiceId};
use teastore_core::variability::{canonical_level, Level, PartialConfiguration, PersistenceSource};
use teastore_core::live::{level_of, LiveSim};

fn drive(chunks: &[u64]) -> Vec<String> {
    let mut live = LiveSim::new(canonical_level(Level::L0Barebone), 9).unwrap();
    for &ms in chunks {
        live.advance_by(ms);
    }
    live.log().iter().map(|r| r.to_json_line()).collect()
}

#[test]
fn chunking_does_not_change_the_run() {
    assert_eq!(drive(&[12_000]), drive(&[1, 999, 3500, 6500, 1000]));
}

#[test]
fn records_are_published_once() {
    let mut live = LiveSim::new(canonical_level(Level::L1BareboneRec), 1).unwrap();
    let first = live.take_new_records().len();
    live.advance_by(2000);
    let second = live.take_new_records().len();
    assert!(second > 0);
    assert!(live.take_new_records().is_empty());
    assert_eq!(first + second, live.log().len());
}

#[test]
fn baseline_traffic_keeps_arriving() {
    let mut live = LiveSim::new(canonical_level(Level::L0Barebone), 3).unwrap();
    live.advance_to(30_000);
    let sent = live.log().iter().filter(|r| r.kind == "client_request").count();
    assert!((100..200).contains(&sent), "{sent}");
}

#[test]
fn reconfiguration_goes_through_the_planner() {
    let mut live = LiveSim::new(canonical_level(Level::L0Barebone), 1).unwrap();
    let r = live
        .reconfigure(PartialConfiguration { persistence: Some(PersistenceSource::External), ..Default::default() })
        .unwrap();
    live.advance_by(15_000);
    assert_eq!(live.config(), r.target);
    assert_eq!(level_of(&live.config()), None);
}

#[test]
fn faults_round_trip() {
    let mut live = LiveSim::new(canonical_level(Level::L2Full), 1).unwrap();
    let id = live.inject_fault(FaultSpec::Down { targets: vec![Endpoint::primary(ServiceId::Auth)] }).unwrap();
    assert_eq!(live.state(teastore_core::live::Pace::Paused).snapshot.active_faults.len(), 1);
    live.clear_fault(id).unwrap();
    assert!(live.clear_fault(id).is_err());
}
