use super::checks::Assertion;
use super::workload::{Phase, RequestMix, WorkloadProfile};
use super::{Injection, ScenarioScript};
use crate::adaptation::{Advisory, ReconfigStep, ServiceMode, TrafficClass};
use crate::services::webui::LoginOutcome;
use crate::simnet::{Endpoint, FaultSpec, ServiceId, SimTime};
use crate::variability::{
    canonical_level, AuthMode, Configuration, ImageSource, Level, PartialConfiguration, PersistenceSource,
    RecommenderMode,
};
use crate::world::Action;

const NAMES: [&str; 7] = [
    "db_unavailable",
    "cyberattack_external",
    "provider_outage",
    "traffic_benign",
    "traffic_ddos",
    "traffic_unknown",
    "devops_change",
];

pub fn builtin_names() -> &'static [&'static str] {
    &NAMES
}

fn baseline(duration: SimTime) -> Phase {
    Phase { start_ms: 0, end_ms: duration, profile: WorkloadProfile::baseline() }
}

fn surge(name: &str, rate: f64, pool: u32) -> WorkloadProfile {
    WorkloadProfile {
        name: name.into(),
        rate_per_s: rate,
        mix: RequestMix::BASELINE,
        session_pool: pool,
        malicious: false,
        session_diversity: None,
    }
}

fn at(at_ms: SimTime, action: Action) -> Injection {
    Injection { at_ms, action }
}

fn externals() -> Vec<Endpoint> {
    [ServiceId::ImageExt, ServiceId::PersistenceExt, ServiceId::Auth].map(Endpoint::primary).to_vec()
}

fn common() -> [Assertion; 2] {
    [Assertion::Liveness, Assertion::ConfigsValid]
}

fn script(
    name: &str,
    description: &str,
    level: Level,
    duration_ms: SimTime,
    phases: Vec<Phase>,
    injections: Vec<Injection>,
    assertions: Vec<Assertion>,
) -> ScenarioScript {
    ScenarioScript {
        name: name.into(),
        description: description.into(),
        initial_config: canonical_level(level),
        phases,
        injections,
        assertions: assertions.into_iter().chain(common()).collect(),
        duration_ms,
        seed: 42,
    }
}

const TAKEDOWN_TARGET: Configuration = Configuration::new(
    ImageSource::LocalStatic,
    PersistenceSource::LocalStatic,
    AuthMode::Absent,
    RecommenderMode::LowPower,
);

pub fn builtin_scenario(name: &str) -> Option<ScenarioScript> {
    let l0 = canonical_level(Level::L0Barebone);
    let l2 = canonical_level(Level::L2Full);
    let recommender = Endpoint::primary(ServiceId::Recommender);
    let auth = Endpoint::primary(ServiceId::Auth);
    let surge_window = |p: WorkloadProfile| Phase { start_ms: 10_000, end_ms: 50_000, profile: p };
    let s = match name {
        "db_unavailable" => script(
            name,
            "The local database goes down at 10s and comes back at 30s.",
            Level::L0Barebone,
            60_000,
            vec![baseline(60_000)],
            vec![
                at(10_000, Action::InjectFault {
                    label: Some("db".into()),
                    spec: FaultSpec::Down { targets: vec![Endpoint::primary(ServiceId::LocalStaticDb)] },
                }),
                at(30_000, Action::ClearFault { label: "db".into() }),
            ],
            vec![
                Assertion::MaintenanceDuring { from_ms: 10_000, to_ms: 30_000 },
                Assertion::OkPageAfterRestart { within_ms: 5000 },
            ],
        ),
        "cyberattack_external" => script(
            name,
            "The provider takes its services down after a breach and restores them at 40s.",
            Level::L2Full,
            60_000,
            vec![baseline(60_000)],
            vec![
                at(10_000, Action::InjectFault { label: Some("provider".into()), spec: FaultSpec::Down { targets: externals() } }),
                at(10_000, Action::Advisory { advisory: Advisory::SecurityTakedown }),
                at(40_000, Action::ClearFault { label: "provider".into() }),
                at(40_000, Action::Advisory { advisory: Advisory::Restoration }),
            ],
            vec![
                Assertion::ConfigWithin { after_ms: 10_000, within_ms: 5000, config: TAKEDOWN_TARGET },
                Assertion::LoginsAnswered { from_ms: 10_000, to_ms: 40_000, outcome: LoginOutcome::AuthDisabled },
                Assertion::ConfigRestored { at_ms: 10_000 },
            ],
        ),
        "provider_outage" => script(
            name,
            "Every provider endpoint goes down at 10s and stays down.",
            Level::L2Full,
            60_000,
            vec![baseline(60_000)],
            vec![at(10_000, Action::InjectFault { label: Some("provider".into()), spec: FaultSpec::Down { targets: externals() } })],
            vec![
                Assertion::TimelineSequence { configs: vec![l2, l0, l2] },
                Assertion::SwitchAfterFirstTimeout { after_ms: 10_000, within_ms: 10_000, config: l0 },
                Assertion::RedeployedInstances { instance: 1 },
                Assertion::PlaceholderImagesIn { config: l0 },
            ],
        ),
        "traffic_benign" => script(
            name,
            "Ten times the usual traffic from many distinct sessions.",
            Level::L2Full,
            60_000,
            vec![baseline(60_000), surge_window(surge("surge", 45.0, 1000))],
            vec![],
            vec![
                Assertion::ModeAfterQos { endpoint: recommender, mode: ServiceMode::LowPower, after_ms: 10_000, cycles: 2 },
                Assertion::RecommendationsNonEmpty { from_ms: 0, to_ms: 60_000 },
            ],
        ),
        "traffic_ddos" => script(
            name,
            "A login flood from three sessions at 25 times the usual rate.",
            Level::L2Full,
            60_000,
            vec![
                baseline(60_000),
                surge_window(WorkloadProfile {
                    malicious: true,
                    mix: RequestMix::LOGIN_ONLY,
                    ..surge("flood", 120.0, 3)
                }),
            ],
            vec![],
            vec![
                Assertion::PlanIncludes { steps: vec![ReconfigStep::DeployBreakers] },
                Assertion::BreakerOpened { endpoint: auth },
                Assertion::NoCallsWhileOpen { endpoint: auth },
                Assertion::ModeReached { endpoint: auth, mode: ServiceMode::Restrictive, after_ms: 10_000 },
                Assertion::RateLimited { min: 1 },
                Assertion::ModeReached { endpoint: recommender, mode: ServiceMode::LowPower, after_ms: 10_000 },
            ],
        ),
        "traffic_unknown" => script(
            name,
            "A surge at flood rate with moderate session diversity.",
            Level::L2Full,
            60_000,
            vec![
                baseline(60_000),
                surge_window(WorkloadProfile { session_diversity: Some(0.3), ..surge("mixed", 120.0, 1000) }),
            ],
            vec![],
            vec![
                Assertion::TrafficClassified { class: TrafficClass::Unknown },
                Assertion::PlanIncludes {
                    steps: vec![
                        ReconfigStep::DeployBreakers,
                        ReconfigStep::SetMode { service: recommender, mode: ServiceMode::LowPower },
                    ],
                },
            ],
        ),
        "devops_change" => script(
            name,
            "An operator moves the catalog from the local database to the provider.",
            Level::L0Barebone,
            30_000,
            vec![baseline(30_000)],
            vec![at(10_000, Action::DevOps {
                request: PartialConfiguration { persistence: Some(PersistenceSource::External), ..Default::default() },
            })],
            vec![
                Assertion::ConfigWithin {
                    after_ms: 10_000,
                    within_ms: 10_000,
                    config: l0.with(crate::variability::DimensionValue::Persistence(PersistenceSource::External)),
                },
                Assertion::ZeroDowntime,
                Assertion::WarmBeforeSwitch,
            ],
        ),
        _ => return None,
    };
    Some(s)
}
