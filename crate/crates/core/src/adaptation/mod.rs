//! The MAPE loop: monitor, analyze, plan, execute.
//!
//! Monitoring and analysis are pure functions over the event log; planning is
//! a fixed rule table over detected conditions. Execution needs the running
//! world and lives there, but the ordering rules and the downtime accounting
//! it reports are here.

mod analyze;
mod monitor;
mod planner;
mod report;

pub use analyze::{active_external, analyze, classify_traffic, AnalysisContext};
pub use monitor::{observe, percentile, EndpointMetrics, MetricsWindow};
pub use planner::{check_order, plan, route_endpoint, OrderViolation, PlanError};
pub use report::{feature_downtime, ExecutionReport, Feature, StepFailure, StepRecord};

use serde::{Deserialize, Serialize};

use crate::services::webui::WebUiMode;
use crate::simnet::{Endpoint, SimTime};
use crate::variability::{Configuration, DimensionValue, PartialConfiguration};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QoSPolicy {
    pub window_ms: SimTime,
    pub p95_threshold_ms: f64,
    pub timeout_ratio: f64,
    pub outage_min_requests: u64,
    pub qos_min_requests: u64,
    pub surge_factor: f64,
    pub baseline_ms: SimTime,
    /// Traffic is classified by session diversity over this trailing span.
    pub classification_window_ms: SimTime,
    pub malicious_diversity: f64,
    pub benign_diversity: f64,
}

impl Default for QoSPolicy {
    fn default() -> Self {
        Self {
            window_ms: 5000,
            p95_threshold_ms: 100.0,
            timeout_ratio: 0.5,
            outage_min_requests: 5,
            qos_min_requests: 10,
            surge_factor: 5.0,
            baseline_ms: 60_000,
            classification_window_ms: 1000,
            malicious_diversity: 0.1,
            benign_diversity: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrafficClass {
    Benign,
    Malicious,
    Unknown,
}

/// Out-of-band notice from the external provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Advisory {
    SecurityTakedown,
    Restoration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "condition")]
pub enum Condition {
    DbDown,
    ExternalOutage,
    SecurityTakedown,
    QoSViolation { endpoint: Endpoint },
    TrafficSurge { class: TrafficClass },
    ProviderRestored,
    DevOpsRequest { request: PartialConfiguration },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectedCondition {
    #[serde(flatten)]
    pub condition: Condition,
    pub detected_at: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceMode {
    Normal,
    Maintenance,
    Lite,
    Full,
    LowPower,
    Standard,
    Restrictive,
}

impl From<WebUiMode> for ServiceMode {
    fn from(m: WebUiMode) -> Self {
        match m {
            WebUiMode::Normal => Self::Normal,
            WebUiMode::Maintenance => Self::Maintenance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReconfigStep {
    /// Starts a stopped service, or provisions a new endpoint.
    StartService { endpoint: Endpoint },
    /// Fills a cache front from `upstream` before traffic is routed to it.
    WarmCache { endpoint: Endpoint, upstream: Endpoint },
    /// Changes one configuration dimension. WebUI called `from_via` before
    /// and calls `via` afterwards; `upstream` is the provider endpoint behind it.
    SwitchRoute {
        from: DimensionValue,
        to: DimensionValue,
        from_via: Option<Endpoint>,
        via: Option<Endpoint>,
        upstream: Option<Endpoint>,
    },
    /// Stops a service once its in-flight requests have drained.
    StopService { endpoint: Endpoint },
    /// Stops and starts a service; completes when it serves again.
    RestartService { endpoint: Endpoint },
    SetMode { service: Endpoint, mode: ServiceMode },
    DeployBreakers,
    RemoveBreakers,
}

impl ReconfigStep {
    pub fn label(&self) -> String {
        match self {
            Self::StartService { endpoint } => format!("start {endpoint}"),
            Self::WarmCache { endpoint, .. } => format!("warm {endpoint}"),
            Self::SwitchRoute { from, to, .. } => format!("{}: {from}->{to}", from.dimension()),
            Self::StopService { endpoint } => format!("stop {endpoint}"),
            Self::RestartService { endpoint } => format!("restart {endpoint}"),
            Self::SetMode { service, mode } => {
                format!("{service} mode {}", serde_json::to_value(mode).expect("mode serializes").as_str().unwrap_or(""))
            }
            Self::DeployBreakers => "deploy breakers".into(),
            Self::RemoveBreakers => "remove breakers".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptationPlan {
    pub id: u64,
    pub target: Configuration,
    pub steps: Vec<ReconfigStep>,
    pub trigger: Vec<Condition>,
}

impl AdaptationPlan {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncidentKind {
    DbDown,
    SecurityTakedown,
    ExternalOutage,
}

/// An adaptation that is waiting for a recovery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Incident {
    pub kind: IncidentKind,
    pub pre_config: Configuration,
    pub started_at: SimTime,
    /// Provider generation being provisioned to replace the failed one.
    pub redeploy_generation: Option<u32>,
}

/// What the controller knows beyond the configuration itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Knowledge {
    /// Instance index of the external provider endpoints in use.
    pub generation: u32,
    pub webui_mode: WebUiMode,
    pub breakers_deployed: bool,
    pub incident: Option<Incident>,
}

impl Default for Knowledge {
    fn default() -> Self {
        Self { generation: 0, webui_mode: WebUiMode::Normal, breakers_deployed: false, incident: None }
    }
}
