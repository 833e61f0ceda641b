use serde::{Deserialize, Serialize};

use super::{Advisory, Condition, IncidentKind, MetricsWindow, QoSPolicy, TrafficClass};
use crate::simnet::{Endpoint, ServiceId};
use crate::variability::{Configuration, PersistenceSource};

/// Facts the analyzer needs besides the metrics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisContext {
    pub config: Configuration,
    pub generation: u32,
    /// Advisories received since the previous iteration.
    pub advisories: Vec<Advisory>,
    /// A security takedown is in progress; metric outages are its symptom.
    pub takedown_active: bool,
    pub incident: Option<IncidentKind>,
    /// A recovery probe succeeded since the previous iteration.
    pub probe_succeeded: bool,
}

/// Provider endpoints the current configuration depends on.
pub fn active_external(config: &Configuration, generation: u32) -> Vec<Endpoint> {
    let mut out = Vec::new();
    if config.image.is_external() {
        out.push(Endpoint::new(ServiceId::ImageExt, generation));
    }
    if config.persistence.is_external() {
        out.push(Endpoint::new(ServiceId::PersistenceExt, generation));
    }
    if config.auth.is_active() {
        out.push(Endpoint::new(ServiceId::Auth, generation));
    }
    out
}

pub fn classify_traffic(m: &MetricsWindow, policy: &QoSPolicy) -> TrafficClass {
    match m.recent_diversity().or(m.diversity()) {
        Some(d) if d < policy.malicious_diversity => TrafficClass::Malicious,
        Some(d) if d > policy.benign_diversity => TrafficClass::Benign,
        _ => TrafficClass::Unknown,
    }
}

fn failing(m: &MetricsWindow, e: &Endpoint, policy: &QoSPolicy) -> bool {
    let em = m.get(e);
    em.requests >= policy.outage_min_requests && em.timeout_ratio().is_some_and(|r| r >= policy.timeout_ratio)
}

pub fn analyze(m: &MetricsWindow, policy: &QoSPolicy, ctx: &AnalysisContext) -> Vec<Condition> {
    let mut out = Vec::new();
    if ctx.advisories.contains(&Advisory::SecurityTakedown) {
        out.push(Condition::SecurityTakedown);
    }
    let recovering = matches!(ctx.incident, Some(IncidentKind::DbDown | IncidentKind::ExternalOutage));
    if ctx.advisories.contains(&Advisory::Restoration) || (ctx.probe_succeeded && recovering) {
        out.push(Condition::ProviderRestored);
    }
    if ctx.config.persistence == PersistenceSource::LocalStatic
        && failing(m, &Endpoint::primary(ServiceId::LocalStaticDb), policy)
    {
        out.push(Condition::DbDown);
    }
    let surge = m.baseline_rate.filter(|b| *b > 0.0).is_some_and(|b| m.arrival_rate >= policy.surge_factor * b);
    let external = active_external(&ctx.config, ctx.generation);
    // Timeouts under a surge are overload, not a provider outage.
    if !ctx.takedown_active && !surge && !external.is_empty() && external.iter().all(|e| failing(m, e, policy)) {
        out.push(Condition::ExternalOutage);
    }
    for (e, em) in &m.endpoints {
        if em.requests >= policy.qos_min_requests && em.p95.is_some_and(|p| p > policy.p95_threshold_ms) {
            out.push(Condition::QoSViolation { endpoint: *e });
        }
    }
    if surge {
        out.push(Condition::TrafficSurge { class: classify_traffic(m, policy) });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::EndpointMetrics;
    use super::*;
    use crate::variability::{canonical_level, Level};

    fn window(entries: &[(Endpoint, u64, u64, Option<f64>)]) -> MetricsWindow {
        let mut m = MetricsWindow { now: 20_000, window_ms: 5000, ..Default::default() };
        for (e, req, to, p95) in entries {
            m.endpoints.insert(*e, EndpointMetrics { requests: *req, timeouts: *to, p95: *p95, ..Default::default() });
        }
        m
    }

    fn ctx(level: Level) -> AnalysisContext {
        AnalysisContext {
            config: canonical_level(level),
            generation: 0,
            advisories: vec![],
            takedown_active: false,
            incident: None,
            probe_succeeded: false,
        }
    }

    #[test]
    fn db_down_from_local_db_timeouts() {
        let m = window(&[(ServiceId::LocalStaticDb.into(), 10, 8, None)]);
        assert_eq!(analyze(&m, &QoSPolicy::default(), &ctx(Level::L0Barebone)), vec![Condition::DbDown]);
    }

    #[test]
    fn floor_prevents_single_timeout_panic() {
        let m = window(&[(ServiceId::LocalStaticDb.into(), 1, 1, None)]);
        assert!(analyze(&m, &QoSPolicy::default(), &ctx(Level::L0Barebone)).is_empty());
    }

    #[test]
    fn external_outage_needs_all_externals() {
        let all = [ServiceId::ImageExt, ServiceId::PersistenceExt, ServiceId::Auth];
        let m = window(&all.map(|s| (s.into(), 6, 6, None)));
        assert_eq!(analyze(&m, &QoSPolicy::default(), &ctx(Level::L2Full)), vec![Condition::ExternalOutage]);
        let partial = window(&[(ServiceId::ImageExt.into(), 6, 6, None), (ServiceId::Auth.into(), 6, 6, None)]);
        assert!(analyze(&partial, &QoSPolicy::default(), &ctx(Level::L2Full)).is_empty());
        let mut during_takedown = ctx(Level::L2Full);
        during_takedown.takedown_active = true;
        assert!(analyze(&m, &QoSPolicy::default(), &during_takedown).is_empty());
    }

    #[test]
    fn qos_violation_on_slow_recommender() {
        let m = window(&[(ServiceId::Recommender.into(), 40, 0, Some(300.0))]);
        assert_eq!(
            analyze(&m, &QoSPolicy::default(), &ctx(Level::L2Full)),
            vec![Condition::QoSViolation { endpoint: ServiceId::Recommender.into() }]
        );
    }

    #[test]
    fn advisories_drive_takedown_and_restoration() {
        let mut c = ctx(Level::L2Full);
        c.advisories = vec![Advisory::SecurityTakedown];
        assert_eq!(analyze(&MetricsWindow::default(), &QoSPolicy::default(), &c), vec![Condition::SecurityTakedown]);
        c.advisories = vec![Advisory::Restoration];
        assert_eq!(analyze(&MetricsWindow::default(), &QoSPolicy::default(), &c), vec![Condition::ProviderRestored]);
    }

    #[test]
    fn probe_success_only_restores_after_outage() {
        let mut c = ctx(Level::L0Barebone);
        c.probe_succeeded = true;
        assert!(analyze(&MetricsWindow::default(), &QoSPolicy::default(), &c).is_empty());
        c.incident = Some(IncidentKind::ExternalOutage);
        assert_eq!(analyze(&MetricsWindow::default(), &QoSPolicy::default(), &c), vec![Condition::ProviderRestored]);
    }

    fn surge(rate_factor: f64, diversity: f64) -> MetricsWindow {
        let requests = (5.0 * rate_factor * 5.0) as u64;
        MetricsWindow {
            arrival_rate: 5.0 * rate_factor,
            baseline_rate: Some(5.0),
            client_requests: requests,
            distinct_sessions: (requests as f64 * diversity).round() as u64,
            ..Default::default()
        }
    }

    #[test]
    fn classification_table() {
        let p = QoSPolicy::default();
        assert_eq!(classify_traffic(&surge(10.0, 0.8), &p), TrafficClass::Benign);
        assert_eq!(classify_traffic(&surge(20.0, 0.05), &p), TrafficClass::Malicious);
        assert_eq!(classify_traffic(&surge(10.0, 0.3), &p), TrafficClass::Unknown);
        assert_eq!(
            analyze(&surge(10.0, 0.3), &p, &ctx(Level::L2Full)),
            vec![Condition::TrafficSurge { class: TrafficClass::Unknown }]
        );
        assert!(analyze(&surge(2.0, 0.3), &p, &ctx(Level::L2Full)).is_empty());
    }
}
