//! Assertion predicates evaluated over a finished run.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{config_or_level, configs_or_levels};
use crate::adaptation::{Condition, ReconfigStep, ServiceMode, TrafficClass};
use crate::services::webui::LoginOutcome;
use crate::simnet::{Endpoint, LogRecord, ServiceId, SimTime};
use crate::variability::Configuration;
use crate::world::{World, CLIENT_TIMEOUT_MS, MAPE_PERIOD_MS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum Assertion {
    /// Every client request sent in the window gets a maintenance page in budget.
    MaintenanceDuring { from_ms: SimTime, to_ms: SimTime },
    /// A product page is served normally within `within_ms` of the first
    /// completed service restart.
    OkPageAfterRestart { within_ms: SimTime },
    /// The configuration becomes `config` within `within_ms` of `after_ms`.
    ConfigWithin {
        after_ms: SimTime,
        within_ms: SimTime,
        #[serde(deserialize_with = "config_or_level")]
        config: Configuration,
    },
    /// Every login sent in the window is answered with `outcome`.
    LoginsAnswered { from_ms: SimTime, to_ms: SimTime, outcome: LoginOutcome },
    /// The configuration left the one in effect at `at_ms` and ends up back in it.
    ConfigRestored { at_ms: SimTime },
    /// The timeline visits these configurations in order.
    TimelineSequence {
        #[serde(deserialize_with = "configs_or_levels")]
        configs: Vec<Configuration>,
    },
    /// `config` is reached within `within_ms` of the first timeout after `after_ms`.
    SwitchAfterFirstTimeout {
        after_ms: SimTime,
        within_ms: SimTime,
        #[serde(deserialize_with = "config_or_level")]
        config: Configuration,
    },
    /// Traffic reaches provider instances `instance`, and not older ones after that.
    RedeployedInstances { instance: u32 },
    /// While in `config`, served product pages carry placeholder images.
    PlaceholderImagesIn {
        #[serde(deserialize_with = "config_or_level")]
        config: Configuration,
    },
    /// After the first monitored p95 violation on `endpoint`, its mode becomes
    /// `mode` within `cycles` MAPE periods.
    ModeAfterQos { endpoint: Endpoint, mode: ServiceMode, after_ms: SimTime, cycles: u32 },
    /// `endpoint` is switched to `mode` at some point after `after_ms`.
    ModeReached { endpoint: Endpoint, mode: ServiceMode, after_ms: SimTime },
    /// Recommendation sections present on served pages are never empty.
    RecommendationsNonEmpty { from_ms: SimTime, to_ms: SimTime },
    BreakerOpened { endpoint: Endpoint },
    /// While the breaker in front of `endpoint` is open, WebUI sends it nothing.
    NoCallsWhileOpen { endpoint: Endpoint },
    RateLimited { min: u64 },
    TrafficClassified { class: TrafficClass },
    /// Some single plan contains all of `steps`.
    PlanIncludes { steps: Vec<ReconfigStep> },
    /// Every executed plan completed with zero mandatory-feature downtime.
    ZeroDowntime,
    /// Every switch onto a cache front comes after that front was warmed.
    WarmBeforeSwitch,
    /// Every client request is answered within its budget plus 1ms.
    Liveness,
    /// Every configuration in the timeline validates.
    ConfigsValid,
}

impl Assertion {
    pub fn name(&self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v["check"].as_str().map(str::to_owned)).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionResult {
    pub check: String,
    pub passed: bool,
    /// False when the run produced nothing the predicate could look at; such
    /// results pass vacuously.
    pub evaluated: bool,
    pub evidence: Value,
}

struct Page<'a> {
    t: SimTime,
    detail: &'a Value,
}

impl Page<'_> {
    fn str(&self, key: &str) -> Option<&str> {
        self.detail.get(key).and_then(Value::as_str)
    }

    fn ok(&self) -> bool {
        self.str("status") == Some("ok")
    }
}

/// Client-side view of the log.
pub(crate) struct RunData<'a> {
    pub records: &'a [LogRecord],
    pub world: &'a World,
    sends: BTreeMap<u64, SimTime>,
    pages: BTreeMap<u64, Page<'a>>,
    timeouts: BTreeMap<u64, SimTime>,
}

fn id_of(r: &LogRecord) -> Option<u64> {
    r.detail.get("id").and_then(Value::as_u64)
}

impl<'a> RunData<'a> {
    pub fn new(records: &'a [LogRecord], world: &'a World) -> Self {
        let client = ServiceId::Client.name();
        let mut sends = BTreeMap::new();
        let mut pages = BTreeMap::new();
        let mut timeouts = BTreeMap::new();
        for r in records {
            match (r.kind.as_str(), id_of(r)) {
                ("send", Some(id)) if r.from == client => {
                    sends.insert(id, r.t);
                }
                ("timeout", Some(id)) if r.from == client => {
                    timeouts.insert(id, r.t);
                }
                ("page", Some(id)) => {
                    pages.insert(id, Page { t: r.t, detail: &r.detail });
                }
                _ => {}
            }
        }
        Self { records, world, sends, pages, timeouts }
    }

    fn sent_in(&self, from: SimTime, to: SimTime) -> impl Iterator<Item = (u64, SimTime)> + '_ {
        self.sends.iter().filter(move |(_, t)| (from..to).contains(*t)).map(|(id, t)| (*id, *t))
    }

    fn config_at(&self, t: SimTime) -> Configuration {
        let tl = &self.world.config_timeline;
        tl.iter().take_while(|(at, _)| *at <= t).last().unwrap_or(&tl[0]).1
    }

    /// Intervals `[start, end)` during which `config` was in effect.
    fn spans_of(&self, config: &Configuration, end: SimTime) -> Vec<(SimTime, SimTime)> {
        let tl = &self.world.config_timeline;
        let mut out = Vec::new();
        for (i, (t, c)) in tl.iter().enumerate() {
            if c == config {
                let until = tl.get(i + 1).map_or(end, |n| n.0);
                if until > *t {
                    out.push((*t, until));
                }
            }
        }
        out
    }

    fn first_config_after(&self, config: &Configuration, after: SimTime) -> Option<SimTime> {
        self.world.config_timeline.iter().find(|(t, c)| *t >= after && c == config).map(|(t, _)| *t)
    }

    fn mode_changes(&self, endpoint: &Endpoint, mode: ServiceMode, after: SimTime) -> Option<SimTime> {
        let name = endpoint.to_string();
        let mode = serde_json::to_value(mode).expect("mode serializes");
        self.records
            .iter()
            .find(|r| r.kind == "mode_changed" && r.t >= after && r.to == name && r.detail.get("mode") == Some(&mode))
            .map(|r| r.t)
    }

    fn breaker_open_spans(&self, endpoint: &Endpoint, end: SimTime) -> Vec<(SimTime, SimTime)> {
        let name = endpoint.to_string();
        let mut spans = Vec::new();
        let mut open: Option<SimTime> = None;
        for r in self.records.iter().filter(|r| r.kind == "breaker" && r.to == name) {
            match (r.detail.get("state").and_then(Value::as_str), open) {
                (Some("open"), None) => open = Some(r.t),
                (Some("half_open" | "closed"), Some(t0)) => {
                    spans.push((t0, r.t));
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(t0) = open {
            spans.push((t0, end));
        }
        spans
    }
}

fn result(passed: bool, evaluated: bool, evidence: Value) -> (bool, bool, Value) {
    (passed, evaluated, evidence)
}

pub(crate) fn evaluate(a: &Assertion, d: &RunData<'_>, end: SimTime) -> AssertionResult {
    let (passed, evaluated, evidence) = match a {
        Assertion::MaintenanceDuring { from_ms, to_ms } => {
            let (mut total, mut maintenance, mut other, mut late) = (0, 0, 0, 0);
            for (id, sent) in d.sent_in(*from_ms, *to_ms) {
                total += 1;
                match d.pages.get(&id) {
                    Some(p) if p.str("status") == Some("maintenance") => {
                        maintenance += 1;
                        if p.t - sent > CLIENT_TIMEOUT_MS {
                            late += 1;
                        }
                    }
                    _ => other += 1,
                }
            }
            let ev = json!({ "requests": total, "maintenance": maintenance, "other": other, "over_budget": late });
            result(total > 0 && other == 0 && late == 0, total > 0, ev)
        }
        Assertion::OkPageAfterRestart { within_ms } => {
            match d.records.iter().find(|r| r.kind == "service_restarted").map(|r| r.t) {
                None => result(false, true, json!({ "restart": null })),
                Some(tr) => {
                    let first_ok = d
                        .pages
                        .values()
                        .filter(|p| p.t >= tr && p.ok() && p.str("request") == Some("product_page"))
                        .map(|p| p.t)
                        .min();
                    let ok = first_ok.is_some_and(|t| t <= tr + within_ms);
                    result(ok, true, json!({ "restart": tr, "first_ok_product_page": first_ok }))
                }
            }
        }
        Assertion::ConfigWithin { after_ms, within_ms, config } => {
            let at = d.first_config_after(config, *after_ms);
            let ok = at.is_some_and(|t| t <= after_ms + within_ms);
            result(ok, true, json!({ "reached_at": at, "deadline": after_ms + within_ms }))
        }
        Assertion::LoginsAnswered { from_ms, to_ms, outcome } => {
            let want = serde_json::to_value(outcome).expect("outcome serializes");
            let mut counts: BTreeMap<String, u64> = BTreeMap::new();
            let mut total = 0;
            for (id, _) in d.sent_in(*from_ms, *to_ms) {
                let key = match d.pages.get(&id) {
                    Some(p) if p.str("request") == Some("login") => {
                        p.detail.get("login").map_or("none".to_owned(), |v| v.as_str().unwrap_or("none").to_owned())
                    }
                    Some(_) => continue,
                    None if d.timeouts.contains_key(&id) => "timeout".to_owned(),
                    None => continue,
                };
                total += 1;
                *counts.entry(key).or_default() += 1;
            }
            let matching = counts.get(want.as_str().unwrap_or_default()).copied().unwrap_or(0);
            result(matching == total && total > 0, total > 0, json!({ "logins": total, "outcomes": counts }))
        }
        Assertion::ConfigRestored { at_ms } => {
            let before = d.config_at(at_ms.saturating_sub(1));
            let left = d.world.config_timeline.iter().any(|(t, c)| *t >= *at_ms && *c != before);
            let last = d.world.config_timeline.last().expect("timeline starts non-empty").1;
            result(left && last == before, true, json!({ "before": before, "final": last, "changed": left }))
        }
        Assertion::TimelineSequence { configs } => {
            let mut want = configs.iter().peekable();
            for (_, c) in &d.world.config_timeline {
                if want.peek() == Some(&c) {
                    want.next();
                }
            }
            let matched = configs.len() - want.count();
            result(matched == configs.len(), true, json!({ "matched": matched, "of": configs.len() }))
        }
        Assertion::SwitchAfterFirstTimeout { after_ms, within_ms, config } => {
            let first_timeout = d.records.iter().find(|r| r.kind == "timeout" && r.t >= *after_ms).map(|r| r.t);
            let switch = d.first_config_after(config, *after_ms);
            match (first_timeout, switch) {
                (Some(t0), Some(ts)) => result(ts <= t0 + within_ms, true, json!({ "first_timeout": t0, "switch": ts })),
                (t0, ts) => result(false, t0.is_some(), json!({ "first_timeout": t0, "switch": ts })),
            }
        }
        Assertion::RedeployedInstances { instance } => {
            let services = [ServiceId::ImageExt, ServiceId::PersistenceExt, ServiceId::Auth];
            let new: BTreeSet<String> = services.iter().map(|s| Endpoint::new(*s, *instance).to_string()).collect();
            let controller = ServiceId::Controller.name();
            let first_use = d
                .records
                .iter()
                .find(|r| r.kind == "send" && r.from != controller && new.contains(&r.to))
                .map(|r| r.t);
            let mut used = BTreeSet::new();
            let mut old_after = 0u64;
            for r in d.records.iter().filter(|r| r.kind == "send" && r.from != controller) {
                if new.contains(&r.to) {
                    used.insert(r.to.clone());
                } else if first_use.is_some_and(|t| r.t > t) {
                    if let Ok(e) = r.to.parse::<Endpoint>() {
                        old_after += u64::from(e.is_external() && e.instance < *instance);
                    }
                }
            }
            let ok = used.len() == new.len() && old_after == 0 && d.world.knowledge().generation == *instance;
            result(ok, true, json!({ "used": used, "sends_to_old_after": old_after, "generation": d.world.knowledge().generation }))
        }
        Assertion::PlaceholderImagesIn { config } => {
            let spans = d.spans_of(config, end);
            let (mut pages, mut placeholders) = (0, 0);
            for (id, sent) in &d.sends {
                let Some(p) = d.pages.get(id) else { continue };
                let inside = spans.iter().any(|(a, b)| (*a..*b).contains(sent) && (*a..*b).contains(&p.t));
                if !inside || !p.ok() || p.str("request") != Some("product_page") {
                    continue;
                }
                pages += 1;
                placeholders += u64::from(p.detail["image"]["placeholder"] == Value::Bool(true));
            }
            result(pages > 0 && pages == placeholders, pages > 0, json!({ "product_pages": pages, "placeholders": placeholders }))
        }
        Assertion::ModeAfterQos { endpoint, mode, after_ms, cycles } => {
            let policy = &d.world.policy;
            let violation = d
                .world
                .metrics_timeline
                .iter()
                .filter(|m| m.now >= *after_ms)
                .find(|m| {
                    let e = m.get(endpoint);
                    e.requests >= policy.qos_min_requests && e.p95.is_some_and(|p| p > policy.p95_threshold_ms)
                })
                .map(|m| m.now);
            let switched = d.mode_changes(endpoint, *mode, *after_ms);
            let limit = u64::from(*cycles) * MAPE_PERIOD_MS;
            let ev = json!({ "violation_at": violation, "switched_at": switched, "limit_ms": limit });
            match (violation, switched) {
                (Some(v), Some(s)) => result(s <= v + limit, true, ev),
                (Some(_), None) => result(false, true, ev),
                (None, _) => result(true, false, ev),
            }
        }
        Assertion::ModeReached { endpoint, mode, after_ms } => {
            let at = d.mode_changes(endpoint, *mode, *after_ms);
            result(at.is_some(), true, json!({ "at": at }))
        }
        Assertion::RecommendationsNonEmpty { from_ms, to_ms } => {
            let (mut sections, mut empty) = (0, 0);
            for (id, _) in d.sent_in(*from_ms, *to_ms) {
                let Some(n) = d.pages.get(&id).filter(|p| p.ok()).and_then(|p| p.detail.get("recommendations")).and_then(Value::as_u64) else {
                    continue;
                };
                sections += 1;
                empty += u64::from(n == 0);
            }
            result(sections > 0 && empty == 0, sections > 0, json!({ "sections": sections, "empty": empty }))
        }
        Assertion::BreakerOpened { endpoint } => {
            let spans = d.breaker_open_spans(endpoint, end);
            result(!spans.is_empty(), true, json!({ "open_spans": spans }))
        }
        Assertion::NoCallsWhileOpen { endpoint } => {
            let spans = d.breaker_open_spans(endpoint, end);
            let name = endpoint.to_string();
            let webui = ServiceId::WebUi.name();
            let calls = d
                .records
                .iter()
                .filter(|r| r.kind == "send" && r.from == webui && r.to == name)
                .filter(|r| spans.iter().any(|(a, b)| (*a..*b).contains(&r.t)))
                .count();
            let rejected = d.records.iter().filter(|r| r.kind == "breaker_reject" && r.to == name).count();
            result(calls == 0 && !spans.is_empty(), !spans.is_empty(), json!({ "open_spans": spans.len(), "calls_while_open": calls, "rejected": rejected }))
        }
        Assertion::RateLimited { min } => {
            let n = d
                .records
                .iter()
                .filter(|r| r.kind == "auth_rejected" && r.detail.get("reason").and_then(Value::as_str) == Some("rate_limited"))
                .count() as u64;
            result(n >= *min, true, json!({ "rate_limited": n }))
        }
        Assertion::TrafficClassified { class } => {
            let seen: Vec<TrafficClass> = d
                .world
                .conditions
                .iter()
                .filter_map(|c| match c.condition {
                    Condition::TrafficSurge { class } => Some(class),
                    _ => None,
                })
                .collect();
            let first = seen.first().copied();
            result(first == Some(*class), true, json!({ "first": first, "detections": seen.len() }))
        }
        Assertion::PlanIncludes { steps } => {
            let hit = d.world.plans.iter().find(|p| steps.iter().all(|s| p.steps.contains(s))).map(|p| p.id);
            result(hit.is_some(), true, json!({ "plan": hit, "plans": d.world.plans.len() }))
        }
        Assertion::ZeroDowntime => {
            let reports = &d.world.reports;
            let bad: Vec<u64> = reports
                .iter()
                .filter(|r| r.failed.is_some() || r.downtime_ms.values().any(|v| *v > 0))
                .map(|r| r.plan_id)
                .collect();
            let downtime: Vec<_> = reports.iter().map(|r| json!({ "plan": r.plan_id, "downtime_ms": r.downtime_ms })).collect();
            result(!reports.is_empty() && bad.is_empty(), !reports.is_empty(), json!({ "reports": downtime, "failing": bad }))
        }
        Assertion::WarmBeforeSwitch => {
            let mut switches = 0;
            let mut unwarmed = Vec::new();
            for r in &d.world.reports {
                for (i, s) in r.steps.iter().enumerate() {
                    let ReconfigStep::SwitchRoute { via: Some(via), .. } = &s.step else { continue };
                    if !matches!(via.service, ServiceId::LocalCacheDb | ServiceId::LocalCacheImg) {
                        continue;
                    }
                    switches += 1;
                    let warmed = r.steps[..i].iter().any(|w| {
                        matches!(&w.step, ReconfigStep::WarmCache { endpoint, .. } if endpoint == via)
                            && w.finished_at <= s.started_at
                    });
                    if !warmed {
                        unwarmed.push(via.to_string());
                    }
                }
            }
            result(switches > 0 && unwarmed.is_empty(), switches > 0, json!({ "cache_switches": switches, "unwarmed": unwarmed }))
        }
        Assertion::Liveness => {
            let mut unanswered = 0;
            let mut over = 0;
            for (id, sent) in &d.sends {
                match d.pages.get(id) {
                    Some(p) if p.t - sent > CLIENT_TIMEOUT_MS + 1 => over += 1,
                    Some(_) => {}
                    None if d.timeouts.contains_key(id) => unanswered += 1,
                    None if *sent + CLIENT_TIMEOUT_MS < end => unanswered += 1,
                    None => {}
                }
            }
            let total = d.sends.len();
            result(unanswered == 0 && over == 0, total > 0, json!({ "requests": total, "unanswered": unanswered, "over_budget": over }))
        }
        Assertion::ConfigsValid => {
            let invalid: Vec<_> = d.world.config_timeline.iter().filter(|(_, c)| !c.is_valid()).map(|(t, _)| *t).collect();
            result(invalid.is_empty(), true, json!({ "entries": d.world.config_timeline.len(), "invalid_at": invalid }))
        }
    };
    AssertionResult { check: a.name(), passed, evaluated, evidence }
}
