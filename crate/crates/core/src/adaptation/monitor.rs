use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::QoSPolicy;
use crate::simnet::{Endpoint, LogRecord, SimTime};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EndpointMetrics {
    pub requests: u64,
    pub timeouts: u64,
    pub breaker_open: u64,
    pub p50: Option<f64>,
    pub p95: Option<f64>,
}

impl EndpointMetrics {
    pub fn timeout_ratio(&self) -> Option<f64> {
        (self.requests > 0).then(|| self.timeouts as f64 / self.requests as f64)
    }
}

/// Metrics over the last `window_ms` of simulated time, keyed by the
/// endpoint that received the requests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsWindow {
    pub now: SimTime,
    pub window_ms: SimTime,
    pub endpoints: BTreeMap<Endpoint, EndpointMetrics>,
    pub client_requests: u64,
    pub distinct_sessions: u64,
    /// Client requests and distinct sessions over the most recent
    /// classification window only.
    pub recent_requests: u64,
    pub recent_sessions: u64,
    /// Client requests per second over the window.
    pub arrival_rate: f64,
    /// Client requests per second over the trailing baseline before the
    /// window; absent until a full window's worth of history exists.
    pub baseline_rate: Option<f64>,
}

impl MetricsWindow {
    pub fn get(&self, e: &Endpoint) -> EndpointMetrics {
        self.endpoints.get(e).cloned().unwrap_or_default()
    }

    /// Distinct sessions per client request.
    pub fn diversity(&self) -> Option<f64> {
        (self.client_requests > 0).then(|| self.distinct_sessions as f64 / self.client_requests as f64)
    }

    pub fn recent_diversity(&self) -> Option<f64> {
        (self.recent_requests > 0).then(|| self.recent_sessions as f64 / self.recent_requests as f64)
    }
}

/// Nearest-rank percentile of an ascending sample.
pub fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

fn id_of(r: &LogRecord) -> Option<u64> {
    r.detail.get("id").and_then(|v| v.as_u64())
}

/// Builds the window ending at `now` from a time-ordered log. Latency
/// samples and timeouts only count for requests sent inside the window; a
/// timed-out request counts with its deadline until its late response (if
/// any) shows how long it really took.
pub fn observe(records: &[LogRecord], now: SimTime, policy: &QoSPolicy) -> MetricsWindow {
    let w = policy.window_ms;
    let start = now.saturating_sub(w);
    let upto = records.partition_point(|r| r.t <= now);
    let records = &records[..upto];
    let first = records.partition_point(|r| r.t < start);

    let mut m = MetricsWindow { now, window_ms: w, ..Default::default() };
    let mut sent: BTreeMap<u64, (Endpoint, SimTime)> = BTreeMap::new();
    let mut latency: BTreeMap<u64, f64> = BTreeMap::new();
    let mut sessions = BTreeSet::new();
    let mut recent = BTreeSet::new();
    let recent_from = now.saturating_sub(policy.classification_window_ms);
    for r in &records[first..] {
        match r.kind.as_str() {
            "send" => {
                if let (Some(id), Ok(to)) = (id_of(r), r.to.parse::<Endpoint>()) {
                    sent.insert(id, (to, r.t));
                    m.endpoints.entry(to).or_default().requests += 1;
                }
            }
            "timeout" => {
                let Some(id) = id_of(r) else { continue };
                if let Some(&(to, t0)) = sent.get(&id) {
                    latency.entry(id).or_insert((r.t - t0) as f64);
                    m.endpoints.entry(to).or_default().timeouts += 1;
                }
            }
            "response" | "late_response" => {
                if let (Some(id), Some(l)) = (id_of(r), r.detail.get("latency").and_then(|v| v.as_f64())) {
                    if sent.contains_key(&id) {
                        latency.insert(id, l);
                    }
                }
            }
            "breaker_reject" => {
                if let Ok(to) = r.to.parse::<Endpoint>() {
                    m.endpoints.entry(to).or_default().breaker_open += 1;
                }
            }
            "client_request" => {
                m.client_requests += 1;
                let in_recent = r.t > recent_from;
                m.recent_requests += u64::from(in_recent);
                if let Some(s) = r.detail.get("session").and_then(|v| v.as_str()) {
                    sessions.insert(s.to_owned());
                    if in_recent {
                        recent.insert(s.to_owned());
                    }
                }
            }
            _ => {}
        }
    }
    let mut samples: BTreeMap<Endpoint, Vec<f64>> = BTreeMap::new();
    for (id, l) in latency {
        if let Some((to, _)) = sent.get(&id) {
            samples.entry(*to).or_default().push(l);
        }
    }
    for (e, mut v) in samples {
        v.sort_by(f64::total_cmp);
        let em = m.endpoints.entry(e).or_default();
        em.p50 = percentile(&v, 0.5);
        em.p95 = percentile(&v, 0.95);
    }
    m.distinct_sessions = sessions.len() as u64;
    m.recent_sessions = recent.len() as u64;
    m.arrival_rate = m.client_requests as f64 * 1000.0 / w as f64;

    let span = start.min(policy.baseline_ms);
    if span >= w {
        let b0 = start - span;
        let lo = records.partition_point(|r| r.t < b0);
        let n = records[lo..first].iter().filter(|r| r.kind == "client_request").count();
        m.baseline_rate = Some(n as f64 * 1000.0 / span as f64);
    }
    m
}
