use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ReconfigStep;
use crate::simnet::{LogRecord, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Catalog,
    Images,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: ReconfigStep,
    pub started_at: SimTime,
    pub finished_at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFailure {
    pub index: usize,
    pub step: ReconfigStep,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub plan_id: u64,
    pub started_at: SimTime,
    pub finished_at: Option<SimTime>,
    pub steps: Vec<StepRecord>,
    /// Per mandatory feature, milliseconds during which client requests got
    /// neither a normal nor an explicitly degraded answer.
    pub downtime_ms: BTreeMap<Feature, SimTime>,
    pub failed: Option<StepFailure>,
}

fn union_len(mut spans: Vec<(SimTime, SimTime)>) -> SimTime {
    spans.sort_unstable();
    let mut total = 0;
    let mut cur: Option<(SimTime, SimTime)> = None;
    for (a, b) in spans {
        match cur {
            Some((ca, cb)) if a <= cb => cur = Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                total += cb - ca;
                cur = Some((a, b));
            }
            None => cur = Some((a, b)),
        }
    }
    total + cur.map_or(0, |(a, b)| b - a)
}

/// Downtime per feature for client requests sent in `[from, to]`, read from
/// the client-side records. A client timeout counts against every feature; a
/// page without its image section counts against images. Maintenance pages
/// and placeholder images are explicit degradations, not downtime.
pub fn feature_downtime(records: &[LogRecord], from: SimTime, to: SimTime) -> BTreeMap<Feature, SimTime> {
    let mut sends: BTreeMap<u64, SimTime> = BTreeMap::new();
    let mut catalog = Vec::new();
    let mut images = Vec::new();
    for r in records {
        let id = r.detail.get("id").and_then(|v| v.as_u64());
        match r.kind.as_str() {
            "send" if r.from == "client" && (from..=to).contains(&r.t) => {
                if let Some(id) = id {
                    sends.insert(id, r.t);
                }
            }
            "timeout" if r.from == "client" => {
                if let Some(&t0) = id.and_then(|id| sends.get(&id)) {
                    catalog.push((t0, r.t));
                    images.push((t0, r.t));
                }
            }
            "page" => {
                let Some(&t0) = id.and_then(|id| sends.get(&id)) else { continue };
                let ok = r.detail.get("status").and_then(|v| v.as_str()) == Some("ok");
                let wants_image = r.detail.get("request").and_then(|v| v.as_str()) != Some("login");
                if ok && wants_image && r.detail.get("image").is_none_or(|v| v.is_null()) {
                    images.push((t0, r.t));
                }
            }
            _ => {}
        }
    }
    BTreeMap::from([(Feature::Catalog, union_len(catalog)), (Feature::Images, union_len(images))])
}
