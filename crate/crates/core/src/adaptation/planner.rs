use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    AdaptationPlan, Condition, IncidentKind, Knowledge, ReconfigStep, ServiceMode, TrafficClass,
};
use crate::services::webui::WebUiMode;
use crate::simnet::{Endpoint, ServiceId};
use crate::variability::{
    canonical_level, complete_request, diff, AuthMode, Change, Configuration, DimensionValue, ImageSource, Level,
    PartialConfiguration, PersistenceSource, RecommenderMode, VariabilityError,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error(transparent)]
    Unsatisfiable(#[from] VariabilityError),
    #[error("no order of single-dimension changes from {from} to {to} stays valid")]
    NoValidOrder { from: Configuration, to: Configuration },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("step {step}: {message}")]
pub struct OrderViolation {
    pub step: usize,
    pub message: String,
}

/// The endpoint WebUI calls for a dimension value, if any.
pub fn route_endpoint(value: DimensionValue, generation: u32) -> Option<Endpoint> {
    use DimensionValue as D;
    let service = match value {
        D::Image(ImageSource::LocalStatic) => ServiceId::LocalStaticImg,
        D::Image(_) => ServiceId::LocalCacheImg,
        D::Persistence(PersistenceSource::LocalStatic) => ServiceId::LocalStaticDb,
        D::Persistence(PersistenceSource::External) => ServiceId::LocalCacheDb,
        D::Auth(AuthMode::Absent) | D::Recommender(RecommenderMode::Disabled) => return None,
        D::Auth(_) => return Some(Endpoint::new(ServiceId::Auth, generation)),
        D::Recommender(_) => ServiceId::Recommender,
    };
    Some(Endpoint::primary(service))
}

/// The provider endpoint behind a dimension value, if any.
fn upstream_endpoint(value: DimensionValue, generation: u32) -> Option<Endpoint> {
    use DimensionValue as D;
    let service = match value {
        D::Image(ImageSource::ExternalLite | ImageSource::ExternalFull) => ServiceId::ImageExt,
        D::Persistence(PersistenceSource::External) => ServiceId::PersistenceExt,
        D::Auth(AuthMode::Standard | AuthMode::Restrictive) => ServiceId::Auth,
        _ => return None,
    };
    Some(Endpoint::new(service, generation))
}

fn mode_of(value: DimensionValue) -> Option<ServiceMode> {
    use DimensionValue as D;
    match value {
        D::Image(ImageSource::ExternalLite) => Some(ServiceMode::Lite),
        D::Image(ImageSource::ExternalFull) => Some(ServiceMode::Full),
        D::Auth(AuthMode::Standard) => Some(ServiceMode::Standard),
        D::Auth(AuthMode::Restrictive) => Some(ServiceMode::Restrictive),
        D::Recommender(RecommenderMode::LowPower) => Some(ServiceMode::LowPower),
        D::Recommender(RecommenderMode::Full) => Some(ServiceMode::Full),
        _ => None,
    }
}

/// Steps for one dimension change, split into the part that runs in order
/// and the stops deferred to the end of the plan.
fn change_steps(change: &Change, old_gen: u32, new_gen: u32) -> (Vec<ReconfigStep>, Vec<ReconfigStep>) {
    let from_via = route_endpoint(change.from, old_gen);
    let via = route_endpoint(change.to, new_gen);
    let upstream = upstream_endpoint(change.to, new_gen);
    let mut steps = Vec::new();
    if let Some(u) = upstream {
        steps.push(ReconfigStep::StartService { endpoint: u });
        if let (Some(mode), DimensionValue::Image(_) | DimensionValue::Auth(_)) = (mode_of(change.to), change.to) {
            steps.push(ReconfigStep::SetMode { service: u, mode });
        }
    }
    if let Some(v) = via {
        if via != from_via && via != upstream {
            steps.push(ReconfigStep::StartService { endpoint: v });
            if let Some(u) = upstream {
                steps.push(ReconfigStep::WarmCache { endpoint: v, upstream: u });
            }
        }
        if let (Some(mode), DimensionValue::Recommender(_)) = (mode_of(change.to), change.to) {
            steps.push(ReconfigStep::SetMode { service: v, mode });
        }
    }
    steps.push(ReconfigStep::SwitchRoute { from: change.from, to: change.to, from_via, via, upstream });
    let mut stops = Vec::new();
    if let Some(old) = from_via.filter(|o| Some(*o) != via && !o.is_external()) {
        stops.push(ReconfigStep::StopService { endpoint: old });
    }
    (steps, stops)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 0..n {
        for rest in permutations(n - 1) {
            let mut p = vec![first];
            p.extend(rest.into_iter().map(|r| if r >= first { r + 1 } else { r }));
            out.push(p);
        }
    }
    out
}

/// Single-dimension changes from `from` to `to`, in the first order (by
/// dimension) whose every intermediate configuration is valid.
fn ordered_changes(from: &Configuration, to: &Configuration) -> Result<Vec<Change>, PlanError> {
    let changes = diff(from, to).changes;
    for perm in permutations(changes.len()) {
        let mut c = *from;
        let ok = perm.iter().all(|&i| {
            c = c.with(changes[i].to);
            c.is_valid()
        });
        if ok {
            return Ok(perm.into_iter().map(|i| changes[i]).collect());
        }
    }
    Err(PlanError::NoValidOrder { from: *from, to: *to })
}

fn priority(c: &Condition) -> u8 {
    match c {
        Condition::SecurityTakedown => 0,
        Condition::ExternalOutage => 1,
        Condition::DbDown => 2,
        Condition::ProviderRestored => 3,
        Condition::TrafficSurge { class: TrafficClass::Malicious } => 4,
        Condition::TrafficSurge { class: TrafficClass::Unknown } => 5,
        Condition::TrafficSurge { class: TrafficClass::Benign } => 6,
        Condition::QoSViolation { .. } => 7,
        Condition::DevOpsRequest { .. } => 8,
    }
}

fn fill(request: &mut PartialConfiguration, value: DimensionValue) {
    if request.requested(value.dimension()).is_none() {
        request.set(value);
    }
}

fn fill_all(request: &mut PartialConfiguration, config: &Configuration) {
    for d in crate::variability::Dimension::ALL {
        fill(request, config.get(d));
    }
}

/// Rule table from detected conditions to a target configuration and the
/// ordered steps reaching it. Deterministic in its inputs; the plan id is
/// left at 0 for the caller to assign.
pub fn plan(conditions: &[Condition], current: &Configuration, k: &Knowledge) -> Result<AdaptationPlan, PlanError> {
    let mut ordered: Vec<&Condition> = conditions.iter().collect();
    ordered.sort_by_key(|c| priority(c));

    let mut request = PartialConfiguration::default();
    let mut pre = Vec::new();
    let mut post = Vec::new();
    let mut trigger = Vec::new();
    let mut new_gen = k.generation;
    let mut downgrade_recommender = false;
    let mut breakers = false;

    for c in ordered {
        let applies = match c {
            Condition::SecurityTakedown => {
                if k.incident.is_some_and(|i| i.kind == IncidentKind::SecurityTakedown) {
                    false
                } else {
                    fill(&mut request, DimensionValue::Image(ImageSource::LocalStatic));
                    fill(&mut request, DimensionValue::Persistence(PersistenceSource::LocalStatic));
                    fill(&mut request, DimensionValue::Auth(AuthMode::Absent));
                    true
                }
            }
            Condition::ExternalOutage => {
                if k.incident.is_some() {
                    false
                } else {
                    fill_all(&mut request, &canonical_level(Level::L0Barebone));
                    for s in [ServiceId::PersistenceExt, ServiceId::ImageExt, ServiceId::Auth] {
                        post.push(ReconfigStep::StartService { endpoint: Endpoint::new(s, k.generation + 1) });
                    }
                    true
                }
            }
            Condition::DbDown => {
                if k.incident.is_some() || k.webui_mode == WebUiMode::Maintenance {
                    false
                } else {
                    let webui = Endpoint::primary(ServiceId::WebUi);
                    pre.push(ReconfigStep::SetMode { service: webui, mode: ServiceMode::Maintenance });
                    pre.push(ReconfigStep::RestartService { endpoint: Endpoint::primary(ServiceId::LocalStaticDb) });
                    true
                }
            }
            Condition::ProviderRestored => match k.incident {
                None => false,
                Some(i) => {
                    match i.kind {
                        IncidentKind::DbDown => pre.push(ReconfigStep::SetMode {
                            service: Endpoint::primary(ServiceId::WebUi),
                            mode: ServiceMode::Normal,
                        }),
                        IncidentKind::SecurityTakedown => fill_all(&mut request, &i.pre_config),
                        IncidentKind::ExternalOutage => {
                            fill_all(&mut request, &i.pre_config);
                            new_gen = i.redeploy_generation.unwrap_or(k.generation);
                        }
                    }
                    true
                }
            },
            Condition::TrafficSurge { class: TrafficClass::Malicious | TrafficClass::Unknown } => {
                breakers = !k.breakers_deployed;
                fill(&mut request, DimensionValue::Auth(AuthMode::Restrictive));
                downgrade_recommender = true;
                true
            }
            Condition::TrafficSurge { class: TrafficClass::Benign } => {
                downgrade_recommender = true;
                true
            }
            Condition::QoSViolation { endpoint } if endpoint.service == ServiceId::Recommender => {
                downgrade_recommender = true;
                true
            }
            Condition::QoSViolation { .. } => false,
            Condition::DevOpsRequest { request: r } => {
                for d in crate::variability::Dimension::ALL {
                    if let Some(v) = r.requested(d) {
                        fill(&mut request, v);
                    }
                }
                true
            }
        };
        if applies && !trigger.contains(c) {
            trigger.push(c.clone());
        }
    }
    if downgrade_recommender && current.recommender == RecommenderMode::Full {
        fill(&mut request, DimensionValue::Recommender(RecommenderMode::LowPower));
    }
    if breakers {
        pre.insert(0, ReconfigStep::DeployBreakers);
    }

    let target = if request.is_empty() { *current } else { complete_request(&request, current)? };
    let mut steps = pre;
    let mut stops = Vec::new();
    for change in ordered_changes(current, &target)? {
        let (s, st) = change_steps(&change, k.generation, new_gen);
        steps.extend(s);
        stops.extend(st);
    }
    steps.extend(stops);
    steps.extend(post);
    Ok(AdaptationPlan { id: 0, target, steps, trigger })
}

/// Checks start-before-switch-before-stop for every route switch.
pub fn check_order(steps: &[ReconfigStep]) -> Result<(), OrderViolation> {
    for (j, s) in steps.iter().enumerate() {
        let ReconfigStep::SwitchRoute { from_via, via, .. } = s else { continue };
        for (i, other) in steps.iter().enumerate() {
            match other {
                ReconfigStep::StopService { endpoint } if i < j && Some(*endpoint) == *from_via => {
                    return Err(OrderViolation {
                        step: i,
                        message: format!("{endpoint} stopped before the route away from it switched"),
                    });
                }
                ReconfigStep::StartService { endpoint } | ReconfigStep::WarmCache { endpoint, .. }
                    if i > j && Some(*endpoint) == *via =>
                {
                    return Err(OrderViolation {
                        step: i,
                        message: format!("{endpoint} prepared after traffic was switched to it"),
                    });
                }
                _ => {}
            }
        }
    }
    Ok(())
}
