//! The running store.
//!
//! One simnet handler owns the state of every service plus the controller
//! that runs the MAPE loop and executes plans. Services talk only through
//! simnet requests; the controller acts on services directly, at the
//! simulated instant the step runs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::adaptation::{
    analyze, check_order, feature_downtime, observe, plan, route_endpoint, AdaptationPlan, Advisory, AnalysisContext,
    Condition, DetectedCondition, ExecutionReport, Incident, IncidentKind, Knowledge, MetricsWindow, PlanError,
    QoSPolicy, ReconfigStep, ServiceMode, StepFailure, StepRecord,
};
use crate::recommender::{recommend, sync_training_data, TrainingState, DEFAULT_K};
use crate::scenarios::Arrival;
use crate::services::auth::{AuthError, AuthService, Session};
use crate::services::breaker::{BreakerConfig, BreakerPhase, CircuitBreaker, Permit, Transition};
use crate::services::data::{user_name, Dataset, ProductId, UserId};
use crate::services::image::{placeholder, ImageBlob, ImageFlavor, ImageProvider, SizeLabel, DEFAULT_IMAGE_CACHE_CAPACITY};
use crate::services::persistence::{scan, PersistenceCluster, Query, Rows, DEFAULT_CACHE_CAPACITY};
use crate::services::readthrough::{ReadThrough, DEFAULT_TTL_MS};
use crate::services::webui::{
    assemble, catalog_query, image_size, parts, AuthReply, ClientRequest, Credentials, PageResponse, PageStatus, Part,
    PartResults, RequestKind, WebUiMode,
};
use crate::simnet::{
    Endpoint, Envelope, FaultId, FaultSpec, Handler, LinkConfig, Net, Outcome, Payload, Reply, RequestId, ServiceId,
    SimError, SimTime, Simulation,
};
use crate::variability::{
    validate, AuthMode, Configuration, DimensionValue, ImageSource, PartialConfiguration, RecommenderMode,
};

pub const CLIENT_TIMEOUT_MS: SimTime = 100;
pub const WEBUI_CALL_TIMEOUT_MS: SimTime = 80;
pub const FRONT_TIMEOUT_MS: SimTime = 60;
pub const AUTH_LOOKUP_TIMEOUT_MS: SimTime = 50;
pub const TRAINING_TIMEOUT_MS: SimTime = 500;
pub const PROBE_TIMEOUT_MS: SimTime = 500;
pub const WARM_TIMEOUT_MS: SimTime = 3000;
pub const MAPE_PERIOD_MS: SimTime = 1000;
pub const PROBE_PERIOD_MS: SimTime = 2000;
pub const PROVISIONING_MS: SimTime = 8000;
pub const RETRY_MS: SimTime = 1000;
pub const DRAIN_LIMIT_MS: SimTime = 500;
pub const TRAINING_WAIT_MS: SimTime = 3000;

/// Simulated work per request, in milliseconds.
pub mod service_ms {
    use crate::simnet::SimTime;

    pub const WEBUI: SimTime = 2;
    pub const AUTH: SimTime = 8;
    pub const AUTH_RESTRICTIVE: SimTime = 12;
    pub const PERSISTENCE: SimTime = 10;
    pub const RECOMMENDER_LOW_POWER: SimTime = 2;
    pub const RECOMMENDER_FULL: SimTime = 24;
    pub const LOCAL: SimTime = 1;
}

fn workers(service: ServiceId) -> Option<usize> {
    use ServiceId::*;
    match service {
        Auth | PersistenceExt | ImageExt | Recommender | LocalStaticDb | LocalStaticImg => Some(1),
        WebUi | LocalCacheDb | LocalCacheImg | Client | Controller => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Msg {
    Page(Box<ClientRequest>),
    PageReply(Box<PageResponse>),
    Query(Query),
    Rows(Rows),
    Image { product: ProductId, size: SizeLabel },
    ImageReply(ImageBlob),
    Recommend { user: Option<UserId>, cart: Vec<ProductId>, viewed: Option<ProductId> },
    Recommendations(Vec<ProductId>),
    Validate(Option<Session>),
    Validity(bool),
    Login { client: String, username: String, password: String },
    LoginReply(Result<Session, AuthError>),
    Cart { token: Option<Session>, product: ProductId },
    CartReply(Option<Session>),
    Sync,
    TrainingData(Box<TrainingState>),
    Probe,
    Pong,
    /// A cache front or auth could not reach its upstream.
    Unavailable,
}

impl Payload for Msg {
    fn label(&self) -> String {
        match self {
            Msg::Page(r) => r.kind.name(),
            Msg::PageReply(p) if p.status == PageStatus::Ok => "page_ok",
            Msg::PageReply(_) => "page_maintenance",
            Msg::Query(_) => "query",
            Msg::Rows(_) => "rows",
            Msg::Image { .. } => "image",
            Msg::ImageReply(_) => "image_reply",
            Msg::Recommend { .. } => "recommend",
            Msg::Recommendations(_) => "recommendations",
            Msg::Validate(_) => "validate",
            Msg::Validity(_) => "validity",
            Msg::Login { .. } => "login",
            Msg::LoginReply(_) => "login_reply",
            Msg::Cart { .. } => "cart",
            Msg::CartReply(_) => "cart_reply",
            Msg::Sync => "sync",
            Msg::TrainingData(_) => "training_data",
            Msg::Probe => "probe",
            Msg::Pong => "pong",
            Msg::Unavailable => "unavailable",
        }
        .to_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timer {
    Arrival(usize),
    Action(usize),
    Mape,
    ProbeRound,
    Executor,
    TrainRetry(u32),
}

/// Something that happens to the running system from outside.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    InjectFault {
        #[serde(default)]
        label: Option<String>,
        spec: FaultSpec,
    },
    ClearFault {
        label: String,
    },
    Advisory {
        advisory: Advisory,
    },
    DevOps {
        request: PartialConfiguration,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Routes {
    pub persistence: Endpoint,
    pub image: Endpoint,
    pub auth: Endpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateSnapshot {
    pub t: SimTime,
    pub configuration: Configuration,
    pub webui_mode: WebUiMode,
    pub generation: u32,
    pub routes: Routes,
    pub breakers_deployed: bool,
    pub breakers: BTreeMap<Endpoint, BreakerPhase>,
    pub active_faults: BTreeMap<FaultId, FaultSpec>,
    pub incident: Option<Incident>,
    pub executing_plan: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
enum FrontKey {
    Db(Query),
    Img(ProductId, SizeLabel),
}

struct PageState {
    req: ClientRequest,
    config: Configuration,
    results: PartResults,
    outstanding: usize,
}

struct SubCall {
    page: RequestId,
    part: Part,
    permit: Option<Permit>,
    target: Endpoint,
}

struct ClientCall {
    session: String,
    kind: RequestKind,
    sent: SimTime,
}

enum Wait {
    Warm { outstanding: usize, failed: bool },
    Drain { endpoint: Endpoint, until: SimTime },
    Restart { endpoint: Endpoint },
    Training { deadline: SimTime },
}

enum StepResult {
    Done,
    Wait(Wait),
    Failed(String),
}

struct Execution {
    plan: AdaptationPlan,
    index: usize,
    step_started: SimTime,
    wait: Option<Wait>,
    report: ExecutionReport,
}

#[derive(Default)]
struct ProbeRound {
    outstanding: BTreeSet<RequestId>,
    ok: usize,
    total: usize,
}

pub struct World {
    pub policy: QoSPolicy,
    config: Configuration,
    knowledge: Knowledge,
    routes: Routes,
    webui_mode: WebUiMode,

    static_catalog: Dataset,
    persistence: PersistenceCluster,
    auth: AuthService,
    auth_mode: AuthMode,
    images: BTreeMap<u32, ImageProvider>,
    recommender_mode: RecommenderMode,
    recommenders: BTreeMap<u32, Option<TrainingState>>,
    cache_db: ReadThrough<Query, Rows>,
    cache_img: ReadThrough<(ProductId, SizeLabel), ImageBlob>,
    breakers: BTreeMap<Endpoint, CircuitBreaker>,

    pages: BTreeMap<RequestId, PageState>,
    subcalls: BTreeMap<RequestId, SubCall>,
    front_calls: BTreeMap<RequestId, (RequestId, FrontKey)>,
    warm_calls: BTreeMap<RequestId, FrontKey>,
    auth_calls: BTreeMap<RequestId, (RequestId, String)>,
    training_calls: BTreeSet<RequestId>,

    arrivals: Vec<Arrival>,
    client_calls: BTreeMap<RequestId, ClientCall>,
    client_tokens: BTreeMap<String, Session>,
    actions: Vec<Action>,
    fault_labels: BTreeMap<String, FaultId>,

    pending_advisories: Vec<Advisory>,
    takedown_active: bool,
    probe_succeeded: bool,
    probing: bool,
    probe_round: Option<ProbeRound>,
    queue: VecDeque<AdaptationPlan>,
    exec: Option<Execution>,
    next_plan_id: u64,
    last_metrics: MetricsWindow,

    pub plans: Vec<AdaptationPlan>,
    pub reports: Vec<ExecutionReport>,
    pub conditions: Vec<DetectedCondition>,
    pub config_timeline: Vec<(SimTime, Configuration)>,
    pub metrics_timeline: Vec<MetricsWindow>,
}

/// Builds a simulation of the store in `config`, seeded with `seed`, with the
/// MAPE loop scheduled. Fails if `config` is invalid.
pub fn build(config: Configuration, seed: u64) -> Result<Simulation<World>, Vec<String>> {
    let v = validate(&config);
    if !v.valid {
        return Err(v.violations.into_iter().map(|x| format!("{:?}: {}", x.constraint, x.message)).collect());
    }
    let mut sim = Simulation::new(World::new(config, seed), seed, LinkConfig::default());
    sim.handler.install(&mut sim.net);
    Ok(sim)
}

impl World {
    fn new(config: Configuration, seed: u64) -> Self {
        let persistence = PersistenceCluster::new(seed, 1, DEFAULT_CACHE_CAPACITY);
        let flavor = if config.image == ImageSource::ExternalLite { ImageFlavor::Lite } else { ImageFlavor::Full };
        let products = crate::services::data::PRODUCT_COUNT;
        Self {
            policy: QoSPolicy::default(),
            config,
            knowledge: Knowledge::default(),
            routes: Routes {
                persistence: Endpoint::primary(ServiceId::PersistenceExt),
                image: Endpoint::primary(ServiceId::ImageExt),
                auth: Endpoint::primary(ServiceId::Auth),
            },
            webui_mode: WebUiMode::Normal,
            static_catalog: Dataset::generate(seed).static_catalog(),
            persistence,
            auth: AuthService::new(format!("secret-{seed:x}")),
            auth_mode: if config.auth == AuthMode::Restrictive { AuthMode::Restrictive } else { AuthMode::Standard },
            images: BTreeMap::from([(0, ImageProvider::new(flavor, products, DEFAULT_IMAGE_CACHE_CAPACITY))]),
            recommender_mode: if config.recommender == RecommenderMode::Full {
                RecommenderMode::Full
            } else {
                RecommenderMode::LowPower
            },
            recommenders: BTreeMap::from([(0, None)]),
            cache_db: ReadThrough::new(DEFAULT_CACHE_CAPACITY, DEFAULT_TTL_MS),
            cache_img: ReadThrough::new(DEFAULT_CACHE_CAPACITY, DEFAULT_TTL_MS),
            breakers: BTreeMap::new(),
            pages: BTreeMap::new(),
            subcalls: BTreeMap::new(),
            front_calls: BTreeMap::new(),
            warm_calls: BTreeMap::new(),
            auth_calls: BTreeMap::new(),
            training_calls: BTreeSet::new(),
            arrivals: Vec::new(),
            client_calls: BTreeMap::new(),
            client_tokens: BTreeMap::new(),
            actions: Vec::new(),
            fault_labels: BTreeMap::new(),
            pending_advisories: Vec::new(),
            takedown_active: false,
            probe_succeeded: false,
            probing: false,
            probe_round: None,
            queue: VecDeque::new(),
            exec: None,
            next_plan_id: 1,
            last_metrics: MetricsWindow::default(),
            plans: Vec::new(),
            reports: Vec::new(),
            conditions: Vec::new(),
            config_timeline: vec![(0, config)],
            metrics_timeline: Vec::new(),
        }
    }

    fn install(&mut self, net: &mut Net<Msg, Timer>) {
        use ServiceId::*;
        let c = self.config;
        let active: [(ServiceId, bool); 11] = [
            (Client, true),
            (Controller, true),
            (WebUi, true),
            (Auth, true),
            (PersistenceExt, true),
            (ImageExt, true),
            (Recommender, c.recommender.is_active()),
            (LocalStaticDb, !c.persistence.is_external()),
            (LocalStaticImg, !c.image.is_external()),
            (LocalCacheDb, c.persistence.is_external()),
            (LocalCacheImg, c.image.is_external()),
        ];
        for (s, on) in active {
            let e = Endpoint::primary(s);
            net.register(e, workers(s), 0);
            if !on {
                net.set_stopped(e, true).expect("just registered");
            }
        }
        let counts = self.persistence.seed();
        net.record("seeded", ServiceId::PersistenceExt, "", json!(counts));
        if c.recommender.is_active() {
            self.start_training(net, 0);
        }
        net.schedule_in(MAPE_PERIOD_MS, Timer::Mape);
    }

    pub fn config(&self) -> Configuration {
        self.config
    }

    pub fn knowledge(&self) -> &Knowledge {
        &self.knowledge
    }

    pub fn webui_mode(&self) -> WebUiMode {
        self.webui_mode
    }

    pub fn routes(&self) -> Routes {
        self.routes
    }

    pub fn metrics(&self) -> &MetricsWindow {
        &self.last_metrics
    }

    pub fn breaker(&self, e: &Endpoint) -> Option<&CircuitBreaker> {
        self.breakers.get(e)
    }

    pub fn is_executing(&self) -> bool {
        self.exec.is_some() || !self.queue.is_empty()
    }

    pub fn recommender_state(&self, instance: u32) -> Option<&TrainingState> {
        self.recommenders.get(&instance).and_then(Option::as_ref)
    }

    pub fn image_resizes(&self, instance: u32) -> u64 {
        self.images.get(&instance).map_or(0, ImageProvider::resizes)
    }

    pub fn snapshot(&self, net: &Net<Msg, Timer>) -> StateSnapshot {
        StateSnapshot {
            t: net.now(),
            configuration: self.config,
            webui_mode: self.webui_mode,
            generation: self.knowledge.generation,
            routes: self.routes,
            breakers_deployed: self.knowledge.breakers_deployed,
            breakers: self.breakers.iter().map(|(e, b)| (*e, b.phase())).collect(),
            active_faults: net.active_faults().map(|(id, f)| (*id, f.clone())).collect(),
            incident: self.knowledge.incident,
            executing_plan: self.exec.as_ref().map(|e| e.plan.id),
        }
    }

    /// Adds client arrivals and schedules them.
    pub fn add_arrivals(&mut self, net: &mut Net<Msg, Timer>, arrivals: Vec<Arrival>) -> Result<(), SimError> {
        for a in arrivals {
            let i = self.arrivals.len();
            net.schedule(a.t, Timer::Arrival(i))?;
            self.arrivals.push(a);
        }
        Ok(())
    }

    /// Schedules an external action at `at`.
    pub fn schedule_action(&mut self, net: &mut Net<Msg, Timer>, at: SimTime, action: Action) -> Result<(), SimError> {
        let i = self.actions.len();
        net.schedule(at, Timer::Action(i))?;
        self.actions.push(action);
        Ok(())
    }

    pub fn fault_id(&self, label: &str) -> Option<FaultId> {
        self.fault_labels.get(label).copied()
    }

    /// Applies an external action now.
    pub fn apply_action(&mut self, net: &mut Net<Msg, Timer>, action: Action) -> Result<(), ActionError> {
        match action {
            Action::InjectFault { label, spec } => {
                let id = net.inject_fault(spec)?;
                if let Some(l) = label {
                    self.fault_labels.insert(l, id);
                }
            }
            Action::ClearFault { label } => {
                let id = self.fault_labels.get(&label).copied().ok_or(ActionError::UnknownLabel(label))?;
                net.clear_fault(id)?;
            }
            Action::Advisory { advisory } => self.advise(net, advisory),
            Action::DevOps { request } => {
                self.submit_devops(net, request)?;
            }
        }
        Ok(())
    }

    /// Delivers a provider advisory and runs an analysis right away.
    pub fn advise(&mut self, net: &mut Net<Msg, Timer>, advisory: Advisory) {
        net.record("advisory", "provider", ServiceId::Controller, json!({ "advisory": advisory }));
        self.takedown_active = match advisory {
            Advisory::SecurityTakedown => true,
            Advisory::Restoration => false,
        };
        self.pending_advisories.push(advisory);
        self.mape(net, false);
    }

    /// Plans a DevOps reconfiguration request against the configuration the
    /// system will be in once queued plans finish, and queues it.
    pub fn submit_devops(
        &mut self,
        net: &mut Net<Msg, Timer>,
        request: PartialConfiguration,
    ) -> Result<(Configuration, u64), PlanError> {
        let condition = Condition::DevOpsRequest { request };
        let now = net.now();
        net.record("condition", ServiceId::Controller, "", json!(condition));
        self.conditions.push(DetectedCondition { condition: condition.clone(), detected_at: now });
        let base = self.queue.back().map(|p| p.target).or(self.exec.as_ref().map(|e| e.plan.target)).unwrap_or(self.config);
        let p = plan(&[condition], &base, &self.knowledge)?;
        let target = p.target;
        let id = self.enqueue(net, p).expect("planner output is ordered");
        Ok((target, id))
    }

    /// Fills in downtime for every report from the client-side log.
    pub fn finalize_reports(&mut self, net: &Net<Msg, Timer>) {
        let records = net.log().records();
        for r in &mut self.reports {
            let end = r.finished_at.unwrap_or(net.now());
            r.downtime_ms = feature_downtime(records, r.started_at, end);
        }
    }

    /// Starts a second recommender that copies its training data from the
    /// first, retrying until the peer answers.
    pub fn start_recommender_replica(&mut self, net: &mut Net<Msg, Timer>) -> Endpoint {
        let e = Endpoint::new(ServiceId::Recommender, 1);
        if !net.is_registered(&e) {
            net.register(e, Some(1), net.now());
        }
        self.recommenders.insert(1, None);
        self.start_training(net, 1);
        e
    }

    // ---- client ----

    fn client_arrival(&mut self, net: &mut Net<Msg, Timer>, i: usize) {
        let a = self.arrivals[i].clone();
        let credentials = (a.kind == RequestKind::Login).then(|| Credentials {
            username: user_name(a.user),
            password: a.password.clone(),
        });
        let req = ClientRequest {
            kind: a.kind,
            client: a.session.clone(),
            product: a.product,
            category: a.category,
            token: self.client_tokens.get(&a.session).cloned(),
            credentials,
        };
        net.record("client_request", ServiceId::Client, ServiceId::WebUi, json!({ "session": a.session, "kind": a.kind }));
        let client = Endpoint::primary(ServiceId::Client);
        let webui = Endpoint::primary(ServiceId::WebUi);
        if let Ok(id) = net.send_request(client, webui, Msg::Page(Box::new(req)), CLIENT_TIMEOUT_MS) {
            self.client_calls.insert(id, ClientCall { session: a.session, kind: a.kind, sent: net.now() });
        }
    }

    fn client_response(&mut self, net: &mut Net<Msg, Timer>, id: RequestId, outcome: Outcome<Msg>) {
        let Some(call) = self.client_calls.remove(&id) else { return };
        let Outcome::Response(Msg::PageReply(page)) = outcome else { return };
        let s = page.sections.as_ref();
        net.record(
            "page",
            ServiceId::WebUi,
            ServiceId::Client,
            json!({
                "id": id,
                "session": call.session,
                "request": call.kind,
                "sent": call.sent,
                "latency": net.now() - call.sent,
                "status": page.status,
                "image": s.and_then(|s| s.image.as_ref()),
                "recommendations": s.and_then(|s| s.recommendations.as_ref().map(Vec::len)),
                "login": s.and_then(|s| s.login),
            }),
        );
        if let Some(token) = s.and_then(|s| s.session.clone()) {
            self.client_tokens.insert(call.session, token);
        }
    }

    // ---- webui ----

    fn acquire_breaker(&mut self, net: &mut Net<Msg, Timer>, target: Endpoint) -> Result<Permit, ()> {
        let now = net.now();
        let b = self.breakers.entry(target).or_insert_with(|| CircuitBreaker::new(BreakerConfig::default()));
        let (permit, transition) = b.acquire(now);
        if let Some(t) = transition {
            log_transition(net, target, t);
        }
        permit.map_err(|_| {
            net.record("breaker_reject", ServiceId::WebUi, target, json!({}));
        })
    }

    fn webui_request(&mut self, net: &mut Net<Msg, Timer>, env: &Envelope<Msg>) -> Reply<Msg> {
        let Msg::Page(req) = &env.payload else { return Reply::Ignore };
        if self.webui_mode == WebUiMode::Maintenance {
            return Reply::Now { payload: Msg::PageReply(Box::new(PageResponse::maintenance())), service_ms: service_ms::WEBUI };
        }
        let config = self.config;
        let mut state = PageState { req: (**req).clone(), config, results: PartResults::default(), outstanding: 0 };
        let token = req.token.clone();
        for part in parts(req.kind, &config) {
            let (target, payload) = match part {
                Part::Catalog => (
                    route_endpoint(DimensionValue::Persistence(config.persistence), 0),
                    Msg::Query(catalog_query(req)),
                ),
                Part::Image => (
                    route_endpoint(DimensionValue::Image(config.image), 0),
                    Msg::Image { product: req.product, size: image_size(req.kind) },
                ),
                Part::Recommendations => (
                    Some(Endpoint::primary(ServiceId::Recommender)),
                    Msg::Recommend {
                        user: token.as_ref().filter(|t| t.logged_in).and_then(|t| t.user),
                        cart: token.as_ref().map(|t| t.cart.clone()).unwrap_or_default(),
                        viewed: (req.kind != RequestKind::CategoryPage).then_some(req.product),
                    },
                ),
                Part::Auth => (Some(self.routes.auth), auth_payload(req)),
            };
            let Some(target) = target else { continue };
            let permit = if self.knowledge.breakers_deployed {
                match self.acquire_breaker(net, target) {
                    Ok(p) => Some(p),
                    Err(()) => {
                        record_part(&mut state.results, part, None);
                        continue;
                    }
                }
            } else {
                None
            };
            let webui = Endpoint::primary(ServiceId::WebUi);
            match net.send_request(webui, target, payload, WEBUI_CALL_TIMEOUT_MS) {
                Ok(id) => {
                    self.subcalls.insert(id, SubCall { page: env.id, part, permit, target });
                    state.outstanding += 1;
                }
                Err(_) => record_part(&mut state.results, part, None),
            }
        }
        if state.outstanding == 0 {
            let page = assemble(&state.req, &state.config, state.results);
            return Reply::Now { payload: Msg::PageReply(Box::new(page)), service_ms: service_ms::WEBUI };
        }
        self.pages.insert(env.id, state);
        Reply::Deferred { busy_ms: service_ms::WEBUI }
    }

    fn webui_response(&mut self, net: &mut Net<Msg, Timer>, id: RequestId, outcome: Outcome<Msg>) {
        let Some(call) = self.subcalls.remove(&id) else { return };
        let reply = match outcome {
            Outcome::Response(Msg::Unavailable) | Outcome::Timeout => None,
            Outcome::Response(m) => Some(m),
        };
        if let Some(permit) = call.permit {
            if let Some(b) = self.breakers.get_mut(&call.target) {
                if let Some(t) = b.record(net.now(), permit, reply.is_some()) {
                    log_transition(net, call.target, t);
                }
            }
        }
        let Some(state) = self.pages.get_mut(&call.page) else { return };
        record_part(&mut state.results, call.part, reply);
        state.outstanding -= 1;
        if state.outstanding == 0 {
            let state = self.pages.remove(&call.page).expect("present");
            let page = assemble(&state.req, &state.config, state.results);
            net.respond(call.page, Msg::PageReply(Box::new(page)), 0);
        }
    }

    // ---- services ----

    fn auth_request(&mut self, net: &mut Net<Msg, Timer>, env: &Envelope<Msg>) -> Reply<Msg> {
        let now = net.now();
        let cost = if self.auth_mode == AuthMode::Restrictive { service_ms::AUTH_RESTRICTIVE } else { service_ms::AUTH };
        let payload = match &env.payload {
            Msg::Validate(token) => Msg::Validity(token.as_ref().is_some_and(|s| self.auth.validate(s))),
            Msg::Cart { token, product } => Msg::CartReply(match token {
                Some(t) => self.auth.add_to_cart(t, *product, now),
                None => Some(self.auth.sign(None, vec![*product], false, now)),
            }),
            Msg::Login { client, username, password } => {
                if let Err(e) = self.auth.admit_attempt(now, client, self.auth_mode) {
                    net.record("auth_rejected", env.to, "", json!({ "client": client, "reason": e }));
                    return Reply::Now { payload: Msg::LoginReply(Err(e)), service_ms: cost };
                }
                let pext = Endpoint::new(ServiceId::PersistenceExt, env.to.instance);
                let lookup = Msg::Query(Query::UserByName { name: username.clone() });
                return match net.send_request(env.to, pext, lookup, AUTH_LOOKUP_TIMEOUT_MS) {
                    Ok(id) => {
                        self.auth_calls.insert(id, (env.id, password.clone()));
                        Reply::Deferred { busy_ms: cost }
                    }
                    Err(_) => Reply::Now { payload: Msg::Unavailable, service_ms: cost },
                };
            }
            _ => return Reply::Ignore,
        };
        Reply::Now { payload, service_ms: cost }
    }

    fn auth_response(&mut self, net: &mut Net<Msg, Timer>, id: RequestId, outcome: Outcome<Msg>) {
        let Some((login, password)) = self.auth_calls.remove(&id) else { return };
        let reply = match outcome {
            Outcome::Response(Msg::Rows(Rows::User(user))) => {
                Msg::LoginReply(self.auth.verify(net.now(), user.as_ref(), &password))
            }
            _ => Msg::Unavailable,
        };
        net.respond(login, reply, 0);
    }

    fn front_request(&mut self, net: &mut Net<Msg, Timer>, env: &Envelope<Msg>) -> Reply<Msg> {
        let now = net.now();
        let (key, upstream, payload) = match (&env.to.service, &env.payload) {
            (ServiceId::LocalCacheDb, Msg::Query(q)) => {
                if let Some(rows) = self.cache_db.lookup(now, q) {
                    return Reply::Now { payload: Msg::Rows(rows), service_ms: service_ms::LOCAL };
                }
                self.cache_db.note_fetch();
                (FrontKey::Db(q.clone()), self.routes.persistence, env.payload.clone())
            }
            (ServiceId::LocalCacheImg, Msg::Image { product, size }) => {
                if let Some(blob) = self.cache_img.lookup(now, &(*product, *size)) {
                    return Reply::Now { payload: Msg::ImageReply(blob), service_ms: service_ms::LOCAL };
                }
                self.cache_img.note_fetch();
                (FrontKey::Img(*product, *size), self.routes.image, env.payload.clone())
            }
            _ => return Reply::Ignore,
        };
        match net.send_request(env.to, upstream, payload, FRONT_TIMEOUT_MS) {
            Ok(id) => {
                self.front_calls.insert(id, (env.id, key));
                Reply::Deferred { busy_ms: service_ms::LOCAL }
            }
            Err(_) => Reply::Now { payload: Msg::Unavailable, service_ms: service_ms::LOCAL },
        }
    }

    fn store_front(&mut self, now: SimTime, key: &FrontKey, reply: &Msg) -> bool {
        match (key, reply) {
            (FrontKey::Db(q), Msg::Rows(rows)) => {
                self.cache_db.store(now, q.clone(), rows.clone());
                true
            }
            (FrontKey::Img(p, s), Msg::ImageReply(blob)) => {
                self.cache_img.store(now, (*p, *s), blob.clone());
                true
            }
            _ => false,
        }
    }

    fn front_response(&mut self, net: &mut Net<Msg, Timer>, request: &Envelope<Msg>, outcome: Outcome<Msg>) {
        let now = net.now();
        if let Some(key) = self.warm_calls.remove(&request.id) {
            let ok = matches!(&outcome, Outcome::Response(m) if self.store_front(now, &key, m));
            self.warm_progress(net, ok);
            return;
        }
        let Some((downstream, key)) = self.front_calls.remove(&request.id) else { return };
        match outcome {
            Outcome::Response(m) if self.store_front(now, &key, &m) => net.respond(downstream, m, 0),
            _ => {
                net.record("upstream_unavailable", request.from, request.to, json!({ "id": request.id }));
                net.respond(downstream, Msg::Unavailable, 0);
            }
        }
    }

    fn recommender_request(&mut self, env: &Envelope<Msg>) -> Reply<Msg> {
        let state = self.recommenders.get(&env.to.instance).and_then(Option::as_ref);
        match &env.payload {
            Msg::Recommend { user, cart, viewed } => {
                let Some(state) = state else {
                    return Reply::Now { payload: Msg::Unavailable, service_ms: service_ms::LOCAL };
                };
                let mode = self.recommender_mode;
                let ids = recommend(mode, state, *user, cart, *viewed, DEFAULT_K).into_iter().map(|(p, _)| p).collect();
                let cost = match mode {
                    RecommenderMode::Full => service_ms::RECOMMENDER_FULL,
                    _ => service_ms::RECOMMENDER_LOW_POWER,
                };
                Reply::Now { payload: Msg::Recommendations(ids), service_ms: cost }
            }
            Msg::Sync => match state {
                Some(s) => Reply::Now { payload: Msg::TrainingData(Box::new(sync_training_data(s))), service_ms: service_ms::LOCAL },
                None => Reply::Now { payload: Msg::Unavailable, service_ms: service_ms::LOCAL },
            },
            _ => Reply::Ignore,
        }
    }

    fn start_training(&mut self, net: &mut Net<Msg, Timer>, instance: u32) {
        let me = Endpoint::new(ServiceId::Recommender, instance);
        let (to, payload, timeout) = if instance == 0 {
            let pext = Endpoint::new(ServiceId::PersistenceExt, self.knowledge.generation);
            (pext, Msg::Query(Query::AllOrders), TRAINING_TIMEOUT_MS)
        } else {
            (Endpoint::primary(ServiceId::Recommender), Msg::Sync, TRAINING_TIMEOUT_MS)
        };
        if let Ok(id) = net.send_request(me, to, payload, timeout) {
            self.training_calls.insert(id);
        }
    }

    fn training_response(&mut self, net: &mut Net<Msg, Timer>, request: &Envelope<Msg>, outcome: Outcome<Msg>) {
        if !self.training_calls.remove(&request.id) {
            return;
        }
        let instance = request.from.instance;
        let state = match outcome {
            Outcome::Response(Msg::Rows(Rows::Orders(orders))) => TrainingState::train(orders),
            Outcome::Response(Msg::TrainingData(s)) => *s,
            _ => {
                net.schedule_in(RETRY_MS, Timer::TrainRetry(instance));
                return;
            }
        };
        net.record(
            if instance == 0 { "recommender_trained" } else { "recommender_synced" },
            request.from,
            request.to,
            json!({ "orders": state.history.len(), "pairs": state.model.len() }),
        );
        self.recommenders.insert(instance, Some(state));
    }

    // ---- controller: MAPE ----

    fn mape(&mut self, net: &mut Net<Msg, Timer>, periodic: bool) {
        let now = net.now();
        let m = observe(net.log().records(), now, &self.policy);
        let ctx = AnalysisContext {
            config: self.config,
            generation: self.knowledge.generation,
            advisories: self.pending_advisories.clone(),
            takedown_active: self.takedown_active,
            incident: self.knowledge.incident.map(|i| i.kind),
            probe_succeeded: self.probe_succeeded,
        };
        let conditions = analyze(&m, &self.policy, &ctx);
        if periodic {
            self.metrics_timeline.push(m.clone());
        }
        self.last_metrics = m;
        for c in &conditions {
            net.record("condition", ServiceId::Controller, "", json!(c));
            self.conditions.push(DetectedCondition { condition: c.clone(), detected_at: now });
        }
        if self.is_executing() {
            return;
        }
        self.pending_advisories.clear();
        self.probe_succeeded = false;
        match plan(&conditions, &self.config, &self.knowledge) {
            Ok(p) if !p.is_empty() => {
                let _ = self.enqueue(net, p);
            }
            Ok(_) => {}
            Err(e) => net.record("plan_failed", ServiceId::Controller, "", json!({ "error": e.to_string() })),
        }
    }

    fn enqueue(&mut self, net: &mut Net<Msg, Timer>, mut p: AdaptationPlan) -> Result<u64, PlanError> {
        p.id = self.next_plan_id;
        self.next_plan_id += 1;
        if let Err(v) = check_order(&p.steps) {
            net.record("plan_rejected", ServiceId::Controller, "", json!({ "plan": p.id, "violation": v }));
            return Ok(p.id);
        }
        net.record("plan", ServiceId::Controller, "", json!(p));
        let now = net.now();
        let pre_config = self.config;
        let incident = |kind, redeploy_generation| Incident { kind, pre_config, started_at: now, redeploy_generation };
        for c in &p.trigger {
            match c {
                Condition::SecurityTakedown => {
                    self.knowledge.incident = Some(incident(IncidentKind::SecurityTakedown, None));
                }
                Condition::ExternalOutage => {
                    let g = self.knowledge.generation + 1;
                    self.knowledge.incident = Some(incident(IncidentKind::ExternalOutage, Some(g)));
                    self.start_probing(net);
                }
                Condition::DbDown => {
                    self.knowledge.incident = Some(incident(IncidentKind::DbDown, None));
                    self.start_probing(net);
                }
                Condition::ProviderRestored => self.knowledge.incident = None,
                _ => {}
            }
        }
        if p.steps.contains(&ReconfigStep::DeployBreakers) {
            self.knowledge.breakers_deployed = true;
        }
        let id = p.id;
        self.plans.push(p.clone());
        self.queue.push_back(p);
        self.advance(net);
        Ok(id)
    }

    // ---- controller: probes ----

    fn start_probing(&mut self, net: &mut Net<Msg, Timer>) {
        if !self.probing {
            self.probing = true;
            net.schedule_in(PROBE_PERIOD_MS, Timer::ProbeRound);
        }
    }

    fn probe_targets(&self) -> Vec<Endpoint> {
        match self.knowledge.incident {
            Some(Incident { kind: IncidentKind::DbDown, .. }) => vec![Endpoint::primary(ServiceId::LocalStaticDb)],
            Some(Incident { kind: IncidentKind::ExternalOutage, redeploy_generation: Some(g), .. }) => {
                [ServiceId::PersistenceExt, ServiceId::ImageExt, ServiceId::Auth]
                    .map(|s| Endpoint::new(s, g))
                    .to_vec()
            }
            _ => vec![],
        }
    }

    fn probe_round(&mut self, net: &mut Net<Msg, Timer>) {
        let targets = self.probe_targets();
        if targets.is_empty() {
            self.probing = false;
            return;
        }
        let controller = Endpoint::primary(ServiceId::Controller);
        let mut round = ProbeRound { total: targets.len(), ..Default::default() };
        for t in targets {
            if let Ok(id) = net.send_request(controller, t, Msg::Probe, PROBE_TIMEOUT_MS) {
                round.outstanding.insert(id);
            }
        }
        self.probe_round = Some(round);
        net.schedule_in(PROBE_PERIOD_MS, Timer::ProbeRound);
    }

    fn probe_response(&mut self, net: &mut Net<Msg, Timer>, id: RequestId, outcome: Outcome<Msg>) {
        let Some(round) = self.probe_round.as_mut() else { return };
        if !round.outstanding.remove(&id) {
            return;
        }
        if matches!(outcome, Outcome::Response(Msg::Pong)) {
            round.ok += 1;
        }
        if !round.outstanding.is_empty() {
            return;
        }
        let all_ok = round.ok == round.total;
        self.probe_round = None;
        if all_ok {
            net.record("probe_ok", ServiceId::Controller, "", json!({}));
            self.probe_succeeded = true;
            self.mape(net, false);
        }
    }

    // ---- controller: execution ----

    fn advance(&mut self, net: &mut Net<Msg, Timer>) {
        loop {
            if self.exec.is_none() {
                let Some(plan) = self.queue.pop_front() else { return };
                let now = net.now();
                net.record("plan_started", ServiceId::Controller, "", json!({ "plan": plan.id }));
                self.exec = Some(Execution {
                    report: ExecutionReport {
                        plan_id: plan.id,
                        started_at: now,
                        finished_at: None,
                        steps: vec![],
                        downtime_ms: BTreeMap::new(),
                        failed: None,
                    },
                    plan,
                    index: 0,
                    step_started: now,
                    wait: None,
                });
            }
            let exec = self.exec.as_mut().expect("set above");
            if exec.wait.is_some() {
                return;
            }
            let Some(step) = exec.plan.steps.get(exec.index).cloned() else {
                self.finish_plan(net, None);
                continue;
            };
            exec.step_started = net.now();
            match self.start_step(net, &step) {
                StepResult::Done => self.complete_step(net),
                StepResult::Wait(w) => {
                    if !matches!(w, Wait::Warm { .. }) {
                        net.schedule_in(poll_interval(&w), Timer::Executor);
                    }
                    self.exec.as_mut().expect("executing").wait = Some(w);
                    return;
                }
                StepResult::Failed(reason) => self.finish_plan(net, Some(reason)),
            }
        }
    }

    fn complete_step(&mut self, net: &mut Net<Msg, Timer>) {
        let now = net.now();
        let exec = self.exec.as_mut().expect("executing");
        let step = exec.plan.steps[exec.index].clone();
        net.record("step", ServiceId::Controller, "", json!({ "plan": exec.plan.id, "index": exec.index, "step": step.label() }));
        exec.report.steps.push(StepRecord { step, started_at: exec.step_started, finished_at: now });
        exec.index += 1;
        exec.wait = None;
    }

    fn finish_plan(&mut self, net: &mut Net<Msg, Timer>, failure: Option<String>) {
        let Some(mut exec) = self.exec.take() else { return };
        let now = net.now();
        exec.report.finished_at = Some(now);
        if let Some(reason) = failure {
            let step = exec.plan.steps[exec.index].clone();
            net.record("step_failed", ServiceId::Controller, "", json!({ "plan": exec.plan.id, "step": step.label(), "reason": reason }));
            exec.report.failed = Some(StepFailure { index: exec.index, step, reason });
        }
        net.record(
            "plan_executed",
            ServiceId::Controller,
            "",
            json!({
                "plan": exec.plan.id,
                "target": exec.plan.target,
                "configuration": self.config,
                "failed": exec.report.failed.is_some(),
            }),
        );
        self.reports.push(exec.report);
    }

    fn poll(&mut self, net: &mut Net<Msg, Timer>) {
        let now = net.now();
        let Some(wait) = self.exec.as_ref().and_then(|e| e.wait.as_ref()) else { return };
        let result = match *wait {
            Wait::Warm { .. } => return,
            Wait::Drain { endpoint, until } => {
                if net.in_flight_to(&endpoint) == 0 || now >= until {
                    self.stop_service(net, endpoint);
                    StepResult::Done
                } else {
                    StepResult::Wait(Wait::Drain { endpoint, until })
                }
            }
            Wait::Restart { endpoint } => {
                if net.is_down(&endpoint) {
                    StepResult::Wait(Wait::Restart { endpoint })
                } else {
                    net.set_stopped(endpoint, false).expect("registered");
                    net.record("service_restarted", ServiceId::Controller, endpoint, json!({}));
                    StepResult::Done
                }
            }
            Wait::Training { deadline } => {
                if self.recommenders.get(&0).is_some_and(Option::is_some) {
                    StepResult::Done
                } else if now >= deadline {
                    StepResult::Failed("recommender could not load training data".into())
                } else {
                    StepResult::Wait(Wait::Training { deadline })
                }
            }
        };
        match result {
            StepResult::Done => {
                self.complete_step(net);
                self.advance(net);
            }
            StepResult::Wait(w) => {
                net.schedule_in(poll_interval(&w), Timer::Executor);
                self.exec.as_mut().expect("executing").wait = Some(w);
            }
            StepResult::Failed(reason) => {
                self.finish_plan(net, Some(reason));
                self.advance(net);
            }
        }
    }

    fn warm_progress(&mut self, net: &mut Net<Msg, Timer>, ok: bool) {
        let Some(Wait::Warm { outstanding, failed }) = self.exec.as_mut().and_then(|e| e.wait.as_mut()) else { return };
        *outstanding -= 1;
        *failed |= !ok;
        if *outstanding > 0 {
            return;
        }
        if *failed {
            self.finish_plan(net, Some("cache warm-up could not reach the upstream".into()));
        } else {
            self.complete_step(net);
        }
        self.advance(net);
    }

    fn stop_service(&mut self, net: &mut Net<Msg, Timer>, e: Endpoint) {
        net.set_stopped(e, true).expect("registered");
        match e.service {
            ServiceId::LocalCacheDb => self.cache_db.clear(),
            ServiceId::LocalCacheImg => self.cache_img.clear(),
            _ => {}
        }
        net.record("service_stopped", ServiceId::Controller, e, json!({}));
    }

    fn start_step(&mut self, net: &mut Net<Msg, Timer>, step: &ReconfigStep) -> StepResult {
        let now = net.now();
        match step {
            ReconfigStep::StartService { endpoint: e } => {
                let e = *e;
                if !net.is_registered(&e) {
                    let ready = if e.is_external() { now + PROVISIONING_MS } else { now };
                    net.register(e, workers(e.service), ready);
                    self.provision(e);
                    net.record("service_provisioning", ServiceId::Controller, e, json!({ "ready_at": ready }));
                    return StepResult::Done;
                }
                if net.is_down(&e) {
                    return StepResult::Failed(format!("{e} is down"));
                }
                net.set_stopped(e, false).expect("registered");
                net.record("service_started", ServiceId::Controller, e, json!({}));
                if e.service == ServiceId::Recommender && self.recommenders.get(&e.instance).is_none_or(Option::is_none) {
                    self.start_training(net, e.instance);
                    return StepResult::Wait(Wait::Training { deadline: now + TRAINING_WAIT_MS });
                }
                StepResult::Done
            }
            ReconfigStep::WarmCache { endpoint, upstream } => {
                let keys: Vec<FrontKey> = match endpoint.service {
                    ServiceId::LocalCacheDb => warm_db_keys(),
                    ServiceId::LocalCacheImg => warm_img_keys(),
                    _ => return StepResult::Failed(format!("{endpoint} is not a cache front")),
                };
                let mut outstanding = 0;
                for key in keys {
                    let payload = match &key {
                        FrontKey::Db(q) => Msg::Query(q.clone()),
                        FrontKey::Img(p, s) => Msg::Image { product: *p, size: *s },
                    };
                    if let Ok(id) = net.send_request(*endpoint, *upstream, payload, WARM_TIMEOUT_MS) {
                        self.warm_calls.insert(id, key);
                        outstanding += 1;
                    }
                }
                if outstanding == 0 {
                    return StepResult::Failed("nothing to warm".into());
                }
                StepResult::Wait(Wait::Warm { outstanding, failed: false })
            }
            ReconfigStep::SwitchRoute { from, to, upstream, .. } => {
                let next = self.config.with(*to);
                if self.config.get(from.dimension()) != *from {
                    return StepResult::Failed(format!("expected {from}, found {}", self.config.get(from.dimension())));
                }
                if !next.is_valid() {
                    return StepResult::Failed(format!("{next} is not a valid configuration"));
                }
                if let Some(u) = upstream {
                    match u.service {
                        ServiceId::PersistenceExt => self.routes.persistence = *u,
                        ServiceId::ImageExt => self.routes.image = *u,
                        ServiceId::Auth => self.routes.auth = *u,
                        _ => {}
                    }
                    self.knowledge.generation = u.instance;
                }
                let before = self.config;
                self.config = next;
                self.config_timeline.push((now, next));
                net.record(
                    "config_changed",
                    ServiceId::Controller,
                    "",
                    json!({ "dimension": from.dimension(), "from": before, "to": next }),
                );
                StepResult::Done
            }
            ReconfigStep::StopService { endpoint } => {
                if net.in_flight_to(endpoint) == 0 {
                    self.stop_service(net, *endpoint);
                    StepResult::Done
                } else {
                    StepResult::Wait(Wait::Drain { endpoint: *endpoint, until: now + DRAIN_LIMIT_MS })
                }
            }
            ReconfigStep::RestartService { endpoint } => {
                net.set_stopped(*endpoint, true).expect("registered");
                net.record("service_restarting", ServiceId::Controller, endpoint, json!({}));
                StepResult::Wait(Wait::Restart { endpoint: *endpoint })
            }
            ReconfigStep::SetMode { service, mode } => {
                match (service.service, mode) {
                    (ServiceId::WebUi, ServiceMode::Maintenance) => self.webui_mode = WebUiMode::Maintenance,
                    (ServiceId::WebUi, ServiceMode::Normal) => self.webui_mode = WebUiMode::Normal,
                    (ServiceId::ImageExt, ServiceMode::Lite | ServiceMode::Full) => {
                        let flavor = if *mode == ServiceMode::Lite { ImageFlavor::Lite } else { ImageFlavor::Full };
                        self.provision(*service);
                        if let Some(p) = self.images.get_mut(&service.instance) {
                            p.flavor = flavor;
                        }
                    }
                    (ServiceId::Auth, ServiceMode::Standard) => self.auth_mode = AuthMode::Standard,
                    (ServiceId::Auth, ServiceMode::Restrictive) => self.auth_mode = AuthMode::Restrictive,
                    (ServiceId::Recommender, ServiceMode::LowPower) => self.recommender_mode = RecommenderMode::LowPower,
                    (ServiceId::Recommender, ServiceMode::Full) => self.recommender_mode = RecommenderMode::Full,
                    _ => return StepResult::Failed(format!("{service} has no mode {mode:?}")),
                }
                self.knowledge.webui_mode = self.webui_mode;
                net.record("mode_changed", ServiceId::Controller, service, json!({ "mode": mode }));
                StepResult::Done
            }
            ReconfigStep::DeployBreakers => {
                self.knowledge.breakers_deployed = true;
                net.record("breakers_deployed", ServiceId::Controller, ServiceId::WebUi, json!({}));
                StepResult::Done
            }
            ReconfigStep::RemoveBreakers => {
                self.knowledge.breakers_deployed = false;
                self.breakers.clear();
                net.record("breakers_removed", ServiceId::Controller, ServiceId::WebUi, json!({}));
                StepResult::Done
            }
        }
    }

    /// Creates service state for a newly provisioned endpoint.
    fn provision(&mut self, e: Endpoint) {
        match e.service {
            ServiceId::PersistenceExt => {
                while self.persistence.instances() <= e.instance as usize {
                    self.persistence.add_instance();
                }
            }
            ServiceId::ImageExt => {
                self.images.entry(e.instance).or_insert_with(|| {
                    ImageProvider::new(ImageFlavor::Full, crate::services::data::PRODUCT_COUNT, DEFAULT_IMAGE_CACHE_CAPACITY)
                });
            }
            ServiceId::Recommender => {
                self.recommenders.entry(e.instance).or_insert(None);
            }
            _ => {}
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ActionError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("no fault labelled `{0}`")]
    UnknownLabel(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

fn poll_interval(w: &Wait) -> SimTime {
    match w {
        Wait::Drain { .. } => 10,
        Wait::Restart { .. } => 500,
        Wait::Training { .. } => 50,
        Wait::Warm { .. } => 0,
    }
}

fn log_transition(net: &mut Net<Msg, Timer>, target: Endpoint, t: Transition) {
    let state = match t {
        Transition::Opened => "open",
        Transition::HalfOpened => "half_open",
        Transition::Closed => "closed",
    };
    net.record("breaker", ServiceId::WebUi, target, json!({ "state": state }));
}

fn auth_payload(req: &ClientRequest) -> Msg {
    match req.kind {
        RequestKind::Login => {
            let c = req.credentials.clone().unwrap_or(Credentials { username: String::new(), password: String::new() });
            Msg::Login { client: req.client.clone(), username: c.username, password: c.password }
        }
        RequestKind::AddToCart => Msg::Cart { token: req.token.clone(), product: req.product },
        _ => Msg::Validate(req.token.clone()),
    }
}

fn record_part(results: &mut PartResults, part: Part, reply: Option<Msg>) {
    match part {
        Part::Catalog => {
            results.catalog = Some(match reply {
                Some(Msg::Rows(r)) => Some(r),
                _ => None,
            })
        }
        Part::Image => {
            results.image = Some(match reply {
                Some(Msg::ImageReply(b)) => Some(b),
                _ => None,
            })
        }
        Part::Recommendations => {
            results.recommendations = Some(match reply {
                Some(Msg::Recommendations(v)) => Some(v),
                _ => None,
            })
        }
        Part::Auth => {
            results.auth = Some(match reply {
                Some(Msg::Validity(v)) => Some(AuthReply::Valid(v)),
                Some(Msg::LoginReply(r)) => Some(AuthReply::Login(r)),
                Some(Msg::CartReply(s)) => Some(AuthReply::Cart(s)),
                _ => None,
            })
        }
    }
}

fn warm_db_keys() -> Vec<FrontKey> {
    use crate::services::data::{CategoryId, CATEGORY_COUNT, PRODUCT_COUNT};
    let mut keys = vec![FrontKey::Db(Query::Categories)];
    keys.extend((0..CATEGORY_COUNT).map(|c| FrontKey::Db(Query::ByCategory { category: CategoryId(c) })));
    keys.extend((0..PRODUCT_COUNT).map(|p| FrontKey::Db(Query::ProductById { id: ProductId(p) })));
    keys
}

fn warm_img_keys() -> Vec<FrontKey> {
    let n = crate::services::data::PRODUCT_COUNT;
    let mut keys: Vec<FrontKey> = (0..n).map(|p| FrontKey::Img(ProductId(p), image_size(RequestKind::ProductPage))).collect();
    keys.extend((0..n).map(|p| FrontKey::Img(ProductId(p), image_size(RequestKind::CategoryPage))));
    keys
}

impl Handler for World {
    type Payload = Msg;
    type Timer = Timer;

    fn on_request(&mut self, net: &mut Net<Msg, Timer>, env: &Envelope<Msg>) -> Reply<Msg> {
        if env.payload == Msg::Probe {
            return Reply::Now { payload: Msg::Pong, service_ms: service_ms::LOCAL };
        }
        match (env.to.service, &env.payload) {
            (ServiceId::WebUi, _) => self.webui_request(net, env),
            (ServiceId::Auth, _) => self.auth_request(net, env),
            (ServiceId::PersistenceExt, Msg::Query(q)) => {
                let payload = match self.persistence.read(env.to.instance as usize, q) {
                    Ok(rows) => Msg::Rows(rows),
                    Err(_) => Msg::Unavailable,
                };
                Reply::Now { payload, service_ms: service_ms::PERSISTENCE }
            }
            (ServiceId::ImageExt, Msg::Image { product, size }) => {
                match self.images.get_mut(&env.to.instance).map(|p| p.get(*product, *size)) {
                    Some(Ok((blob, ms))) => Reply::Now { payload: Msg::ImageReply(blob), service_ms: ms },
                    _ => Reply::Now { payload: Msg::Unavailable, service_ms: service_ms::LOCAL },
                }
            }
            (ServiceId::Recommender, _) => self.recommender_request(env),
            (ServiceId::LocalStaticDb, Msg::Query(q)) => {
                Reply::Now { payload: Msg::Rows(scan(&self.static_catalog, q)), service_ms: service_ms::LOCAL }
            }
            (ServiceId::LocalStaticImg, Msg::Image { product, size }) => {
                Reply::Now { payload: Msg::ImageReply(placeholder(*product, *size)), service_ms: service_ms::LOCAL }
            }
            (ServiceId::LocalCacheDb | ServiceId::LocalCacheImg, _) => self.front_request(net, env),
            _ => Reply::Ignore,
        }
    }

    fn on_response(&mut self, net: &mut Net<Msg, Timer>, request: Envelope<Msg>, outcome: Outcome<Msg>) {
        match request.from.service {
            ServiceId::Client => self.client_response(net, request.id, outcome),
            ServiceId::WebUi => self.webui_response(net, request.id, outcome),
            ServiceId::Auth => self.auth_response(net, request.id, outcome),
            ServiceId::LocalCacheDb | ServiceId::LocalCacheImg => self.front_response(net, &request, outcome),
            ServiceId::Recommender => self.training_response(net, &request, outcome),
            ServiceId::Controller => self.probe_response(net, request.id, outcome),
            _ => {}
        }
    }

    fn on_timer(&mut self, net: &mut Net<Msg, Timer>, timer: Timer) {
        match timer {
            Timer::Arrival(i) => self.client_arrival(net, i),
            Timer::Action(i) => {
                let action = self.actions[i].clone();
                if let Err(e) = self.apply_action(net, action) {
                    net.record("action_failed", ServiceId::Controller, "", json!({ "error": e.to_string() }));
                }
            }
            Timer::Mape => {
                self.mape(net, true);
                net.schedule_in(MAPE_PERIOD_MS, Timer::Mape);
            }
            Timer::ProbeRound => self.probe_round(net),
            Timer::Executor => self.poll(net),
            Timer::TrainRetry(instance) => self.start_training(net, instance),
        }
    }
}
