//! Deterministic discrete-event network.
//!
//! [`Net`] owns the clock, the event queue, the fault table, the seeded RNG and
//! the [`EventLog`]. A [`Simulation`] pairs a `Net` with a [`Handler`] that holds
//! all service state; the loop hands each delivery to the handler and lets the
//! handler send further requests or schedule timers through the `Net`.
//!
//! Request/response timing: a request reaches its target after one link
//! latency, waits for a free worker at the target's station, occupies the
//! worker for the service time, and the response travels back over the link.
//! Every request resolves exactly once, either with a response delivered no
//! later than its deadline or with a timeout delivered exactly at the deadline.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Milliseconds since simulation start.
pub type SimTime = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ServiceId {
    WebUi,
    Auth,
    PersistenceExt,
    ImageExt,
    Recommender,
    LocalStaticDb,
    LocalStaticImg,
    LocalCacheDb,
    LocalCacheImg,
    Client,
    Controller,
}

impl ServiceId {
    pub const ALL: [ServiceId; 11] = [
        Self::WebUi,
        Self::Auth,
        Self::PersistenceExt,
        Self::ImageExt,
        Self::Recommender,
        Self::LocalStaticDb,
        Self::LocalStaticImg,
        Self::LocalCacheDb,
        Self::LocalCacheImg,
        Self::Client,
        Self::Controller,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::WebUi => "webui",
            Self::Auth => "auth",
            Self::PersistenceExt => "persistence_ext",
            Self::ImageExt => "image_ext",
            Self::Recommender => "recommender",
            Self::LocalStaticDb => "local_static_db",
            Self::LocalStaticImg => "local_static_img",
            Self::LocalCacheDb => "local_cache_db",
            Self::LocalCacheImg => "local_cache_img",
            Self::Client => "client",
            Self::Controller => "controller",
        }
    }

    /// Services hosted by the outside provider, in another region.
    pub fn is_external(self) -> bool {
        matches!(self, Self::Auth | Self::PersistenceExt | Self::ImageExt)
    }
}

impl fmt::Display for ServiceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ServiceId {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| SimError::UnknownEndpointName(s.to_owned()))
    }
}

/// A service instance. Renders as `name` for instance 0 and `name#i` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Endpoint {
    pub service: ServiceId,
    pub instance: u32,
}

impl Endpoint {
    pub const fn new(service: ServiceId, instance: u32) -> Self {
        Self { service, instance }
    }

    pub const fn primary(service: ServiceId) -> Self {
        Self { service, instance: 0 }
    }

    pub fn is_external(&self) -> bool {
        self.service.is_external()
    }
}

impl From<ServiceId> for Endpoint {
    fn from(service: ServiceId) -> Self {
        Self::primary(service)
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.instance == 0 {
            write!(f, "{}", self.service)
        } else {
            write!(f, "{}#{}", self.service, self.instance)
        }
    }
}

impl FromStr for Endpoint {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('#') {
            None => Ok(Endpoint::primary(s.parse()?)),
            Some((name, idx)) => {
                let instance = idx
                    .parse()
                    .map_err(|_| SimError::UnknownEndpointName(s.to_owned()))?;
                Ok(Endpoint::new(name.parse()?, instance))
            }
        }
    }
}

impl Serialize for Endpoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Endpoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FaultId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventId(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope<P> {
    pub id: RequestId,
    pub from: Endpoint,
    pub to: Endpoint,
    pub payload: P,
    pub send_time: SimTime,
    pub deadline: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultSpec {
    /// Targets stop processing: arrivals are dropped and queued work is lost.
    Down { targets: Vec<Endpoint> },
    /// Link latency to and from the targets is multiplied by `factor` (≥ 1).
    LatencyMultiplier { factor: u32, targets: Vec<Endpoint> },
    /// Messages crossing between the two groups are lost.
    Partition { group_a: Vec<Endpoint>, group_b: Vec<Endpoint> },
    /// Every message to or from the targets is lost.
    DropAll { targets: Vec<Endpoint> },
}

impl FaultSpec {
    pub fn targets(&self) -> Vec<Endpoint> {
        match self {
            Self::Down { targets } | Self::LatencyMultiplier { targets, .. } | Self::DropAll { targets } => {
                targets.clone()
            }
            Self::Partition { group_a, group_b } => group_a.iter().chain(group_b).copied().collect(),
        }
    }

    fn is_down(&self, e: &Endpoint) -> bool {
        matches!(self, Self::Down { targets } if targets.contains(e))
    }

    fn blocks(&self, a: &Endpoint, b: &Endpoint) -> bool {
        match self {
            Self::Partition { group_a, group_b } => {
                (group_a.contains(a) && group_b.contains(b)) || (group_a.contains(b) && group_b.contains(a))
            }
            Self::DropAll { targets } => targets.contains(a) || targets.contains(b),
            _ => false,
        }
    }
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: SimTime,
    pub kind: String,
    pub from: String,
    pub to: String,
    pub detail: Value,
}

impl LogRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("log records always serialize")
    }
}

/// Append-only record of everything the simulation did.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    records: Vec<LogRecord>,
}

impl EventLog {
    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_json_lines(&self) -> String {
        self.records.iter().map(LogRecord::to_json_line).collect::<Vec<_>>().join("\n")
    }

    /// Lowercase hex SHA-256 of the JSON lines joined with `\n`.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (i, r) in self.records.iter().enumerate() {
            if i > 0 {
                hasher.update(b"\n");
            }
            hasher.update(r.to_json_line().as_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("cannot schedule at t={at}ms, clock is already at {now}ms")]
    PastTime { at: SimTime, now: SimTime },
    #[error("timeout must be positive")]
    ZeroTimeout,
    #[error("unknown fault id {0:?}")]
    UnknownFault(FaultId),
    #[error("unknown endpoint {0}")]
    UnknownEndpoint(Endpoint),
    #[error("unknown endpoint name `{0}`")]
    UnknownEndpointName(String),
    #[error("latency multiplier must be at least 1")]
    BadMultiplier,
}

/// Link latencies in milliseconds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkConfig {
    pub client_webui_ms: SimTime,
    /// Any link with exactly one end at an external endpoint.
    pub external_ms: SimTime,
    pub default_ms: SimTime,
    /// Uniform jitter in `[-jitter_ms, +jitter_ms]` added per message.
    pub jitter_ms: SimTime,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self { client_webui_ms: 2, external_ms: 20, default_ms: 5, jitter_ms: 1 }
    }
}

impl LinkConfig {
    pub fn base_latency(&self, a: &Endpoint, b: &Endpoint) -> SimTime {
        use ServiceId::{Client, WebUi};
        match (a.service, b.service) {
            (Client, WebUi) | (WebUi, Client) => self.client_webui_ms,
            _ if a.is_external() != b.is_external() => self.external_ms,
            _ => self.default_ms,
        }
    }
}

/// What a handler does with a request when a worker picks it up.
#[derive(Debug, Clone, PartialEq)]
pub enum Reply<P> {
    /// Respond after `service_ms` of work.
    Now { payload: P, service_ms: SimTime },
    /// Hold the worker for `busy_ms`; the handler answers later via [`Net::respond`].
    Deferred { busy_ms: SimTime },
    /// Never answer; the caller times out.
    Ignore,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome<P> {
    Response(P),
    Timeout,
}

pub trait Payload: Clone + fmt::Debug {
    /// Short label written to the event log for sends and deliveries.
    fn label(&self) -> String;
}

/// Service state machine driven by the event loop.
pub trait Handler {
    type Payload: Payload;
    type Timer: fmt::Debug;

    fn on_request(
        &mut self,
        net: &mut Net<Self::Payload, Self::Timer>,
        env: &Envelope<Self::Payload>,
    ) -> Reply<Self::Payload>;

    /// Called exactly once per request the handler sent.
    fn on_response(
        &mut self,
        net: &mut Net<Self::Payload, Self::Timer>,
        request: Envelope<Self::Payload>,
        outcome: Outcome<Self::Payload>,
    );

    fn on_timer(&mut self, net: &mut Net<Self::Payload, Self::Timer>, timer: Self::Timer);
}

#[derive(Debug)]
enum Event<P, T> {
    Arrive(RequestId),
    WorkDone { endpoint: Endpoint, request: RequestId, response: Option<P> },
    Depart { request: RequestId, payload: P },
    Deliver(RequestId),
    Deadline(RequestId),
    Timer(T),
}

struct Scheduled<P, T> {
    time: SimTime,
    seq: u64,
    event: Event<P, T>,
}

impl<P, T> PartialEq for Scheduled<P, T> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl<P, T> Eq for Scheduled<P, T> {}

impl<P, T> PartialOrd for Scheduled<P, T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P, T> Ord for Scheduled<P, T> {
    // Reversed: BinaryHeap is a max-heap and we want the earliest (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    /// On the wire towards the target, or queued/working there.
    Pending,
    /// Lost before or at the target; nothing else will happen to it.
    Lost,
}

/// A request is kept until nothing else can happen to it. Requests whose
/// caller already timed out stay here while the target still works on them.
struct InFlight<P> {
    env: Envelope<P>,
    stage: Stage,
    resolved: bool,
    response_due: Option<SimTime>,
    response: Option<P>,
}

#[derive(Debug, Default)]
struct Station {
    workers: Option<usize>,
    busy: usize,
    queue: VecDeque<RequestId>,
}

impl Station {
    fn has_free_worker(&self) -> bool {
        self.workers.is_none_or(|w| self.busy < w)
    }
}

#[derive(Debug, Clone, Copy)]
struct Availability {
    available_from: SimTime,
    stopped: bool,
}

/// Clock, queue, faults, RNG and log. Handlers receive `&mut Net` to act.
pub struct Net<P, T> {
    now: SimTime,
    seq: u64,
    queue: BinaryHeap<Scheduled<P, T>>,
    in_flight: BTreeMap<RequestId, InFlight<P>>,
    stations: BTreeMap<Endpoint, Station>,
    endpoints: BTreeMap<Endpoint, Availability>,
    faults: BTreeMap<FaultId, FaultSpec>,
    next_request: u64,
    next_fault: u64,
    links: LinkConfig,
    rng: ChaCha8Rng,
    log: EventLog,
    handler_invocations: BTreeMap<Endpoint, u64>,
}

impl<P: Payload, T: fmt::Debug> Net<P, T> {
    pub fn new(seed: u64, links: LinkConfig) -> Self {
        Self {
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            in_flight: BTreeMap::new(),
            stations: BTreeMap::new(),
            endpoints: BTreeMap::new(),
            faults: BTreeMap::new(),
            next_request: 0,
            next_fault: 0,
            links,
            rng: ChaCha8Rng::seed_from_u64(seed),
            log: EventLog::default(),
            handler_invocations: BTreeMap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn links(&self) -> &LinkConfig {
        &self.links
    }

    pub fn record(&mut self, kind: &str, from: impl fmt::Display, to: impl fmt::Display, detail: Value) {
        self.log.records.push(LogRecord {
            t: self.now,
            kind: kind.to_owned(),
            from: from.to_string(),
            to: to.to_string(),
            detail,
        });
    }

    /// Registers an endpoint. `workers = None` means unbounded concurrency.
    pub fn register(&mut self, endpoint: Endpoint, workers: Option<usize>, available_from: SimTime) {
        self.endpoints.insert(endpoint, Availability { available_from, stopped: false });
        self.stations.entry(endpoint).or_default().workers = workers;
    }

    pub fn is_registered(&self, endpoint: &Endpoint) -> bool {
        self.endpoints.contains_key(endpoint)
    }

    pub fn endpoints(&self) -> impl Iterator<Item = &Endpoint> {
        self.endpoints.keys()
    }

    pub fn set_stopped(&mut self, endpoint: Endpoint, stopped: bool) -> Result<(), SimError> {
        let a = self.endpoints.get_mut(&endpoint).ok_or(SimError::UnknownEndpoint(endpoint))?;
        a.stopped = stopped;
        if stopped {
            self.drop_queue(endpoint, "stopped");
        }
        Ok(())
    }

    pub fn is_down(&self, endpoint: &Endpoint) -> bool {
        self.faults.values().any(|f| f.is_down(endpoint))
    }

    /// Registered, provisioned, not stopped and not under a Down fault.
    pub fn is_serving(&self, endpoint: &Endpoint) -> bool {
        match self.endpoints.get(endpoint) {
            Some(a) => !a.stopped && a.available_from <= self.now && !self.is_down(endpoint),
            None => false,
        }
    }

    pub fn is_blocked(&self, a: &Endpoint, b: &Endpoint) -> bool {
        self.faults.values().any(|f| f.blocks(a, b))
    }

    pub fn active_faults(&self) -> impl Iterator<Item = (&FaultId, &FaultSpec)> {
        self.faults.iter()
    }

    /// Requests addressed to `endpoint` that it may still receive or work on.
    pub fn in_flight_to(&self, endpoint: &Endpoint) -> usize {
        self.in_flight
            .values()
            .filter(|f| f.env.to == *endpoint && f.stage == Stage::Pending && f.response_due.is_none())
            .count()
    }

    pub fn handler_invocations(&self, endpoint: &Endpoint) -> u64 {
        self.handler_invocations.get(endpoint).copied().unwrap_or(0)
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    fn push(&mut self, time: SimTime, event: Event<P, T>) -> EventId {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Scheduled { time, seq, event });
        EventId(seq)
    }

    pub fn schedule(&mut self, at: SimTime, timer: T) -> Result<EventId, SimError> {
        if at < self.now {
            return Err(SimError::PastTime { at, now: self.now });
        }
        Ok(self.push(at, Event::Timer(timer)))
    }

    pub fn schedule_in(&mut self, delay: SimTime, timer: T) -> EventId {
        let at = self.now + delay;
        self.push(at, Event::Timer(timer))
    }

    fn latency(&mut self, a: &Endpoint, b: &Endpoint) -> SimTime {
        let base = self.links.base_latency(a, b);
        let factor = self
            .faults
            .values()
            .filter_map(|f| match f {
                FaultSpec::LatencyMultiplier { factor, targets } if targets.contains(a) || targets.contains(b) => {
                    Some(SimTime::from(*factor))
                }
                _ => None,
            })
            .max()
            .unwrap_or(1);
        let scaled = base * factor;
        let jitter = self.links.jitter_ms;
        if jitter == 0 {
            return scaled;
        }
        let delta = self.rng.random_range(0..=2 * jitter) as i64 - jitter as i64;
        (scaled as i64 + delta).max(1) as SimTime
    }

    /// Sends a request; the sender's handler hears back exactly once.
    pub fn send_request(
        &mut self,
        from: Endpoint,
        to: Endpoint,
        payload: P,
        timeout_ms: SimTime,
    ) -> Result<RequestId, SimError> {
        if timeout_ms == 0 {
            return Err(SimError::ZeroTimeout);
        }
        let id = RequestId(self.next_request);
        self.next_request += 1;
        let env = Envelope { id, from, to, payload, send_time: self.now, deadline: self.now + timeout_ms };
        self.record("send", from, to, json!({ "id": id, "payload": env.payload.label(), "deadline": env.deadline }));
        let stage = if self.is_blocked(&from, &to) {
            Stage::Lost
        } else {
            let lat = self.latency(&from, &to);
            self.push(self.now + lat, Event::Arrive(id));
            Stage::Pending
        };
        self.push(env.deadline, Event::Deadline(id));
        self.in_flight.insert(id, InFlight { env, stage, resolved: false, response_due: None, response: None });
        Ok(id)
    }

    /// Answers a request previously deferred by the handler, after `delay_ms`.
    pub fn respond(&mut self, request: RequestId, payload: P, delay_ms: SimTime) {
        self.push(self.now + delay_ms, Event::Depart { request, payload });
    }

    pub fn inject_fault(&mut self, spec: FaultSpec) -> Result<FaultId, SimError> {
        if let FaultSpec::LatencyMultiplier { factor: 0, .. } = spec {
            return Err(SimError::BadMultiplier);
        }
        if let Some(missing) = spec.targets().into_iter().find(|t| !self.endpoints.contains_key(t)) {
            return Err(SimError::UnknownEndpoint(missing));
        }
        let id = FaultId(self.next_fault);
        self.next_fault += 1;
        self.record("fault_injected", "", "", json!({ "id": id, "spec": spec }));
        if let FaultSpec::Down { targets } = &spec {
            for t in targets.clone() {
                self.drop_queue(t, "down");
            }
        }
        self.faults.insert(id, spec);
        Ok(id)
    }

    pub fn clear_fault(&mut self, id: FaultId) -> Result<(), SimError> {
        let spec = self.faults.remove(&id).ok_or(SimError::UnknownFault(id))?;
        self.record("fault_cleared", "", "", json!({ "id": id, "spec": spec }));
        Ok(())
    }

    fn drop_queue(&mut self, endpoint: Endpoint, reason: &str) {
        let dropped: Vec<RequestId> = match self.stations.get_mut(&endpoint) {
            Some(st) => st.queue.drain(..).collect(),
            None => return,
        };
        for id in dropped {
            self.record("drop", "", endpoint, json!({ "id": id, "reason": reason }));
            self.mark_lost(id);
        }
    }

    fn mark_lost(&mut self, id: RequestId) {
        let resolved = match self.in_flight.get_mut(&id) {
            Some(f) => {
                f.stage = Stage::Lost;
                f.resolved
            }
            None => return,
        };
        if resolved {
            self.in_flight.remove(&id);
        }
    }

    /// A response could not reach the caller. Resolves as a timeout right away
    /// when the deadline has already passed, otherwise the deadline handles it.
    fn lose_response(&mut self, id: RequestId, reason: &str) -> Option<Envelope<P>> {
        let (from, to, deadline, resolved) = {
            let f = self.in_flight.get_mut(&id)?;
            f.response_due = None;
            f.response = None;
            f.stage = Stage::Lost;
            (f.env.from, f.env.to, f.env.deadline, f.resolved)
        };
        self.record("drop", to, from, json!({ "id": id, "reason": reason }));
        if resolved {
            self.in_flight.remove(&id);
            return None;
        }
        if self.now >= deadline {
            let f = self.in_flight.remove(&id)?;
            self.record("timeout", f.env.from, f.env.to, json!({ "id": id }));
            return Some(f.env);
        }
        None
    }
}

/// The event loop: a [`Net`] plus the handler owning all service state.
pub struct Simulation<H: Handler> {
    pub net: Net<H::Payload, H::Timer>,
    pub handler: H,
}

impl<H: Handler> Simulation<H> {
    pub fn new(handler: H, seed: u64, links: LinkConfig) -> Self {
        Self { net: Net::new(seed, links), handler }
    }

    pub fn now(&self) -> SimTime {
        self.net.now
    }

    /// Processes every event with time ≤ `until`, then sets the clock to `until`.
    /// Returns the log records produced.
    pub fn run_until(&mut self, until: SimTime) -> Result<&[LogRecord], SimError> {
        if until < self.net.now {
            return Err(SimError::PastTime { at: until, now: self.net.now });
        }
        let start = self.net.log.len();
        while self.net.queue.peek().is_some_and(|s| s.time <= until) {
            let Some(next) = self.net.queue.pop() else { break };
            debug_assert!(next.time >= self.net.now);
            self.net.now = next.time;
            self.dispatch(next.event);
        }
        self.net.now = until;
        Ok(&self.net.log.records[start..])
    }

    /// Time of the next pending event, if any.
    pub fn next_event_time(&self) -> Option<SimTime> {
        self.net.queue.peek().map(|s| s.time)
    }

    fn dispatch(&mut self, event: Event<H::Payload, H::Timer>) {
        match event {
            Event::Arrive(id) => self.arrive(id),
            Event::WorkDone { endpoint, request, response } => {
                if let Some(st) = self.net.stations.get_mut(&endpoint) {
                    st.busy = st.busy.saturating_sub(1);
                }
                if let Some(payload) = response {
                    self.depart(request, payload);
                }
                self.start_work(endpoint);
            }
            Event::Depart { request, payload } => self.depart(request, payload),
            Event::Deliver(id) => self.deliver(id),
            Event::Deadline(id) => self.deadline(id),
            Event::Timer(t) => self.handler.on_timer(&mut self.net, t),
        }
    }

    fn arrive(&mut self, id: RequestId) {
        let Some(to) = self.net.in_flight.get(&id).map(|f| f.env.to) else { return };
        if !self.net.is_serving(&to) {
            self.net.record("drop", "", to, json!({ "id": id, "reason": "unavailable" }));
            self.net.mark_lost(id);
            return;
        }
        self.net.stations.entry(to).or_default().queue.push_back(id);
        self.start_work(to);
    }

    fn start_work(&mut self, endpoint: Endpoint) {
        loop {
            if !self.net.is_serving(&endpoint) {
                return;
            }
            let id = match self.net.stations.get_mut(&endpoint) {
                Some(st) if st.has_free_worker() => match st.queue.pop_front() {
                    Some(id) => {
                        st.busy += 1;
                        id
                    }
                    None => return,
                },
                _ => return,
            };
            let Some(env) = self.net.in_flight.get(&id).map(|f| f.env.clone()) else {
                if let Some(st) = self.net.stations.get_mut(&endpoint) {
                    st.busy -= 1;
                }
                continue;
            };
            *self.net.handler_invocations.entry(endpoint).or_default() += 1;
            let now = self.net.now;
            match self.handler.on_request(&mut self.net, &env) {
                Reply::Now { payload, service_ms } => {
                    self.net.push(
                        now + service_ms,
                        Event::WorkDone { endpoint, request: id, response: Some(payload) },
                    );
                }
                Reply::Deferred { busy_ms } => {
                    self.net.push(now + busy_ms, Event::WorkDone { endpoint, request: id, response: None });
                }
                Reply::Ignore => {
                    if let Some(st) = self.net.stations.get_mut(&endpoint) {
                        st.busy -= 1;
                    }
                    self.net.mark_lost(id);
                }
            }
        }
    }

    fn depart(&mut self, id: RequestId, payload: H::Payload) {
        let Some((from, to, send_time, deadline, resolved)) = self
            .net
            .in_flight
            .get(&id)
            .map(|f| (f.env.from, f.env.to, f.env.send_time, f.env.deadline, f.resolved))
        else {
            return;
        };
        if !self.net.is_serving(&to) || self.net.is_blocked(&to, &from) {
            if let Some(env) = self.net.lose_response(id, "responder_unavailable") {
                self.handler.on_response(&mut self.net, env, Outcome::Timeout);
            }
            return;
        }
        let lat = self.net.latency(&to, &from);
        let arrival = self.net.now + lat;
        if !resolved && arrival <= deadline {
            let f = self.net.in_flight.get_mut(&id).expect("checked above");
            f.response_due = Some(arrival);
            f.response = Some(payload);
            self.net.push(arrival, Event::Deliver(id));
        } else {
            // The caller gives up (or already gave up) before this lands.
            self.net.record(
                "late_response",
                to,
                from,
                json!({ "id": id, "latency": arrival - send_time, "payload": payload.label() }),
            );
            if resolved {
                self.net.in_flight.remove(&id);
            } else if let Some(f) = self.net.in_flight.get_mut(&id) {
                f.stage = Stage::Lost;
            }
        }
    }

    fn deliver(&mut self, id: RequestId) {
        let Some(f) = self.net.in_flight.remove(&id) else { return };
        let InFlight { env, response, .. } = f;
        let Some(payload) = response else { return };
        self.net.record(
            "response",
            env.to,
            env.from,
            json!({ "id": id, "latency": self.net.now - env.send_time, "payload": payload.label() }),
        );
        self.handler.on_response(&mut self.net, env, Outcome::Response(payload));
    }

    fn deadline(&mut self, id: RequestId) {
        let (env, lost) = match self.net.in_flight.get_mut(&id) {
            None => return,
            Some(f) if f.resolved || f.response_due.is_some() => return,
            Some(f) => {
                f.resolved = true;
                (f.env.clone(), f.stage == Stage::Lost)
            }
        };
        if lost {
            self.net.in_flight.remove(&id);
        }
        self.net.record("timeout", env.from, env.to, json!({ "id": id }));
        self.handler.on_response(&mut self.net, env, Outcome::Timeout);
    }
}
