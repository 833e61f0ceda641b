//! A live simulation driven in steps of simulated time, with a steady
//! baseline workload generated just ahead of the clock.

use serde::{Deserialize, Serialize};
use crate::adaptation::{MetricsWindow, PlanError};
use crate::scenarios::{generate_workload, WorkloadProfile};
use crate::simnet::{FaultId, FaultSpec, LogRecord, SimError, SimTime, Simulation};
use crate::variability::{
    canonical_level, validate, Configuration, Dimension, Level, PartialConfiguration, Violation,
};
use crate::world::{build, StateSnapshot, World};

/// Arrivals are generated in chunks of this much simulated time.
const WORKLOAD_CHUNK_MS: SimTime = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Pace {
    Paused,
    /// One simulated millisecond per `1 / factor` wall milliseconds.
    Realtime {
        #[serde(default = "one")]
        factor: f64,
    },
    FastForward,
    /// Advances by `ms` and pauses.
    Step { ms: SimTime },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize)]
pub struct LiveState {
    #[serde(flatten)]
    pub snapshot: StateSnapshot,
    pub level: Option<&'static str>,
    pub pace: Pace,
}

#[derive(Debug, Clone, Serialize)]
pub struct Reconfigured {
    pub target: Configuration,
    pub plan_id: u64,
}

/// A reconfiguration the planner could not satisfy. `violations` are those
/// of the current configuration with the requested values laid over it.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct Refused {
    pub error: PlanError,
    pub violations: Vec<Violation>,
}

pub fn level_of(c: &Configuration) -> Option<&'static str> {
    Level::ALL.into_iter().find(|l| canonical_level(*l) == *c).map(Level::name)
}

pub struct LiveSim {
    sim: Simulation<World>,
    profile: WorkloadProfile,
    generated_until: SimTime,
    published: usize,
}

impl LiveSim {
    pub fn new(config: Configuration, seed: u64) -> Result<Self, Vec<String>> {
        let sim = build(config, seed)?;
        let mut live = Self { sim, profile: WorkloadProfile::baseline(), generated_until: 0, published: 0 };
        live.generate_chunk();
        Ok(live)
    }

    fn generate_chunk(&mut self) {
        let (start, end) = (self.generated_until, self.generated_until + WORKLOAD_CHUNK_MS);
        let arrivals = generate_workload(&self.profile, start, end, self.sim.net.rng()).expect("baseline profile is valid");
        self.sim.handler.add_arrivals(&mut self.sim.net, arrivals).expect("arrivals lie ahead of the clock");
        self.generated_until = end;
    }

    pub fn now(&self) -> SimTime {
        self.sim.now()
    }

    pub fn config(&self) -> Configuration {
        self.sim.handler.config()
    }

    pub fn metrics(&self) -> MetricsWindow {
        self.sim.handler.metrics().clone()
    }

    pub fn state(&self, pace: Pace) -> LiveState {
        let snapshot = self.sim.handler.snapshot(&self.sim.net);
        LiveState { level: level_of(&snapshot.configuration), snapshot, pace }
    }

    pub fn log(&self) -> &[LogRecord] {
        self.sim.net.log().records()
    }

    pub fn log_hash(&self) -> String {
        self.sim.net.log().hash()
    }

    /// Records produced since the last call.
    pub fn take_new_records(&mut self) -> &[LogRecord] {
        let records = self.sim.net.log().records();
        let from = self.published.min(records.len());
        self.published = records.len();
        &records[from..]
    }

    /// Each chunk of arrivals is generated when the clock reaches its start,
    /// so how a run is split into calls does not change it.
    pub fn advance_to(&mut self, t: SimTime) {
        if t <= self.now() {
            return;
        }
        while self.generated_until <= t {
            self.sim.run_until(self.generated_until).expect("boundary lies ahead of the clock");
            self.generate_chunk();
        }
        self.sim.run_until(t).expect("target lies ahead of the clock");
    }

    pub fn advance_by(&mut self, ms: SimTime) {
        self.advance_to(self.now() + ms);
    }

    pub fn reconfigure(&mut self, request: PartialConfiguration) -> Result<Reconfigured, Refused> {
        let current = self.config();
        match self.sim.handler.submit_devops(&mut self.sim.net, request) {
            Ok((target, plan_id)) => Ok(Reconfigured { target, plan_id }),
            Err(error) => {
                let mut overlay = current;
                for d in Dimension::ALL {
                    if let Some(v) = request.requested(d) {
                        overlay.set(v);
                    }
                }
                Err(Refused { error, violations: validate(&overlay).violations })
            }
        }
    }

    pub fn inject_fault(&mut self, spec: FaultSpec) -> Result<FaultId, SimError> {
        self.sim.net.inject_fault(spec)
    }

    pub fn clear_fault(&mut self, id: FaultId) -> Result<(), SimError> {
        self.sim.net.clear_fault(id)
    }
}
