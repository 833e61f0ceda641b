use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::checks::{evaluate, AssertionResult, RunData};
use super::workload::{generate_phases, ProfileError};
use super::ScenarioScript;
use crate::adaptation::{AdaptationPlan, DetectedCondition, ExecutionReport, MetricsWindow};
use crate::simnet::{SimError, SimTime, Simulation};
use crate::variability::{Configuration, Level};
use crate::world::{build, World};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid initial configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid workload: {0}")]
    Profile(#[from] ProfileError),
    #[error("injection at {at}ms is outside the run of {duration}ms")]
    InjectionOutOfRange { at: SimTime, duration: SimTime },
    #[error("phase {start}..{end}ms is not within the run of {duration}ms")]
    PhaseOutOfRange { start: SimTime, end: SimTime, duration: SimTime },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub t: SimTime,
    pub configuration: Configuration,
    /// Canonical level name when the configuration is one.
    pub level: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub seed: u64,
    pub duration_ms: SimTime,
    pub passed: bool,
    pub assertions: Vec<AssertionResult>,
    pub config_timeline: Vec<TimelineEntry>,
    pub metrics_timeline: Vec<MetricsWindow>,
    pub conditions: Vec<DetectedCondition>,
    pub plans: Vec<AdaptationPlan>,
    pub executions: Vec<ExecutionReport>,
    pub event_count: usize,
    pub log_hash: String,
}

impl ScenarioReport {
    /// The canonical serialized form, shared by every front end.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }
}

/// A finished run: the report plus the simulation for further inspection.
pub struct ScenarioRun {
    pub report: ScenarioReport,
    pub sim: Simulation<World>,
}

pub fn parse_scenario(json: &str) -> Result<ScenarioScript, ScenarioError> {
    Ok(serde_json::from_str(json)?)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioScript, ScenarioError> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

fn level_name(c: &Configuration) -> Option<String> {
    Level::ALL.into_iter().find(|l| crate::variability::canonical_level(*l) == *c).map(|l| l.name().to_owned())
}

pub fn run_scenario(script: &ScenarioScript, seed: u64) -> Result<ScenarioRun, ScenarioError> {
    let duration = script.duration_ms;
    for i in &script.injections {
        if i.at_ms > duration {
            return Err(ScenarioError::InjectionOutOfRange { at: i.at_ms, duration });
        }
    }
    for p in &script.phases {
        if p.start_ms > p.end_ms || p.end_ms > duration {
            return Err(ScenarioError::PhaseOutOfRange { start: p.start_ms, end: p.end_ms, duration });
        }
    }
    let mut sim = build(script.initial_config, seed).map_err(|v| ScenarioError::InvalidConfig(v.join("; ")))?;
    // Injections go in first so they win ties with arrivals at the same instant.
    for i in &script.injections {
        sim.handler.schedule_action(&mut sim.net, i.at_ms, i.action.clone())?;
    }
    let arrivals = generate_phases(&script.phases, sim.net.rng())?;
    sim.handler.add_arrivals(&mut sim.net, arrivals)?;
    sim.run_until(duration)?;
    sim.handler.finalize_reports(&sim.net);

    let world = &sim.handler;
    let records = sim.net.log().records();
    let data = RunData::new(records, world);
    let assertions: Vec<AssertionResult> = script
        .assertions
        .iter()
        .map(|a| {
            if duration == 0 {
                AssertionResult { check: a.name(), passed: true, evaluated: false, evidence: serde_json::Value::Null }
            } else {
                evaluate(a, &data, duration)
            }
        })
        .collect();
    let config_timeline = if duration == 0 {
        vec![]
    } else {
        world
            .config_timeline
            .iter()
            .map(|(t, c)| TimelineEntry { t: *t, configuration: *c, level: level_name(c) })
            .collect()
    };
    let report = ScenarioReport {
        scenario: script.name.clone(),
        seed,
        duration_ms: duration,
        passed: assertions.iter().all(|a| a.passed),
        assertions,
        config_timeline,
        metrics_timeline: world.metrics_timeline.clone(),
        conditions: world.conditions.clone(),
        plans: world.plans.clone(),
        executions: world.reports.clone(),
        event_count: records.len(),
        log_hash: sim.net.log().hash(),
    };
    Ok(ScenarioRun { report, sim })
}
