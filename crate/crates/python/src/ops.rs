//! The operations exposed to Python, over JSON values so they can be tested
//! without an interpreter.

use serde_json::Value;
use teastore_core::live::{LiveSim, Pace};
use teastore_core::scenarios::{builtin_names, builtin_scenario, parse_scenario, run_scenario};
use teastore_core::simnet::{FaultId, FaultSpec};
use teastore_core::variability::{
    canonical_level_by_name, complete_request, enumerate_valid, validate, Configuration, PartialConfiguration,
};

pub type OpResult<T> = Result<T, String>;

fn from_value<T: serde::de::DeserializeOwned>(v: Value, what: &str) -> OpResult<T> {
    serde_json::from_value(v).map_err(|e| format!("malformed {what}: {e}"))
}

fn to_value(v: impl serde::Serialize) -> Value {
    serde_json::to_value(v).expect("value serializes")
}

/// A configuration given as an object or a level name.
pub fn configuration(v: Value) -> OpResult<Configuration> {
    match v {
        Value::String(name) => canonical_level_by_name(&name).map_err(|e| e.to_string()),
        other => from_value(other, "configuration"),
    }
}

pub fn validate_config(config: Value) -> OpResult<Value> {
    Ok(to_value(validate(&configuration(config)?)))
}

pub fn enumerate() -> Value {
    to_value(enumerate_valid())
}

pub fn complete(request: Value, current: Value) -> OpResult<Value> {
    let req: PartialConfiguration = from_value(request, "request")?;
    let cur = configuration(current)?;
    if !cur.is_valid() {
        return Err("current configuration is invalid".into());
    }
    complete_request(&req, &cur).map(to_value).map_err(|e| e.to_string())
}

pub fn scenario_names() -> Vec<String> {
    builtin_names().iter().map(|s| s.to_string()).collect()
}

/// Runs a builtin by name, or a script given as JSON text. Returns the
/// report in its canonical serialized form.
pub fn run(name_or_script: &str, seed: Option<u64>) -> OpResult<String> {
    let script = match builtin_scenario(name_or_script) {
        Some(s) => s,
        None if name_or_script.trim_start().starts_with('{') => parse_scenario(name_or_script).map_err(|e| e.to_string())?,
        None => return Err(format!("unknown scenario `{name_or_script}`")),
    };
    let seed = seed.unwrap_or(script.seed);
    run_scenario(&script, seed).map(|r| r.report.to_json()).map_err(|e| e.to_string())
}

pub struct Live(pub LiveSim);

impl Live {
    pub fn new(config: Value, seed: u64) -> OpResult<Self> {
        LiveSim::new(configuration(config)?, seed).map(Live).map_err(|v| v.join("; "))
    }

    pub fn state(&self) -> Value {
        to_value(self.0.state(Pace::Paused))
    }

    pub fn reconfigure(&mut self, request: Value) -> OpResult<Value> {
        let req: PartialConfiguration = from_value(request, "request")?;
        self.0.reconfigure(req).map(to_value).map_err(|e| e.to_string())
    }

    pub fn inject_fault(&mut self, spec: Value) -> OpResult<u64> {
        let spec: FaultSpec = from_value(spec, "fault")?;
        self.0.inject_fault(spec).map(|id| id.0).map_err(|e| e.to_string())
    }

    pub fn clear_fault(&mut self, id: u64) -> OpResult<()> {
        self.0.clear_fault(FaultId(id)).map_err(|e| e.to_string())
    }

    /// Log records from index `since` on.
    pub fn records(&self, since: usize) -> Value {
        to_value(self.0.log().get(since..).unwrap_or_default())
    }
}
