//! Scripted, assertable experiments over the running store.

mod builtin;
mod checks;
mod runner;
mod workload;

pub use builtin::{builtin_names, builtin_scenario};
pub use checks::{Assertion, AssertionResult};
pub use runner::{load_scenario, parse_scenario, run_scenario, ScenarioError, ScenarioReport, ScenarioRun, TimelineEntry};
pub use workload::{generate_phases, generate_workload, Arrival, Phase, ProfileError, RequestMix, WorkloadProfile};

use serde::{Deserialize, Deserializer, Serialize};

use crate::simnet::SimTime;
use crate::variability::Configuration;
use crate::world::Action;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub at_ms: SimTime,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(deserialize_with = "config_or_level")]
    pub initial_config: Configuration,
    pub phases: Vec<Phase>,
    #[serde(default)]
    pub injections: Vec<Injection>,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
    pub duration_ms: SimTime,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    42
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ConfigSpec {
    Level(String),
    Config(Configuration),
}

impl ConfigSpec {
    fn resolve<E: serde::de::Error>(self) -> Result<Configuration, E> {
        match self {
            Self::Config(c) => Ok(c),
            Self::Level(name) => crate::variability::canonical_level_by_name(&name).map_err(E::custom),
        }
    }
}

/// Accepts a configuration object or a level name such as `"L2"`.
pub fn config_or_level<'de, D: Deserializer<'de>>(d: D) -> Result<Configuration, D::Error> {
    ConfigSpec::deserialize(d)?.resolve()
}

pub(crate) fn configs_or_levels<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Configuration>, D::Error> {
    Vec::<ConfigSpec>::deserialize(d)?.into_iter().map(ConfigSpec::resolve).collect()
}
