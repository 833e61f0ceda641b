use std::io::Write;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use teastore_core::scenarios::{builtin_names, builtin_scenario, load_scenario, run_scenario, ScenarioError, ScenarioScript};
use teastore_core::variability::{
    canonical_level_by_name, complete_request, enumerate_valid, validate, Configuration, PartialConfiguration,
};

use crate::live::LiveSim;

#[derive(Debug, Parser)]
#[command(name = "teastore", version, about = "Adaptable TeaStore simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a configuration file against the feature-model constraints.
    Validate { config: PathBuf },
    /// Print every valid configuration, one JSON object per line.
    Enumerate,
    /// Complete a partial reconfiguration request relative to a current configuration.
    Complete { request: PathBuf, current: PathBuf },
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Run the control-plane API over a live simulation, paused at t=0.
    Serve {
        /// Level name (L0, L1, L2) or path to a configuration file.
        #[arg(long, default_value = "L0")]
        config: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        host: IpAddr,
    },
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCommand {
    /// Run a builtin scenario, or a scenario file, and check its assertions.
    Run {
        /// Builtin name or path to a scenario file.
        name: String,
        /// Defaults to the seed in the script.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// List the builtin scenarios.
    List,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("{}: {source}", path.display())]
    Write { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("unknown scenario `{0}` (not a builtin and no such file)")]
    UnknownScenario(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Exit status for a run that completed but whose answer is negative.
pub const EXIT_NEGATIVE: u8 = 1;
/// Exit status for errors.
pub const EXIT_ERROR: u8 = 2;

fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| CliError::Parse { path: path.into(), source })
}

fn resolve_config(arg: &str) -> Result<Configuration, CliError> {
    match canonical_level_by_name(arg) {
        Ok(c) => Ok(c),
        Err(_) => read_json(Path::new(arg)),
    }
}

fn resolve_scenario(arg: &str) -> Result<ScenarioScript, CliError> {
    if let Some(s) = builtin_scenario(arg) {
        return Ok(s);
    }
    let path = Path::new(arg);
    if path.is_file() {
        return Ok(load_scenario(path)?);
    }
    Err(CliError::UnknownScenario(arg.to_owned()))
}

fn json_line(out: &mut impl Write, v: &impl serde::Serialize) -> std::io::Result<()> {
    writeln!(out, "{}", serde_json::to_string(v).expect("value serializes"))
}

/// Runs one command, writing results to `out`. Returns the exit status.
pub fn run(cli: Cli, out: &mut impl Write) -> Result<u8, CliError> {
    match cli.command {
        Command::Validate { config } => {
            let c: Configuration = read_json(&config)?;
            let v = validate(&c);
            json_line(out, &v)?;
            Ok(if v.valid { 0 } else { EXIT_NEGATIVE })
        }
        Command::Enumerate => {
            for c in enumerate_valid() {
                json_line(out, &c)?;
            }
            Ok(0)
        }
        Command::Complete { request, current } => {
            let req: PartialConfiguration = read_json(&request)?;
            let cur: Configuration = read_json(&current)?;
            let v = validate(&cur);
            if !v.valid {
                return Err(CliError::InvalidConfig(v.violations.into_iter().map(|x| x.message).collect()));
            }
            match complete_request(&req, &cur) {
                Ok(target) => {
                    json_line(out, &target)?;
                    Ok(0)
                }
                Err(e) => {
                    writeln!(out, "{e}")?;
                    Ok(EXIT_NEGATIVE)
                }
            }
        }
        Command::Scenario(ScenarioCommand::List) => {
            for name in builtin_names() {
                let s = builtin_scenario(name).expect("listed builtin exists");
                writeln!(out, "{name:<22} {}", s.description)?;
            }
            Ok(0)
        }
        Command::Scenario(ScenarioCommand::Run { name, seed, report }) => {
            let script = resolve_scenario(&name)?;
            let seed = seed.unwrap_or(script.seed);
            let r = run_scenario(&script, seed)?.report;
            for a in &r.assertions {
                let status = match (a.passed, a.evaluated) {
                    (false, _) => "FAIL",
                    (true, true) => "PASS",
                    (true, false) => "SKIP",
                };
                writeln!(out, "{status} {} {}", a.check, a.evidence)?;
            }
            writeln!(out, "{} seed {seed}: {} ({} events, log {})", r.scenario, if r.passed { "passed" } else { "failed" }, r.event_count, r.log_hash)?;
            if let Some(path) = report {
                std::fs::write(&path, r.to_json()).map_err(|source| CliError::Write { path, source })?;
            }
            Ok(if r.passed { 0 } else { EXIT_NEGATIVE })
        }
        Command::Serve { config, seed, port, host } => {
            let c = resolve_config(&config)?;
            let live = LiveSim::new(c, seed).map_err(CliError::InvalidConfig)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::api::serve(live, SocketAddr::new(host, port)))?;
            Ok(0)
        }
    }
}
