//! Per-command JSON configs and the metadata sidecar.

use std::path::Path;

use noslip_core::dynamics::{CollisionRule, ForceField, StopCondition};
use noslip_core::experiments::{ChannelConfig, GaltonConfig, PhasePortraitConfig};
use noslip_core::geometry::TableSpec;
use noslip_core::orbits::{Scenario, StabilityGridSpec, WedgePeriodicSpec};
use noslip_core::output::PhaseMode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Initial condition of a single trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Initial {
    /// Explicit position and velocity `(rot, x, y)`.
    State { pos: [f64; 2], vel: [f64; 3] },
    /// The constructed path-reversing wedge orbit; it supplies its own table,
    /// force and mass.
    WedgePeriodic(WedgePeriodicSpec),
}

fn default_stop() -> StopCondition {
    StopCondition::collisions(1000)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub table: Option<TableSpec>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub force: Option<ForceField>,
    /// Applied to every component when set.
    #[serde(default)]
    pub rule: Option<CollisionRule>,
    pub initial: Initial,
    #[serde(default = "default_stop")]
    pub stop: StopCondition,
}

fn default_periodic_collisions() -> u64 {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodicConfig {
    #[serde(flatten)]
    pub wedge: WedgePeriodicSpec,
    /// Collisions simulated to measure closure; 0 skips the simulation.
    #[serde(default = "default_periodic_collisions")]
    pub collisions: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseRunConfig {
    #[serde(flatten)]
    pub portrait: PhasePortraitConfig,
    #[serde(default)]
    pub mode: PhaseMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridRunConfig {
    #[serde(flatten)]
    pub grid: StabilityGridSpec,
    #[serde(flatten)]
    pub scenario: Scenario,
}

/// Seed handling shared by all command configs.
pub trait Seeded {
    fn seed_mut(&mut self) -> Option<&mut u64> {
        None
    }
}

impl Seeded for SimulateConfig {}
impl Seeded for PeriodicConfig {}
impl Seeded for GridRunConfig {}

impl Seeded for GaltonConfig {
    fn seed_mut(&mut self) -> Option<&mut u64> {
        Some(&mut self.seed)
    }
}

impl Seeded for PhaseRunConfig {
    fn seed_mut(&mut self) -> Option<&mut u64> {
        Some(&mut self.portrait.seed)
    }
}

impl Seeded for ChannelConfig {
    fn seed_mut(&mut self) -> Option<&mut u64> {
        Some(&mut self.seed)
    }
}

/// Metadata written next to every run's outputs. Passing it back as
/// `--config` reruns the same command with the same resolved config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub threads: usize,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

pub const SIDECAR_NAME: &str = "meta.json";

/// Reads a command config from a plain config file or a sidecar of the same
/// command.
pub fn load<T: DeserializeOwned>(path: &Path, command: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let value = match serde_json::from_value::<Sidecar>(value.clone()) {
        Ok(meta) if meta.command == command => meta.config,
        Ok(meta) => {
            return Err(CliError::Config(format!(
                "{} is metadata of a `{}` run, not `{command}`",
                path.display(),
                meta.command
            )))
        }
        Err(_) => value,
    };
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
