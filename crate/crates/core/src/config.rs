//! Run configuration. Every field has a default, so an empty JSON object
//! reproduces the standard protocol.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentConfig, EpsilonSchedule};
use crate::nn::{Architecture, NnError};
use crate::sim::{ActionSet, CameraModel, MotionConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("config {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Side of the square preprocessed depth frame.
    pub frame_size: usize,
    /// Frames in the state stack.
    pub stack_depth: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { frame_size: 80, stack_depth: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlightConfig {
    pub max_steps: usize,
    pub collision_radius: f64,
    pub goal_threshold: f64,
    pub collision_penalty: f64,
}

impl Default for FlightConfig {
    fn default() -> Self {
        Self { max_steps: 400, collision_radius: 0.3, goal_threshold: 2.0, collision_penalty: 50.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train_flights_per_phase: usize,
    pub test_flights_per_phase: usize,
    pub total_train_flights: usize,
    /// Test worlds move interior obstacles along x by a uniform offset in
    /// `±test_layout_shift` meters, drawn from a held-out stream.
    pub test_layout_shift: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { train_flights_per_phase: 100, test_flights_per_phase: 1000, total_train_flights: 500, test_layout_shift: 3.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Informational; present in run manifests and ignored on input.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    pub seed: u64,
    pub agent: AgentConfig,
    pub epsilon: EpsilonSchedule,
    pub network: NetworkConfig,
    pub actions: ActionSet,
    pub motion: MotionConfig,
    pub camera: CameraModel,
    pub flight: FlightConfig,
    pub experiment: ExperimentConfig,
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, message: message.into() }
}

fn positive<T: PartialOrd + Default + std::fmt::Display>(field: &'static str, v: T) -> Result<(), ConfigError> {
    if v > T::default() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be > 0, got {v}")))
    }
}

fn non_negative(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_nan() || v < 0.0 {
        Err(invalid(field, format!("must be >= 0, got {v}")))
    } else {
        Ok(())
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: p.clone(), source })?;
        let cfg = Self::from_json(&text).map_err(|source| ConfigError::Parse { path: p, source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let a = &self.agent;
        if !(0.0..1.0).contains(&a.gamma) {
            return Err(invalid("agent.gamma", format!("must be in [0, 1), got {}", a.gamma)));
        }
        if !(a.lr.is_finite() && a.lr > 0.0) {
            return Err(invalid("agent.lr", format!("must be > 0, got {}", a.lr)));
        }
        positive("agent.batch_size", a.batch_size)?;
        positive("agent.train_every", a.train_every)?;
        positive("agent.sync_every", a.sync_every)?;
        positive("agent.replay_capacity", a.replay_capacity)?;
        positive("agent.min_replay_before_training", a.min_replay_before_training)?;

        let e = &self.epsilon;
        if e.end.is_nan() || e.end <= 0.0 {
            return Err(invalid("epsilon.end", format!("must be > 0, got {}", e.end)));
        }
        if e.end > e.start {
            return Err(invalid("epsilon.end", format!("{} exceeds epsilon.start {}", e.end, e.start)));
        }
        if e.start > 1.0 {
            return Err(invalid("epsilon.start", format!("must be <= 1, got {}", e.start)));
        }

        positive("network.frame_size", self.network.frame_size)?;
        positive("network.stack_depth", self.network.stack_depth)?;
        if self.actions.turns_deg.is_empty() || self.actions.turns_deg.iter().any(|t| !t.is_finite()) {
            return Err(invalid("actions.turns_deg", "needs at least one finite turn"));
        }

        positive("motion.forward_step", self.motion.forward_step)?;
        non_negative("motion.climb_step", self.motion.climb_step)?;

        let c = &self.camera;
        if !(c.fov_deg > 0.0 && c.fov_deg < 180.0) {
            return Err(invalid("camera.fov_deg", format!("must be in (0, 180), got {}", c.fov_deg)));
        }
        positive("camera.width", c.width)?;
        positive("camera.height", c.height)?;

        let f = &self.flight;
        positive("flight.max_steps", f.max_steps)?;
        positive("flight.collision_radius", f.collision_radius)?;
        positive("flight.goal_threshold", f.goal_threshold)?;
        non_negative("flight.collision_penalty", f.collision_penalty)?;

        let x = &self.experiment;
        positive("experiment.train_flights_per_phase", x.train_flights_per_phase)?;
        positive("experiment.test_flights_per_phase", x.test_flights_per_phase)?;
        positive("experiment.total_train_flights", x.total_train_flights)?;
        non_negative("experiment.test_layout_shift", x.test_layout_shift)?;
        self.architecture().map_err(|e| invalid("network", e.to_string()))?;
        Ok(())
    }

    pub fn architecture(&self) -> Result<Architecture, NnError> {
        Architecture::q_network(self.network.frame_size, self.network.stack_depth, self.actions.len())
    }
}
