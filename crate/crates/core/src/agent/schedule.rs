use serde::{Deserialize, Serialize};

/// Linear ε decay from `start` at step 0 to `end` at `anneal_steps`, flat
/// afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { start: 0.1, end: 0.001, anneal_steps: 100_000 }
    }
}

impl EpsilonSchedule {
    pub fn epsilon_at(&self, step: u64) -> f64 {
        if self.anneal_steps == 0 || step >= self.anneal_steps {
            return self.end;
        }
        let frac = step as f64 / self.anneal_steps as f64;
        self.start + frac * (self.end - self.start)
    }
}
