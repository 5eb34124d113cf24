use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::nav::wrap_angle;

/// Position in NED meters and yaw in degrees, wrapped to (-180, 180].
/// Yaw 0 faces +x; positive yaw turns right (toward +y).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadState {
    pub position: Vec3,
    pub yaw: f64,
}

impl QuadState {
    pub fn new(position: Vec3, yaw: f64) -> Self {
        Self { position, yaw: wrap_angle(yaw) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Altitude {
    Up,
    Level,
    Down,
}

/// Decoded action: an altitude change and a turn in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maneuver {
    pub altitude: Altitude,
    pub turn_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionId(pub usize);

/// Every altitude choice crossed with every turn, plus one level,
/// straight-ahead action as the last index. Four turns give 13 actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionSet {
    pub turns_deg: Vec<f64>,
}

impl Default for ActionSet {
    fn default() -> Self {
        Self { turns_deg: vec![-15.0, -5.0, 5.0, 15.0] }
    }
}

impl ActionSet {
    pub fn len(&self) -> usize {
        3 * self.turns_deg.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn forward(&self) -> ActionId {
        ActionId(3 * self.turns_deg.len())
    }

    pub fn decode(&self, action: ActionId) -> Maneuver {
        let k = self.turns_deg.len();
        assert!(action.0 < self.len(), "action {} out of range", action.0);
        if action.0 == 3 * k {
            return Maneuver { altitude: Altitude::Level, turn_deg: 0.0 };
        }
        let altitude = [Altitude::Up, Altitude::Level, Altitude::Down][action.0 / k];
        Maneuver { altitude, turn_deg: self.turns_deg[action.0 % k] }
    }

    pub fn encode(&self, altitude: Altitude, turn_deg: f64) -> Option<ActionId> {
        (0..self.len()).map(ActionId).find(|&a| self.decode(a) == Maneuver { altitude, turn_deg })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    /// Horizontal distance covered by every action, meters.
    pub forward_step: f64,
    /// Vertical change of up/down actions, meters.
    pub climb_step: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self { forward_step: 1.0, climb_step: 0.5 }
    }
}

/// One kinematic step. The new yaw is `yaw + nav_offset + turn`; the
/// quadcopter then moves `forward_step` along it and climbs or descends.
pub fn apply_action(state: &QuadState, maneuver: Maneuver, nav_offset_deg: f64, cfg: &MotionConfig) -> QuadState {
    let yaw = wrap_angle(state.yaw + nav_offset_deg + maneuver.turn_deg);
    let rad = yaw.to_radians();
    let dz = match maneuver.altitude {
        Altitude::Up => -cfg.climb_step,
        Altitude::Level => 0.0,
        Altitude::Down => cfg.climb_step,
    };
    let step = Vec3::new(cfg.forward_step * rad.cos(), cfg.forward_step * rad.sin(), dz);
    QuadState { position: state.position + step, yaw }
}
