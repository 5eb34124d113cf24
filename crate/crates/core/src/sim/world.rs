use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{distance_to_goal, Aabb, QuadState, Vec3};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("cannot read world file {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("world file {path} is not valid JSON: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("invalid world: {0}")]
    Invalid(String),
}

/// Start position distribution: `(x, N(0, y_sigma), z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnSpec {
    pub x: f64,
    pub y_sigma: f64,
    pub z: f64,
}

impl Default for SpawnSpec {
    fn default() -> Self {
        Self { x: 0.0, y_sigma: 5.0, z: -2.0 }
    }
}

/// Static obstacle world. The ground is the half-space `z >= ground_z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct World {
    pub ground_z: f64,
    pub far_clip: f64,
    pub goal: Vec3,
    pub spawn: SpawnSpec,
    pub boxes: Vec<Aabb>,
}

impl World {
    pub fn validate(&self) -> Result<(), WorldError> {
        if !(self.far_clip.is_finite() && self.far_clip > 0.0) {
            return Err(WorldError::Invalid(format!("far_clip must be > 0, got {}", self.far_clip)));
        }
        if !self.ground_z.is_finite() || !self.goal.is_finite() {
            return Err(WorldError::Invalid("ground_z and goal must be finite".into()));
        }
        if !(self.spawn.y_sigma >= 0.0 && self.spawn.x.is_finite() && self.spawn.z.is_finite()) {
            return Err(WorldError::Invalid("spawn needs finite x, z and y_sigma >= 0".into()));
        }
        if let Some(i) = self.boxes.iter().position(|b| !b.is_valid()) {
            return Err(WorldError::Invalid(format!("box {i} must have min < max on every axis")));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| WorldError::Read { path: path.display().to_string(), source })?;
        let world: World =
            Self::from_json(&text).map_err(|source| WorldError::Parse { path: path.display().to_string(), source })?;
        world.validate()?;
        Ok(world)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("world serializes")
    }

    /// Same world with every obstacle that lies strictly between the spawn
    /// line and the goal moved `dx` meters along x. Boxes that reach past the
    /// spawn or the goal (corridor walls, floors, ceilings) stay put.
    pub fn shifted_layout(&self, dx: f64) -> World {
        let (lo, hi) = (self.spawn.x.min(self.goal.x), self.spawn.x.max(self.goal.x));
        let mut out = self.clone();
        for b in &mut out.boxes {
            if b.min.x > lo && b.max.x < hi {
                *b = b.translated(Vec3::new(dx, 0.0, 0.0));
            }
        }
        out
    }
}

/// Straight corridor from the spawn line to the goal, closed on both sides
/// and overhead, blocked part-way by a wall. The wall leaves a gap between
/// `wall_top` and `gap_top` (altitudes above ground, meters); when `gap_top`
/// is at or above the ceiling the gap runs up to the ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorridorSpec {
    pub length: f64,
    pub half_width: f64,
    pub ceiling: f64,
    pub wall_x: f64,
    pub wall_thickness: f64,
    pub wall_top: f64,
    pub gap_top: f64,
    /// Spawn altitude.
    pub flight_altitude: f64,
    pub goal_altitude: f64,
    pub far_clip: f64,
}

impl Default for CorridorSpec {
    fn default() -> Self {
        Self {
            length: 40.0,
            half_width: 15.0,
            ceiling: 10.0,
            wall_x: 20.0,
            wall_thickness: 1.0,
            wall_top: 4.0,
            gap_top: 10.0,
            flight_altitude: 2.0,
            goal_altitude: 6.0,
            far_clip: 100.0,
        }
    }
}

impl CorridorSpec {
    pub fn build(&self) -> World {
        let (l, w, c) = (self.length, self.half_width, self.ceiling);
        let (x0, x1) = (-10.0, l + 10.0);
        let mut boxes = vec![
            // side walls
            Aabb::new(Vec3::new(x0, -w - 1.0, -c), Vec3::new(x1, -w, 0.0)),
            Aabb::new(Vec3::new(x0, w, -c), Vec3::new(x1, w + 1.0, 0.0)),
            // ceiling
            Aabb::new(Vec3::new(x0, -w - 1.0, -c - 1.0), Vec3::new(x1, w + 1.0, -c)),
            // the wall
            Aabb::new(
                Vec3::new(self.wall_x, -w, -self.wall_top),
                Vec3::new(self.wall_x + self.wall_thickness, w, 0.0),
            ),
        ];
        if self.gap_top < c {
            boxes.push(Aabb::new(
                Vec3::new(self.wall_x, -w, -c),
                Vec3::new(self.wall_x + self.wall_thickness, w, -self.gap_top),
            ));
        }
        World {
            ground_z: 0.0,
            far_clip: self.far_clip,
            goal: Vec3::new(l, 0.0, -self.goal_altitude),
            spawn: SpawnSpec { x: 0.0, y_sigma: 5.0, z: -self.flight_altitude },
            boxes,
        }
    }
}

/// True when the sphere of `radius` around `position` touches a box or the
/// ground.
pub fn check_collision(world: &World, position: Vec3, radius: f64) -> bool {
    world.ground_z - position.z <= radius || world.boxes.iter().any(|b| b.distance(position) <= radius)
}

/// Collision test along a straight move, sampled at spacing of at most
/// `radius` so thin obstacles cannot be skipped.
pub fn segment_collides(world: &World, from: Vec3, to: Vec3, radius: f64) -> bool {
    let n = ((to - from).norm() / radius).ceil().max(1.0) as usize;
    (1..=n).any(|i| check_collision(world, from + (to - from) * (i as f64 / n as f64), radius))
}

pub fn spawn_start<R: Rng + ?Sized>(spec: &SpawnSpec, rng: &mut R) -> Vec3 {
    let y = if spec.y_sigma > 0.0 {
        Normal::new(0.0, spec.y_sigma).expect("sigma is positive").sample(rng)
    } else {
        0.0
    };
    Vec3::new(spec.x, y, spec.z)
}

pub fn reached_goal(state: &QuadState, world: &World, threshold: f64) -> bool {
    distance_to_goal(state.position, world.goal) <= threshold
}
