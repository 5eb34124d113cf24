//! Box-world simulator: geometry, quadcopter kinematics, depth camera, and
//! frame preprocessing. Coordinates are NED meters (x forward/north, y east,
//! z down), so altitude above ground is negative z.

mod camera;
mod frames;
mod geometry;
mod motion;
mod world;

pub use camera::{render_depth, write_pgm, CameraModel, DepthImage};
pub use frames::{area_resize, preprocess, Frame, FrameStack};
pub use geometry::{distance_to_goal, Aabb, Vec3};
pub use motion::{apply_action, ActionId, ActionSet, Altitude, Maneuver, MotionConfig, QuadState};
pub use world::{
    check_collision, reached_goal, segment_collides, spawn_start, CorridorSpec, SpawnSpec, World, WorldError,
};
