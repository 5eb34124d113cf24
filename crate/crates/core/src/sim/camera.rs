use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{QuadState, Vec3, World};

/// Forward-facing pinhole camera, level with the horizon, rotating with yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraModel {
    pub fov_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self { fov_deg: 90.0, width: 256, height: 144 }
    }
}

impl CameraModel {
    pub fn focal_px(&self) -> f64 {
        (self.width as f64 / 2.0) / (self.fov_deg.to_radians() / 2.0).tan()
    }

    /// Ray direction through the center of pixel `(row, col)`, scaled so its
    /// component along the camera axis is exactly 1. A hit at parameter `t`
    /// therefore has planar depth `t`.
    pub fn ray(&self, yaw_deg: f64, row: usize, col: usize) -> Vec3 {
        let f = self.focal_px();
        let right = (col as f64 + 0.5 - self.width as f64 / 2.0) / f;
        let down = (row as f64 + 0.5 - self.height as f64 / 2.0) / f;
        let (s, c) = yaw_deg.to_radians().sin_cos();
        Vec3::new(c - s * right, s + c * right, down)
    }
}

/// Planar depth in meters, row-major, clamped to `[0, far_clip]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub far_clip: f64,
    pub data: Vec<f64>,
}

impl DepthImage {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }
}

/// Nearest hit parameter along `origin + t * dir`, or `None` within the
/// clip distance.
pub(crate) fn cast(world: &World, origin: Vec3, dir: Vec3) -> Option<f64> {
    let mut best = f64::INFINITY;
    if origin.z >= world.ground_z {
        return Some(0.0);
    }
    if dir.z > 0.0 {
        best = (world.ground_z - origin.z) / dir.z;
    }
    let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
    for b in &world.boxes {
        if let Some(t) = b.ray_entry_inv(origin, inv) {
            best = best.min(t);
        }
    }
    best.is_finite().then_some(best)
}

pub fn render_depth(world: &World, state: &QuadState, cam: &CameraModel) -> DepthImage {
    let mut data = Vec::with_capacity(cam.width * cam.height);
    for row in 0..cam.height {
        for col in 0..cam.width {
            let dir = cam.ray(state.yaw, row, col);
            let depth = cast(world, state.position, dir).map_or(world.far_clip, |t| t.min(world.far_clip));
            data.push(depth);
        }
    }
    DepthImage { width: cam.width, height: cam.height, far_clip: world.far_clip, data }
}

/// 16-bit binary PGM, one sample per pixel holding depth in centimeters.
pub fn write_pgm<W: Write>(mut w: W, img: &DepthImage) -> io::Result<()> {
    write!(w, "P5\n{} {}\n65535\n", img.width, img.height)?;
    let mut buf = Vec::with_capacity(img.data.len() * 2);
    for &d in &img.data {
        let cm = (d * 100.0).round().clamp(0.0, 65535.0) as u16;
        buf.extend_from_slice(&cm.to_be_bytes());
    }
    w.write_all(&buf)?;
    w.flush()
}
