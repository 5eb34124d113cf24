use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn axis(self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Euclidean distance between the quadcopter and the goal.
pub fn distance_to_goal(p: Vec3, goal: Vec3) -> f64 {
    (p - goal).norm()
}

/// Axis-aligned box obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn is_valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && (0..3).all(|i| self.min.axis(i) < self.max.axis(i))
    }

    /// Distance from `p` to the closed box; zero inside.
    pub fn distance(&self, p: Vec3) -> f64 {
        let gap = |lo: f64, hi: f64, v: f64| (lo - v).max(0.0).max(v - hi);
        Vec3::new(
            gap(self.min.x, self.max.x, p.x),
            gap(self.min.y, self.max.y, p.y),
            gap(self.min.z, self.max.z, p.z),
        )
        .norm()
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|i| p.axis(i) >= self.min.axis(i) && p.axis(i) <= self.max.axis(i))
    }

    /// Slab test. Returns the entry parameter of `origin + t * dir`, clamped
    /// to zero when the origin is inside.
    pub fn ray_entry(&self, origin: Vec3, dir: Vec3) -> Option<f64> {
        self.ray_entry_inv(origin, Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z))
    }

    /// Slab test with a precomputed reciprocal direction (`1 / dir` per
    /// axis, infinite where the direction component is zero).
    #[inline]
    pub fn ray_entry_inv(&self, origin: Vec3, inv: Vec3) -> Option<f64> {
        let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
        for (o, inv, lo, hi) in [
            (origin.x, inv.x, self.min.x, self.max.x),
            (origin.y, inv.y, self.min.y, self.max.y),
            (origin.z, inv.z, self.min.z, self.max.z),
        ] {
            if inv.is_infinite() {
                if o < lo || o > hi {
                    return None;
                }
                continue;
            }
            let (a, b) = ((lo - o) * inv, (hi - o) * inv);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        (t0 <= t1).then_some(t0)
    }

    pub fn translated(&self, offset: Vec3) -> Self {
        Self { min: self.min + offset, max: self.max + offset }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distances() {
        assert_eq!(distance_to_goal(Vec3::new(1.0, 2.0, 3.0), Vec3::new(1.0, 2.0, 3.0)), 0.0);
        assert_eq!(distance_to_goal(Vec3::default(), Vec3::new(3.0, 4.0, 0.0)), 5.0);
        let d = distance_to_goal(Vec3::new(1.0, 1.0, 1.0), Vec3::new(2.0, 2.0, 2.0));
        assert!((d - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn box_distance_and_ray() {
        let b = Aabb::new(Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 1.0));
        assert_eq!(b.distance(Vec3::new(0.5, 0.5, 0.5)), 0.0);
        assert_eq!(b.distance(Vec3::new(3.0, 0.5, 0.5)), 2.0);
        assert!((b.distance(Vec3::new(2.0, 2.0, 0.5)) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(b.ray_entry(Vec3::new(-2.0, 0.5, 0.5), Vec3::new(1.0, 0.0, 0.0)), Some(2.0));
        assert_eq!(b.ray_entry(Vec3::new(-2.0, 1.5, 0.5), Vec3::new(1.0, 0.0, 0.0)), None);
        assert_eq!(b.ray_entry(Vec3::new(2.0, 0.5, 0.5), Vec3::new(1.0, 0.0, 0.0)), None);
        assert_eq!(b.ray_entry(Vec3::new(0.5, 0.5, 0.5), Vec3::new(1.0, 0.0, 0.0)), Some(0.0));
    }
}
