//! Goal-seeking navigation: the turn that faces the straight-line path to the
//! goal, and fusion with the collision-avoidance turn.
//!
//! Angles are degrees in (-180, 180]; positive turns right (clockwise seen
//! from above, i.e. from +x toward +y in NED).

use crate::sim::{Maneuver, Vec3};

/// Maps any finite angle to its equivalent in (-180, 180]. -180 maps to 180.
pub fn wrap_angle(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TurnCommand(f64);

impl TurnCommand {
    pub fn new(deg: f64) -> Self {
        Self(wrap_angle(deg))
    }

    pub fn degrees(self) -> f64 {
        self.0
    }
}

/// Horizontal bearing from `pos` to `goal`, degrees.
pub fn bearing(pos: Vec3, goal: Vec3) -> f64 {
    (goal.y - pos.y).atan2(goal.x - pos.x).to_degrees()
}

/// Turn that points the nose at the goal's horizontal bearing. Zero when the
/// goal is directly above or below.
pub fn heading_to_goal(pos: Vec3, yaw_deg: f64, goal: Vec3) -> TurnCommand {
    if goal.x == pos.x && goal.y == pos.y {
        return TurnCommand(0.0);
    }
    TurnCommand::new(bearing(pos, goal) - yaw_deg)
}

/// Adds the avoidance turn of `maneuver` to the navigation turn. The
/// altitude part of the maneuver is not involved.
pub fn combine_turn(nav: TurnCommand, maneuver: &Maneuver) -> TurnCommand {
    TurnCommand::new(nav.0 + maneuver.turn_deg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{ActionId, ActionSet, Altitude};
    use proptest::prelude::*;

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(190.0), -170.0);
        assert_eq!(wrap_angle(-180.0), 180.0);
        assert_eq!(wrap_angle(180.0), 180.0);
        assert_eq!(wrap_angle(0.0), 0.0);
        assert_eq!(wrap_angle(-540.0), 180.0);
        assert_eq!(wrap_angle(725.0), 5.0);
    }

    #[test]
    fn heading_examples() {
        let o = Vec3::new(0.0, 0.0, -2.0);
        assert_eq!(heading_to_goal(o, 0.0, Vec3::new(10.0, 0.0, -2.0)).degrees(), 0.0);
        assert!((heading_to_goal(o, 0.0, Vec3::new(0.0, 10.0, -2.0)).degrees() - 90.0).abs() < 1e-12);
        // yaw 170, bearing -170: -340 wraps to +20
        let goal = Vec3::new((-170f64).to_radians().cos(), (-170f64).to_radians().sin(), -2.0);
        assert!((heading_to_goal(o, 170.0, goal).degrees() - 20.0).abs() < 1e-9);
        assert_eq!(heading_to_goal(o, 33.0, Vec3::new(0.0, 0.0, -9.0)).degrees(), 0.0);
    }

    #[test]
    fn combine_examples() {
        let set = ActionSet::default();
        let right5 = set.decode(set.encode(Altitude::Level, 5.0).unwrap());
        let left15 = set.decode(set.encode(Altitude::Up, -15.0).unwrap());
        let fwd = set.decode(ActionId(12));
        assert_eq!(combine_turn(TurnCommand::new(10.0), &right5).degrees(), 15.0);
        assert_eq!(combine_turn(TurnCommand::new(10.0), &fwd).degrees(), 10.0);
        assert_eq!(combine_turn(TurnCommand::new(-5.0), &left15).degrees(), -20.0);
        assert_eq!(combine_turn(TurnCommand::new(175.0), &right5).degrees(), 180.0);
        assert_eq!(combine_turn(TurnCommand::new(178.0), &right5).degrees(), -177.0);
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent(x in -1e6f64..1e6) {
            let w = wrap_angle(x);
            prop_assert!(w > -180.0 && w <= 180.0);
            prop_assert_eq!(wrap_angle(w), w);
        }

        #[test]
        fn heading_is_rotation_equivariant(
            px in -50.0f64..50.0, py in -50.0f64..50.0, gx in -50.0f64..50.0, gy in -50.0f64..50.0,
            yaw in -180.0f64..180.0, rot in -360.0f64..360.0,
        ) {
            prop_assume!((gx - px).hypot(gy - py) > 1e-3);
            let (s, c) = rot.to_radians().sin_cos();
            let r = |v: Vec3| Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z);
            let (p, g) = (Vec3::new(px, py, -2.0), Vec3::new(gx, gy, -2.0));
            let a = heading_to_goal(p, yaw, g).degrees();
            let b = heading_to_goal(r(p), yaw + rot, r(g)).degrees();
            prop_assert!(wrap_angle(a - b).abs() < 1e-9);
        }

        #[test]
        fn fusion_is_linear(nav in -180.0f64..=180.0, a in 0usize..13) {
            let m = ActionSet::default().decode(ActionId(a));
            let diff = combine_turn(TurnCommand::new(nav), &m).degrees() - combine_turn(TurnCommand::new(0.0), &m).degrees();
            prop_assert!(wrap_angle(diff - nav).abs() < 1e-9);
        }
    }
}
