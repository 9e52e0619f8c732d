//! Planar rigid-body geometry: SE(2) poses and twists, polygons, and
//! object/environment contact detection.

mod contact;
mod polygon;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use contact::{
    contact_query, feature_contact, min_signed_distance, penetration_rollback, Contact, ContactFeature,
    ContactSource, MERGE_RADIUS,
};
pub use polygon::Polygon;

/// 2D vector / point.
pub type Vec2 = nalgebra::Vector2<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon has (near) zero area")]
    Degenerate,
    #[error("polygon is self-intersecting (edges {0} and {1} cross)")]
    SelfIntersecting(usize, usize),
    #[error("non-finite coordinate in geometry")]
    NonFinite,
    #[error("object penetrates the environment by {depth:.3e} (limit {limit:.3e})")]
    Penetration { depth: f64, limit: f64 },
    #[error("penetration rollback did not reach tolerance in {0} iterations")]
    BisectionFailure(usize),
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Rotates `v` counter-clockwise by `theta`.
pub fn rotate(v: &Vec2, theta: f64) -> Vec2 {
    let (s, c) = theta.sin_cos();
    Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// z-component of the planar cross product.
pub fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// An SE(2) configuration. `theta` is kept in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn identity() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    pub fn translation(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    /// `self ∘ other`: `other` is expressed in the frame of `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let t = self.translation() + rotate(&other.translation(), self.theta);
        Pose::new(t.x, t.y, self.theta + other.theta)
    }

    pub fn inverse(&self) -> Pose {
        let t = rotate(&-self.translation(), -self.theta);
        Pose::new(t.x, t.y, -self.theta)
    }

    /// Maps a body-frame point to the world frame.
    pub fn transform_point(&self, p: &Vec2) -> Vec2 {
        rotate(p, self.theta) + self.translation()
    }

    /// Maps a world-frame point to the body frame.
    pub fn inverse_transform_point(&self, p: &Vec2) -> Vec2 {
        rotate(&(p - self.translation()), -self.theta)
    }

    pub fn rotate_vector(&self, v: &Vec2) -> Vec2 {
        rotate(v, self.theta)
    }

    pub fn inverse_rotate_vector(&self, v: &Vec2) -> Vec2 {
        rotate(v, -self.theta)
    }

    /// Flows along the body twist `v` for time `h`.
    pub fn step(&self, v: &Twist, h: f64) -> Pose {
        self.compose(&twist_to_transform(v, h))
    }

    /// Point on the twist-coordinate segment from `self` to `to` at
    /// parameter `s` in [0, 1].
    pub fn interpolate(&self, to: &Pose, s: f64) -> Pose {
        self.step(&body_twist_between(self, to), s)
    }
}

/// Planar body velocity (vx, vy, omega).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl Twist {
    pub fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self { vx, vy, omega }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.vx, self.vy, self.omega]
    }

    pub fn scale(&self, s: f64) -> Twist {
        Twist::new(self.vx * s, self.vy * s, self.omega * s)
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.omega.is_finite()
    }

    /// Euclidean norm with the angular component scaled by `w_r`.
    pub fn weighted_norm(&self, w_r: f64) -> f64 {
        (self.vx * self.vx + self.vy * self.vy + (w_r * self.omega).powi(2)).sqrt()
    }

    /// Velocity of the body-frame point `p` under this twist, in the body frame.
    pub fn point_velocity(&self, p: &Vec2) -> Vec2 {
        Vec2::new(self.vx - self.omega * p.y, self.vy + self.omega * p.x)
    }
}

/// (sin(a)/a, (1 - cos(a))/a) with series expansions near zero.
fn exp_coefficients(a: f64) -> (f64, f64) {
    if a.abs() < 1e-6 {
        let a2 = a * a;
        (1.0 - a2 / 6.0, a / 2.0 - a * a2 / 24.0)
    } else {
        (a.sin() / a, (1.0 - a.cos()) / a)
    }
}

/// SE(2) exponential of the body twist `h·v`, returned as a pose increment
/// to be composed on the right of the current pose.
pub fn twist_to_transform(v: &Twist, h: f64) -> Pose {
    let phi = h * v.omega;
    let (s, c) = exp_coefficients(phi);
    let tx = h * v.vx;
    let ty = h * v.vy;
    Pose::new(s * tx - c * ty, c * tx + s * ty, phi)
}

/// SE(2) logarithm of `from⁻¹ ∘ to`: the constant body twist that carries
/// `from` onto `to` in unit time, taking the shortest rotation.
pub fn body_twist_between(from: &Pose, to: &Pose) -> Twist {
    let phi = normalize_angle(to.theta - from.theta);
    let dt = rotate(&(to.translation() - from.translation()), -from.theta);
    let (s, c) = exp_coefficients(phi);
    let det = s * s + c * c;
    Twist::new(
        (s * dt.x + c * dt.y) / det,
        (-c * dt.x + s * dt.y) / det,
        phi,
    )
}

/// Absolute shortest angular difference in [0, pi].
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_twist_is_identity() {
        for h in [0.1, 1.0, 7.5] {
            let t = twist_to_transform(&Twist::zero(), h);
            assert_eq!(t, Pose::identity());
        }
    }

    #[test]
    fn pure_translation() {
        let t = twist_to_transform(&Twist::new(1.0, 0.0, 0.0), 0.5);
        assert_relative_eq!(t.x, 0.5);
        assert_relative_eq!(t.y, 0.0);
        assert_relative_eq!(t.theta, 0.0);
    }

    /// Integrates dq/dt = R(theta) v with RK4 as an independent check of the
    /// closed-form exponential.
    fn integrate_body_twist(q: Pose, v: Twist, h: f64, dt: f64) -> Pose {
        let f = |s: [f64; 3]| {
            let (sn, cs) = s[2].sin_cos();
            [cs * v.vx - sn * v.vy, sn * v.vx + cs * v.vy, v.omega]
        };
        let mut s = [q.x, q.y, q.theta];
        let n = (h / dt).round() as usize;
        for _ in 0..n {
            let k1 = f(s);
            let k2 = f([s[0] + 0.5 * dt * k1[0], s[1] + 0.5 * dt * k1[1], s[2] + 0.5 * dt * k1[2]]);
            let k3 = f([s[0] + 0.5 * dt * k2[0], s[1] + 0.5 * dt * k2[1], s[2] + 0.5 * dt * k2[2]]);
            let k4 = f([s[0] + dt * k3[0], s[1] + dt * k3[1], s[2] + dt * k3[2]]);
            for i in 0..3 {
                s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        Pose::new(s[0], s[1], s[2])
    }

    #[test]
    fn half_turn_matches_ode() {
        let v = Twist::new(0.0, 0.0, PI);
        let q = Pose::identity().step(&v, 1.0);
        assert_relative_eq!(q.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(q.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(q.theta.abs(), PI, epsilon = 1e-12);

        let v = Twist::new(0.7, -0.3, PI);
        let closed = Pose::new(0.2, -1.0, 0.4).step(&v, 1.0);
        let ode = integrate_body_twist(Pose::new(0.2, -1.0, 0.4), v, 1.0, 1e-4);
        assert_relative_eq!(closed.x, ode.x, epsilon = 1e-9);
        assert_relative_eq!(closed.y, ode.y, epsilon = 1e-9);
        assert_relative_eq!(angle_distance(closed.theta, ode.theta), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn log_of_identity_and_translation() {
        let q = Pose::new(1.0, 2.0, 0.3);
        let v = body_twist_between(&q, &q);
        assert_relative_eq!(v.weighted_norm(1.0), 0.0, epsilon = 1e-15);
        let v = body_twist_between(&Pose::identity(), &Pose::new(1.0, 0.0, 0.0));
        assert_relative_eq!(v.vx, 1.0);
        assert_relative_eq!(v.vy, 0.0);
        assert_relative_eq!(v.omega, 0.0);
    }

    #[test]
    fn normalize_angle_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert_relative_eq!(normalize_angle(3.0 * PI / 2.0), -PI / 2.0);
        assert_relative_eq!(normalize_angle(-7.0), -7.0 + 2.0 * PI);
    }

    fn pose_strategy() -> impl Strategy<Value = Pose> {
        (-10.0..10.0f64, -10.0..10.0f64, -PI..PI).prop_map(|(x, y, t)| Pose::new(x, y, t))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn exp_log_round_trip(a in pose_strategy(), b in pose_strategy()) {
            let v = body_twist_between(&a, &b);
            let c = a.step(&v, 1.0);
            prop_assert!((c.x - b.x).abs() < 1e-9);
            prop_assert!((c.y - b.y).abs() < 1e-9);
            prop_assert!(angle_distance(c.theta, b.theta) < 1e-9);
            prop_assert!(v.omega.abs() <= PI + 1e-12);
        }

        #[test]
        fn compose_inverse_is_identity(a in pose_strategy()) {
            let e = a.compose(&a.inverse());
            prop_assert!(e.x.abs() < 1e-9 && e.y.abs() < 1e-9 && angle_distance(e.theta, 0.0) < 1e-12);
        }

        #[test]
        fn theta_always_normalized(a in pose_strategy(), vx in -5.0..5.0f64, w in -20.0..20.0f64) {
            let q = a.step(&Twist::new(vx, 0.1, w), 0.9);
            prop_assert!(q.theta > -PI && q.theta <= PI);
        }
    }
}
