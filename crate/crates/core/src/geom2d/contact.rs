use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{GeometryError, Polygon, Pose, Vec2};

/// Contacts whose object-frame points are closer than this are merged.
pub const MERGE_RADIUS: f64 = 1e-6;

/// Which body touches the object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactSource {
    Environment,
    Manipulator(usize),
}

/// Geometric feature pair that generated a contact. Used to track contact
/// identity while contacts slide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContactFeature {
    /// Object vertex against an environment edge.
    ObjectVertex {
        vertex: usize,
        polygon: usize,
        edge: usize,
    },
    /// Environment vertex against an object edge.
    EnvironmentVertex {
        polygon: usize,
        vertex: usize,
        edge: usize,
    },
    Finger(usize),
}

/// A point contact expressed in the object body frame.
///
/// `normal` points from the other body into the object, `tangent` is the
/// normal rotated by -90°, so positive tangential relative velocity is a
/// right slide.
#[derive(Debug, Clone, PartialEq)]
pub struct Contact {
    pub point: Vec2,
    pub normal: Vec2,
    pub tangent: Vec2,
    pub distance: f64,
    pub source: ContactSource,
    pub mu: f64,
    pub feature: ContactFeature,
}

impl Contact {
    pub fn new(
        point: Vec2,
        normal: Vec2,
        distance: f64,
        source: ContactSource,
        mu: f64,
        feature: ContactFeature,
    ) -> Self {
        let normal = normal.normalize();
        Self {
            point,
            normal,
            tangent: Vec2::new(normal.y, -normal.x),
            distance,
            source,
            mu,
            feature,
        }
    }

    /// A manipulator point contact at `point` pushing along `normal`.
    pub fn finger(index: usize, point: Vec2, normal: Vec2, mu: f64) -> Self {
        Self::new(
            point,
            normal,
            0.0,
            ContactSource::Manipulator(index),
            mu,
            ContactFeature::Finger(index),
        )
    }

    pub fn is_environment(&self) -> bool {
        self.source == ContactSource::Environment
    }
}

/// Smallest signed separation between object and environment, measured
/// vertex-to-boundary in both directions. Negative values are penetration
/// depths.
pub fn min_signed_distance(object: &Polygon, q: &Pose, environment: &[Polygon]) -> f64 {
    let mut best = f64::INFINITY;
    for env in environment {
        for v in object.vertices() {
            best = best.min(env.signed_distance(&q.transform_point(v)));
        }
        for v in env.vertices() {
            best = best.min(object.signed_distance(&q.inverse_transform_point(v)));
        }
    }
    best
}

/// True when the polygon around vertex `i` stays on the `+dir` side within `slack`.
fn locally_above(poly: &[Vec2], i: usize, dir: &Vec2, slack: f64) -> bool {
    let n = poly.len();
    let p = poly[i];
    let prev = poly[(i + n - 1) % n];
    let next = poly[(i + 1) % n];
    (prev - p).dot(dir) >= -slack && (next - p).dot(dir) >= -slack
}

/// Contacts between `object` at pose `q` and the (world-frame) environment.
///
/// Every vertex/edge pair within `d_contact` produces one contact; a flush
/// edge/edge touch therefore yields its two overlap endpoints. The result is
/// merged within [`MERGE_RADIUS`] and sorted lexicographically by
/// object-frame point.
pub fn contact_query(
    object: &Polygon,
    q: &Pose,
    environment: &[Polygon],
    d_contact: f64,
    mu: f64,
) -> Result<Vec<Contact>, GeometryError> {
    let d_pen_max = 10.0 * d_contact;
    let depth = min_signed_distance(object, q, environment);
    if depth < -d_pen_max {
        return Err(GeometryError::Penetration {
            depth: -depth,
            limit: d_pen_max,
        });
    }

    let world_obj: Vec<Vec2> = object.vertices().iter().map(|v| q.transform_point(v)).collect();
    let mut found: Vec<Contact> = Vec::new();

    // Object vertices against environment edges.
    for (pi, env) in environment.iter().enumerate() {
        for (vi, w) in world_obj.iter().enumerate() {
            for ei in 0..env.len() {
                let (a, b) = env.edge(ei);
                let ab = b - a;
                let len = ab.norm();
                let t = (w - a).dot(&ab) / (len * len);
                let slack_t = d_contact / len;
                if t < -slack_t || t > 1.0 + slack_t {
                    continue;
                }
                let n_world = env.outward_normal(ei);
                let dist = (w - a).dot(&n_world);
                if dist.abs() > d_contact {
                    continue;
                }
                if !locally_above(&world_obj, vi, &n_world, d_contact) {
                    continue;
                }
                found.push(Contact::new(
                    object.vertex(vi),
                    q.inverse_rotate_vector(&n_world),
                    dist,
                    ContactSource::Environment,
                    mu,
                    ContactFeature::ObjectVertex {
                        vertex: vi,
                        polygon: pi,
                        edge: ei,
                    },
                ));
            }
        }
    }

    // Environment vertices against object edges (object frame).
    for (pi, env) in environment.iter().enumerate() {
        let body_env: Vec<Vec2> = env
            .vertices()
            .iter()
            .map(|v| q.inverse_transform_point(v))
            .collect();
        for (vi, e) in body_env.iter().enumerate() {
            for ei in 0..object.len() {
                let (a, b) = object.edge(ei);
                let ab = b - a;
                let len = ab.norm();
                let t = (e - a).dot(&ab) / (len * len);
                let slack_t = d_contact / len;
                if t < -slack_t || t > 1.0 + slack_t {
                    continue;
                }
                let n_out = object.outward_normal(ei);
                let dist = (e - a).dot(&n_out);
                if dist.abs() > d_contact {
                    continue;
                }
                if !locally_above(&body_env, vi, &n_out, d_contact) {
                    continue;
                }
                found.push(Contact::new(
                    a + ab * t.clamp(0.0, 1.0),
                    -n_out,
                    dist,
                    ContactSource::Environment,
                    mu,
                    ContactFeature::EnvironmentVertex {
                        polygon: pi,
                        vertex: vi,
                        edge: ei,
                    },
                ));
            }
        }
    }

    let mut merged: Vec<Contact> = Vec::with_capacity(found.len());
    for c in found {
        if merged
            .iter()
            .all(|m| (m.point - c.point).norm() > MERGE_RADIUS)
        {
            merged.push(c);
        }
    }
    merged.sort_by(|a, b| {
        a.point
            .x
            .total_cmp(&b.point.x)
            .then(a.point.y.total_cmp(&b.point.y))
            .then(Ordering::Equal)
    });
    Ok(merged)
}

/// Re-evaluates the contact produced by `feature` at pose `q`, ignoring the
/// distance band. Returns `None` for finger features and out-of-range indices.
pub fn feature_contact(
    object: &Polygon,
    q: &Pose,
    environment: &[Polygon],
    feature: &ContactFeature,
    mu: f64,
) -> Option<Contact> {
    match *feature {
        ContactFeature::ObjectVertex {
            vertex,
            polygon,
            edge,
        } => {
            let env = environment.get(polygon)?;
            if vertex >= object.len() || edge >= env.len() {
                return None;
            }
            let w = q.transform_point(&object.vertex(vertex));
            let (a, _) = env.edge(edge);
            let n_world = env.outward_normal(edge);
            Some(Contact::new(
                object.vertex(vertex),
                q.inverse_rotate_vector(&n_world),
                (w - a).dot(&n_world),
                ContactSource::Environment,
                mu,
                *feature,
            ))
        }
        ContactFeature::EnvironmentVertex {
            polygon,
            vertex,
            edge,
        } => {
            let env = environment.get(polygon)?;
            if vertex >= env.len() || edge >= object.len() {
                return None;
            }
            let e = q.inverse_transform_point(&env.vertex(vertex));
            let (a, b) = object.edge(edge);
            let ab = b - a;
            let t = ((e - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let n_out = object.outward_normal(edge);
            Some(Contact::new(
                a + ab * t,
                -n_out,
                (e - a).dot(&n_out),
                ContactSource::Environment,
                mu,
                *feature,
            ))
        }
        ContactFeature::Finger(_) => None,
    }
}

/// Backs off from a penetrating pose along the twist-coordinate segment
/// `q_prev -> q_next` until the minimum signed distance is back inside
/// [-d_contact, d_contact].
pub fn penetration_rollback(
    q_prev: &Pose,
    q_next: &Pose,
    object: &Polygon,
    environment: &[Polygon],
    d_contact: f64,
) -> Result<Pose, GeometryError> {
    const MAX_ITERS: usize = 64;
    let sd = |p: &Pose| min_signed_distance(object, p, environment);
    if sd(q_next) >= -d_contact {
        return Ok(*q_next);
    }
    let start = sd(q_prev);
    // Target depth: a quarter of the band, or halfway to the band limit when
    // an existing contact already sits deeper than that.
    let target = if start >= -0.25 * d_contact {
        0.25 * d_contact
    } else {
        0.5 * (-start + d_contact)
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..MAX_ITERS {
        if hi - lo < 1e-14 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if sd(&q_prev.interpolate(q_next, mid)) >= -target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = q_prev.interpolate(q_next, lo);
    let d = sd(&q);
    if (-d_contact..=d_contact).contains(&d) {
        Ok(q)
    } else {
        Err(GeometryError::BisectionFailure(MAX_ITERS))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn floor() -> Polygon {
        Polygon::rectangle(Vec2::new(0.0, -5.0), 40.0, 10.0)
    }

    fn unit_square() -> Polygon {
        Polygon::rectangle(Vec2::zeros(), 1.0, 1.0)
    }

    const D: f64 = 1e-3;

    #[test]
    fn resting_square_has_two_bottom_contacts() {
        let q = Pose::new(0.3, 0.5, 0.0);
        let cs = contact_query(&unit_square(), &q, &[floor()], D, 0.5).unwrap();
        assert_eq!(cs.len(), 2);
        for c in &cs {
            let n_world = q.rotate_vector(&c.normal);
            assert_relative_eq!(n_world.x, 0.0, epsilon = 1e-12);
            assert_relative_eq!(n_world.y, 1.0, epsilon = 1e-12);
            assert_relative_eq!(c.point.y, -0.5, epsilon = 1e-12);
        }
        assert!(cs[0].point.x < cs[1].point.x);
    }

    #[test]
    fn hovering_square_has_no_contacts() {
        let q = Pose::new(0.0, 0.5 + 10.0 * D, 0.0);
        assert!(contact_query(&unit_square(), &q, &[floor()], D, 0.5)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn tilted_square_touches_at_one_vertex() {
        // Rotated by 45°, the lowest vertex sits half a diagonal below the centre.
        let h = 0.5 * 2f64.sqrt();
        let q = Pose::new(0.0, h, FRAC_PI_4);
        let cs = contact_query(&unit_square(), &q, &[floor()], D, 0.5).unwrap();
        assert_eq!(cs.len(), 1);
        let w = q.transform_point(&cs[0].point);
        assert_relative_eq!(w.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(w.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(cs[0].distance, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn narrow_pedestal_gives_environment_vertex_contacts() {
        let pedestal = Polygon::rectangle(Vec2::new(0.0, -0.5), 0.4, 1.0);
        let q = Pose::new(0.0, 0.5, 0.0);
        let cs = contact_query(&unit_square(), &q, &[pedestal], D, 0.5).unwrap();
        assert_eq!(cs.len(), 2);
        assert!(cs
            .iter()
            .all(|c| matches!(c.feature, ContactFeature::EnvironmentVertex { .. })));
        assert_relative_eq!(cs[0].point.x, -0.2, epsilon = 1e-12);
        assert_relative_eq!(cs[1].point.x, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn corner_on_corner_is_merged_and_not_sideways() {
        // Square's bottom-left corner sits exactly on the table's top-right corner.
        let table = Polygon::rectangle(Vec2::new(-1.0, -0.5), 2.0, 1.0);
        let q = Pose::new(0.5 - 0.3, 0.5, 0.0);
        let cs = contact_query(&unit_square(), &q, &[table], D, 0.5).unwrap();
        for c in &cs {
            let n = q.rotate_vector(&c.normal);
            assert!(n.y > 0.99, "unexpected normal {n:?}");
        }
    }

    #[test]
    fn deep_penetration_is_reported() {
        let q = Pose::new(0.0, 0.2, 0.0);
        let err = contact_query(&unit_square(), &q, &[floor()], D, 0.5).unwrap_err();
        assert!(matches!(err, GeometryError::Penetration { .. }));
    }

    #[test]
    fn rollback_noop_when_clear() {
        let a = Pose::new(0.0, 2.0, 0.0);
        let b = Pose::new(0.0, 1.0, 0.3);
        let r = penetration_rollback(&a, &b, &unit_square(), &[floor()], D).unwrap();
        assert_eq!(r, b);
    }

    #[test]
    fn rollback_vertical_drop_lands_on_floor() {
        // Bottom face moves from height 1 to -0.5; analytic touchdown at 0.
        let a = Pose::new(0.0, 1.5, 0.0);
        let b = Pose::new(0.0, 0.0, 0.0);
        let r = penetration_rollback(&a, &b, &unit_square(), &[floor()], D).unwrap();
        assert_relative_eq!(r.y - 0.5, 0.0, epsilon = D);
        assert_relative_eq!(r.x, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rollback_rotating_fall() {
        let a = Pose::new(0.0, 1.5, 0.0);
        let b = Pose::new(0.4, 0.3, 0.6 * PI);
        let r = penetration_rollback(&a, &b, &unit_square(), &[floor()], D).unwrap();
        let d = min_signed_distance(&unit_square(), &r, &[floor()]);
        assert!((-D..=D).contains(&d), "{d}");
        assert!(!contact_query(&unit_square(), &r, &[floor()], D, 0.5)
            .unwrap()
            .is_empty());
    }
}
