//! Projected forward integration of the object along a contact mode.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom2d::{
    body_twist_between, contact_query, feature_contact, min_signed_distance, penetration_rollback,
    Contact, ContactFeature, Polygon, Pose, Twist, Vec2,
};
use crate::mechanics::{closest_feasible_velocity, MechanicsError, MechanicsParams, QuasistaticSolution};
use crate::modes::{ContactLabel, ContactMode};
use crate::planner::weighted_se2_distance;
use crate::scenes::Scene;

/// A fingertip held at a fixed point of the object boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingerPlacement {
    pub edge: usize,
    /// Edge parameter in [0, 1].
    pub t: f64,
    /// Object-frame contact point.
    pub point: [f64; 2],
    /// Object-frame normal, pointing into the object.
    pub normal: [f64; 2],
}

impl FingerPlacement {
    pub fn on_edge(object: &Polygon, edge: usize, t: f64) -> Self {
        let p = object.point_on_edge(edge, t);
        let n = -object.outward_normal(edge);
        Self {
            edge,
            t,
            point: [p.x, p.y],
            normal: [n.x, n.y],
        }
    }

    pub fn point(&self) -> Vec2 {
        Vec2::new(self.point[0], self.point[1])
    }

    pub fn normal(&self) -> Vec2 {
        Vec2::new(self.normal[0], self.normal[1])
    }

    /// World-frame centre of a fingertip disk of `radius` resting on the point.
    pub fn tip_center(&self, q: &Pose, radius: f64) -> Vec2 {
        q.transform_point(&(self.point() - self.normal() * radius))
    }

    pub fn contact(&self, index: usize, mu: f64) -> Contact {
        Contact::finger(index, self.point(), self.normal(), mu)
    }
}

/// Finger contacts (only assigned fingers) in finger-index order.
pub fn finger_contacts(fingers: &[Option<FingerPlacement>], mu: f64) -> Vec<Contact> {
    fingers
        .iter()
        .enumerate()
        .filter_map(|(k, f)| f.map(|f| f.contact(k, mu)))
        .collect()
}

/// Whether every assigned fingertip is admissible at `q`.
pub fn fingers_clear(scene: &Scene, q: &Pose, fingers: &[Option<FingerPlacement>]) -> bool {
    fingers.iter().enumerate().all(|(k, f)| match f {
        Some(f) => scene.fingertip_admissible(k, &f.tip_center(q, scene.fingers.radius)),
        None => true,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationParams {
    /// Euler step length in the weighted twist norm.
    pub h: f64,
    pub eps_v: f64,
    pub k_max: usize,
    pub w_r: f64,
    pub d_contact: f64,
    pub mechanics: MechanicsParams,
}

impl IntegrationParams {
    pub fn for_scene(scene: &Scene, w_r: f64) -> Self {
        Self {
            h: scene.default_step(),
            eps_v: 1e-4,
            k_max: 500,
            w_r,
            d_contact: scene.d_contact(),
            mechanics: MechanicsParams {
                w_r,
                epsilon: 1e-4,
                tol_feas: 1e-7 * scene.diagonal(),
                finger_max_force: scene.fingers.max_force,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    VelocityZero,
    Infeasible,
    NewContact,
    FingerCollision,
    StepLimit,
    /// A solver breakdown or a step that moved away from the target.
    NumericalFailure,
}

/// One Euler step: the state it started from and the solution it followed.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationStep {
    pub q: Pose,
    /// Euler step length taken from `q`.
    pub dt: f64,
    pub env_contacts: Vec<Contact>,
    pub mode: ContactMode,
    pub solution: QuasistaticSolution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationResult {
    pub q_new: Pose,
    pub steps: Vec<IntegrationStep>,
    pub stop_reason: StopReason,
    /// Environment contacts at `q_new`.
    pub final_contacts: Vec<Contact>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("invalid start: {0}")]
    InvalidStart(String),
}

fn feature_index(cs: &[Contact], f: &ContactFeature) -> Option<usize> {
    cs.iter().position(|c| &c.feature == f)
}

/// Least-norm twist correction that moves the maintained contacts back to
/// zero distance. Returns the corrected pose.
fn correct_drift(scene: &Scene, q: Pose, maintained: &[ContactFeature], d_contact: f64) -> Pose {
    let mut q = q;
    for _ in 0..3 {
        let cs: Vec<Contact> = maintained
            .iter()
            .filter_map(|f| feature_contact(&scene.object, &q, &scene.environment, f, scene.mu_env))
            .collect();
        let worst = cs.iter().fold(0.0f64, |m, c| m.max(c.distance.abs()));
        if cs.is_empty() || worst <= 0.1 * d_contact {
            break;
        }
        let a = DMatrix::from_fn(cs.len(), 3, |i, j| {
            let c = &cs[i];
            [c.normal.x, c.normal.y, crate::geom2d::cross(&c.point, &c.normal)][j]
        });
        let d = DVector::from_iterator(cs.len(), cs.iter().map(|c| -c.distance));
        let gram = &a * a.transpose() + DMatrix::identity(cs.len(), cs.len()) * 1e-12;
        let Some(y) = gram.lu().solve(&d) else {
            break;
        };
        let delta = a.transpose() * y;
        q = q.step(&Twist::new(delta[0], delta[1], delta[2]), 1.0);
    }
    q
}

/// Follows the closest feasible velocity toward `q_target` under the
/// environment `mode` (labels for the contacts at `q_start`, in
/// `contact_query` order), with the fingers riding on the object.
pub fn forward_integrate(
    q_start: &Pose,
    q_target: &Pose,
    fingers: &[Option<FingerPlacement>],
    mode: &ContactMode,
    scene: &Scene,
    params: &IntegrationParams,
) -> Result<IntegrationResult, IntegrateError> {
    let d_c = params.d_contact;
    let env0 = contact_query(&scene.object, q_start, &scene.environment, d_c, scene.mu_env)
        .map_err(|e| IntegrateError::InvalidStart(e.to_string()))?;
    if env0.len() != mode.len() {
        return Err(IntegrateError::InvalidStart(format!(
            "mode has {} labels for {} contacts",
            mode.len(),
            env0.len()
        )));
    }
    if !fingers_clear(scene, q_start, fingers) {
        return Err(IntegrateError::InvalidStart("finger collides at start".into()));
    }
    let load = scene.external_load();
    let fcs = finger_contacts(fingers, scene.mu_mnp);
    let n_assigned = fcs.len();

    let mut tracked: Vec<(ContactFeature, ContactLabel)> = env0
        .iter()
        .zip(mode.labels())
        .map(|(c, &l)| (c.feature, l))
        .collect();
    let mut q = *q_start;
    let mut current = env0;
    let mut steps: Vec<IntegrationStep> = Vec::new();
    let mut dist = weighted_se2_distance(&q, q_target, params.w_r);
    let finish = |q: Pose, steps, stop_reason, final_contacts| {
        Ok(IntegrationResult {
            q_new: q,
            steps,
            stop_reason,
            final_contacts,
        })
    };

    for _ in 0..params.k_max {
        let v_d = body_twist_between(&q, q_target);
        let remaining = v_d.weighted_norm(params.w_r);
        if remaining <= 1e-12 {
            return finish(q, steps, StopReason::VelocityZero, current);
        }
        let v_hat = v_d.scale(1.0 / remaining);

        // Tracked contacts re-evaluated at q, followed by the fingers.
        let env_now: Vec<Contact> = tracked
            .iter()
            .filter_map(|(f, _)| feature_contact(&scene.object, &q, &scene.environment, f, scene.mu_env))
            .collect();
        let labels: Vec<ContactLabel> = tracked.iter().map(|(_, l)| *l).collect();
        let env_mode = ContactMode::new(labels);
        let mut all = env_now.clone();
        all.extend(fcs.iter().cloned());
        let full_mode = env_mode.with_fingers(n_assigned);

        let sol = match closest_feasible_velocity(&v_hat, &q, &all, &full_mode, &load, &params.mechanics) {
            Ok(s) => s,
            Err(MechanicsError::Infeasible) => {
                // The pose reached by the last step cannot be held; fall back
                // to the pose that step started from.
                if let Some(last) = steps.pop() {
                    q = last.q;
                    current = contact_query(&scene.object, &q, &scene.environment, d_c, scene.mu_env)
                        .unwrap_or(last.env_contacts);
                }
                return finish(q, steps, StopReason::Infeasible, current);
            }
            Err(e) => {
                log::debug!("mechanics failure at {q:?}: {e}");
                return finish(q, steps, StopReason::NumericalFailure, current);
            }
        };
        if sol.v_o.weighted_norm(params.w_r) <= params.eps_v {
            return finish(q, steps, StopReason::VelocityZero, current);
        }
        let h_eff = params.h.min(remaining);
        let mut q_next = q.step(&sol.v_o, h_eff);

        let maintained: Vec<ContactFeature> = tracked
            .iter()
            .filter(|(_, l)| *l != ContactLabel::Separate)
            .map(|(f, _)| *f)
            .collect();
        q_next = correct_drift(scene, q_next, &maintained, d_c);

        if min_signed_distance(&scene.object, &q_next, &scene.environment) < -d_c {
            match penetration_rollback(&q, &q_next, &scene.object, &scene.environment, d_c) {
                Ok(r) => q_next = r,
                Err(e) => {
                    log::debug!("rollback failed at {q:?}: {e}");
                    return finish(q, steps, StopReason::NumericalFailure, current);
                }
            }
        }
        if !fingers_clear(scene, &q_next, fingers) {
            return finish(q, steps, StopReason::FingerCollision, current);
        }
        let next = match contact_query(&scene.object, &q_next, &scene.environment, d_c, scene.mu_env) {
            Ok(c) => c,
            Err(e) => {
                log::debug!("contact query failed at {q_next:?}: {e}");
                return finish(q, steps, StopReason::NumericalFailure, current);
            }
        };
        let appeared = next
            .iter()
            .any(|c| !tracked.iter().any(|(f, _)| *f == c.feature));
        let lost = tracked
            .iter()
            .any(|(f, l)| *l != ContactLabel::Separate && feature_index(&next, f).is_none());
        let d_next = weighted_se2_distance(&q_next, q_target, params.w_r);
        if !appeared && !lost && d_next > dist + 1e-9 {
            log::debug!("step moved away from the target: {dist:.6} -> {d_next:.6}");
            return finish(q, steps, StopReason::NumericalFailure, current);
        }

        steps.push(IntegrationStep {
            q,
            dt: h_eff,
            env_contacts: env_now,
            mode: env_mode,
            solution: sol,
        });
        q = q_next;
        dist = d_next;
        // Separated contacts that left the band are no longer tracked.
        tracked.retain(|(f, _)| feature_index(&next, f).is_some());
        if appeared || lost {
            return finish(q, steps, StopReason::NewContact, next);
        }
        // Keep the tracked order aligned with the query order.
        tracked.sort_by_key(|(f, _)| feature_index(&next, f));
        current = next;
    }
    finish(q, steps, StopReason::StepLimit, current)
}

/// Whether integrating from `q` toward itself leaves it in place.
pub fn check_projection_idempotence(
    q: &Pose,
    mode: &ContactMode,
    fingers: &[Option<FingerPlacement>],
    scene: &Scene,
    params: &IntegrationParams,
    eps_d: f64,
) -> bool {
    match forward_integrate(q, q, fingers, mode, scene, params) {
        Ok(r) => weighted_se2_distance(&r.q_new, q, params.w_r) <= eps_d,
        Err(_) => false,
    }
}
