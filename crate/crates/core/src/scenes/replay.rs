//! Independent re-check of a recorded trajectory. Everything is rebuilt from
//! the records and the scene geometry; only geometry and LP helpers are
//! shared with the planner.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::geom2d::{cross, min_signed_distance, ContactSource, Pose, Twist, Vec2};
use crate::modes::ContactLabel;
use crate::planner::{StepRecord, Trajectory};
use crate::solver::{solve_lp, LinearProgram, SolveStatus};

use super::{radius_of_gyration, Plane, Scene};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Equilibrium residual bound relative to `‖F_external‖ + 1`.
    pub equilibrium: f64,
    /// Slack on force and velocity sign clauses, relative to `max(mg, 1)`.
    pub clause: f64,
    pub d_contact: f64,
    /// Largest weighted pose change between consecutive records.
    pub max_jump: f64,
    pub w_r: f64,
}

impl Tolerances {
    pub fn for_scene(scene: &Scene, w_r: f64) -> Self {
        let d_c = scene.d_contact();
        Self {
            equilibrium: 1e-6,
            clause: 1e-6,
            d_contact: d_c,
            max_jump: 1.5 * scene.default_step() + 10.0 * d_c,
            w_r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ViolationKind {
    Equilibrium,
    ModeClause,
    Distance,
    Penetration,
    Continuity,
    FingerSwitch,
    FingerCollision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub step: usize,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {}: {:?}: {}", self.step, self.kind, self.detail)
    }
}

/// Body-frame contact rebuilt from a world-frame record.
struct BodyContact {
    p: Vec2,
    n: Vec2,
    t: Vec2,
    mu: f64,
    finger: Option<usize>,
    label: ContactLabel,
    lambda_n: f64,
    lambda_t: f64,
}

fn body_contacts(scene: &Scene, r: &StepRecord) -> Vec<BodyContact> {
    let q = r.pose();
    r.contacts
        .iter()
        .map(|c| {
            let p = q.inverse_transform_point(&Vec2::new(c.p[0], c.p[1]));
            let n = q.inverse_rotate_vector(&Vec2::new(c.n[0], c.n[1])).normalize();
            let (mu, finger) = match c.source {
                ContactSource::Environment => (scene.mu_env, None),
                ContactSource::Manipulator(k) => (scene.mu_mnp, Some(k)),
            };
            BodyContact {
                p,
                n,
                t: Vec2::new(n.y, -n.x),
                mu,
                finger,
                label: c.mode_label,
                lambda_n: c.lambda_n,
                lambda_t: c.lambda_t,
            }
        })
        .collect()
}

fn wrench_of(p: &Vec2, f: &Vec2) -> Vector3<f64> {
    Vector3::new(f.x, f.y, cross(p, f))
}

/// External body wrench at a record. On a table the support friction
/// opposes the motion of every area element; it is approximated by an
/// ellipsoidal limit surface with the radius of gyration as torque scale.
fn external_wrench(scene: &Scene, q: &Pose, v: &Twist) -> Vector3<f64> {
    let w = scene.weight();
    match scene.plane {
        Plane::Gravity { .. } => {
            let f = q.inverse_rotate_vector(&Vec2::new(0.0, -w));
            wrench_of(&scene.com, &f)
        }
        Plane::Tabletop { mu_support, .. } => {
            let c = scene.com;
            let vc = v.point_velocity(&c);
            let rho = radius_of_gyration(&scene.object, &c);
            let s = (vc.norm_squared() + (rho * v.omega).powi(2)).sqrt();
            if s <= 1e-12 {
                return Vector3::zeros();
            }
            let k = mu_support * w / s;
            let f = -vc * k;
            let tau_c = -k * rho * rho * v.omega;
            Vector3::new(f.x, f.y, tau_c + cross(&c, &f))
        }
    }
}

fn load_scale(scene: &Scene) -> f64 {
    let f = match scene.plane {
        Plane::Gravity { .. } => scene.weight(),
        Plane::Tabletop { mu_support, .. } => mu_support * scene.weight(),
    };
    f.max(1.0)
}

/// Static equilibrium with `contacts` (full friction cones).
fn can_hold(scene: &Scene, q: &Pose, contacts: &[&BodyContact]) -> bool {
    let ext = external_wrench(scene, q, &Twist::zero());
    if ext.norm() <= 1e-12 {
        return true;
    }
    let m = contacts.len();
    let mut lp = LinearProgram::new(2 * m);
    lp.a_eq = DMatrix::zeros(3, 2 * m);
    lp.b_eq = DVector::from_iterator(3, (-ext).iter().copied());
    let mut ineq: Vec<(Vec<f64>, f64)> = Vec::new();
    for (i, c) in contacts.iter().enumerate() {
        let wn = wrench_of(&c.p, &c.n);
        let wt = wrench_of(&c.p, &c.t);
        for r in 0..3 {
            lp.a_eq[(r, 2 * i)] = wn[r];
            lp.a_eq[(r, 2 * i + 1)] = wt[r];
        }
        let mut row = vec![0.0; 2 * m];
        row[2 * i] = 1.0;
        ineq.push((row.clone(), 0.0));
        row[2 * i] = c.mu;
        row[2 * i + 1] = 1.0;
        ineq.push((row.clone(), 0.0));
        row[2 * i + 1] = -1.0;
        ineq.push((row, 0.0));
        if let (Some(_), Some(fmax)) = (c.finger, scene.fingers.max_force) {
            let mut row = vec![0.0; 2 * m];
            row[2 * i] = -1.0;
            ineq.push((row, -fmax));
        }
    }
    lp.a_ineq = DMatrix::from_fn(ineq.len(), 2 * m, |i, j| ineq[i].0[j]);
    lp.b_ineq = DVector::from_iterator(ineq.len(), ineq.iter().map(|r| r.1));
    solve_lp(&lp).status == SolveStatus::Optimal
}

fn weighted_gap(a: &Pose, b: &Pose, w_r: f64) -> f64 {
    let d = (a.theta - b.theta).rem_euclid(std::f64::consts::TAU);
    (a.x - b.x).hypot(a.y - b.y) + w_r * d.min(std::f64::consts::TAU - d)
}

/// Checks every record of `traj` against the scene. An empty result means
/// the trajectory is valid.
pub fn replay_validate(scene: &Scene, traj: &Trajectory, tol: &Tolerances) -> Vec<Violation> {
    let mut out = Vec::new();
    let scale = load_scale(scene);
    let clause = tol.clause * scale;
    let d_c = tol.d_contact;
    let geo = 1e-6 * scene.diagonal();
    let mut push = |step: usize, kind: ViolationKind, detail: String| out.push(Violation { step, kind, detail });
    let mut fingers_prev: BTreeMap<usize, Vec2> = BTreeMap::new();

    for (i, r) in traj.records.iter().enumerate() {
        let q = r.pose();
        let v = r.twist();
        if !q.is_finite() || !v.is_finite() {
            push(i, ViolationKind::Continuity, "non-finite pose or twist".into());
            continue;
        }
        let cs = body_contacts(scene, r);

        // Equilibrium.
        let ext = external_wrench(scene, &q, &v);
        let mut net = ext;
        for c in &cs {
            net += wrench_of(&c.p, &(c.n * c.lambda_n + c.t * c.lambda_t));
        }
        if net.norm() > tol.equilibrium * (ext.norm() + 1.0) {
            push(i, ViolationKind::Equilibrium, format!("residual {:.3e}", net.norm()));
        }

        for (j, c) in cs.iter().enumerate() {
            // Force clauses.
            let cone = c.mu * c.lambda_n - c.lambda_t.abs();
            let force_ok = match c.label {
                ContactLabel::Separate => c.lambda_n.abs() <= clause && c.lambda_t.abs() <= clause,
                ContactLabel::Fixed => c.lambda_n >= -clause && cone >= -clause,
                ContactLabel::RightSlide => {
                    c.lambda_n >= -clause && (c.lambda_t + c.mu * c.lambda_n).abs() <= clause
                }
                ContactLabel::LeftSlide => {
                    c.lambda_n >= -clause && (c.lambda_t - c.mu * c.lambda_n).abs() <= clause
                }
            };
            if !force_ok {
                push(
                    i,
                    ViolationKind::ModeClause,
                    format!(
                        "contact {j} ({:?}): force ({:.3e}, {:.3e}) violates its clause",
                        c.label, c.lambda_n, c.lambda_t
                    ),
                );
            }
            if let (Some(_), Some(fmax)) = (c.finger, scene.fingers.max_force) {
                if c.lambda_n > fmax + clause {
                    push(i, ViolationKind::ModeClause, format!("contact {j}: finger force {:.3e} above limit", c.lambda_n));
                }
            }

            match c.finger {
                None => {
                    // Velocity clauses for environment contacts.
                    let u = v.point_velocity(&c.p);
                    let (un, ut) = (u.dot(&c.n), u.dot(&c.t));
                    let vel_ok = match c.label {
                        ContactLabel::Separate => un >= -clause,
                        ContactLabel::Fixed => un.abs() <= clause && ut.abs() <= clause,
                        ContactLabel::RightSlide => un.abs() <= clause && ut >= -clause,
                        ContactLabel::LeftSlide => un.abs() <= clause && ut <= clause,
                    };
                    if !vel_ok {
                        push(
                            i,
                            ViolationKind::ModeClause,
                            format!("contact {j} ({:?}): velocity ({un:.3e}, {ut:.3e})", c.label),
                        );
                    }
                    let p_world = q.transform_point(&c.p);
                    let gap = scene
                        .environment
                        .iter()
                        .map(|e| e.signed_distance(&p_world).abs())
                        .fold(f64::INFINITY, f64::min);
                    let on_object = scene.object.signed_distance(&c.p).abs();
                    if gap > 1.01 * d_c + geo || on_object > geo {
                        push(
                            i,
                            ViolationKind::Distance,
                            format!("contact {j}: gap {gap:.3e}, off boundary {on_object:.3e}"),
                        );
                    }
                }
                Some(k) => {
                    if c.label != ContactLabel::Fixed {
                        push(i, ViolationKind::ModeClause, format!("finger {k} is not sticking"));
                    }
                    if scene.object.signed_distance(&c.p).abs() > geo {
                        push(i, ViolationKind::Distance, format!("finger {k} is off the object boundary"));
                    }
                    let tip = q.transform_point(&(c.p - c.n * scene.fingers.radius));
                    if k >= scene.fingers.count || !scene.fingertip_admissible(k, &tip) {
                        push(i, ViolationKind::FingerCollision, format!("finger {k} tip at ({:.4}, {:.4})", tip.x, tip.y));
                    }
                }
            }
        }

        let depth = min_signed_distance(&scene.object, &q, &scene.environment);
        if depth < -1.01 * d_c {
            push(i, ViolationKind::Penetration, format!("depth {:.3e}", -depth));
        }

        if i > 0 {
            let gap = weighted_gap(&traj.records[i - 1].pose(), &q, tol.w_r);
            if gap > tol.max_jump {
                push(i, ViolationKind::Continuity, format!("pose jump {gap:.4}"));
            }
        }

        // Finger placements may only change at switch events, and the
        // contacts left in place must hold the object while they do.
        let now: BTreeMap<usize, Vec2> = cs.iter().filter_map(|c| c.finger.map(|k| (k, c.p))).collect();
        let switched: Vec<usize> = r.finger_switches().iter().map(|s| s.finger).collect();
        let moved: Vec<usize> = (0..scene.fingers.count)
            .filter(|k| match (fingers_prev.get(k), now.get(k)) {
                (Some(a), Some(b)) => (a - b).norm() > geo,
                (None, None) => false,
                _ => true,
            })
            .collect();
        let first = i == 0;
        for k in &moved {
            if !first && !switched.contains(k) {
                push(i, ViolationKind::FingerSwitch, format!("finger {k} moved without a switch event"));
            }
        }
        for s in r.finger_switches() {
            let placed = now.get(&s.finger).copied();
            let expected = s.to.map(|p| p.point());
            let agrees = match (placed, expected) {
                (Some(a), Some(b)) => (a - b).norm() <= geo,
                (None, None) => true,
                _ => false,
            };
            if !agrees {
                push(i, ViolationKind::FingerSwitch, format!("finger {} does not match its switch target", s.finger));
            }
        }
        if !switched.is_empty() {
            let staying: Vec<&BodyContact> = cs
                .iter()
                .filter(|c| c.finger.is_none_or(|k| !switched.contains(&k)))
                .collect();
            if !can_hold(scene, &q, &staying) {
                push(i, ViolationKind::FingerSwitch, "remaining contacts cannot hold the object".into());
            }
        }
        fingers_prev = now;
    }
    out
}
