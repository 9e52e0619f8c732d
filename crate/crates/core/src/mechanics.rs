//! Quasistatic mechanics: grasp map, closest mode-consistent object twist,
//! static equilibrium and a force-closure style stability score.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom2d::{cross, Contact, ContactSource, Pose, Twist, Vec2};
use crate::modes::{assemble_mode_constraints, ContactMode, ModeError, VariableLayout};
use crate::solver::{solve_lp, solve_qp, LinearProgram, QuadraticProgram, SolveStatus};

/// Columns `(n, p×n)` and `(t, p×t)` of every contact, in body coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspMap {
    normals: Vec<Vector3<f64>>,
    tangents: Vec<Vector3<f64>>,
}

impl GraspMap {
    pub fn new(contacts: &[Contact]) -> Self {
        let col = |p: &Vec2, d: &Vec2| Vector3::new(d.x, d.y, cross(p, d));
        Self {
            normals: contacts.iter().map(|c| col(&c.point, &c.normal)).collect(),
            tangents: contacts.iter().map(|c| col(&c.point, &c.tangent)).collect(),
        }
    }

    pub fn num_contacts(&self) -> usize {
        self.normals.len()
    }

    pub fn normal_column(&self, i: usize) -> Vector3<f64> {
        self.normals[i]
    }

    pub fn tangent_column(&self, i: usize) -> Vector3<f64> {
        self.tangents[i]
    }

    /// `3 × 2N` matrix with interleaved normal and tangent columns.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.num_contacts();
        let mut g = DMatrix::zeros(3, 2 * n);
        for i in 0..n {
            g.set_column(2 * i, &self.normals[i]);
            g.set_column(2 * i + 1, &self.tangents[i]);
        }
        g
    }

    /// Net body wrench of stacked `(λ_n, λ_t⁺, λ_t⁻)` triples.
    pub fn wrench(&self, lambda: &[f64]) -> Vector3<f64> {
        let mut w = Vector3::zeros();
        for i in 0..self.num_contacts() {
            let (ln, lp, lm) = (lambda[3 * i], lambda[3 * i + 1], lambda[3 * i + 2]);
            w += self.normals[i] * ln + self.tangents[i] * (lp - lm);
        }
        w
    }
}

/// Grasp map of `contacts` (body frame, so the pose only fixes the convention).
pub fn grasp_map(contacts: &[Contact], _q: &Pose) -> GraspMap {
    GraspMap::new(contacts)
}

/// Load applied to the object besides contact forces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExternalLoad {
    /// Weight `weight` acting along world −y at body point `com`.
    Gravity { weight: f64, com: [f64; 2] },
    /// Support friction of a planar pushing surface, modelled by an
    /// ellipsoidal limit surface with maximal force `friction_force` and
    /// characteristic radius `radius` about body point `com`.
    Tabletop {
        friction_force: f64,
        radius: f64,
        com: [f64; 2],
    },
    /// Constant body-frame wrench.
    Wrench { w: [f64; 3] },
}

impl ExternalLoad {
    /// Velocity-independent part of the body wrench at pose `q`.
    pub fn constant_wrench(&self, q: &Pose) -> Vector3<f64> {
        match *self {
            ExternalLoad::Gravity { weight, com } => {
                let f = q.inverse_rotate_vector(&Vec2::new(0.0, -weight));
                let c = Vec2::new(com[0], com[1]);
                Vector3::new(f.x, f.y, cross(&c, &f))
            }
            ExternalLoad::Tabletop { .. } => Vector3::zeros(),
            ExternalLoad::Wrench { w } => Vector3::new(w[0], w[1], w[2]),
        }
    }

    /// Force scale used to normalise tolerances and margins.
    pub fn magnitude(&self) -> f64 {
        match *self {
            ExternalLoad::Gravity { weight, .. } => weight.abs(),
            ExternalLoad::Tabletop { friction_force, .. } => friction_force.abs(),
            ExternalLoad::Wrench { w } => Vector3::new(w[0], w[1], w[2]).norm(),
        }
    }
}

/// Limit-surface helpers for the tabletop load. The origin of the body
/// frame is assumed at `com`; the twist is taken about `com`.
fn tabletop_metric(radius: f64) -> Vector3<f64> {
    Vector3::new(1.0, 1.0, radius * radius)
}

/// Twist about `com` expressed from a body-origin twist.
fn twist_at(com: &Vec2, v: &[f64]) -> Vector3<f64> {
    // Velocity of the body point `com`; angular rate is frame independent.
    Vector3::new(v[0] - v[2] * com.y, v[1] + v[2] * com.x, v[2])
}

fn d_norm(radius: f64, com: &Vec2, v: &[f64]) -> f64 {
    let t = twist_at(com, v);
    let d = tabletop_metric(radius);
    (t.x * t.x * d.x + t.y * t.y * d.y + t.z * t.z * d.z).sqrt()
}

/// Linear map `v ↦ friction wrench direction` about the body origin:
/// `w = Tᵀ D T v` where `T` moves the reference point to `com`.
fn tabletop_operator(radius: f64, com: &Vec2) -> nalgebra::Matrix3<f64> {
    let t = nalgebra::Matrix3::new(1.0, 0.0, -com.y, 0.0, 1.0, com.x, 0.0, 0.0, 1.0);
    let d = nalgebra::Matrix3::from_diagonal(&tabletop_metric(radius));
    t.transpose() * d * t
}

/// Numerical parameters of the mechanics solves.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanicsParams {
    /// Rotational weight of the twist norm.
    pub w_r: f64,
    /// Force regulariser in the objective.
    pub epsilon: f64,
    /// Feasibility tolerance of the QP.
    pub tol_feas: f64,
    /// Upper bound on each finger's normal force.
    pub finger_max_force: Option<f64>,
}

impl Default for MechanicsParams {
    fn default() -> Self {
        Self {
            w_r: 1.0,
            epsilon: 1e-4,
            tol_feas: 1e-7,
            finger_max_force: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuasistaticSolution {
    pub v_o: Twist,
    /// Contact-frame `(normal, tangent)` velocity of each finger.
    pub q_dot: DVector<f64>,
    /// Stacked `(λ_n, λ_t⁺, λ_t⁻)` per contact.
    pub lambda: DVector<f64>,
    pub wrench_external: Vector3<f64>,
    /// `‖v_d − v_o‖²_W + ε‖λ‖²`.
    pub objective: f64,
}

impl QuasistaticSolution {
    pub fn normal_force(&self, i: usize) -> f64 {
        self.lambda[3 * i]
    }

    pub fn tangent_force(&self, i: usize) -> f64 {
        self.lambda[3 * i + 1] - self.lambda[3 * i + 2]
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MechanicsError {
    #[error(transparent)]
    Mode(#[from] ModeError),
    #[error("no contact forces realise the mode")]
    Infeasible,
    #[error("solver failure ({0:?})")]
    Solver(SolveStatus),
}

fn count_fingers(contacts: &[Contact]) -> usize {
    contacts
        .iter()
        .filter_map(|c| match c.source {
            ContactSource::Manipulator(k) => Some(k + 1),
            ContactSource::Environment => None,
        })
        .max()
        .unwrap_or(0)
}

fn push_rows(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    extra: &[(Vec<f64>, f64)],
) -> (DMatrix<f64>, DVector<f64>) {
    let n = a.ncols();
    let m = a.nrows();
    let mut out = DMatrix::zeros(m + extra.len(), n);
    let mut rhs = DVector::zeros(m + extra.len());
    out.view_mut((0, 0), (m, n)).copy_from(a);
    rhs.rows_mut(0, m).copy_from(b);
    for (k, (row, r)) in extra.iter().enumerate() {
        for j in 0..n {
            out[(m + k, j)] = row[j];
        }
        rhs[m + k] = *r;
    }
    (out, rhs)
}

/// Equilibrium rows `Gλ + F = 0` (with the velocity coupling of the
/// tabletop load folded into the `v_o` columns) and the finger force limits.
fn force_rows(
    layout: &VariableLayout,
    contacts: &[Contact],
    grasp: &GraspMap,
    q: &Pose,
    load: &ExternalLoad,
    coupling: f64,
    params: &MechanicsParams,
) -> (Vec<(Vec<f64>, f64)>, Vec<(Vec<f64>, f64)>) {
    let n = layout.dim();
    let f_const = load.constant_wrench(q);
    let mut eq = Vec::with_capacity(3);
    let op = match *load {
        ExternalLoad::Tabletop { radius, com, .. } => {
            Some(tabletop_operator(radius, &Vec2::new(com[0], com[1])))
        }
        _ => None,
    };
    for r in 0..3 {
        let mut row = vec![0.0; n];
        for i in 0..contacts.len() {
            let f = layout.force(i);
            let gn = grasp.normal_column(i)[r];
            let gt = grasp.tangent_column(i)[r];
            row[f] = gn;
            row[f + 1] = gt;
            row[f + 2] = -gt;
        }
        if let Some(op) = op {
            for j in 0..3 {
                row[j] = -coupling * op[(r, j)];
            }
        }
        eq.push((row, -f_const[r]));
    }
    let mut ineq = Vec::new();
    if let Some(fmax) = params.finger_max_force {
        for (i, c) in contacts.iter().enumerate() {
            if matches!(c.source, ContactSource::Manipulator(_)) {
                let mut row = vec![0.0; n];
                row[layout.force(i)] = -1.0;
                ineq.push((row, -fmax));
            }
        }
    }
    (eq, ineq)
}

/// Closest object twist to `v_d` (in the `W`-norm) compatible with `mode`
/// and quasistatic force balance. Contacts are in body coordinates and
/// `mode` labels all of them (fingers are `Fixed`).
pub fn closest_feasible_velocity(
    v_d: &Twist,
    q: &Pose,
    contacts: &[Contact],
    mode: &ContactMode,
    load: &ExternalLoad,
    params: &MechanicsParams,
) -> Result<QuasistaticSolution, MechanicsError> {
    let n_fingers = count_fingers(contacts);
    let grasp = GraspMap::new(contacts);
    let mc = assemble_mode_constraints(mode, contacts, &grasp, n_fingers)?;
    let layout = mc.layout;
    let n = layout.dim();

    let coupling = match *load {
        ExternalLoad::Tabletop {
            friction_force,
            radius,
            com,
        } => {
            let dn = d_norm(radius, &Vec2::new(com[0], com[1]), &v_d.as_array());
            if dn > 0.0 {
                friction_force / dn
            } else {
                0.0
            }
        }
        _ => 0.0,
    };
    let (eq, ineq) = force_rows(&layout, contacts, &grasp, q, load, coupling, params);

    let w = [1.0, 1.0, params.w_r * params.w_r];
    let vd = v_d.as_array();
    let mut qp = QuadraticProgram::new(n);
    for j in 0..3 {
        qp.h[(j, j)] = 2.0 * w[j];
        qp.g[j] = -2.0 * w[j] * vd[j];
    }
    for j in 3..n {
        qp.h[(j, j)] = 2.0 * params.epsilon;
    }
    let (a_eq, b_eq) = push_rows(&mc.a_eq, &mc.b_eq, &eq);
    let (a_in, b_in) = push_rows(&mc.a_ineq, &mc.b_ineq, &ineq);
    qp.a_eq = a_eq;
    qp.b_eq = b_eq;
    qp.a_ineq = a_in;
    qp.b_ineq = b_in;

    let scale = load.magnitude().max(1.0);
    let res = solve_qp(&qp, params.tol_feas * scale);
    match res.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(MechanicsError::Infeasible),
        s => return Err(MechanicsError::Solver(s)),
    }
    let x = res.x;
    let v_o = Twist::new(x[0], x[1], x[2]);
    let q_dot = x.rows(3, 2 * n_fingers).into_owned();
    let mut lambda = x.rows(layout.force(0), 3 * contacts.len()).into_owned();
    let mut wrench_external = load.constant_wrench(q);
    if let ExternalLoad::Tabletop {
        friction_force,
        radius,
        com,
    } = *load
    {
        let com = Vec2::new(com[0], com[1]);
        let vo_norm = d_norm(radius, &com, &v_o.as_array());
        let op = tabletop_operator(radius, &com);
        let vo = Vector3::new(v_o.vx, v_o.vy, v_o.omega);
        if vo_norm > 1e-12 && coupling > 0.0 {
            // Contact forces scale with the friction force that the actual
            // (not the desired) twist mobilises.
            lambda *= friction_force / (coupling * vo_norm);
            wrench_external = -(op * vo) * (friction_force / vo_norm);
        } else {
            wrench_external = -(op * vo) * coupling;
        }
    }
    let dv = Vector3::new(vd[0] - v_o.vx, vd[1] - v_o.vy, vd[2] - v_o.omega);
    let objective = dv.x * dv.x + dv.y * dv.y + w[2] * dv.z * dv.z
        + params.epsilon * lambda.norm_squared();
    Ok(QuasistaticSolution {
        v_o,
        q_dot,
        lambda,
        wrench_external,
        objective,
    })
}

/// Rows of "all contacts sticking, object at rest": the force part only.
fn static_lp(
    contacts: &[Contact],
    q: &Pose,
    load: &ExternalLoad,
    params: &MechanicsParams,
    extra_force: Option<Vector3<f64>>,
) -> LinearProgram {
    let grasp = GraspMap::new(contacts);
    let nc = contacts.len();
    let rho = usize::from(extra_force.is_some());
    let n = 3 * nc + rho;
    let f_const = load.constant_wrench(q);
    let mut lp = LinearProgram::new(n);
    lp.a_eq = DMatrix::zeros(3, n);
    lp.b_eq = DVector::zeros(3);
    for r in 0..3 {
        for i in 0..nc {
            lp.a_eq[(r, 3 * i)] = grasp.normal_column(i)[r];
            lp.a_eq[(r, 3 * i + 1)] = grasp.tangent_column(i)[r];
            lp.a_eq[(r, 3 * i + 2)] = -grasp.tangent_column(i)[r];
        }
        if let Some(d) = extra_force {
            lp.a_eq[(r, 3 * nc)] = d[r];
        }
        lp.b_eq[r] = -f_const[r];
    }
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for (i, c) in contacts.iter().enumerate() {
        for k in 0..3 {
            let mut r = vec![0.0; n];
            r[3 * i + k] = 1.0;
            rows.push((r, 0.0));
        }
        for k in 1..3 {
            let mut r = vec![0.0; n];
            r[3 * i] = c.mu;
            r[3 * i + k] = -1.0;
            rows.push((r, 0.0));
        }
        if let (Some(fmax), ContactSource::Manipulator(_)) = (params.finger_max_force, c.source) {
            let mut r = vec![0.0; n];
            r[3 * i] = -1.0;
            rows.push((r, -fmax));
        }
    }
    if rho == 1 {
        let mut r = vec![0.0; n];
        r[3 * nc] = 1.0;
        rows.push((r, 0.0));
        let mut r = vec![0.0; n];
        r[3 * nc] = -1.0;
        rows.push((r, -load.magnitude().max(1.0)));
        lp.c[3 * nc] = -1.0;
    }
    lp.a_ineq = DMatrix::from_fn(rows.len(), n, |i, j| rows[i].0[j]);
    lp.b_ineq = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    lp
}

/// Whether sticking contact forces can hold the object at rest at `q`.
pub fn static_equilibrium_possible(
    contacts: &[Contact],
    q: &Pose,
    load: &ExternalLoad,
    params: &MechanicsParams,
) -> bool {
    solve_lp(&static_lp(contacts, q, load, params, None)).is_optimal()
}

/// Disturbance-rejection score of a grasp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityStrategy {
    /// No scoring; every grasp gets zero.
    #[default]
    None,
    /// Smallest disturbance force, over eight planar directions, that the
    /// sticking contacts can still resist.
    FanLp,
}

/// Fan of disturbance directions, 45° apart in the world frame.
const FAN: usize = 8;

/// Stability score of holding the object at `q`; larger is more robust and
/// zero means some disturbance direction cannot be resisted (or the object
/// cannot be held at all). Capped at the load magnitude.
pub fn stability_margin(
    contacts: &[Contact],
    q: &Pose,
    load: &ExternalLoad,
    params: &MechanicsParams,
    strategy: StabilityStrategy,
) -> f64 {
    match strategy {
        StabilityStrategy::None => 0.0,
        StabilityStrategy::FanLp => {
            let mut worst = f64::INFINITY;
            for k in 0..FAN {
                let a = k as f64 * std::f64::consts::TAU / FAN as f64;
                let d = q.inverse_rotate_vector(&Vec2::new(a.cos(), a.sin()));
                let lp = static_lp(contacts, q, load, params, Some(Vector3::new(d.x, d.y, 0.0)));
                let r = solve_lp(&lp);
                let rho = if r.is_optimal() { r.x[r.x.len() - 1] } else { 0.0 };
                worst = worst.min(rho.max(0.0));
            }
            worst
        }
    }
}
