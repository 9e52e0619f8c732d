//! Contact modes: enumeration of the kinematically feasible label vectors for
//! a set of environment contacts, and assembly of each mode's linear
//! velocity/force constraint system.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom2d::{Contact, ContactSource, Pose};
use crate::mechanics::GraspMap;
use crate::solver::{solve_lp_feasibility, Feasibility};

/// Per-contact relative motion label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactLabel {
    Separate,
    Fixed,
    RightSlide,
    LeftSlide,
}

impl ContactLabel {
    pub const ALL: [ContactLabel; 4] = [
        ContactLabel::Separate,
        ContactLabel::Fixed,
        ContactLabel::RightSlide,
        ContactLabel::LeftSlide,
    ];

    pub fn short(&self) -> char {
        match self {
            ContactLabel::Separate => 'S',
            ContactLabel::Fixed => 'F',
            ContactLabel::RightSlide => 'R',
            ContactLabel::LeftSlide => 'L',
        }
    }
}

/// One label per contact, in contact-list order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ContactMode {
    labels: Vec<ContactLabel>,
}

impl ContactMode {
    pub fn new(labels: Vec<ContactLabel>) -> Self {
        Self { labels }
    }

    pub fn uniform(label: ContactLabel, n: usize) -> Self {
        Self::new(vec![label; n])
    }

    pub fn labels(&self) -> &[ContactLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Appends `n` manipulator labels (always `Fixed`).
    pub fn with_fingers(&self, n: usize) -> ContactMode {
        let mut labels = self.labels.clone();
        labels.extend(std::iter::repeat_n(ContactLabel::Fixed, n));
        ContactMode { labels }
    }
}

impl fmt::Display for ContactMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.labels {
            write!(f, "{}", l.short())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModeError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("manipulator contact {0} must be labelled fixed")]
    ManipulatorNotFixed(usize),
}

/// Index map for the stacked variable `[v_o (3), q̇ (2 per finger), λ (3 per contact)]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariableLayout {
    pub n_fingers: usize,
    pub n_contacts: usize,
}

impl VariableLayout {
    pub fn dim(&self) -> usize {
        3 + 2 * self.n_fingers + 3 * self.n_contacts
    }

    pub fn twist(&self) -> usize {
        0
    }

    /// (normal, tangent) components of finger `k`'s contact-frame velocity.
    pub fn finger_velocity(&self, k: usize) -> usize {
        3 + 2 * k
    }

    /// Start of contact `i`'s (λ_n, λ_t⁺, λ_t⁻) block.
    pub fn force(&self, i: usize) -> usize {
        3 + 2 * self.n_fingers + 3 * i
    }
}

/// Linear system of one contact mode over the stacked variable described
/// by `layout`. Rows listed in `strict_rows` index `a_ineq` and stand for
/// strict inequalities.
#[derive(Debug, Clone)]
pub struct ModeConstraints {
    pub layout: VariableLayout,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
    pub strict_rows: Vec<usize>,
}

struct RowBuilder {
    dim: usize,
    eq: Vec<Vec<f64>>,
    ineq: Vec<Vec<f64>>,
    strict: Vec<usize>,
}

impl RowBuilder {
    fn row(&self) -> Vec<f64> {
        vec![0.0; self.dim]
    }

    fn eq(&mut self, r: Vec<f64>) {
        self.eq.push(r);
    }

    fn ineq(&mut self, r: Vec<f64>, strict: bool) {
        if strict {
            self.strict.push(self.ineq.len());
        }
        self.ineq.push(r);
    }

    fn into_matrix(rows: &[Vec<f64>], dim: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j])
    }
}

/// Builds the mode's velocity and force clauses, with contact velocities
/// `v_c = Gᵀ v_o − [q̇; 0]` substituted. Right-hand sides are zero; strict
/// rows are flagged rather than offset.
pub fn assemble_mode_constraints(
    mode: &ContactMode,
    contacts: &[Contact],
    grasp: &GraspMap,
    n_fingers: usize,
) -> Result<ModeConstraints, ModeError> {
    if mode.len() != contacts.len() {
        return Err(ModeError::DimensionMismatch(format!(
            "mode has {} labels for {} contacts",
            mode.len(),
            contacts.len()
        )));
    }
    if grasp.num_contacts() != contacts.len() {
        return Err(ModeError::DimensionMismatch(format!(
            "grasp map has {} contacts, expected {}",
            grasp.num_contacts(),
            contacts.len()
        )));
    }
    let layout = VariableLayout {
        n_fingers,
        n_contacts: contacts.len(),
    };
    let dim = layout.dim();
    let mut b = RowBuilder {
        dim,
        eq: Vec::new(),
        ineq: Vec::new(),
        strict: Vec::new(),
    };
    for (i, (c, &label)) in contacts.iter().zip(mode.labels()).enumerate() {
        let finger = match c.source {
            ContactSource::Manipulator(k) => {
                if k >= n_fingers {
                    return Err(ModeError::DimensionMismatch(format!(
                        "finger index {k} with {n_fingers} fingers"
                    )));
                }
                if label != ContactLabel::Fixed {
                    return Err(ModeError::ManipulatorNotFixed(k));
                }
                Some(k)
            }
            ContactSource::Environment => None,
        };
        let gn = grasp.normal_column(i);
        let gt = grasp.tangent_column(i);
        let vel_row = |g: &Vector3<f64>, axis: usize, sign: f64| {
            let mut r = vec![0.0; dim];
            for j in 0..3 {
                r[j] = sign * g[j];
            }
            if let Some(k) = finger {
                r[layout.finger_velocity(k) + axis] = -sign;
            }
            r
        };
        let f = layout.force(i);
        let mu = c.mu;
        match label {
            ContactLabel::Separate => {
                b.ineq(vel_row(&gn, 0, 1.0), true);
                for k in 0..3 {
                    let mut r = b.row();
                    r[f + k] = 1.0;
                    b.eq(r);
                }
            }
            ContactLabel::Fixed => {
                b.eq(vel_row(&gn, 0, 1.0));
                b.eq(vel_row(&gt, 1, 1.0));
                for k in 1..3 {
                    let mut r = b.row();
                    r[f] = mu;
                    r[f + k] = -1.0;
                    b.ineq(r, true);
                }
            }
            ContactLabel::RightSlide | ContactLabel::LeftSlide => {
                let right = label == ContactLabel::RightSlide;
                b.eq(vel_row(&gn, 0, 1.0));
                b.ineq(vel_row(&gt, 1, if right { 1.0 } else { -1.0 }), true);
                // Friction opposes sliding: the opposite-direction magnitude
                // saturates the cone, the same-direction one vanishes.
                let (saturated, zero) = if right { (f + 2, f + 1) } else { (f + 1, f + 2) };
                let mut r = b.row();
                r[f] = mu;
                r[saturated] = -1.0;
                b.eq(r);
                let mut r = b.row();
                r[zero] = 1.0;
                b.eq(r);
            }
        }
        for k in 0..3 {
            let mut r = b.row();
            r[f + k] = 1.0;
            b.ineq(r, false);
        }
    }
    Ok(ModeConstraints {
        layout,
        a_eq: RowBuilder::into_matrix(&b.eq, dim),
        b_eq: DVector::zeros(b.eq.len()),
        a_ineq: RowBuilder::into_matrix(&b.ineq, dim),
        b_ineq: DVector::zeros(b.ineq.len()),
        strict_rows: b.strict,
    })
}

/// Mode enumeration strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnumerationBackend {
    /// Walks the faces of the twist-space hyperplane arrangement.
    #[default]
    Arrangement,
    /// Tests all 4ⁿ label vectors with an LP feasibility filter.
    BruteForce,
}

/// Strict-inequality margin used by the brute-force backend.
pub const DEFAULT_SIGMA: f64 = 1e-6;
const SIGN_TOL: f64 = 1e-9;

/// Normal-velocity and tangential-velocity rows (unit-free) of each contact.
fn velocity_rows(contacts: &[Contact]) -> Vec<(Vector3<f64>, Vector3<f64>)> {
    let g = GraspMap::new(contacts);
    (0..contacts.len())
        .map(|i| (g.normal_column(i), g.tangent_column(i)))
        .collect()
}

/// All environment contact modes admitting a compatible object twist.
pub fn enumerate_env_modes(contacts: &[Contact], q: &Pose) -> Vec<ContactMode> {
    enumerate_env_modes_with(contacts, q, EnumerationBackend::default())
}

pub fn enumerate_env_modes_with(
    contacts: &[Contact],
    _q: &Pose,
    backend: EnumerationBackend,
) -> Vec<ContactMode> {
    if contacts.is_empty() {
        return vec![ContactMode::default()];
    }
    let rows = velocity_rows(contacts);
    let set = match backend {
        EnumerationBackend::Arrangement => arrangement_modes(&rows),
        EnumerationBackend::BruteForce => brute_force_modes(&rows, DEFAULT_SIGMA),
    };
    set.into_iter().collect()
}

fn sign(x: f64) -> i8 {
    if x > SIGN_TOL {
        1
    } else if x < -SIGN_TOL {
        -1
    } else {
        0
    }
}

/// Label vector for a twist sign pattern; `None` if some contact penetrates.
fn classify(signs: &[(i8, i8)]) -> Option<ContactMode> {
    signs
        .iter()
        .map(|&(sn, st)| match (sn, st) {
            (-1, _) => None,
            (1, _) => Some(ContactLabel::Separate),
            (_, 1) => Some(ContactLabel::RightSlide),
            (_, -1) => Some(ContactLabel::LeftSlide),
            _ => Some(ContactLabel::Fixed),
        })
        .collect::<Option<Vec<_>>>()
        .map(ContactMode::new)
}

fn unit_orthogonal(h: &Vector3<f64>) -> Vector3<f64> {
    let pick = if h.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    (pick - h * h.dot(&pick)).normalize()
}

fn arrangement_modes(rows: &[(Vector3<f64>, Vector3<f64>)]) -> BTreeSet<ContactMode> {
    // Distinct planes through the origin (unit normals, up to sign).
    let mut planes: Vec<Vector3<f64>> = Vec::new();
    for (a, b) in rows {
        for h in [a, b] {
            let u = h.normalize();
            if !planes
                .iter()
                .any(|p| p.cross(&u).norm() <= SIGN_TOL)
            {
                planes.push(u);
            }
        }
    }
    let mut out = BTreeSet::new();
    let mut record = |signs: Vec<(i8, i8)>| {
        if let Some(m) = classify(&signs) {
            out.insert(m);
        }
    };
    let numeric = |v: &Vector3<f64>| -> Vec<(i8, i8)> {
        rows.iter()
            .map(|(a, b)| (sign(a.dot(v)), sign(b.dot(v))))
            .collect()
    };

    // Zero twist.
    record(vec![(0, 0); rows.len()]);

    for (hi, h) in planes.iter().enumerate() {
        let e1 = unit_orthogonal(h);
        let e2 = h.cross(&e1);
        // Rays inside this plane, as angles in the (e1, e2) frame.
        let mut angles: Vec<f64> = Vec::new();
        for (ki, k) in planes.iter().enumerate() {
            if ki == hi {
                continue;
            }
            let d = h.cross(k);
            if d.norm() <= SIGN_TOL {
                continue;
            }
            let d = d.normalize();
            for s in [1.0, -1.0] {
                let r = d * s;
                record(numeric(&r));
                angles.push(r.dot(&e2).atan2(r.dot(&e1)));
            }
        }
        angles.sort_by(f64::total_cmp);
        angles.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        let mids: Vec<f64> = if angles.is_empty() {
            vec![0.0]
        } else {
            (0..angles.len())
                .map(|i| {
                    let a = angles[i];
                    let b = if i + 1 < angles.len() {
                        angles[i + 1]
                    } else {
                        angles[0] + 2.0 * std::f64::consts::PI
                    };
                    0.5 * (a + b)
                })
                .collect()
        };
        for mid in mids {
            let f = e1 * mid.cos() + e2 * mid.sin();
            record(numeric(&f));
            // Open cells on either side of this 2-face, by symbolic
            // perturbation along ±h.
            for side in [1.0, -1.0] {
                let off = h * side;
                let signs = rows
                    .iter()
                    .map(|(a, b)| {
                        let s = |p: &Vector3<f64>| {
                            let v = sign(p.dot(&f));
                            if v != 0 {
                                v
                            } else {
                                sign(p.normalize().dot(&off))
                            }
                        };
                        (s(a), s(b))
                    })
                    .collect();
                record(signs);
            }
        }
    }
    out
}

fn brute_force_modes(
    rows: &[(Vector3<f64>, Vector3<f64>)],
    sigma: f64,
) -> BTreeSet<ContactMode> {
    let n = rows.len();
    let mut out = BTreeSet::new();
    let total = 4usize.pow(n as u32);
    for code in 0..total {
        let labels: Vec<ContactLabel> = (0..n)
            .map(|i| ContactLabel::ALL[(code / 4usize.pow(i as u32)) % 4])
            .collect();
        let mode = ContactMode::new(labels);
        if twist_feasible(rows, &mode, sigma) {
            out.insert(mode);
        }
    }
    out
}

/// LP test: does some twist realise `mode` with strict margins ≥ `sigma`?
fn twist_feasible(rows: &[(Vector3<f64>, Vector3<f64>)], mode: &ContactMode, sigma: f64) -> bool {
    let mut eq: Vec<Vector3<f64>> = Vec::new();
    let mut ineq: Vec<Vector3<f64>> = Vec::new();
    for ((a, b), l) in rows.iter().zip(mode.labels()) {
        match l {
            ContactLabel::Separate => ineq.push(*a),
            ContactLabel::Fixed => {
                eq.push(*a);
                eq.push(*b);
            }
            ContactLabel::RightSlide => {
                eq.push(*a);
                ineq.push(*b);
            }
            ContactLabel::LeftSlide => {
                eq.push(*a);
                ineq.push(-*b);
            }
        }
    }
    let a_eq = DMatrix::from_fn(eq.len(), 3, |i, j| eq[i][j]);
    let a_in = DMatrix::from_fn(ineq.len(), 3, |i, j| ineq[i][j]);
    let strict: Vec<usize> = (0..ineq.len()).collect();
    matches!(
        solve_lp_feasibility(
            &a_eq,
            &DVector::zeros(eq.len()),
            &a_in,
            &DVector::zeros(ineq.len()),
            &strict,
            sigma,
        ),
        Ok(Feasibility::Feasible)
    )
}
