//! Trajectory records and their line-delimited JSON form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom2d::{Contact, ContactSource, Pose, Twist};
use crate::integrate::{finger_contacts, FingerPlacement};
use crate::mechanics::{closest_feasible_velocity, QuasistaticSolution};
use crate::modes::{ContactLabel, ContactMode};

use super::{Planner, Tree};

pub type SourceRecord = ContactSource;

/// One contact of a record, in world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactRecord {
    pub source: SourceRecord,
    pub p: [f64; 2],
    pub n: [f64; 2],
    pub mode_label: ContactLabel,
    pub lambda_n: f64,
    pub lambda_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerSwitch {
    pub finger: usize,
    pub from: Option<FingerPlacement>,
    pub to: Option<FingerPlacement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    FingerSwitch(Vec<FingerSwitch>),
}

/// State at time `t`: pose, body twist followed from here, contacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub q: [f64; 3],
    pub v: [f64; 3],
    pub contacts: Vec<ContactRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<Event>,
}

impl StepRecord {
    pub fn pose(&self) -> Pose {
        Pose::new(self.q[0], self.q[1], self.q[2])
    }

    pub fn twist(&self) -> Twist {
        Twist::new(self.v[0], self.v[1], self.v[2])
    }

    pub fn finger_switches(&self) -> &[FingerSwitch] {
        match &self.event {
            Some(Event::FingerSwitch(s)) => s,
            None => &[],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
}

fn record(
    t: f64,
    q: &Pose,
    env: &[Contact],
    mode: &ContactMode,
    fingers: &[Contact],
    sol: &QuasistaticSolution,
) -> StepRecord {
    let mut contacts = Vec::with_capacity(env.len() + fingers.len());
    for (i, c) in env.iter().chain(fingers.iter()).enumerate() {
        let label = if i < env.len() {
            mode.labels()[i]
        } else {
            ContactLabel::Fixed
        };
        let p = q.transform_point(&c.point);
        let n = q.rotate_vector(&c.normal);
        contacts.push(ContactRecord {
            source: c.source,
            p: [p.x, p.y],
            n: [n.x, n.y],
            mode_label: label,
            lambda_n: sol.normal_force(i),
            lambda_t: sol.tangent_force(i),
        });
    }
    StepRecord {
        t,
        q: [q.x, q.y, q.theta],
        v: sol.v_o.as_array(),
        contacts,
        event: None,
    }
}

fn switches(from: &[Option<FingerPlacement>], to: &[Option<FingerPlacement>]) -> Vec<FingerSwitch> {
    from.iter()
        .zip(to)
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(k, (a, b))| FingerSwitch {
            finger: k,
            from: *a,
            to: *b,
        })
        .collect()
}

impl Trajectory {
    /// Concatenates the edge traces along `path` and closes with a static
    /// record at the final pose.
    pub(crate) fn from_path(tree: &Tree, path: &[usize], planner: &Planner) -> Trajectory {
        let scene = planner.scene;
        let mu = scene.mu_mnp;
        let mut t = 0.0;
        let mut records = Vec::new();
        for w in path.windows(2) {
            let (parent, node) = (&tree.nodes[w[0]], &tree.nodes[w[1]]);
            let edge = node.edge.as_ref().expect("non-root nodes carry an edge");
            let fcs = finger_contacts(&node.fingers, mu);
            let sw = switches(&parent.fingers, &node.fingers);
            for (i, s) in edge.steps.iter().enumerate() {
                let mut r = record(t, &s.q, &s.env_contacts, &s.mode, &fcs, &s.solution);
                if i == 0 && !sw.is_empty() {
                    r.event = Some(Event::FingerSwitch(sw.clone()));
                }
                records.push(r);
                t += s.dt;
            }
        }
        let last = &tree.nodes[*path.last().expect("path is non-empty")];
        let fcs = finger_contacts(&last.fingers, mu);
        let mut all = last.env_contacts.clone();
        all.extend(fcs.iter().cloned());
        let env_mode = ContactMode::uniform(ContactLabel::Fixed, last.env_contacts.len());
        let hold = closest_feasible_velocity(
            &Twist::zero(),
            &last.q,
            &all,
            &env_mode.with_fingers(fcs.len()),
            &scene.external_load(),
            &planner.params.mechanics,
        );
        let mut r = match hold {
            Ok(sol) => record(t, &last.q, &last.env_contacts, &env_mode, &fcs, &sol),
            Err(e) => {
                log::warn!("no static hold at the final pose: {e}");
                let zero = QuasistaticSolution {
                    v_o: Twist::zero(),
                    q_dot: nalgebra::DVector::zeros(2 * fcs.len()),
                    lambda: nalgebra::DVector::zeros(3 * all.len()),
                    wrench_external: nalgebra::Vector3::zeros(),
                    objective: 0.0,
                };
                record(t, &last.q, &last.env_contacts, &env_mode, &fcs, &zero)
            }
        };
        if path.len() == 1 {
            let sw = switches(&vec![None; last.fingers.len()], &last.fingers);
            if !sw.is_empty() {
                r.event = Some(Event::FingerSwitch(sw));
            }
        }
        records.push(r);
        Trajectory { records }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialise"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Trajectory, TrajectoryError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(
                serde_json::from_str(line).map_err(|source| TrajectoryError::Parse { line: i + 1, source })?,
            );
        }
        Ok(Trajectory { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_pose(&self) -> Option<Pose> {
        self.records.last().map(StepRecord::pose)
    }
}
