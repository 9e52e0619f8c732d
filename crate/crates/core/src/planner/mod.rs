//! Contact-mode guided tree search over object poses.

mod trajectory;

use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom2d::{body_twist_between, contact_query, normalize_angle, Contact, Pose};
use crate::integrate::{
    finger_contacts, fingers_clear, forward_integrate, FingerPlacement, IntegrationParams,
    IntegrationStep, StopReason,
};
use crate::mechanics::{
    closest_feasible_velocity, stability_margin, static_equilibrium_possible, StabilityStrategy,
};
use crate::modes::{enumerate_env_modes_with, ContactMode, EnumerationBackend};
use crate::scenes::{Bounds, Scene};

pub use trajectory::{
    ContactRecord, Event, FingerSwitch, SourceRecord, StepRecord, Trajectory, TrajectoryError,
};

/// Translation distance plus `w_r` times the wrapped angle difference.
pub fn weighted_se2_distance(q1: &Pose, q2: &Pose, w_r: f64) -> f64 {
    let dt = (q1.theta - q2.theta).abs() % std::f64::consts::TAU;
    let dt = dt.min(std::f64::consts::TAU - dt);
    (q1.x - q2.x).hypot(q1.y - q2.y) + w_r * dt
}

/// With probability `p` a uniform pose in `bounds`, otherwise `q_goal`.
pub fn sample_object_config<R: Rng>(q_goal: &Pose, p: f64, rng: &mut R, bounds: &Bounds) -> Pose {
    if rng.gen::<f64>() < p {
        let pick = |r: &mut R, b: [f64; 2]| if b[1] > b[0] { r.gen_range(b[0]..b[1]) } else { b[0] };
        let x = pick(rng, bounds.x);
        let y = pick(rng, bounds.y);
        let theta = pick(rng, bounds.theta);
        Pose::new(x, y, normalize_angle(theta))
    } else {
        *q_goal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Nearest node, every mode, per sample.
    Rrt,
    /// Every node and every mode per sample, always relocating fingers.
    CompleteTree,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    /// Probability of sampling the goal pose instead of a uniform pose.
    pub goal_bias: f64,
    /// Rotation weight; `None` picks the scene default.
    pub rotation_weight: Option<f64>,
    pub max_nodes: usize,
    pub time_limit: Option<Duration>,
    pub seed: u64,
    pub margin_threshold: f64,
    pub margin_strategy: StabilityStrategy,
    pub algorithm: Algorithm,
    pub enumeration: EnumerationBackend,
    /// Rejection rounds per finger when sampling new placements.
    pub relocation_rounds: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            goal_bias: 0.5,
            rotation_weight: None,
            max_nodes: 2000,
            time_limit: Some(Duration::from_secs(120)),
            seed: 0,
            margin_threshold: 0.0,
            margin_strategy: StabilityStrategy::None,
            algorithm: Algorithm::Rrt,
            enumeration: EnumerationBackend::default(),
            relocation_rounds: 50,
        }
    }
}

/// Motion from a node's parent to the node.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub mode: ContactMode,
    pub steps: Vec<IntegrationStep>,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: usize,
    pub q: Pose,
    pub parent: Option<usize>,
    pub fingers: Vec<Option<FingerPlacement>>,
    pub env_contacts: Vec<Contact>,
    pub edge: Option<Edge>,
    pub margin: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    /// Closest node under the weighted metric; ties go to the lowest id.
    pub fn nearest(&self, q: &Pose, w_r: f64) -> usize {
        let mut best = (f64::INFINITY, 0);
        for n in &self.nodes {
            let d = weighted_se2_distance(&n.q, q, w_r);
            if d < best.0 {
                best = (d, n.id);
            }
        }
        best.1
    }

    /// Node ids from the root to `id`.
    pub fn path_to(&self, id: usize) -> Vec<usize> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeStats {
    pub nodes: usize,
    pub iterations: usize,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    Timeout,
    NodeBudget,
    InvalidScene,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("planning failed ({reason:?}): {message}")]
pub struct PlanFailure {
    pub reason: FailureReason,
    pub message: String,
    pub stats: TreeStats,
    /// The tree grown before giving up.
    pub tree: Tree,
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub trajectory: Trajectory,
    pub tree: Tree,
    pub path: Vec<usize>,
    pub stats: TreeStats,
}

impl PlanOutcome {
    /// Distinct (contact features, labels) pairs over the path's edges.
    pub fn modes_in_path(&self) -> usize {
        let mut seen: Vec<(Vec<String>, String)> = Vec::new();
        for &id in &self.path {
            if let Some(e) = &self.tree.nodes[id].edge {
                for s in &e.steps {
                    let key = (
                        s.env_contacts.iter().map(|c| format!("{:?}", c.feature)).collect(),
                        s.mode.to_string(),
                    );
                    if !seen.contains(&key) {
                        seen.push(key);
                    }
                }
            }
        }
        seen.len()
    }
}

/// Everything EXTEND needs besides the tree.
pub struct Planner<'a> {
    pub scene: &'a Scene,
    pub cfg: PlannerConfig,
    pub w_r: f64,
    pub params: IntegrationParams,
    pub eps_d: f64,
    rng: ChaCha8Rng,
}

impl<'a> Planner<'a> {
    pub fn new(scene: &'a Scene, cfg: PlannerConfig) -> Self {
        let w_r = cfg.rotation_weight.unwrap_or_else(|| scene.default_rotation_weight());
        let params = IntegrationParams::for_scene(scene, w_r);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self {
            scene,
            w_r,
            eps_d: scene.d_contact(),
            params,
            cfg,
            rng,
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn env_contacts(&self, q: &Pose) -> Option<Vec<Contact>> {
        contact_query(
            &self.scene.object,
            q,
            &self.scene.environment,
            self.params.d_contact,
            self.scene.mu_env,
        )
        .ok()
    }

    fn margin(&self, q: &Pose, env: &[Contact], fingers: &[Option<FingerPlacement>]) -> f64 {
        if self.cfg.margin_strategy == StabilityStrategy::None {
            return 0.0;
        }
        let mut all = env.to_vec();
        all.extend(finger_contacts(fingers, self.scene.mu_mnp));
        stability_margin(
            &all,
            q,
            &self.scene.external_load(),
            &self.params.mechanics,
            self.cfg.margin_strategy,
        )
    }

    /// Relocates a random non-empty subset of fingers (all of them if any is
    /// unassigned) to admissible boundary points, provided the remaining
    /// contacts hold the object in equilibrium.
    pub fn change_manip_contact(
        &mut self,
        q: &Pose,
        fingers: &[Option<FingerPlacement>],
        env: &[Contact],
    ) -> Option<Vec<Option<FingerPlacement>>> {
        let n = fingers.len();
        if n == 0 {
            return None;
        }
        let moving: Vec<usize> = if fingers.iter().any(Option::is_none) {
            (0..n).collect()
        } else {
            let k = self.rng.gen_range(1..=n);
            let mut v = sample(&mut self.rng, n, k).into_vec();
            v.sort_unstable();
            v
        };
        let mut kept = fingers.to_vec();
        for &k in &moving {
            kept[k] = None;
        }
        let mut remaining = env.to_vec();
        remaining.extend(finger_contacts(&kept, self.scene.mu_mnp));
        if !static_equilibrium_possible(
            &remaining,
            q,
            &self.scene.external_load(),
            &self.params.mechanics,
        ) {
            return None;
        }
        let object = &self.scene.object;
        let faces = &self.scene.finger_faces;
        let total: f64 = faces.iter().map(|&e| object.edge_length(e)).sum();
        let r = self.scene.fingers.radius;
        let mut out = kept;
        for &k in &moving {
            let mut placed = None;
            for _ in 0..self.cfg.relocation_rounds {
                let s = self.rng.gen_range(0.0..total);
                let (edge, t) = object.locate_arclength(faces, s);
                let f = FingerPlacement::on_edge(object, edge, t);
                let tip_body = f.point() - f.normal() * r;
                // The tip must not overlap the object itself (concave corners).
                if object.signed_distance(&tip_body) < r - 1e-9 * self.scene.diagonal() {
                    continue;
                }
                // New placements keep clear of the contact band.
                if !self.scene.fingertip_clear(k, &f.tip_center(q, r), self.params.d_contact) {
                    continue;
                }
                placed = Some(f);
                break;
            }
            out[k] = Some(placed?);
        }
        Some(out)
    }

    /// Whether the fingers can drive the object toward `q_rand` under `mode`.
    fn moves_toward(
        &self,
        q: &Pose,
        q_rand: &Pose,
        fingers: &[Option<FingerPlacement>],
        env: &[Contact],
        mode: &ContactMode,
    ) -> bool {
        if fingers.iter().any(Option::is_none) || !fingers_clear(self.scene, q, fingers) {
            return false;
        }
        let v_d = body_twist_between(q, q_rand);
        let nrm = v_d.weighted_norm(self.w_r);
        if nrm <= 1e-12 {
            return false;
        }
        let fcs = finger_contacts(fingers, self.scene.mu_mnp);
        let mut all = env.to_vec();
        all.extend(fcs.iter().cloned());
        let full = mode.with_fingers(fcs.len());
        match closest_feasible_velocity(
            &v_d.scale(1.0 / nrm),
            q,
            &all,
            &full,
            &self.scene.external_load(),
            &self.params.mechanics,
        ) {
            Ok(s) => s.v_o.weighted_norm(self.w_r) > self.params.eps_v,
            Err(_) => false,
        }
    }

    /// One EXTEND from `near` toward `q_rand` under `mode`. `relocate`
    /// forces a finger relocation first. When the current fingers make no
    /// progress, one relocation is tried before giving up.
    pub fn extend(
        &mut self,
        tree: &Tree,
        near: usize,
        mode: &ContactMode,
        q_rand: &Pose,
        relocate: bool,
    ) -> Option<TreeNode> {
        let node = &tree.nodes[near];
        let q_near = node.q;
        let env = node.env_contacts.clone();
        if !relocate && self.moves_toward(&q_near, q_rand, &node.fingers, &env, mode) {
            let fingers = node.fingers.clone();
            if let Some(n) = self.integrate_from(tree, near, mode, q_rand, fingers) {
                return Some(n);
            }
        }
        let fingers = self.change_manip_contact(&q_near, &tree.nodes[near].fingers, &env)?;
        self.integrate_from(tree, near, mode, q_rand, fingers)
    }

    fn integrate_from(
        &self,
        tree: &Tree,
        near: usize,
        mode: &ContactMode,
        q_rand: &Pose,
        fingers: Vec<Option<FingerPlacement>>,
    ) -> Option<TreeNode> {
        let q_near = tree.nodes[near].q;
        let res = forward_integrate(&q_near, q_rand, &fingers, mode, self.scene, &self.params).ok()?;
        if weighted_se2_distance(&res.q_new, &q_near, self.w_r) <= self.eps_d || res.steps.is_empty() {
            return None;
        }
        let margin = self.margin(&res.q_new, &res.final_contacts, &fingers);
        if self.cfg.margin_threshold > 0.0 && margin < self.cfg.margin_threshold {
            return None;
        }
        Some(TreeNode {
            id: tree.nodes.len(),
            q: res.q_new,
            parent: Some(near),
            fingers,
            env_contacts: res.final_contacts,
            edge: Some(Edge {
                mode: mode.clone(),
                steps: res.steps,
                stop_reason: res.stop_reason,
            }),
            margin,
        })
    }
}

/// Plans from the scene's start to its goal region.
pub fn plan(scene: &Scene, cfg: &PlannerConfig) -> Result<PlanOutcome, PlanFailure> {
    let started = Instant::now();
    let mut planner = Planner::new(scene, cfg.clone());
    let w_r = planner.w_r;
    let stats = |tree: &Tree, it: usize| TreeStats {
        nodes: tree.nodes.len(),
        iterations: it,
        elapsed_s: started.elapsed().as_secs_f64(),
    };
    let fail = |reason, message: String, tree: &Tree, stats| PlanFailure {
        reason,
        message,
        stats,
        tree: tree.clone(),
    };

    let mut tree = Tree::default();
    let Some(env0) = planner.env_contacts(&scene.start) else {
        return Err(fail(
            FailureReason::InvalidScene,
            "start pose penetrates the environment".into(),
            &tree,
            stats(&tree, 0),
        ));
    };
    tree.nodes.push(TreeNode {
        id: 0,
        q: scene.start,
        parent: None,
        fingers: vec![None; scene.fingers.count],
        env_contacts: env0,
        edge: None,
        margin: 0.0,
    });
    let finish = |tree: Tree, goal: usize, it: usize, planner: &Planner| {
        let path = tree.path_to(goal);
        let trajectory = Trajectory::from_path(&tree, &path, planner);
        Ok(PlanOutcome {
            stats: stats(&tree, it),
            trajectory,
            tree,
            path,
        })
    };
    if scene.in_goal(&scene.start, w_r) {
        return finish(tree, 0, 0, &planner);
    }

    let out_of_time = |limit: Option<Duration>| limit.is_some_and(|l| started.elapsed() >= l);
    let mut iterations = 0usize;
    loop {
        iterations += 1;
        let q_rand = sample_object_config(&scene.goal, 1.0 - cfg.goal_bias, planner.rng(), &scene.bounds);
        let sources: Vec<usize> = match cfg.algorithm {
            Algorithm::Rrt => vec![tree.nearest(&q_rand, w_r)],
            Algorithm::CompleteTree => (0..tree.nodes.len()).collect(),
        };
        for near in sources {
            let modes = enumerate_env_modes_with(&tree.nodes[near].env_contacts, &tree.nodes[near].q, cfg.enumeration);
            for m in modes {
                if out_of_time(cfg.time_limit) {
                    return Err(fail(FailureReason::Timeout, "time limit reached".into(), &tree, stats(&tree, iterations)));
                }
                if tree.nodes.len() >= cfg.max_nodes {
                    return Err(fail(FailureReason::NodeBudget, "node budget exhausted".into(), &tree, stats(&tree, iterations)));
                }
                let relocate = cfg.algorithm == Algorithm::CompleteTree;
                if let Some(node) = planner.extend(&tree, near, &m, &q_rand, relocate) {
                    log::debug!(
                        "node {} from {} mode {} stop {:?}",
                        node.id,
                        near,
                        m,
                        node.edge.as_ref().map(|e| e.stop_reason)
                    );
                    let id = node.id;
                    let reached = scene.in_goal(&node.q, w_r);
                    tree.nodes.push(node);
                    if reached {
                        return finish(tree, id, iterations, &planner);
                    }
                }
            }
        }
        if out_of_time(cfg.time_limit) {
            return Err(fail(FailureReason::Timeout, "time limit reached".into(), &tree, stats(&tree, iterations)));
        }
    }
}
