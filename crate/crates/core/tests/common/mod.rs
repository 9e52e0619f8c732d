#![allow(dead_code)]

use modeplan::geom2d::{contact_query, Contact, Pose, Twist, Vec2};
use modeplan::integrate::{check_projection_idempotence, forward_integrate, FingerPlacement, IntegrationParams, StopReason};
use modeplan::mechanics::QuasistaticSolution;
use modeplan::modes::{enumerate_env_modes, ContactLabel, ContactMode};
use modeplan::planner::weighted_se2_distance;
use modeplan::scenes::{radius_of_gyration, Plane, Scene};
use modeplan::solver::QuadraticProgram;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Unit square resting on a floor, two fingers, unit weight, plus any extra
/// environment blocks given as TOML snippets.
pub fn square_scene(extra_env: &str, fingers: usize) -> Scene {
    Scene::from_toml_str(&square_doc(extra_env, fingers)).expect("test scene loads")
}

pub fn square_doc(extra_env: &str, fingers: usize) -> String {
    format!(
        r#"
version = 1
name = "square"

[units]
length = "m"
angle = "rad"
force = "mg"

[object]
vertices = [[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]]
mass = 1.0

[[environment]]
vertices = [[-5.0, -1.0], [5.0, -1.0], [5.0, 0.0], [-5.0, 0.0]]
{extra_env}

[plane]
type = "gravity"
g = 1.0

[friction]
env = 0.3
mnp = 0.8

[fingers]
count = {fingers}

[start]
x = 0.0
y = 0.5
theta = 0.0

[goal]
x = 2.0
y = 0.5
theta = 0.0

[bounds]
x = [-3.0, 3.0]
y = [0.0, 2.0]
theta = [-3.141592653589793, 3.141592653589793]
"#
    )
}

/// Body-frame gravity wrench about the object origin, worked out by hand.
pub fn gravity_wrench(scene: &Scene, q: &Pose) -> [f64; 3] {
    let w = scene.weight();
    let (s, c) = q.theta.sin_cos();
    // World (0, -w) expressed in the body frame.
    let f = Vec2::new(-w * s, -w * c);
    [f.x, f.y, scene.com.x * f.y - scene.com.y * f.x]
}

/// Body-frame external wrench about the object origin for twist `v`. On a
/// table the support friction opposes the motion of the centre of mass,
/// with the radius of gyration scaling the rotational part.
pub fn external_wrench(scene: &Scene, q: &Pose, v: &Twist) -> [f64; 3] {
    match scene.plane {
        Plane::Gravity { .. } => gravity_wrench(scene, q),
        Plane::Tabletop { mu_support, .. } => {
            let c = scene.com;
            let vc = Vec2::new(v.vx - v.omega * c.y, v.vy + v.omega * c.x);
            let rho = radius_of_gyration(&scene.object, &c);
            let s = (vc.norm_squared() + (rho * v.omega).powi(2)).sqrt();
            if s <= 1e-12 {
                return [0.0; 3];
            }
            let k = mu_support * scene.weight() / s;
            let f = -vc * k;
            [f.x, f.y, -k * rho * rho * v.omega + c.x * f.y - c.y * f.x]
        }
    }
}

/// Equilibrium residual and worst clause violation of `sol` for body-frame
/// `contacts` under `mode`, recomputed from the contact geometry alone.
/// Force clauses apply to every contact; velocity clauses to environment
/// contacts, whose other side is at rest.
pub fn soundness(contacts: &[Contact], mode: &ContactMode, sol: &QuasistaticSolution, f_ext: [f64; 3]) -> (f64, f64) {
    let mut w = f_ext;
    let mut clause: f64 = 0.0;
    for (i, c) in contacts.iter().enumerate() {
        let ln = sol.normal_force(i);
        let lt = sol.tangent_force(i);
        let fx = c.normal.x * ln + c.tangent.x * lt;
        let fy = c.normal.y * ln + c.tangent.y * lt;
        w[0] += fx;
        w[1] += fy;
        w[2] += c.point.x * fy - c.point.y * fx;
        let cone = c.mu * ln;
        let label = mode.labels()[i];
        let force = match label {
            ContactLabel::Separate => ln.abs().max(lt.abs()),
            ContactLabel::Fixed => (-ln).max(lt.abs() - cone),
            ContactLabel::RightSlide => (-ln).max((lt + cone).abs()),
            ContactLabel::LeftSlide => (-ln).max((lt - cone).abs()),
        };
        clause = clause.max(force);
        if c.is_environment() {
            let v = &sol.v_o;
            let pv = Vec2::new(v.vx - v.omega * c.point.y, v.vy + v.omega * c.point.x);
            let (un, ut) = (pv.dot(&c.normal), pv.dot(&c.tangent));
            let vel = match label {
                ContactLabel::Separate => -un,
                ContactLabel::Fixed => un.abs().max(ut.abs()),
                ContactLabel::RightSlide => un.abs().max(-ut),
                ContactLabel::LeftSlide => un.abs().max(ut),
            };
            clause = clause.max(vel);
        }
    }
    let f_norm = (f_ext[0].powi(2) + f_ext[1].powi(2) + f_ext[2].powi(2)).sqrt();
    let r = (w[0].powi(2) + w[1].powi(2) + w[2].powi(2)).sqrt() / (f_norm + 1.0);
    (r, clause.max(0.0))
}

/// Exhaustive KKT enumeration over active inequality subsets.
pub fn brute_force_qp(p: &QuadraticProgram) -> Option<(DVector<f64>, f64)> {
    let n = p.dim();
    let me = p.a_eq.nrows();
    let mi = p.a_ineq.nrows();
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << mi) {
        let act: Vec<usize> = (0..mi).filter(|i| mask & (1 << i) != 0).collect();
        let k = me + act.len();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-&p.g));
        for r in 0..k {
            let (row, b) = if r < me {
                (p.a_eq.row(r).into_owned(), p.b_eq[r])
            } else {
                (p.a_ineq.row(act[r - me]).into_owned(), p.b_ineq[act[r - me]])
            };
            for j in 0..n {
                kkt[(j, n + r)] = -row[j];
                kkt[(n + r, j)] = row[j];
            }
            rhs[n + r] = b;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        let x = sol.rows(0, n).into_owned();
        let mult = sol.rows(n, k);
        if (me..k).any(|r| mult[r] < -1e-9) {
            continue;
        }
        if (0..mi).any(|i| p.a_ineq.row(i).transpose().dot(&x) < p.b_ineq[i] - 1e-9) {
            continue;
        }
        let f = p.objective(&x);
        if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
            best = Some((x, f));
        }
    }
    best
}

pub fn random_qp(rng: &mut ChaCha8Rng, n: usize, me: usize, mi: usize) -> QuadraticProgram {
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let mut p = QuadraticProgram::new(n);
    p.h = m.transpose() * &m + DMatrix::identity(n, n) * 0.5;
    p.g = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
    let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    p.a_eq = DMatrix::from_fn(me, n, |_, _| rng.gen_range(-1.0..1.0));
    p.b_eq = &p.a_eq * &x0;
    p.a_ineq = DMatrix::from_fn(mi, n, |_, _| rng.gen_range(-1.0..1.0));
    p.b_ineq = &p.a_ineq * &x0 - DVector::from_fn(mi, |_, _| rng.gen_range(0.0..0.5));
    p
}

pub const WALL: &str = "[[environment]]\nvertices = [[1.5, 0.0], [2.5, 0.0], [2.5, 2.0], [1.5, 2.0]]";

pub fn params(scene: &Scene) -> IntegrationParams {
    IntegrationParams::for_scene(scene, scene.default_rotation_weight())
}

pub fn env_at(scene: &Scene, q: &Pose) -> Vec<Contact> {
    contact_query(&scene.object, q, &scene.environment, scene.d_contact(), scene.mu_env).unwrap()
}

/// Projects random targets from random resting states of the square next
/// to a wall, then projects again from the result. Returns the number of
/// triples checked and how many moved by more than `ε_d` the second time.
pub fn idempotence_trials(count: usize, seed: u64) -> (usize, usize) {
    let scene = square_scene(WALL, 2);
    let p = params(&scene);
    let eps_d = scene.d_contact();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut checked, mut failures, mut attempts) = (0, 0, 0);
    while checked < count && attempts < 50 * count {
        attempts += 1;
        let q0 = Pose::new(rng.gen_range(-1.5..0.9), 0.5, 0.0);
        let env = env_at(&scene, &q0);
        let modes = enumerate_env_modes(&env, &q0);
        let mode = modes[rng.gen_range(0..modes.len())].clone();
        let edge = [1usize, 2, 3][rng.gen_range(0..3)];
        let fingers = vec![
            Some(FingerPlacement::on_edge(&scene.object, edge, rng.gen_range(0.1..0.9))),
            None,
        ];
        let target = Pose::new(
            q0.x + rng.gen_range(-0.6..0.6),
            0.5 + rng.gen_range(-0.1..0.3),
            rng.gen_range(-0.4..0.4),
        );
        let Ok(first) = forward_integrate(&q0, &target, &fingers, &mode, &scene, &p) else {
            continue;
        };
        if first.stop_reason != StopReason::VelocityZero || first.steps.is_empty() {
            continue;
        }
        let q1 = first.q_new;
        // Labels of the final step carry over when the contact set is unchanged.
        let last = first.steps.last().unwrap();
        let same = last.env_contacts.len() == first.final_contacts.len()
            && last.env_contacts.iter().zip(&first.final_contacts).all(|(a, b)| a.feature == b.feature);
        if !same {
            continue;
        }
        checked += 1;
        let fixed = check_projection_idempotence(&q1, &last.mode, &fingers, &scene, &p, eps_d);
        let again = forward_integrate(&q1, &target, &fingers, &last.mode, &scene, &p)
            .map(|r| weighted_se2_distance(&r.q_new, &q1, p.w_r) <= eps_d)
            .unwrap_or(false);
        if !(fixed && again) {
            failures += 1;
        }
    }
    (checked, failures)
}

/// Largest weighted distance between the projection of a lifted target and
/// its closed-form foot on the contact line, over a flat floor and a ramp.
pub fn projection_error() -> f64 {
    let mut worst: f64 = 0.0;
    for a in [0.0f64, 0.25] {
        let (s, c) = a.sin_cos();
        let n = (-s, c);
        let start = (0.5 * n.0, 0.5 * n.1);
        let doc = square_doc("", 2)
            .replace(
                "vertices = [[-5.0, -1.0], [5.0, -1.0], [5.0, 0.0], [-5.0, 0.0]]",
                &format!("vertices = [[-4.0, -3.0], [4.0, -3.0], [4.0, {:?}], [-4.0, {:?}]]", 4.0 * a.tan(), -4.0 * a.tan()),
            )
            .replace(
                "[start]\nx = 0.0\ny = 0.5\ntheta = 0.0",
                &format!("[start]\nx = {:?}\ny = {:?}\ntheta = {a:?}", start.0, start.1),
            );
        let scene = Scene::from_toml_str(&doc).unwrap();
        assert_eq!(env_at(&scene, &scene.start).len(), 2);
        let p = params(&scene);
        let d_c = scene.d_contact();
        let fingers = vec![Some(FingerPlacement::on_edge(&scene.object, 2, 0.5)), None];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let along: f64 = rng.gen_range(-1.0..1.0);
            let foot = (start.0 + along * c, start.1 + along * s);
            let target = Pose::new(foot.0 + 10.0 * d_c * n.0, foot.1 + 10.0 * d_c * n.1, a);
            let label = if along >= 0.0 { ContactLabel::RightSlide } else { ContactLabel::LeftSlide };
            let mode = ContactMode::uniform(label, 2);
            let res = forward_integrate(&scene.start, &target, &fingers, &mode, &scene, &p).unwrap();
            worst = worst.max(weighted_se2_distance(&res.q_new, &Pose::new(foot.0, foot.1, a), p.w_r));
        }
    }
    worst
}
