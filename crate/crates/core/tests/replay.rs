use modeplan::geom2d::{ContactSource, Vec2};
use modeplan::planner::{plan, PlannerConfig, Trajectory};
use modeplan::scenes::{builtin_problem, replay_validate, Scene, Tolerances, ViolationKind};

fn solved(k: usize, seed: u64) -> (Scene, Trajectory) {
    let scene = builtin_problem(k);
    let cfg = PlannerConfig {
        seed,
        ..PlannerConfig::default()
    };
    let out = plan(&scene, &cfg).expect("bundled problem solves");
    (scene, out.trajectory)
}

fn tol(scene: &Scene) -> Tolerances {
    Tolerances::for_scene(scene, scene.default_rotation_weight())
}

#[test]
fn jsonl_round_trip_is_exact() {
    let (_, traj) = solved(1, 0);
    let text = traj.to_jsonl();
    let back = Trajectory::from_jsonl(&text).unwrap();
    assert_eq!(back, traj);
    assert_eq!(back.to_jsonl(), text);
    assert_eq!(text.lines().count(), traj.len());
}

#[test]
fn records_keep_field_order() {
    let (_, traj) = solved(1, 0);
    let line = traj.to_jsonl().lines().next().unwrap().to_string();
    let keys = ["\"t\"", "\"q\"", "\"v\"", "\"contacts\""];
    let pos: Vec<usize> = keys.iter().map(|k| line.find(k).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]), "{line}");
    let c = ["\"source\"", "\"p\"", "\"n\"", "\"mode_label\"", "\"lambda_n\"", "\"lambda_t\""];
    let pos: Vec<usize> = c.iter().map(|k| line.find(k).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]), "{line}");
}

#[test]
fn bad_line_reports_its_number() {
    let (_, traj) = solved(1, 0);
    let mut text = traj.to_jsonl();
    text.push_str("{\"t\": 1}\n");
    let err = Trajectory::from_jsonl(&text).unwrap_err();
    assert!(err.to_string().starts_with(&format!("line {}", traj.len() + 1)), "{err}");
}

#[test]
fn planner_output_replays_cleanly() {
    for (k, seed) in [(1, 0), (2, 1), (7, 0)] {
        let (scene, traj) = solved(k, seed);
        let v = replay_validate(&scene, &traj, &tol(&scene));
        assert!(v.is_empty(), "problem {k}: {:?}", v.first());
    }
}

#[test]
fn negated_normal_force_is_one_equilibrium_violation() {
    let (scene, mut traj) = solved(1, 0);
    let (i, j) = traj
        .records
        .iter()
        .enumerate()
        .find_map(|(i, r)| r.contacts.iter().position(|c| c.lambda_n > 0.1).map(|j| (i, j)))
        .expect("some loaded contact");
    traj.records[i].contacts[j].lambda_n *= -1.0;
    let v = replay_validate(&scene, &traj, &tol(&scene));
    let eq: Vec<_> = v.iter().filter(|v| v.kind == ViolationKind::Equilibrium).collect();
    assert_eq!(eq.len(), 1, "{v:?}");
    assert_eq!(eq[0].step, i);
    assert!(v.iter().all(|v| v.step == i), "{v:?}");
}

#[test]
fn teleport_breaks_continuity() {
    let (scene, mut traj) = solved(1, 0);
    assert!(traj.len() > 3);
    let i = traj.len() / 2;
    traj.records[i].q[0] += 1.0;
    let v = replay_validate(&scene, &traj, &tol(&scene));
    assert!(v.iter().any(|v| v.kind == ViolationKind::Continuity && v.step == i), "{v:?}");
}

#[test]
fn silent_finger_move_is_flagged() {
    let (scene, mut traj) = solved(1, 0);
    // Pick a record after the first whose finger has no switch event and
    // slide that finger along its face.
    let i = (1..traj.len())
        .find(|&i| {
            let r = &traj.records[i];
            r.event.is_none() && r.contacts.iter().any(|c| c.source != ContactSource::Environment)
        })
        .expect("a record with a finger");
    let c = traj.records[i]
        .contacts
        .iter_mut()
        .find(|c| c.source != ContactSource::Environment)
        .unwrap();
    // World-frame tangent of the finger contact.
    let t = Vec2::new(c.n[1], -c.n[0]);
    c.p[0] += 0.05 * t.x;
    c.p[1] += 0.05 * t.y;
    let v = replay_validate(&scene, &traj, &tol(&scene));
    assert!(v.iter().any(|v| v.kind == ViolationKind::FingerSwitch), "{v:?}");
}
