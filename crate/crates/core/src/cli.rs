//! Command-line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::geom2d::{ContactSource, Polygon, Vec2};
use crate::planner::{plan, Algorithm, PlanFailure, PlanOutcome, PlannerConfig, Trajectory};
use crate::scenes::{builtin_problem, replay_validate, Scene, Tolerances, BUILTIN_COUNT};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "modeplan", version, about = "Contact-mode guided planner for planar manipulation")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Plan one query and write the trajectory and a run report.
    Plan(PlanArgs),
    /// Run several seeds and print aggregate statistics.
    Bench(BenchArgs),
    /// Check a trajectory against a scene.
    Validate(ValidateArgs),
    /// Draw trajectory frames as SVG files.
    Render(RenderArgs),
}

#[derive(Debug, Clone, Args)]
struct SceneArgs {
    /// Scene file.
    #[arg(long, conflicts_with = "problem")]
    scene: Option<PathBuf>,
    /// Bundled problem number.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=BUILTIN_COUNT as i64))]
    problem: Option<u32>,
}

impl SceneArgs {
    fn load(&self) -> Result<Scene, String> {
        match (&self.scene, self.problem) {
            (Some(p), _) => Scene::load(p).map_err(|e| e.to_string()),
            (None, Some(k)) => Ok(builtin_problem(k as usize)),
            (None, None) => Err("one of --scene or --problem is required".into()),
        }
    }

    fn label(&self) -> String {
        match (&self.scene, self.problem) {
            (Some(p), _) => p.display().to_string(),
            (None, Some(k)) => format!("problem{k}"),
            _ => String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgorithmArg {
    Rrt,
    Complete,
}

#[derive(Debug, Clone, Args)]
struct PlannerArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "rrt")]
    algorithm: AlgorithmArg,
    /// Probability of sampling the goal pose.
    #[arg(long, default_value_t = 0.5)]
    goal_bias: f64,
    #[arg(long)]
    rotation_weight: Option<f64>,
    #[arg(long, default_value_t = 2000)]
    max_nodes: usize,
    /// Seconds.
    #[arg(long, default_value_t = 120.0)]
    time_limit: f64,
    #[arg(long, default_value_t = 0.0)]
    margin_threshold: f64,
}

impl PlannerArgs {
    fn config(&self, seed: u64) -> Result<PlannerConfig, String> {
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return Err("--goal-bias must lie in [0, 1]".into());
        }
        if self.rotation_weight.is_some_and(|w| !(w > 0.0 && w.is_finite())) {
            return Err("--rotation-weight must be positive".into());
        }
        if !(self.time_limit > 0.0 && self.time_limit.is_finite()) {
            return Err("--time-limit must be positive".into());
        }
        if !(self.margin_threshold >= 0.0) {
            return Err("--margin-threshold must be non-negative".into());
        }
        let mut cfg = PlannerConfig {
            goal_bias: self.goal_bias,
            rotation_weight: self.rotation_weight,
            max_nodes: self.max_nodes,
            time_limit: Some(Duration::from_secs_f64(self.time_limit)),
            seed,
            margin_threshold: self.margin_threshold,
            algorithm: match self.algorithm {
                AlgorithmArg::Rrt => Algorithm::Rrt,
                AlgorithmArg::Complete => Algorithm::CompleteTree,
            },
            ..PlannerConfig::default()
        };
        if cfg.margin_threshold > 0.0 {
            cfg.margin_strategy = crate::mechanics::StabilityStrategy::FanLp;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    planner: PlannerArgs,
    /// Trajectory output (line-delimited JSON). The report goes next to it
    /// with a `.report.json` suffix.
    #[arg(long, default_value = "trajectory.jsonl")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    planner: PlannerArgs,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// Explicit seeds; defaults to `seed, seed + 1, ...`.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Optional path for the JSON table (also printed to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    rotation_weight: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Svg,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long, value_enum, default_value = "svg")]
    format: Format,
    /// Draw every N-th record.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    every: u64,
    #[arg(long, default_value = "frames")]
    out_dir: PathBuf,
}

/// Summary of one planning run.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scene: String,
    pub seed: u64,
    pub success: bool,
    pub failure: Option<String>,
    pub wall_time_s: f64,
    pub nodes_in_tree: usize,
    pub nodes_in_path: usize,
    pub modes_in_path: usize,
    pub iterations: usize,
    pub replay_violations: usize,
    pub trajectory: Option<String>,
}

impl RunReport {
    fn from_result(
        scene: &Scene,
        label: &str,
        seed: u64,
        w_r: f64,
        res: &Result<PlanOutcome, PlanFailure>,
    ) -> Self {
        match res {
            Ok(o) => RunReport {
                scene: label.to_string(),
                seed,
                success: true,
                failure: None,
                wall_time_s: o.stats.elapsed_s,
                nodes_in_tree: o.stats.nodes,
                nodes_in_path: o.path.len(),
                modes_in_path: o.modes_in_path(),
                iterations: o.stats.iterations,
                replay_violations: replay_validate(scene, &o.trajectory, &Tolerances::for_scene(scene, w_r)).len(),
                trajectory: None,
            },
            Err(f) => RunReport {
                scene: label.to_string(),
                seed,
                success: false,
                failure: Some(format!("{:?}", f.reason)),
                wall_time_s: f.stats.elapsed_s,
                nodes_in_tree: f.stats.nodes,
                nodes_in_path: 0,
                modes_in_path: 0,
                iterations: f.stats.iterations,
                replay_violations: 0,
                trajectory: None,
            },
        }
    }
}

fn report_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".report.json");
    PathBuf::from(s)
}

fn cmd_plan(a: &PlanArgs) -> i32 {
    let scene = match a.scene.load() {
        Ok(s) => s,
        Err(e) => return input_error(&e),
    };
    let cfg = match a.planner.config(a.planner.seed) {
        Ok(c) => c,
        Err(e) => return input_error(&e),
    };
    let w_r = cfg.rotation_weight.unwrap_or_else(|| scene.default_rotation_weight());
    let res = plan(&scene, &cfg);
    let mut report = RunReport::from_result(&scene, &a.scene.label(), cfg.seed, w_r, &res);
    let traj = match &res {
        Ok(o) => o.trajectory.to_jsonl(),
        Err(_) => String::new(),
    };
    if res.is_ok() {
        report.trajectory = Some(a.out.display().to_string());
    }
    if let Err(e) = std::fs::write(&a.out, traj) {
        return input_error(&format!("cannot write {}: {e}", a.out.display()));
    }
    let rp = report_path(&a.out);
    let body = serde_json::to_string_pretty(&report).expect("reports serialise") + "\n";
    if let Err(e) = std::fs::write(&rp, body) {
        return input_error(&format!("cannot write {}: {e}", rp.display()));
    }
    match res {
        Ok(o) => {
            eprintln!(
                "solved in {:.2} s: {} nodes, path of {} nodes, {} records",
                o.stats.elapsed_s,
                o.stats.nodes,
                o.path.len(),
                o.trajectory.len()
            );
            EXIT_OK
        }
        Err(f) => {
            eprintln!("{f}");
            EXIT_FAILURE
        }
    }
}

/// Aggregate statistics over benchmark runs.
#[derive(Debug, Clone, Serialize)]
pub struct BenchTable {
    pub scene: String,
    pub runs: usize,
    pub successes: usize,
    pub time_min_s: f64,
    pub time_median_s: f64,
    pub time_max_s: f64,
    pub nodes_in_tree_median: f64,
    pub nodes_in_path_median: f64,
    pub modes_in_path_median: f64,
    pub replay_failures: usize,
    pub reports: Vec<RunReport>,
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

impl BenchTable {
    pub fn from_reports(scene: &str, reports: Vec<RunReport>) -> Self {
        let ok: Vec<&RunReport> = reports.iter().filter(|r| r.success).collect();
        // Statistics over successful runs, as in the usual tables; fall back
        // to all runs when none succeeded.
        let basis: Vec<&RunReport> = if ok.is_empty() { reports.iter().collect() } else { ok.clone() };
        let times: Vec<f64> = basis.iter().map(|r| r.wall_time_s).collect();
        let col = |f: fn(&RunReport) -> usize| median(&basis.iter().map(|r| f(r) as f64).collect::<Vec<_>>());
        BenchTable {
            scene: scene.to_string(),
            runs: reports.len(),
            successes: ok.len(),
            time_min_s: times.iter().copied().fold(f64::INFINITY, f64::min),
            time_median_s: median(&times),
            time_max_s: times.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            nodes_in_tree_median: col(|r| r.nodes_in_tree),
            nodes_in_path_median: col(|r| r.nodes_in_path),
            modes_in_path_median: col(|r| r.modes_in_path),
            replay_failures: ok.iter().filter(|r| r.replay_violations > 0).count(),
            reports,
        }
    }
}

fn cmd_bench(a: &BenchArgs) -> i32 {
    let scene = match a.scene.load() {
        Ok(s) => s,
        Err(e) => return input_error(&e),
    };
    if a.runs == 0 && a.seeds.is_empty() {
        return input_error("--runs must be at least 1");
    }
    let seeds: Vec<u64> = if a.seeds.is_empty() {
        (0..a.runs as u64).map(|i| a.planner.seed + i).collect()
    } else {
        a.seeds.clone()
    };
    let label = a.scene.label();
    let mut reports = Vec::new();
    for &seed in &seeds {
        let cfg = match a.planner.config(seed) {
            Ok(c) => c,
            Err(e) => return input_error(&e),
        };
        let w_r = cfg.rotation_weight.unwrap_or_else(|| scene.default_rotation_weight());
        let res = plan(&scene, &cfg);
        let r = RunReport::from_result(&scene, &label, seed, w_r, &res);
        eprintln!(
            "seed {seed}: {} in {:.2} s, {} nodes",
            if r.success { "solved" } else { "failed" },
            r.wall_time_s,
            r.nodes_in_tree
        );
        reports.push(r);
    }
    let table = BenchTable::from_reports(&label, reports);
    let body = serde_json::to_string_pretty(&table).expect("tables serialise") + "\n";
    print!("{body}");
    if let Some(out) = &a.out {
        if let Err(e) = std::fs::write(out, &body) {
            return input_error(&format!("cannot write {}: {e}", out.display()));
        }
    }
    EXIT_OK
}

fn read_trajectory(path: &Path) -> Result<Trajectory, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    Trajectory::from_jsonl(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_validate(a: &ValidateArgs) -> i32 {
    let scene = match a.scene.load() {
        Ok(s) => s,
        Err(e) => return input_error(&e),
    };
    let traj = match read_trajectory(&a.trajectory) {
        Ok(t) => t,
        Err(e) => return input_error(&e),
    };
    let w_r = a.rotation_weight.unwrap_or_else(|| scene.default_rotation_weight());
    let v = replay_validate(&scene, &traj, &Tolerances::for_scene(&scene, w_r));
    for x in &v {
        println!("{x}");
    }
    if v.is_empty() {
        println!("ok: {} records", traj.len());
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}

/// World-to-canvas mapping for SVG frames.
struct Canvas {
    x0: f64,
    y1: f64,
    scale: f64,
    width: f64,
    height: f64,
}

impl Canvas {
    fn new(scene: &Scene) -> Self {
        let (bx, by) = (scene.bounds.x, scene.bounds.y);
        let scale = 800.0 / (bx[1] - bx[0]).max(by[1] - by[0]);
        Canvas {
            x0: bx[0],
            y1: by[1],
            scale,
            width: (bx[1] - bx[0]) * scale,
            height: (by[1] - by[0]) * scale,
        }
    }

    fn pt(&self, p: &Vec2) -> (f64, f64) {
        ((p.x - self.x0) * self.scale, (self.y1 - p.y) * self.scale)
    }

    fn polygon(&self, out: &mut String, pts: impl Iterator<Item = Vec2>, style: &str) {
        let coords: Vec<String> = pts
            .map(|p| {
                let (x, y) = self.pt(&p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(out, r#"<polygon points="{}" {style}/>"#, coords.join(" "));
    }
}

/// One SVG frame for trajectory record `i`.
pub fn render_frame(scene: &Scene, traj: &Trajectory, i: usize) -> String {
    let c = Canvas::new(scene);
    let r = &traj.records[i];
    let q = r.pose();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.2} {:.2}">"#,
        c.width.ceil(),
        c.height.ceil(),
        c.width,
        c.height
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for e in &scene.environment {
        c.polygon(&mut s, e.vertices().iter().copied(), r##"fill="#b0b0b0" stroke="#505050""##);
    }
    let goal = &scene.goal;
    c.polygon(
        &mut s,
        scene.object.vertices().iter().map(|v| goal.transform_point(v)),
        r##"fill="none" stroke="#d04040" stroke-dasharray="4 3""##,
    );
    c.polygon(
        &mut s,
        scene.object.vertices().iter().map(|v| q.transform_point(v)),
        r##"fill="#9ec5ea" fill-opacity="0.6" stroke="#1f4e79" stroke-width="1.5""##,
    );
    let len = 0.1 * scene.diagonal();
    for ct in &r.contacts {
        let p = Vec2::new(ct.p[0], ct.p[1]);
        let n = Vec2::new(ct.n[0], ct.n[1]);
        let (x, y) = c.pt(&p);
        let (x2, y2) = c.pt(&(p + n * len));
        let colour = match ct.source {
            ContactSource::Environment => "#2e7d32",
            ContactSource::Manipulator(_) => "#c62828",
        };
        if let ContactSource::Manipulator(_) = ct.source {
            let tip = p - n * scene.fingers.radius;
            let (tx, ty) = c.pt(&tip);
            let _ = writeln!(
                s,
                r#"<circle cx="{tx:.2}" cy="{ty:.2}" r="{:.2}" fill="{colour}"/>"#,
                (scene.fingers.radius * c.scale).max(3.0)
            );
        }
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{colour}" stroke-width="1.5"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" fill="{colour}">{}</text>"#,
            x + 4.0,
            y - 4.0,
            ct.mode_label.short()
        );
    }
    let _ = writeln!(
        s,
        r##"<text x="8" y="16" font-size="14" fill="#000000">{} record {} t={:.4}</text>"##,
        scene.name, i, r.t
    );
    s.push_str("</svg>\n");
    s
}

/// Rejects trajectories whose contacts cannot belong to the scene.
fn check_matches_scene(scene: &Scene, traj: &Trajectory) -> Result<(), String> {
    let slack = 10.0 * scene.d_contact() + 1e-6 * scene.diagonal();
    for (i, r) in traj.records.iter().enumerate() {
        let q = r.pose();
        for ct in &r.contacts {
            let p = Vec2::new(ct.p[0], ct.p[1]);
            if scene.object.signed_distance(&q.inverse_transform_point(&p)).abs() > slack {
                return Err(format!("record {i}: contact at ({:.4}, {:.4}) is off the object", p.x, p.y));
            }
            match ct.source {
                ContactSource::Environment => {
                    let near = scene.environment.iter().any(|e: &Polygon| e.signed_distance(&p).abs() <= slack);
                    if !near {
                        return Err(format!("record {i}: no environment near contact ({:.4}, {:.4})", p.x, p.y));
                    }
                }
                ContactSource::Manipulator(k) if k >= scene.fingers.count => {
                    return Err(format!("record {i}: finger {k} does not exist"));
                }
                ContactSource::Manipulator(_) => {}
            }
        }
    }
    Ok(())
}

/// Indices of the records drawn when every `every`-th record is rendered.
pub fn frame_indices(records: usize, every: usize) -> Vec<usize> {
    (0..records).step_by(every.max(1)).collect()
}

fn cmd_render(a: &RenderArgs) -> i32 {
    let scene = match a.scene.load() {
        Ok(s) => s,
        Err(e) => return input_error(&e),
    };
    let traj = match read_trajectory(&a.trajectory) {
        Ok(t) => t,
        Err(e) => return input_error(&e),
    };
    if let Err(e) = check_matches_scene(&scene, &traj) {
        return input_error(&e);
    }
    if let Err(e) = std::fs::create_dir_all(&a.out_dir) {
        return input_error(&format!("cannot create {}: {e}", a.out_dir.display()));
    }
    let Format::Svg = a.format;
    let frames = frame_indices(traj.len(), a.every as usize);
    for (f, &i) in frames.iter().enumerate() {
        let path = a.out_dir.join(format!("frame_{f:05}.svg"));
        if let Err(e) = std::fs::write(&path, render_frame(&scene, &traj, i)) {
            return input_error(&format!("cannot write {}: {e}", path.display()));
        }
    }
    eprintln!("wrote {} frames to {}", frames.len(), a.out_dir.display());
    EXIT_OK
}

fn input_error(msg: &str) -> i32 {
    eprintln!("error: {msg}");
    EXIT_INPUT
}

/// Runs the command line `args` (including the program name) and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match &cli.cmd {
        Command::Plan(a) => cmd_plan(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Render(a) => cmd_render(a),
    }
}

/// Sets up logging from `MODEPLAN_LOG` (error, warn, info or debug).
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("MODEPLAN_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}
