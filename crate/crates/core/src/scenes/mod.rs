//! Scene description: object, environment, friction, fingers and the
//! start/goal query, with a TOML file format.

mod builtin;
mod replay;

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom2d::{cross, min_signed_distance, GeometryError, Polygon, Pose, Vec2};
use crate::mechanics::ExternalLoad;

pub use builtin::{builtin_problem, builtin_source, BUILTIN_COUNT};
pub use replay::{replay_validate, Tolerances, Violation, ViolationKind};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{path}: {source}")]
    Geometry {
        path: String,
        source: GeometryError,
    },
    #[error("start pose penetrates the environment (depth {0:.3e})")]
    PenetratingStart(f64),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn schema(path: &str, msg: impl std::fmt::Display) -> SceneError {
    SceneError::Schema(format!("{path}: {msg}"))
}

/// What keeps the object in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Plane {
    /// Vertical plane, gravity along world −y with acceleration `g`.
    Gravity { g: f64 },
    /// Horizontal support surface with Coulomb coefficient `mu_support`
    /// under normal load `mass · g`.
    Tabletop { mu_support: f64, g: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FingerSpec {
    pub count: usize,
    /// Fingertip disk radius used for collision checks; zero for point
    /// fingers.
    pub radius: f64,
    /// Optional bound on each fingertip's normal force.
    pub max_force: Option<f64>,
    /// Optional per-finger world-frame regions the fingertip must stay in.
    pub workspaces: Option<Vec<Polygon>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GoalRegion {
    /// Weighted-metric ball around the goal pose.
    Ball { tolerance: f64 },
    /// Axis-aligned box in (x, y, θ); θ bounds are offsets from the goal angle.
    Box {
        x: [f64; 2],
        y: [f64; 2],
        theta: [f64; 2],
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub theta: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: String,
    pub object: Polygon,
    pub mass: f64,
    /// Centre of mass in the object frame.
    pub com: Vec2,
    /// Object edges fingers may touch.
    pub finger_faces: Vec<usize>,
    pub environment: Vec<Polygon>,
    pub plane: Plane,
    pub mu_env: f64,
    pub mu_mnp: f64,
    pub fingers: FingerSpec,
    pub start: Pose,
    pub goal: Pose,
    pub goal_region: GoalRegion,
    pub bounds: Bounds,
    /// Non-fatal normalisations applied while loading.
    pub warnings: Vec<String>,
}

// ---------------------------------------------------------------------------
// File format

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    units: Option<UnitsDoc>,
    object: ObjectDoc,
    #[serde(default)]
    environment: Vec<PolygonDoc>,
    plane: PlaneDoc,
    friction: FrictionDoc,
    fingers: FingersDoc,
    start: PoseDoc,
    goal: GoalDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bounds: Option<BoundsDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitsDoc {
    length: String,
    angle: String,
    force: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectDoc {
    vertices: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    com: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    finger_faces: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolygonDoc {
    vertices: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum PlaneDoc {
    Gravity {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        g: Option<f64>,
    },
    Tabletop {
        mu_support: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        g: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrictionDoc {
    env: f64,
    mnp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FingersDoc {
    count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_force: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    workspaces: Option<Vec<PolygonDoc>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseDoc {
    x: f64,
    y: f64,
    theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalDoc {
    x: f64,
    y: f64,
    theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    region: Option<BoundsDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsDoc {
    x: [f64; 2],
    y: [f64; 2],
    theta: [f64; 2],
}

fn to_points(v: &[[f64; 2]]) -> Vec<Vec2> {
    v.iter().map(|p| Vec2::new(p[0], p[1])).collect()
}

fn from_points(p: &Polygon) -> Vec<[f64; 2]> {
    p.vertices().iter().map(|v| [v.x, v.y]).collect()
}

fn polygon_at(path: &str, v: &[[f64; 2]], warnings: &mut Vec<String>) -> Result<(Polygon, bool), SceneError> {
    let (poly, reversed) = Polygon::new_reporting(to_points(v)).map_err(|source| SceneError::Geometry {
        path: path.to_string(),
        source,
    })?;
    if reversed {
        warnings.push(format!("{path}: clockwise vertices reversed to counter-clockwise"));
    }
    Ok((poly, reversed))
}

fn check_range(path: &str, r: [f64; 2]) -> Result<(), SceneError> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
        return Err(schema(path, format!("invalid interval [{}, {}]", r[0], r[1])));
    }
    Ok(())
}

fn nonneg(path: &str, v: f64) -> Result<f64, SceneError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(schema(path, format!("must be finite and non-negative, got {v}")))
    }
}

fn positive(path: &str, v: f64) -> Result<f64, SceneError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(schema(path, format!("must be finite and positive, got {v}")))
    }
}

impl Scene {
    /// Parses and validates a TOML scene document.
    pub fn from_toml_str(text: &str) -> Result<Scene, SceneError> {
        let doc: SceneDoc = toml::from_str(text).map_err(|e| SceneError::Schema(e.to_string()))?;
        Scene::from_doc(doc)
    }

    pub fn load(path: &Path) -> Result<Scene, SceneError> {
        let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scene::from_toml_str(&text)
    }

    fn from_doc(doc: SceneDoc) -> Result<Scene, SceneError> {
        if doc.version != SCHEMA_VERSION {
            return Err(schema("version", format!("unsupported version {}", doc.version)));
        }
        if let Some(u) = &doc.units {
            if u.angle != "rad" {
                return Err(schema("units.angle", "only \"rad\" is supported"));
            }
        }
        let mut warnings = Vec::new();
        let (object, reversed) = polygon_at("object.vertices", &doc.object.vertices, &mut warnings)?;
        let n = object.len();
        let mass = positive("object.mass", doc.object.mass.unwrap_or(1.0))?;
        let com = match doc.object.com {
            Some(c) => Vec2::new(c[0], c[1]),
            None => object.centroid(),
        };
        if !object.contains(&com) && object.signed_distance(&com).abs() > 1e-9 {
            warnings.push("object.com: centre of mass lies outside the polygon".to_string());
        }
        let finger_faces = match doc.object.finger_faces {
            Some(faces) => {
                if faces.is_empty() {
                    return Err(schema("object.finger_faces", "must not be empty"));
                }
                let mut out = Vec::with_capacity(faces.len());
                for &f in &faces {
                    if f >= n {
                        return Err(schema("object.finger_faces", format!("edge {f} out of range")));
                    }
                    // Reversal maps edge i to edge n-2-i.
                    out.push(if reversed { (2 * n - 2 - f) % n } else { f });
                }
                out.sort_unstable();
                out.dedup();
                out
            }
            None => (0..n).collect(),
        };
        let mut environment = Vec::with_capacity(doc.environment.len());
        for (i, e) in doc.environment.iter().enumerate() {
            environment.push(polygon_at(&format!("environment[{i}].vertices"), &e.vertices, &mut warnings)?.0);
        }
        let plane = match doc.plane {
            PlaneDoc::Gravity { g } => Plane::Gravity {
                g: positive("plane.g", g.unwrap_or(1.0))?,
            },
            PlaneDoc::Tabletop { mu_support, g } => Plane::Tabletop {
                mu_support: positive("plane.mu_support", mu_support)?,
                g: positive("plane.g", g.unwrap_or(1.0))?,
            },
        };
        let mu_env = nonneg("friction.env", doc.friction.env)?;
        let mu_mnp = nonneg("friction.mnp", doc.friction.mnp)?;
        if doc.fingers.count == 0 {
            return Err(schema("fingers.count", "at least one finger is required"));
        }
        let diag = object.bounding_diagonal();
        let workspaces = match &doc.fingers.workspaces {
            Some(ws) => {
                if ws.len() != doc.fingers.count {
                    return Err(schema(
                        "fingers.workspaces",
                        format!("expected {} regions, got {}", doc.fingers.count, ws.len()),
                    ));
                }
                let mut out = Vec::new();
                for (i, w) in ws.iter().enumerate() {
                    out.push(polygon_at(&format!("fingers.workspaces[{i}].vertices"), &w.vertices, &mut warnings)?.0);
                }
                Some(out)
            }
            None => None,
        };
        let fingers = FingerSpec {
            count: doc.fingers.count,
            radius: nonneg("fingers.radius", doc.fingers.radius.unwrap_or(0.0))?,
            max_force: doc
                .fingers
                .max_force
                .map(|f| positive("fingers.max_force", f))
                .transpose()?,
            workspaces,
        };
        let pose = |path: &str, p: PoseDoc| -> Result<Pose, SceneError> {
            let q = Pose::new(p.x, p.y, p.theta);
            if !q.is_finite() {
                return Err(schema(path, "non-finite pose"));
            }
            Ok(q)
        };
        let start = pose("start", doc.start)?;
        let goal = pose("goal", PoseDoc {
            x: doc.goal.x,
            y: doc.goal.y,
            theta: doc.goal.theta,
        })?;
        let goal_region = match (doc.goal.region, doc.goal.tolerance) {
            (Some(_), Some(_)) => {
                return Err(schema("goal", "give either tolerance or region, not both"));
            }
            (Some(r), None) => {
                check_range("goal.region.x", r.x)?;
                check_range("goal.region.y", r.y)?;
                check_range("goal.region.theta", r.theta)?;
                GoalRegion::Box {
                    x: r.x,
                    y: r.y,
                    theta: r.theta,
                }
            }
            (None, t) => GoalRegion::Ball {
                tolerance: positive("goal.tolerance", t.unwrap_or(0.05 * diag))?,
            },
        };
        let bounds = match doc.bounds {
            Some(b) => {
                check_range("bounds.x", b.x)?;
                check_range("bounds.y", b.y)?;
                check_range("bounds.theta", b.theta)?;
                Bounds {
                    x: b.x,
                    y: b.y,
                    theta: b.theta,
                }
            }
            None => default_bounds(&environment, &start, &goal, diag),
        };
        for (name, q) in [("start", &start), ("goal", &goal)] {
            let inside = q.x >= bounds.x[0] && q.x <= bounds.x[1] && q.y >= bounds.y[0] && q.y <= bounds.y[1];
            if !inside {
                return Err(schema("bounds", format!("{name} pose lies outside the sampling bounds")));
            }
        }
        let scene = Scene {
            name: doc.name.unwrap_or_else(|| "unnamed".to_string()),
            object,
            mass,
            com,
            finger_faces,
            environment,
            plane,
            mu_env,
            mu_mnp,
            fingers,
            start,
            goal,
            goal_region,
            bounds,
            warnings,
        };
        let depth = min_signed_distance(&scene.object, &scene.start, &scene.environment);
        if depth < -scene.d_contact() {
            return Err(SceneError::PenetratingStart(-depth));
        }
        for w in &scene.warnings {
            log::warn!("{w}");
        }
        Ok(scene)
    }

    fn to_doc(&self) -> SceneDoc {
        let plane = match self.plane {
            Plane::Gravity { g } => PlaneDoc::Gravity { g: Some(g) },
            Plane::Tabletop { mu_support, g } => PlaneDoc::Tabletop {
                mu_support,
                g: Some(g),
            },
        };
        let (tolerance, region) = match self.goal_region {
            GoalRegion::Ball { tolerance } => (Some(tolerance), None),
            GoalRegion::Box { x, y, theta } => (None, Some(BoundsDoc { x, y, theta })),
        };
        SceneDoc {
            version: SCHEMA_VERSION,
            name: Some(self.name.clone()),
            units: Some(UnitsDoc {
                length: "scene".to_string(),
                angle: "rad".to_string(),
                force: "scene".to_string(),
            }),
            object: ObjectDoc {
                vertices: from_points(&self.object),
                mass: Some(self.mass),
                com: Some([self.com.x, self.com.y]),
                finger_faces: Some(self.finger_faces.clone()),
            },
            environment: self
                .environment
                .iter()
                .map(|p| PolygonDoc {
                    vertices: from_points(p),
                })
                .collect(),
            plane,
            friction: FrictionDoc {
                env: self.mu_env,
                mnp: self.mu_mnp,
            },
            fingers: FingersDoc {
                count: self.fingers.count,
                radius: Some(self.fingers.radius),
                max_force: self.fingers.max_force,
                workspaces: self.fingers.workspaces.as_ref().map(|ws| {
                    ws.iter()
                        .map(|p| PolygonDoc {
                            vertices: from_points(p),
                        })
                        .collect()
                }),
            },
            start: PoseDoc {
                x: self.start.x,
                y: self.start.y,
                theta: self.start.theta,
            },
            goal: GoalDoc {
                x: self.goal.x,
                y: self.goal.y,
                theta: self.goal.theta,
                tolerance,
                region,
            },
            bounds: Some(BoundsDoc {
                x: self.bounds.x,
                y: self.bounds.y,
                theta: self.bounds.theta,
            }),
        }
    }

    /// Serialises with every default made explicit.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_doc()).expect("scene documents always serialise")
    }

    /// Object bounding-box diagonal, the scene's length scale.
    pub fn diagonal(&self) -> f64 {
        self.object.bounding_diagonal()
    }

    pub fn d_contact(&self) -> f64 {
        1e-3 * self.diagonal()
    }

    pub fn default_step(&self) -> f64 {
        0.02 * self.diagonal()
    }

    pub fn default_rotation_weight(&self) -> f64 {
        self.diagonal() / PI
    }

    pub fn weight(&self) -> f64 {
        match self.plane {
            Plane::Gravity { g } | Plane::Tabletop { g, .. } => self.mass * g,
        }
    }

    pub fn external_load(&self) -> ExternalLoad {
        let com = [self.com.x, self.com.y];
        match self.plane {
            Plane::Gravity { .. } => ExternalLoad::Gravity {
                weight: self.weight(),
                com,
            },
            Plane::Tabletop { mu_support, .. } => ExternalLoad::Tabletop {
                friction_force: mu_support * self.weight(),
                radius: radius_of_gyration(&self.object, &self.com),
                com,
            },
        }
    }

    /// Goal-region membership under rotation weight `w_r`.
    pub fn in_goal(&self, q: &Pose, w_r: f64) -> bool {
        match self.goal_region {
            GoalRegion::Ball { tolerance } => {
                crate::planner::weighted_se2_distance(q, &self.goal, w_r) <= tolerance
            }
            GoalRegion::Box { x, y, theta } => {
                let dth = crate::geom2d::normalize_angle(q.theta - self.goal.theta);
                q.x >= x[0] && q.x <= x[1] && q.y >= y[0] && q.y <= y[1] && dth >= theta[0] && dth <= theta[1]
            }
        }
    }

    /// Whether a fingertip disk centred at world point `c` stays out of the
    /// environment (up to the contact band) and inside finger `k`'s workspace.
    pub fn fingertip_admissible(&self, k: usize, c: &Vec2) -> bool {
        self.fingertip_clear(k, c, -self.d_contact())
    }

    /// Like [`Scene::fingertip_admissible`] with an explicit clearance
    /// between the disk and the environment.
    pub fn fingertip_clear(&self, k: usize, c: &Vec2, clearance: f64) -> bool {
        let r = self.fingers.radius;
        let clear = self.environment.iter().all(|e| e.signed_distance(c) >= r + clearance);
        let in_ws = match &self.fingers.workspaces {
            Some(ws) => ws.get(k).is_some_and(|w| w.contains(c)),
            None => true,
        };
        clear && in_ws
    }
}

fn default_bounds(env: &[Polygon], start: &Pose, goal: &Pose, diag: f64) -> Bounds {
    let mut lo = Vec2::new(start.x.min(goal.x), start.y.min(goal.y));
    let mut hi = Vec2::new(start.x.max(goal.x), start.y.max(goal.y));
    for e in env {
        let (a, b) = e.bounds();
        lo = lo.inf(&a);
        hi = hi.sup(&b);
    }
    Bounds {
        x: [lo.x - diag, hi.x + diag],
        y: [lo.y - diag, hi.y + diag],
        theta: [-PI, PI],
    }
}

/// Radius of gyration of the polygon's area about `c`.
pub fn radius_of_gyration(p: &Polygon, c: &Vec2) -> f64 {
    let n = p.len();
    let mut j = 0.0;
    let mut a2 = 0.0;
    for i in 0..n {
        let u = p.vertex(i) - c;
        let v = p.vertex((i + 1) % n) - c;
        let w = cross(&u, &v);
        a2 += w;
        j += w * (u.dot(&u) + u.dot(&v) + v.dot(&v));
    }
    (j / 12.0 / (a2 / 2.0)).abs().sqrt()
}
