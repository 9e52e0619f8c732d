use super::{cross, GeometryError, Vec2};

/// A simple polygon with counter-clockwise vertices. May be non-convex.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Vec2>,
}

fn signed_area_of(vertices: &[Vec2]) -> f64 {
    let n = vertices.len();
    (0..n)
        .map(|i| cross(&vertices[i], &vertices[(i + 1) % n]))
        .sum::<f64>()
        * 0.5
}

/// Proper or touching intersection of segments ab and cd.
fn segments_intersect(a: &Vec2, b: &Vec2, c: &Vec2, d: &Vec2) -> bool {
    let orient = |p: &Vec2, q: &Vec2, r: &Vec2| cross(&(q - p), &(r - p));
    let on_segment = |p: &Vec2, q: &Vec2, r: &Vec2| {
        r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

impl Polygon {
    /// Builds a validated polygon. Clockwise input is reversed.
    pub fn new(vertices: Vec<Vec2>) -> Result<Self, GeometryError> {
        Self::new_reporting(vertices).map(|(p, _)| p)
    }

    /// Like [`Polygon::new`], also reporting whether the input was clockwise
    /// and had to be reversed.
    pub fn new_reporting(mut vertices: Vec<Vec2>) -> Result<(Self, bool), GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let n = vertices.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(
                    &vertices[i],
                    &vertices[(i + 1) % n],
                    &vertices[j],
                    &vertices[(j + 1) % n],
                ) {
                    return Err(GeometryError::SelfIntersecting(i, j));
                }
            }
        }
        let area = signed_area_of(&vertices);
        let scale = vertices
            .iter()
            .map(|v| v.norm())
            .fold(0.0f64, f64::max)
            .max(1e-300);
        if area.abs() <= 1e-12 * scale * scale {
            return Err(GeometryError::Degenerate);
        }
        let reversed = area < 0.0;
        if reversed {
            vertices.reverse();
        }
        Ok((Self { vertices }, reversed))
    }

    /// Axis-aligned rectangle centred at `center`.
    pub fn rectangle(center: Vec2, width: f64, height: f64) -> Self {
        let (hw, hh) = (0.5 * width, 0.5 * height);
        Self::new(vec![
            center + Vec2::new(-hw, -hh),
            center + Vec2::new(hw, -hh),
            center + Vec2::new(hw, hh),
            center + Vec2::new(-hw, hh),
        ])
        .expect("rectangle with positive extent")
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertex(&self, i: usize) -> Vec2 {
        self.vertices[i % self.vertices.len()]
    }

    /// Edge `i` runs from vertex `i` to vertex `i + 1`.
    pub fn edge(&self, i: usize) -> (Vec2, Vec2) {
        (self.vertex(i), self.vertex(i + 1))
    }

    pub fn edge_length(&self, i: usize) -> f64 {
        let (a, b) = self.edge(i);
        (b - a).norm()
    }

    /// Outward unit normal of edge `i`.
    pub fn outward_normal(&self, i: usize) -> Vec2 {
        let (a, b) = self.edge(i);
        let d = (b - a).normalize();
        Vec2::new(d.y, -d.x)
    }

    pub fn signed_area(&self) -> f64 {
        signed_area_of(&self.vertices)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn centroid(&self) -> Vec2 {
        let n = self.vertices.len();
        let mut c = Vec2::zeros();
        let mut a2 = 0.0;
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let w = cross(&p, &q);
            a2 += w;
            c += (p + q) * w;
        }
        c / (3.0 * a2)
    }

    pub fn perimeter(&self) -> f64 {
        (0..self.len()).map(|i| self.edge_length(i)).sum()
    }

    /// (min, max) corners of the bounding box.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn bounding_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounds();
        (hi - lo).norm()
    }

    /// Even-odd point containment (boundary points may go either way).
    pub fn contains(&self, p: &Vec2) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let vi = self.vertices[i];
            let vj = self.vertices[j];
            if (vi.y > p.y) != (vj.y > p.y) {
                let x = vj.x + (p.y - vj.y) / (vi.y - vj.y) * (vi.x - vj.x);
                if p.x < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    /// Closest boundary point: (distance, point, edge index, edge parameter).
    pub fn closest_boundary_point(&self, p: &Vec2) -> (f64, Vec2, usize, f64) {
        let mut best = (f64::INFINITY, Vec2::zeros(), 0, 0.0);
        for i in 0..self.len() {
            let (a, b) = self.edge(i);
            let ab = b - a;
            let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let c = a + ab * t;
            let d = (p - c).norm();
            if d < best.0 {
                best = (d, c, i, t);
            }
        }
        best
    }

    /// Signed distance to the boundary: negative inside.
    pub fn signed_distance(&self, p: &Vec2) -> f64 {
        let (d, ..) = self.closest_boundary_point(p);
        if self.contains(p) {
            -d
        } else {
            d
        }
    }

    /// Maps a perimeter arclength in [0, perimeter) restricted to the listed
    /// edges onto (edge, parameter). `edges` must be non-empty.
    pub fn locate_arclength(&self, edges: &[usize], s: f64) -> (usize, f64) {
        let mut rest = s.max(0.0);
        for &e in edges {
            let l = self.edge_length(e);
            if rest <= l {
                return (e, rest / l);
            }
            rest -= l;
        }
        let last = *edges.last().expect("non-empty edge list");
        (last, 1.0)
    }

    pub fn point_on_edge(&self, edge: usize, t: f64) -> Vec2 {
        let (a, b) = self.edge(edge);
        a + (b - a) * t
    }

    /// Returns a transformed copy (vertices mapped by `f`), keeping orientation.
    pub fn map(&self, f: impl Fn(&Vec2) -> Vec2) -> Polygon {
        Polygon {
            vertices: self.vertices.iter().map(f).collect(),
        }
    }
}
