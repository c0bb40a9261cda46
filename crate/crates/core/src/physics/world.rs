use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, segments_intersect, Vec2};

/// Default ball radius in pixels.
pub const DEFAULT_RADIUS: f64 = 25.0;

/// Overlap tolerated between touching bodies.
pub const PENETRATION_EPS: f64 = 1e-9;

/// Forces applied at the first frame, keyed by ball id.
pub type ForceMap = BTreeMap<usize, Vec2>;

/// Uniform-density mass, normalised so a ball of the default radius weighs 1.
pub fn mass_for_radius(radius: f64) -> f64 {
    (radius / DEFAULT_RADIUS).powi(2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub id: usize,
    pub center: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
    pub mass: f64,
}

impl Ball {
    pub fn new(id: usize, center: Vec2, velocity: Vec2) -> Self {
        Ball { id, center, velocity, radius: DEFAULT_RADIUS, mass: 1.0 }
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self.mass = mass_for_radius(radius);
        self
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.mass * self.velocity.norm_sq()
    }
}

/// Closed simple polygon whose edges are the walls. Vertices are stored in
/// counter-clockwise order so every inward normal is the left perpendicular.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct Table {
    vertices: Vec<Vec2>,
    min: Vec2,
    max: Vec2,
    normals: Vec<Vec2>,
    reflex: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    vertices: Vec<Vec2>,
}

impl TryFrom<TableRepr> for Table {
    type Error = Error;
    fn try_from(r: TableRepr) -> Result<Self> {
        Table::new(r.vertices)
    }
}

impl From<Table> for TableRepr {
    fn from(t: Table) -> Self {
        TableRepr { vertices: t.vertices }
    }
}

impl Table {
    /// Builds a table from polygon vertices in either orientation.
    pub fn new(mut vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidState("a table needs at least 3 vertices".into()));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("table vertex"));
        }
        let area = signed_area(&vertices);
        if area.abs() <= f64::EPSILON {
            return Err(Error::InvalidState("table polygon has empty interior".into()));
        }
        if area < 0.0 {
            vertices.reverse();
        }
        let n = vertices.len();
        for i in 0..n {
            if vertices[i] == vertices[(i + 1) % n] {
                return Err(Error::InvalidState("repeated table vertex".into()));
            }
        }
        // Non-adjacent edges must not touch.
        for i in 0..n {
            for j in (i + 2)..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                let (c, d) = (vertices[j], vertices[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return Err(Error::InvalidState(format!("table edges {i} and {j} intersect")));
                }
            }
        }
        let mut min = vertices[0];
        let mut max = vertices[0];
        for v in &vertices {
            min = Vec2::new(min.x.min(v.x), min.y.min(v.y));
            max = Vec2::new(max.x.max(v.x), max.y.max(v.y));
        }
        let normals = (0..n)
            .map(|i| {
                let d = vertices[(i + 1) % n] - vertices[i];
                d.perp() / d.norm()
            })
            .collect();
        let reflex = (0..n)
            .map(|i| {
                let prev = vertices[(i + n - 1) % n];
                let next = vertices[(i + 1) % n];
                (vertices[i] - prev).cross(next - vertices[i]) < 0.0
            })
            .collect();
        Ok(Table { vertices, min, max, normals, reflex })
    }

    /// Axis-aligned `width` x `height` box with its lower-left corner at the origin.
    pub fn rectangle(width: f64, height: f64) -> Result<Self> {
        Table::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(width, 0.0),
            Vec2::new(width, height),
            Vec2::new(0.0, height),
        ])
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn num_edges(&self) -> usize {
        self.vertices.len()
    }

    /// Edge `i` runs from vertex `i` to vertex `i + 1`.
    pub fn edge(&self, i: usize) -> (Vec2, Vec2) {
        (self.vertices[i], self.vertices[(i + 1) % self.vertices.len()])
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        (0..self.vertices.len()).map(move |i| self.edge(i))
    }

    /// Unit normal of edge `i` pointing into the table.
    pub fn inward_normal(&self, i: usize) -> Vec2 {
        self.normals[i]
    }

    /// True when the interior angle at vertex `i` exceeds 180 degrees.
    pub fn is_reflex(&self, i: usize) -> bool {
        self.reflex[i]
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        (self.min, self.max)
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    /// Even-odd point-in-polygon test.
    pub fn contains(&self, p: Vec2) -> bool {
        let mut inside = false;
        let n = self.vertices.len();
        let mut j = n - 1;
        for i in 0..n {
            let (vi, vj) = (self.vertices[i], self.vertices[j]);
            if (vi.y > p.y) != (vj.y > p.y) {
                let x = vj.x + (p.y - vj.y) * (vi.x - vj.x) / (vi.y - vj.y);
                if p.x < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn distance_to_boundary(&self, p: Vec2) -> f64 {
        self.edges().map(|(a, b)| point_segment_distance(p, a, b)).fold(f64::INFINITY, f64::min)
    }

    /// Signed clearance: positive inside, negative outside.
    pub fn clearance(&self, p: Vec2) -> f64 {
        let d = self.distance_to_boundary(p);
        if self.contains(p) {
            d
        } else {
            -d
        }
    }

    pub fn translated(&self, offset: Vec2) -> Table {
        let mut t = self.clone();
        for v in &mut t.vertices {
            *v += offset;
        }
        t.min += offset;
        t.max += offset;
        t
    }
}

fn signed_area(vertices: &[Vec2]) -> f64 {
    let n = vertices.len();
    (0..n).map(|i| vertices[i].cross(vertices[(i + 1) % n])).sum::<f64>() * 0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsParams {
    pub restitution: f64,
    /// Fraction of velocity removed at the end of every step.
    pub damping: f64,
    /// Velocity change in px/step produced by one Newton of impulse.
    pub impulse_scale: f64,
    pub max_events_per_step: usize,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        PhysicsParams {
            restitution: 1.0,
            damping: 0.0,
            impulse_scale: 1.0 / 8000.0,
            max_events_per_step: 8,
        }
    }
}

impl PhysicsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.restitution > 0.0 && self.restitution <= 1.0) {
            return Err(Error::InvalidConfig(format!("restitution {} not in (0, 1]", self.restitution)));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidConfig(format!("damping {} not in [0, 1)", self.damping)));
        }
        if !(self.impulse_scale > 0.0 && self.impulse_scale.is_finite()) {
            return Err(Error::InvalidConfig("impulse scale must be positive".into()));
        }
        if self.max_events_per_step == 0 {
            return Err(Error::InvalidConfig("max_events_per_step must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub balls: Vec<Ball>,
    pub table: Table,
    pub t: usize,
}

impl WorldState {
    pub fn new(table: Table, balls: Vec<Ball>) -> Self {
        WorldState { balls, table, t: 0 }
    }

    pub fn ball(&self, id: usize) -> Result<&Ball> {
        self.balls.iter().find(|b| b.id == id).ok_or(Error::UnknownBall(id))
    }

    pub fn ball_index(&self, id: usize) -> Result<usize> {
        self.balls.iter().position(|b| b.id == id).ok_or(Error::UnknownBall(id))
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.balls.iter().map(Ball::kinetic_energy).sum()
    }

    pub fn momentum(&self) -> Vec2 {
        self.balls.iter().fold(Vec2::ZERO, |acc, b| acc + b.velocity * b.mass)
    }

    /// Checks containment, non-overlap and parameter sanity with tolerance `tol` px.
    pub fn validate_with(&self, tol: f64) -> Result<()> {
        for (k, b) in self.balls.iter().enumerate() {
            if !(b.center.is_finite() && b.velocity.is_finite()) {
                return Err(Error::NonFiniteInput("ball kinematics"));
            }
            if !(b.radius > 0.0 && b.mass > 0.0) {
                return Err(Error::InvalidState(format!("ball {} has non-positive radius or mass", b.id)));
            }
            if self.balls[..k].iter().any(|o| o.id == b.id) {
                return Err(Error::InvalidState(format!("duplicate ball id {}", b.id)));
            }
            let clearance = self.table.clearance(b.center);
            if clearance < b.radius - tol {
                return Err(Error::InvalidState(format!(
                    "ball {} has clearance {clearance} < radius {}",
                    b.id, b.radius
                )));
            }
        }
        for i in 0..self.balls.len() {
            for j in (i + 1)..self.balls.len() {
                let (a, b) = (&self.balls[i], &self.balls[j]);
                let d = a.center.distance(b.center);
                if d < a.radius + b.radius - tol {
                    return Err(Error::InvalidState(format!("balls {} and {} overlap", a.id, b.id)));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(PENETRATION_EPS)
    }

    pub fn translated(&self, offset: Vec2) -> WorldState {
        let mut s = self.clone();
        s.table = self.table.translated(offset);
        for b in &mut s.balls {
            b.center += offset;
        }
        s
    }

    pub fn centers(&self) -> Vec<Vec2> {
        self.balls.iter().map(|b| b.center).collect()
    }

    pub fn velocities(&self) -> Vec<Vec2> {
        self.balls.iter().map(|b| b.velocity).collect()
    }
}
