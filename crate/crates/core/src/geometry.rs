//! Bounded open domains, the boundary queries the game rules need, and
//! boundary payoff functions.
//!
//! `dist_to_boundary` is signed: positive inside the domain, zero on the
//! boundary and negative outside, so `contains(x)` is exactly `dist > 0`.
//! Inside the domain the value is the exact Euclidean distance to the
//! complement for every kind.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calculus::{radial_value, ScalarField};
use crate::vector::{direction_set, Vector};

/// Number of ray directions used to enumerate reachable exit points.
pub const EXIT_DIRECTIONS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("point is at distance {dist} from the boundary, beyond the exit budget {budget}")]
    BeyondBudget { dist: f64, budget: f64 },
    #[error("point has dimension {got}, domain has dimension {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

/// Solid cone with tip on the sphere, pointing at the ball's center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cone {
    pub tip: Vector,
    /// Unit axis pointing from the tip into the cone.
    pub axis: Vector,
    pub half_angle: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DomainKind {
    Ball {
        center: Vector,
        radius: f64,
    },
    /// `{ inner < |x - center| < outer }`.
    Annulus {
        center: Vector,
        inner: f64,
        outer: f64,
    },
    Box {
        min: Vector,
        max: Vector,
    },
    /// `B(center, radius)` minus the closed ball of radius `core`; with
    /// `core = 0` only the center is removed.
    PuncturedBall {
        center: Vector,
        radius: f64,
        core: f64,
    },
    /// `B(center, radius)` minus a closed solid cone with tip on the sphere.
    ConeComplement {
        center: Vector,
        radius: f64,
        cone: Cone,
    },
    /// Simple polygon in the plane, vertices in either orientation.
    Polygon2d {
        vertices: Vec<Vector>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    kind: DomainKind,
    dim: usize,
}

fn check_dim(v: &Vector, dim: usize) -> Result<(), GeometryError> {
    if v.dim() != dim {
        return Err(GeometryError::DimensionMismatch {
            got: v.dim(),
            expected: dim,
        });
    }
    Ok(())
}

fn positive(name: &str, value: f64) -> Result<(), GeometryError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(GeometryError::InvalidDomain(format!(
            "{name} must be positive and finite, got {value}"
        )))
    }
}

impl Domain {
    pub fn new(kind: DomainKind) -> Result<Self, GeometryError> {
        let dim = match &kind {
            DomainKind::Ball { center, radius } => {
                positive("radius", *radius)?;
                center.dim()
            }
            DomainKind::Annulus {
                center,
                inner,
                outer,
            } => {
                positive("inner radius", *inner)?;
                if !(outer > inner && outer.is_finite()) {
                    return Err(GeometryError::InvalidDomain(format!(
                        "outer radius {outer} must exceed inner radius {inner}"
                    )));
                }
                center.dim()
            }
            DomainKind::Box { min, max } => {
                check_dim(max, min.dim())?;
                for i in 0..min.dim() {
                    if !(max[i] > min[i]) || !(max[i] - min[i]).is_finite() {
                        return Err(GeometryError::InvalidDomain(format!(
                            "box side {} is empty: [{}, {}]",
                            i + 1,
                            min[i],
                            max[i]
                        )));
                    }
                }
                min.dim()
            }
            DomainKind::PuncturedBall {
                center,
                radius,
                core,
            } => {
                positive("radius", *radius)?;
                if !(*core >= 0.0 && core < radius) {
                    return Err(GeometryError::InvalidDomain(format!(
                        "core radius {core} must lie in [0, {radius})"
                    )));
                }
                center.dim()
            }
            DomainKind::ConeComplement {
                center,
                radius,
                cone,
            } => {
                positive("radius", *radius)?;
                check_dim(&cone.tip, center.dim())?;
                check_dim(&cone.axis, center.dim())?;
                if ((cone.tip - *center).norm() - radius).abs() > 1e-9 * radius {
                    return Err(GeometryError::InvalidDomain(
                        "cone tip must lie on the sphere".into(),
                    ));
                }
                if !(cone.half_angle > 0.0 && cone.half_angle < PI / 2.0) {
                    return Err(GeometryError::InvalidDomain(format!(
                        "cone half-angle {} must lie in (0, pi/2)",
                        cone.half_angle
                    )));
                }
                positive("cone height", cone.height)?;
                if (cone.axis.norm() - 1.0).abs() > 1e-9 {
                    return Err(GeometryError::InvalidDomain("cone axis must be a unit vector".into()));
                }
                // the rim of the base must stay inside the ball
                let base = cone.tip + cone.axis * cone.height - *center;
                let rim = cone.height * cone.half_angle.tan();
                if base.norm_squared() + rim * rim >= radius * radius {
                    return Err(GeometryError::InvalidDomain(
                        "cone base pokes out of the ball".into(),
                    ));
                }
                center.dim()
            }
            DomainKind::Polygon2d { vertices } => {
                if vertices.len() < 3 {
                    return Err(GeometryError::InvalidDomain(
                        "polygon needs at least three vertices".into(),
                    ));
                }
                for v in vertices {
                    check_dim(v, 2)?;
                }
                if polygon_area(vertices).abs() <= 0.0 {
                    return Err(GeometryError::InvalidDomain("polygon has zero area".into()));
                }
                2
            }
        };
        if dim < 2 {
            return Err(GeometryError::InvalidDomain(format!(
                "dimension must be at least 2, got {dim}"
            )));
        }
        Ok(Self { kind, dim })
    }

    pub fn ball(center: Vector, radius: f64) -> Result<Self, GeometryError> {
        Self::new(DomainKind::Ball { center, radius })
    }

    pub fn unit_disc() -> Self {
        Self::ball(Vector::zeros(2), 1.0).expect("unit disc")
    }

    pub fn annulus(center: Vector, inner: f64, outer: f64) -> Result<Self, GeometryError> {
        Self::new(DomainKind::Annulus {
            center,
            inner,
            outer,
        })
    }

    pub fn cube(min: Vector, max: Vector) -> Result<Self, GeometryError> {
        Self::new(DomainKind::Box { min, max })
    }

    pub fn punctured_ball(center: Vector, radius: f64, core: f64) -> Result<Self, GeometryError> {
        Self::new(DomainKind::PuncturedBall {
            center,
            radius,
            core,
        })
    }

    /// Ball minus a cone of half-angle `half_angle` and height `height`
    /// whose tip is the boundary point `center + radius * direction`.
    pub fn cone_complement(
        center: Vector,
        radius: f64,
        direction: Vector,
        half_angle: f64,
        height: f64,
    ) -> Result<Self, GeometryError> {
        let dir = direction
            .normalized()
            .ok_or_else(|| GeometryError::InvalidDomain("zero cone direction".into()))?;
        Self::new(DomainKind::ConeComplement {
            center,
            radius,
            cone: Cone {
                tip: center + dir * radius,
                axis: -dir,
                half_angle,
                height,
            },
        })
    }

    pub fn polygon(vertices: Vec<Vector>) -> Result<Self, GeometryError> {
        Self::new(DomainKind::Polygon2d { vertices })
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Signed distance to the boundary: positive inside, negative outside.
    #[inline]
    pub fn dist_to_boundary(&self, x: &Vector) -> f64 {
        match &self.kind {
            DomainKind::Ball { center, radius } => radius - (*x - *center).norm(),
            DomainKind::Annulus {
                center,
                inner,
                outer,
            } => shell_distance((*x - *center).norm(), *inner, *outer),
            DomainKind::PuncturedBall {
                center,
                radius,
                core,
            } => shell_distance((*x - *center).norm(), *core, *radius),
            DomainKind::Box { min, max } => box_distance(x, min, max),
            DomainKind::ConeComplement {
                center,
                radius,
                cone,
            } => {
                let to_sphere = radius - (*x - *center).norm();
                let (to_cone, inside_cone) = cone_distance(cone, x);
                if to_sphere <= 0.0 {
                    to_sphere
                } else if inside_cone {
                    -to_cone
                } else {
                    to_sphere.min(to_cone)
                }
            }
            DomainKind::Polygon2d { vertices } => {
                let d = polygon_edge_distance(vertices, x).0;
                if point_in_polygon(vertices, x) {
                    d
                } else {
                    -d
                }
            }
        }
    }

    #[inline]
    pub fn contains(&self, x: &Vector) -> bool {
        self.dist_to_boundary(x) > 0.0
    }

    /// A nearest point of the boundary; ties resolve to the lexicographic minimum.
    pub fn nearest_boundary_point(&self, x: &Vector) -> Vector {
        match &self.kind {
            DomainKind::Ball { center, radius } => sphere_point(center, *radius, x),
            DomainKind::Annulus {
                center,
                inner,
                outer,
            } => shell_nearest(center, *inner, *outer, x),
            DomainKind::PuncturedBall {
                center,
                radius,
                core,
            } => shell_nearest(center, *core, *radius, x),
            DomainKind::Box { min, max } => box_nearest(x, min, max),
            DomainKind::ConeComplement {
                center,
                radius,
                cone,
            } => {
                let on_sphere = sphere_point(center, *radius, x);
                let on_cone = cone_nearest(cone, x);
                let (ds, dc) = ((*x - on_sphere).norm(), (*x - on_cone).norm());
                let outside_ball = (*x - *center).norm() >= *radius;
                if outside_ball || ds < dc {
                    on_sphere
                } else if dc < ds {
                    on_cone
                } else {
                    lex_min(on_sphere, on_cone)
                }
            }
            DomainKind::Polygon2d { vertices } => polygon_edge_distance(vertices, x).1,
        }
    }

    /// Boundary points within `budget` of `x`: the nearest boundary point
    /// followed by the first boundary hit along each of `EXIT_DIRECTIONS`
    /// rays. This is a finite stand-in for the full set of admissible exits.
    pub fn exit_candidates(&self, x: &Vector, budget: f64) -> Result<Vec<Vector>, GeometryError> {
        check_dim(x, self.dim)?;
        let dist = self.dist_to_boundary(x);
        if dist > budget {
            return Err(GeometryError::BeyondBudget { dist, budget });
        }
        let mut out = vec![self.nearest_boundary_point(x)];
        if dist <= 0.0 {
            return Ok(out);
        }
        for u in exit_directions(self.dim) {
            if let Some(y) = self.ray_exit(x, u, budget) {
                if (y - *x).norm() <= budget + 1e-12 {
                    out.push(y);
                }
            }
        }
        Ok(out)
    }

    /// The exit point chosen by a terminating player.
    ///
    /// Without a preference this is the nearest boundary point; with one, the
    /// candidate maximizing the inner product with `preference`
    /// (lexicographic minimum on ties).
    pub fn exit_point(
        &self,
        x: &Vector,
        budget: f64,
        preference: Option<&Vector>,
    ) -> Result<Vector, GeometryError> {
        match preference {
            None => {
                check_dim(x, self.dim)?;
                let dist = self.dist_to_boundary(x);
                if dist > budget {
                    return Err(GeometryError::BeyondBudget { dist, budget });
                }
                Ok(self.nearest_boundary_point(x))
            }
            Some(pref) => {
                let candidates = self.exit_candidates(x, budget)?;
                Ok(best_candidate(&candidates, |y| y.dot(pref)))
            }
        }
    }

    /// First boundary point along the ray `x + t u`, `0 < t <= budget`.
    fn ray_exit(&self, x: &Vector, u: &Vector, budget: f64) -> Option<Vector> {
        // Sphere tracing: steps of size dist never leave the closed domain
        // because dist is the exact distance to the complement.
        let mut t = 0.0;
        for _ in 0..200 {
            let p = *x + *u * t;
            let d = self.dist_to_boundary(&p);
            if d <= 1e-13 {
                return Some(self.nearest_boundary_point(&p));
            }
            t += d;
            if t > budget + 1e-12 {
                return None;
            }
        }
        let p = *x + *u * t;
        (self.dist_to_boundary(&p) <= 1e-10).then(|| self.nearest_boundary_point(&p))
    }

    /// Axis-aligned box containing the closure.
    pub fn bounding_box(&self) -> (Vector, Vector) {
        let around = |c: &Vector, r: f64| {
            let mut lo = *c;
            let mut hi = *c;
            for i in 0..c.dim() {
                lo[i] -= r;
                hi[i] += r;
            }
            (lo, hi)
        };
        match &self.kind {
            DomainKind::Ball { center, radius }
            | DomainKind::PuncturedBall { center, radius, .. }
            | DomainKind::ConeComplement { center, radius, .. } => around(center, *radius),
            DomainKind::Annulus { center, outer, .. } => around(center, *outer),
            DomainKind::Box { min, max } => (*min, *max),
            DomainKind::Polygon2d { vertices } => {
                let mut lo = vertices[0];
                let mut hi = vertices[0];
                for v in vertices {
                    for i in 0..2 {
                        lo[i] = lo[i].min(v[i]);
                        hi[i] = hi[i].max(v[i]);
                    }
                }
                (lo, hi)
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match &self.kind {
            DomainKind::Ball { radius, .. }
            | DomainKind::PuncturedBall { radius, .. }
            | DomainKind::ConeComplement { radius, .. } => 2.0 * radius,
            DomainKind::Annulus { outer, .. } => 2.0 * outer,
            DomainKind::Box { min, max } => (*max - *min).norm(),
            DomainKind::Polygon2d { vertices } => {
                let mut d: f64 = 0.0;
                for a in vertices {
                    for b in vertices {
                        d = d.max((*a - *b).norm());
                    }
                }
                d
            }
        }
    }

    /// Deterministic sample of boundary points: nearest-point projections of
    /// a lattice over the bounding box, plus kind-specific isolated points.
    pub fn boundary_samples(&self, per_axis: usize) -> Vec<Vector> {
        let (lo, hi) = self.bounding_box();
        let mut out = Vec::new();
        let n = per_axis.max(2);
        let total = n.pow(self.dim as u32);
        for idx in 0..total {
            let mut rem = idx;
            let mut x = lo;
            for i in 0..self.dim {
                let k = rem % n;
                rem /= n;
                x[i] = lo[i] + (hi[i] - lo[i]) * (k as f64 + 0.5) / n as f64;
            }
            out.push(self.nearest_boundary_point(&x));
        }
        if let DomainKind::PuncturedBall { center, core, .. } = &self.kind {
            if *core == 0.0 {
                out.push(*center);
            }
        }
        out
    }
}

fn exit_directions(dim: usize) -> &'static [Vector] {
    use std::sync::OnceLock;
    static CACHE: OnceLock<Vec<Vec<Vector>>> = OnceLock::new();
    let all = CACHE.get_or_init(|| {
        (0..=crate::vector::MAX_DIM)
            .map(|d| {
                if d < 2 {
                    Vec::new()
                } else {
                    direction_set(d, EXIT_DIRECTIONS)
                }
            })
            .collect()
    });
    &all[dim]
}

/// Candidate maximizing `score`; ties (within 1e-12) go to the lexicographic minimum.
pub fn best_candidate(candidates: &[Vector], score: impl Fn(&Vector) -> f64) -> Vector {
    let mut best = candidates[0];
    let mut best_score = score(&best);
    for y in &candidates[1..] {
        let s = score(y);
        let tie = (s - best_score).abs() <= 1e-12;
        if (s > best_score && !tie) || (tie && y.lex_cmp(&best).is_lt()) {
            best = *y;
            best_score = best_score.max(s);
        }
    }
    best
}

fn lex_min(a: Vector, b: Vector) -> Vector {
    if b.lex_cmp(&a).is_lt() {
        b
    } else {
        a
    }
}

#[inline]
fn shell_distance(r: f64, inner: f64, outer: f64) -> f64 {
    if r < inner {
        r - inner
    } else {
        (r - inner).min(outer - r)
    }
}

fn sphere_point(center: &Vector, radius: f64, x: &Vector) -> Vector {
    match (*x - *center).normalized() {
        Some(u) => *center + u * radius,
        // every sphere point is nearest; the lexicographic minimum is c - R e1
        None => *center - Vector::basis(center.dim(), 0) * radius,
    }
}

fn shell_nearest(center: &Vector, inner: f64, outer: f64, x: &Vector) -> Vector {
    let r = (*x - *center).norm();
    if r < inner {
        return sphere_point(center, inner, x);
    }
    let (di, dout) = (r - inner, outer - r);
    let inner_pt = || sphere_point(center, inner, x);
    let outer_pt = || sphere_point(center, outer, x);
    if di < dout {
        inner_pt()
    } else if dout < di {
        outer_pt()
    } else {
        lex_min(inner_pt(), outer_pt())
    }
}

fn box_distance(x: &Vector, min: &Vector, max: &Vector) -> f64 {
    let mut inside = f64::INFINITY;
    let mut outside_sq = 0.0;
    let mut is_inside = true;
    for i in 0..x.dim() {
        let (a, b) = (x[i] - min[i], max[i] - x[i]);
        inside = inside.min(a.min(b));
        let excess = (-a).max(-b).max(0.0);
        if excess > 0.0 {
            is_inside = false;
        }
        outside_sq += excess * excess;
    }
    if is_inside {
        inside
    } else {
        -outside_sq.sqrt()
    }
}

fn box_nearest(x: &Vector, min: &Vector, max: &Vector) -> Vector {
    if box_distance(x, min, max) <= 0.0 {
        let mut y = *x;
        for i in 0..x.dim() {
            y[i] = y[i].clamp(min[i], max[i]);
        }
        return y;
    }
    let d = box_distance(x, min, max);
    let mut best: Option<Vector> = None;
    for i in 0..x.dim() {
        for &face in &[min[i], max[i]] {
            if ((x[i] - face).abs() - d).abs() <= 1e-15 {
                let mut y = *x;
                y[i] = face;
                best = Some(best.map_or(y, |b| lex_min(b, y)));
            }
        }
    }
    best.expect("some face attains the distance")
}

/// Axial/radial coordinates of `x` relative to the cone, plus the radial unit vector.
fn cone_frame(cone: &Cone, x: &Vector) -> (f64, f64, Vector) {
    let w = *x - cone.tip;
    let s = w.dot(&cone.axis);
    let radial = w - cone.axis * s;
    let r = radial.norm();
    let e = if r > 0.0 {
        radial * (1.0 / r)
    } else {
        any_perpendicular(&cone.axis)
    };
    (s, r, e)
}

fn any_perpendicular(a: &Vector) -> Vector {
    let mut k = 0;
    for i in 1..a.dim() {
        if a[i].abs() < a[k].abs() {
            k = i;
        }
    }
    let b = Vector::basis(a.dim(), k);
    (b - *a * a.dot(&b)).normalized().expect("axis is not degenerate")
}

/// Nearest point to `(s, r)` on the two boundary segments of the cone's
/// meridian section, and whether the point lies inside the solid cone.
fn cone_section_nearest(cone: &Cone, s: f64, r: f64) -> ((f64, f64), bool) {
    let (h, tan) = (cone.height, cone.half_angle.tan());
    let rim = (h, h * tan);
    let slant = segment_nearest((s, r), (0.0, 0.0), rim);
    let base = segment_nearest((s, r), (h, 0.0), rim);
    let d2 = |p: (f64, f64)| (p.0 - s).powi(2) + (p.1 - r).powi(2);
    let nearest = if d2(base) < d2(slant) { base } else { slant };
    let inside = (0.0..=h).contains(&s) && r <= s * tan;
    (nearest, inside)
}

fn segment_nearest(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0);
    (a.0 + t * dx, a.1 + t * dy)
}

/// Distance from `x` to the cone's surface and whether `x` is inside the cone.
fn cone_distance(cone: &Cone, x: &Vector) -> (f64, bool) {
    let (s, r, _) = cone_frame(cone, x);
    let ((ns, nr), inside) = cone_section_nearest(cone, s, r);
    (((ns - s).powi(2) + (nr - r).powi(2)).sqrt(), inside)
}

fn cone_nearest(cone: &Cone, x: &Vector) -> Vector {
    let (s, r, e) = cone_frame(cone, x);
    let ((ns, nr), _) = cone_section_nearest(cone, s, r);
    cone.tip + cone.axis * ns + e * nr
}

fn polygon_area(vertices: &[Vector]) -> f64 {
    let n = vertices.len();
    (0..n)
        .map(|i| {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

fn point_in_polygon(vertices: &[Vector], x: &Vector) -> bool {
    let n = vertices.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (vertices[i], vertices[j]);
        if (a[1] > x[1]) != (b[1] > x[1]) {
            let cross = (b[0] - a[0]) * (x[1] - a[1]) / (b[1] - a[1]) + a[0];
            if x[0] < cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn polygon_edge_distance(vertices: &[Vector], x: &Vector) -> (f64, Vector) {
    let n = vertices.len();
    let mut best = (f64::INFINITY, vertices[0]);
    for i in 0..n {
        let (a, b) = (vertices[i], vertices[(i + 1) % n]);
        let (px, py) = segment_nearest((x[0], x[1]), (a[0], a[1]), (b[0], b[1]));
        let y = Vector::new2(px, py);
        let d = (*x - y).norm();
        if d < best.0 || (d == best.0 && y.lex_cmp(&best.1).is_lt()) {
            best = (d, y);
        }
    }
    best
}

/// A finite union of closed arcs of a circle in the plane, given by angle
/// intervals `[a, b]` with `a <= b`, measured counterclockwise from e1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcSet {
    pub center: Vector,
    pub intervals: Vec<(f64, f64)>,
}

fn wrap_angle(theta: f64) -> f64 {
    theta.rem_euclid(TAU)
}

/// Shortest angular distance between two angles.
fn angular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

impl ArcSet {
    /// Middle-fraction Cantor construction on the arc of angular length
    /// `span` centered at angle `mid`, stopped at `depth` generations.
    pub fn cantor(center: Vector, mid: f64, span: f64, ratio: f64, depth: u32) -> Self {
        let mut intervals = vec![(mid - span / 2.0, mid + span / 2.0)];
        let keep = (1.0 - ratio) / 2.0;
        for _ in 0..depth {
            intervals = intervals
                .into_iter()
                .flat_map(|(a, b)| {
                    let piece = (b - a) * keep;
                    [(a, a + piece), (b - piece, b)]
                })
                .collect();
        }
        Self { center, intervals }
    }

    /// Points of the unit circle (around `center`) within Euclidean distance
    /// `delta` of the Cantor set: the generation whose pieces are short
    /// enough that every point of a piece is within `delta` of an endpoint,
    /// widened by the matching angle.
    pub fn cantor_neighborhood(center: Vector, mid: f64, span: f64, ratio: f64, delta: f64) -> Self {
        let keep = (1.0 - ratio) / 2.0;
        let mut depth = 0u32;
        let mut piece = span;
        // chord from a piece midpoint to its endpoint is 2 sin(piece / 4)
        while 2.0 * (piece / 4.0).sin() > delta && depth < 60 {
            piece *= keep;
            depth += 1;
        }
        let widen = 2.0 * (delta / 2.0).min(1.0).asin();
        let base = Self::cantor(center, mid, span, ratio, depth);
        let mut widened: Vec<(f64, f64)> = base
            .intervals
            .iter()
            .map(|&(a, b)| (a - widen, b + widen))
            .collect();
        widened.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (a, b) in widened {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        Self {
            center,
            intervals: merged,
        }
    }

    pub fn angle_of(&self, y: &Vector) -> f64 {
        let w = *y - self.center;
        w[1].atan2(w[0])
    }

    pub fn contains_angle(&self, theta: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| {
            let t = a + wrap_angle(theta - a);
            t <= b + 1e-15
        })
    }

    pub fn contains(&self, y: &Vector) -> bool {
        self.contains_angle(self.angle_of(y))
    }

    /// Total angular measure (intervals assumed disjoint).
    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| (b - a).min(TAU)).sum()
    }

    /// Angle in the set closest to `theta`.
    pub fn nearest_angle(&self, theta: f64) -> f64 {
        if self.contains_angle(theta) {
            return theta;
        }
        let mut best = (f64::INFINITY, theta);
        for &(a, b) in &self.intervals {
            for end in [a, b] {
                let g = angular_gap(theta, end);
                if g < best.0 {
                    best = (g, end);
                }
            }
        }
        best.1
    }

    /// Gaps between consecutive arcs as angle intervals `(a, b)`, `a < b`,
    /// including the one wrapping around past the last arc. Intervals are
    /// assumed sorted and disjoint.
    pub fn gaps(&self) -> Vec<(f64, f64)> {
        if self.intervals.is_empty() {
            return vec![(0.0, TAU)];
        }
        if self.measure() >= TAU {
            return Vec::new();
        }
        let n = self.intervals.len();
        (0..n)
            .map(|i| {
                let b = self.intervals[i].1;
                let a = if i + 1 < n {
                    self.intervals[i + 1].0
                } else {
                    self.intervals[0].0 + TAU
                };
                (b, a)
            })
            .filter(|(b, a)| a > b)
            .collect()
    }

    /// Midpoint angle of the gap closest to `theta` (the gap containing it,
    /// if any); ties go to the earlier gap.
    pub fn nearest_gap_midpoint(&self, theta: f64) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        for (a, b) in self.gaps() {
            let inside = a + wrap_angle(theta - a) <= b;
            let g = if inside {
                0.0
            } else {
                angular_gap(theta, a).min(angular_gap(theta, b))
            };
            if best.map_or(true, |(bg, _)| g < bg) {
                best = Some((g, (a + b) / 2.0));
            }
        }
        best.map(|(_, m)| m)
    }

    /// Angle outside the set closest to `theta` (the set is closed, so this
    /// returns a point just past an interval end).
    pub fn nearest_gap_angle(&self, theta: f64) -> Option<f64> {
        if !self.contains_angle(theta) {
            return Some(theta);
        }
        if self.measure() >= TAU {
            return None;
        }
        let mut best = (f64::INFINITY, None);
        for &(a, b) in &self.intervals {
            for end in [a - 1e-9, b + 1e-9] {
                if !self.contains_angle(end) {
                    let g = angular_gap(theta, end);
                    if g < best.0 {
                        best = (g, Some(end));
                    }
                }
            }
        }
        best.1
    }
}

/// Target set of an indicator payoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "kebab-case")]
pub enum IndicatorSet {
    /// Closed ball `|y - center| <= radius`.
    Ball { center: Vector, radius: f64 },
    /// Points strictly closer than `radius` to `center` (e.g. the inner
    /// sphere of an annulus when `radius` lies between the two radii).
    RadiusBelow { center: Vector, radius: f64 },
    Arcs(ArcSet),
}

impl IndicatorSet {
    pub fn contains(&self, y: &Vector) -> bool {
        match self {
            IndicatorSet::Ball { center, radius } => (*y - *center).norm() <= *radius,
            IndicatorSet::RadiusBelow { center, radius } => (*y - *center).norm() < *radius,
            IndicatorSet::Arcs(arcs) => arcs.contains(y),
        }
    }
}

/// Payoff `F` on the boundary.
#[derive(Clone)]
pub enum BoundaryFunction {
    Constant(f64),
    /// `offset + (coeffs, y)`.
    Linear { coeffs: Vector, offset: f64 },
    /// `offset + scale * rho_{d,p}(y - center)`.
    Radial {
        center: Vector,
        p: f64,
        scale: f64,
        offset: f64,
    },
    Indicator(IndicatorSet),
    /// Nearest-neighbour lookup in a table of boundary samples.
    Table { points: Vec<Vector>, values: Vec<f64> },
    Field(Arc<dyn ScalarField>),
}

impl fmt::Debug for BoundaryFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

impl BoundaryFunction {
    pub fn linear(coeffs: Vector) -> Self {
        BoundaryFunction::Linear {
            coeffs,
            offset: 0.0,
        }
    }

    pub fn radial(dim: usize, p: f64) -> Self {
        BoundaryFunction::Radial {
            center: Vector::zeros(dim),
            p,
            scale: 1.0,
            offset: 0.0,
        }
    }

    pub fn field(u: impl ScalarField + 'static) -> Self {
        BoundaryFunction::Field(Arc::new(u))
    }

    #[inline]
    pub fn eval(&self, y: &Vector) -> f64 {
        match self {
            BoundaryFunction::Constant(c) => *c,
            BoundaryFunction::Linear { coeffs, offset } => offset + coeffs.dot(y),
            BoundaryFunction::Radial {
                center,
                p,
                scale,
                offset,
            } => offset + scale * radial_value(center.dim(), *p, (*y - *center).norm()),
            BoundaryFunction::Indicator(set) => {
                if set.contains(y) {
                    1.0
                } else {
                    0.0
                }
            }
            BoundaryFunction::Table { points, values } => {
                let mut best = (f64::INFINITY, 0.0);
                for (pt, v) in points.iter().zip(values) {
                    let d = (*pt - *y).norm_squared();
                    if d < best.0 {
                        best = (d, *v);
                    }
                }
                best.1
            }
            BoundaryFunction::Field(u) => u.value(y),
        }
    }

    /// Range of `F` over a deterministic boundary sample of `domain`.
    /// Exact for constants and indicators' `{0, 1}` codomain hull.
    pub fn range_on(&self, domain: &Domain) -> (f64, f64) {
        match self {
            BoundaryFunction::Constant(c) => (*c, *c),
            _ => {
                let per_axis = if domain.dim() == 2 { 200 } else { 24 };
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for y in domain.boundary_samples(per_axis) {
                    let v = self.eval(&y);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            }
        }
    }

    /// Finite on a boundary sample.
    pub fn is_bounded_on(&self, domain: &Domain) -> bool {
        let (lo, hi) = self.range_on(domain);
        lo.is_finite() && hi.is_finite()
    }

    pub fn describe(&self) -> String {
        match self {
            BoundaryFunction::Constant(c) => format!("constant({c})"),
            BoundaryFunction::Linear { coeffs, offset } => format!("linear({coeffs}, {offset})"),
            BoundaryFunction::Radial {
                center,
                p,
                scale,
                offset,
            } => format!("radial(center={center}, p={p}, scale={scale}, offset={offset})"),
            BoundaryFunction::Indicator(set) => format!("indicator({set:?})"),
            BoundaryFunction::Table { points, .. } => format!("table({} points)", points.len()),
            BoundaryFunction::Field(u) => format!("field({})", u.name()),
        }
    }
}
