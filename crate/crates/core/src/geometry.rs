//! Discretized arm centerlines, kinematic state, obstacles and the workspace box.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when validating rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polyline needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("non-finite coordinate at node {0}")]
    NonFinite(usize),
    #[error("zero-length segment starting at node {0}")]
    DegenerateSegment(usize),
    #[error("expected {expected} {what}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("orientation at node {0} is not a proper rotation")]
    NotARotation(usize),
    #[error("obstacle radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("workspace bounds are empty or inverted")]
    BadBounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > f64::MIN_POSITIVE && n.is_finite()).then(|| self / n)
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn lerp(self, o: Vec3, t: f64) -> Vec3 {
        self + (o - self) * t
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Any unit vector orthogonal to `self` (which must be non-zero).
    pub fn any_orthogonal(self) -> Vec3 {
        let helper = if self.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
        self.cross(helper).normalized().unwrap_or(Vec3::Z)
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3×3 matrix; used for node orientations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(c0: Vec3, c1: Vec3, c2: Vec3) -> Self {
        Mat3([[c0.x, c1.x, c2.x], [c0.y, c1.y, c2.y], [c0.z, c1.z, c2.z]])
    }

    pub fn column(&self, j: usize) -> Vec3 {
        Vec3::new(self.0[0][j], self.0[1][j], self.0[2][j])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Mat3(out)
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn determinant(&self) -> f64 {
        self.column(0).dot(self.column(1).cross(self.column(2)))
    }

    /// Rodrigues rotation by `angle` radians about the unit `axis`.
    pub fn rotation(axis: Vec3, angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        let Vec3 { x, y, z } = axis;
        Mat3([
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ])
    }

    /// Orthonormal with determinant +1, within `tol` entrywise.
    pub fn is_rotation(&self, tol: f64) -> bool {
        let g = self.transpose().mul_mat(self);
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                if (g.0[i][j] - target).abs() > tol || !g.0[i][j].is_finite() {
                    return false;
                }
            }
        }
        (self.determinant() - 1.0).abs() <= tol
    }
}

/// Ordered 3D points with distinct consecutive nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec3>", into = "Vec<Vec3>")]
pub struct Polyline {
    points: Vec<Vec3>,
}

impl Polyline {
    pub fn new(points: Vec<Vec3>) -> Result<Self, GeometryError> {
        if points.len() < 2 {
            return Err(GeometryError::TooFewPoints(points.len()));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        if let Some(i) = points.windows(2).position(|w| w[0] == w[1]) {
            return Err(GeometryError::DegenerateSegment(i));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; a polyline has at least two nodes.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn segment_count(&self) -> usize {
        self.points.len() - 1
    }

    pub fn first(&self) -> Vec3 {
        self.points[0]
    }

    pub fn last(&self) -> Vec3 {
        self.points[self.points.len() - 1]
    }

    /// Segment vectors `p[i+1] - p[i]`.
    pub fn segments(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.points.windows(2).map(|w| w[1] - w[0])
    }

    pub fn segment_lengths(&self) -> Vec<f64> {
        self.segments().map(Vec3::norm).collect()
    }

    /// Closed when the last node coincides with the first.
    pub fn is_closed(&self) -> bool {
        self.first() == self.last()
    }

    pub fn reversed(&self) -> Polyline {
        let mut points = self.points.clone();
        points.reverse();
        Polyline { points }
    }

    /// Applies `f` to every node and re-validates.
    pub fn map_points(&self, f: impl Fn(Vec3) -> Vec3) -> Result<Polyline, GeometryError> {
        Polyline::new(self.points.iter().map(|&p| f(p)).collect())
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }
}

impl Index<usize> for Polyline {
    type Output = Vec3;
    fn index(&self, i: usize) -> &Vec3 {
        &self.points[i]
    }
}

impl TryFrom<Vec<Vec3>> for Polyline {
    type Error = GeometryError;
    fn try_from(points: Vec<Vec3>) -> Result<Self, Self::Error> {
        Polyline::new(points)
    }
}

impl From<Polyline> for Vec<Vec3> {
    fn from(p: Polyline) -> Self {
        p.points
    }
}

/// Kinematic state of one continuum arm: centerline nodes, node velocities
/// and node orientation frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    centerline: Polyline,
    velocities: Vec<Vec3>,
    orientations: Vec<Mat3>,
}

impl ArmState {
    pub fn new(centerline: Polyline, velocities: Vec<Vec3>, orientations: Vec<Mat3>) -> Result<Self, GeometryError> {
        let n = centerline.len();
        if velocities.len() != n {
            return Err(GeometryError::LengthMismatch {
                what: "velocities",
                expected: n,
                got: velocities.len(),
            });
        }
        if orientations.len() != n {
            return Err(GeometryError::LengthMismatch {
                what: "orientations",
                expected: n,
                got: orientations.len(),
            });
        }
        if let Some(i) = velocities.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        if let Some(i) = orientations.iter().position(|r| !r.is_rotation(ROTATION_TOLERANCE)) {
            return Err(GeometryError::NotARotation(i));
        }
        Ok(Self {
            centerline,
            velocities,
            orientations,
        })
    }

    /// At rest with tangent-aligned frames.
    pub fn at_rest(centerline: Polyline) -> Self {
        let orientations = tangent_frames(&centerline);
        let velocities = vec![Vec3::ZERO; centerline.len()];
        Self {
            centerline,
            velocities,
            orientations,
        }
    }

    pub fn centerline(&self) -> &Polyline {
        &self.centerline
    }

    pub fn velocities(&self) -> &[Vec3] {
        &self.velocities
    }

    pub fn orientations(&self) -> &[Mat3] {
        &self.orientations
    }

    pub fn base(&self) -> Vec3 {
        self.centerline.first()
    }

    pub fn tip(&self) -> Vec3 {
        self.centerline.last()
    }

    pub fn max_speed(&self) -> f64 {
        self.velocities.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Frames whose third column is the local unit tangent, with the first
/// column carried along the curve by parallel transport.
pub fn tangent_frames(p: &Polyline) -> Vec<Mat3> {
    let pts = p.points();
    let n = pts.len();
    let tangent = |i: usize| -> Vec3 {
        let d = if i + 1 < n {
            pts[i + 1] - pts[i]
        } else {
            pts[i] - pts[i - 1]
        };
        d.normalized().unwrap_or(Vec3::Z)
    };
    let mut frames = Vec::with_capacity(n);
    let mut t_prev = tangent(0);
    let mut normal = t_prev.any_orthogonal();
    for i in 0..n {
        let t = tangent(i);
        // Transport the normal by the minimal rotation taking t_prev to t.
        let axis = t_prev.cross(t);
        if let Some(axis) = axis.normalized() {
            let angle = t_prev.dot(t).clamp(-1.0, 1.0).acos();
            normal = Mat3::rotation(axis, angle).mul_vec(normal);
        }
        // Re-orthogonalize against drift.
        normal = (normal - t * normal.dot(t))
            .normalized()
            .unwrap_or_else(|| t.any_orthogonal());
        let binormal = t.cross(normal);
        frames.push(Mat3::from_columns(normal, binormal, t));
        t_prev = t;
    }
    frames
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: Vec3,
    pub radius: f64,
}

impl Obstacle {
    pub fn new(center: Vec3, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GeometryError::BadRadius(radius));
        }
        if !center.is_finite() {
            return Err(GeometryError::NonFinite(0));
        }
        Ok(Self { center, radius })
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self, GeometryError> {
        if !(min.x < max.x && min.y < max.y && min.z < max.z) {
            return Err(GeometryError::BadBounds);
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    /// Signed distance to the nearest face; positive inside.
    pub fn inner_margin(&self, p: Vec3) -> f64 {
        [
            p.x - self.min.x,
            self.max.x - p.x,
            p.y - self.min.y,
            self.max.y - p.y,
            p.z - self.min.z,
            self.max.z - p.z,
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }

    pub fn clamp(&self, p: Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub bounds: Aabb,
    pub obstacles: Vec<Obstacle>,
    pub targets: Vec<Vec3>,
}

/// Total length `Σ |p[i+1] - p[i]|`.
pub fn arc_length(p: &Polyline) -> f64 {
    p.segments().map(Vec3::norm).sum()
}

/// Smallest signed surface clearance between the arm's tube (radius
/// `arm_radius` around every segment) and any obstacle. `+∞` when there are
/// no obstacles.
pub fn min_obstacle_clearance(arm: &ArmState, workspace: &Workspace, arm_radius: f64) -> f64 {
    tube_obstacle_clearance(arm.centerline().points(), &workspace.obstacles, arm_radius)
}

/// Node-only variant of [`tube_obstacle_clearance`].
pub fn node_obstacle_clearance(nodes: &[Vec3], obstacles: &[Obstacle], arm_radius: f64) -> f64 {
    let mut best = f64::INFINITY;
    for o in obstacles {
        for &r in nodes {
            best = best.min(r.distance(o.center) - o.radius - arm_radius);
        }
    }
    best
}

/// Clearance of the tube swept by the segments of a node chain.
pub fn tube_obstacle_clearance(nodes: &[Vec3], obstacles: &[Obstacle], arm_radius: f64) -> f64 {
    let mut best = f64::INFINITY;
    for o in obstacles {
        if nodes.len() == 1 {
            best = best.min(nodes[0].distance(o.center) - o.radius - arm_radius);
        }
        for w in nodes.windows(2) {
            let q = closest_on_segment(o.center, w[0], w[1]);
            best = best.min(q.distance(o.center) - o.radius - arm_radius);
        }
    }
    best
}

/// Point of segment `[a, b]` closest to `p`.
pub fn closest_on_segment(p: Vec3, a: Vec3, b: Vec3) -> Vec3 {
    let ab = b - a;
    let l2 = ab.norm_squared();
    if l2 == 0.0 {
        return a;
    }
    a + ab * ((p - a).dot(ab) / l2).clamp(0.0, 1.0)
}

/// Closest points between segments `[p0, p1]` and `[q0, q1]`, returned as
/// `(distance, s, t)` with the points at `p0 + s(p1-p0)` and `q0 + t(q1-q0)`.
pub fn segment_distance(p0: Vec3, p1: Vec3, q0: Vec3, q1: Vec3) -> (f64, f64, f64) {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(r);
    let (s, t) = if a == 0.0 && e == 0.0 {
        (0.0, 0.0)
    } else if a == 0.0 {
        (0.0, (f / e).clamp(0.0, 1.0))
    } else {
        let c = d1.dot(r);
        if e == 0.0 {
            ((-c / a).clamp(0.0, 1.0), 0.0)
        } else {
            let b = d1.dot(d2);
            let denom = a * e - b * b;
            let mut s = if denom > 0.0 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t = (b * s + f) / e;
            if t < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            }
            (s, t)
        }
    };
    let d = (p0 + d1 * s).distance(q0 + d2 * t);
    (d, s, t)
}

/// Smallest centerline distance between two node chains.
pub fn chain_distance(a: &[Vec3], b: &[Vec3]) -> f64 {
    let mut best = f64::INFINITY;
    for u in a.windows(2) {
        for v in b.windows(2) {
            best = best.min(segment_distance(u[0], u[1], v[0], v[1]).0);
        }
    }
    best
}

/// Menger curvature of the triangle `(a, b, c)`: the inverse circumradius.
/// Collinear triples give 0.
pub fn menger_curvature(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    let ab = b - a;
    let bc = c - b;
    let ca = a - c;
    let denom = ab.norm() * bc.norm() * ca.norm();
    if denom == 0.0 {
        return 0.0;
    }
    2.0 * ab.cross(-ca).norm() / denom
}

/// Discrete curvature at every interior node (length `n - 2`).
pub fn curvature_profile(p: &Polyline) -> Vec<f64> {
    p.points()
        .windows(3)
        .map(|w| menger_curvature(w[0], w[1], w[2]))
        .collect()
}

/// Sines of turning angles below this are treated as collinear when
/// measuring torsion.
const TORSION_COLLINEAR_SIN: f64 = 1e-6;

/// Discrete torsion on every 4-node window (length `n - 3`).
///
/// The dihedral angle between consecutive osculating planes, folded into
/// `[-π/2, π/2]` so that coplanar windows (including inflections) give 0,
/// divided by the length of the shared segment.
pub fn torsion_profile(p: &Polyline) -> Vec<f64> {
    p.points()
        .windows(4)
        .map(|w| {
            let t0 = w[1] - w[0];
            let t1 = w[2] - w[1];
            let t2 = w[3] - w[2];
            let b1 = t0.cross(t1);
            let b2 = t1.cross(t2);
            let l1 = t1.norm();
            if b1.norm() <= TORSION_COLLINEAR_SIN * t0.norm() * l1
                || b2.norm() <= TORSION_COLLINEAR_SIN * l1 * t2.norm()
            {
                return 0.0;
            }
            let y = b1.cross(b2).dot(t1) / l1;
            let x = b1.dot(b2).abs();
            y.atan2(x) / l1
        })
        .collect()
}
