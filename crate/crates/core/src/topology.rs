//! Pairwise linking numbers, per-arm writhe and projected crossing detection.
//!
//! The linking and writhe sums use the discretized Gauss kernel over segment
//! pairs, evaluated at segment midpoints with a small regularizer in the
//! denominator. [`exact_linking_number`] is the closed-form polygonal
//! counterpart (segment-pair solid angles), used wherever an integer-valued
//! answer on closed curves is wanted.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::{ArmState, Polyline, Vec3};
use crate::risk::{risk_score, RiskCoeffs};

/// Default regularizer added to `|r_a - r_b|³` (m³).
pub const DEFAULT_EPS: f64 = 1e-9;

/// Determinants below this mark a projected segment pair as degenerate.
pub const DEGENERATE_DET: f64 = 1e-12;

struct Segments {
    deltas: Vec<Vec3>,
    mids: Vec<Vec3>,
}

impl Segments {
    fn of(p: &Polyline) -> Self {
        let pts = p.points();
        let deltas = pts.windows(2).map(|w| w[1] - w[0]).collect();
        let mids = pts.windows(2).map(|w| (w[0] + w[1]) * 0.5).collect();
        Segments { deltas, mids }
    }
}

#[inline]
fn gauss_term(da: Vec3, ma: Vec3, db: Vec3, mb: Vec3, eps: f64) -> f64 {
    let r = ma - mb;
    let d = r.norm();
    da.cross(db).dot(r) / (d * d * d + eps)
}

/// Discretized Gauss linking sum between two curves (all segment pairs).
pub fn linking_number(a: &Polyline, b: &Polyline, eps: f64) -> f64 {
    let sa = Segments::of(a);
    let sb = Segments::of(b);
    let mut sum = 0.0;
    for (da, ma) in sa.deltas.iter().zip(&sa.mids) {
        for (db, mb) in sb.deltas.iter().zip(&sb.mids) {
            sum += gauss_term(*da, *ma, *db, *mb, eps);
        }
    }
    sum / (4.0 * PI)
}

/// Discretized writhe: the Gauss self-sum over distinct segment pairs.
pub fn writhe(a: &Polyline, eps: f64) -> f64 {
    let s = Segments::of(a);
    let n = s.deltas.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += gauss_term(s.deltas[i], s.mids[i], s.deltas[j], s.mids[j], eps);
            }
        }
    }
    sum / (4.0 * PI)
}

/// Symmetric matrix of pairwise linking sums with a zero diagonal.
pub fn linking_matrix(curves: &[Polyline], eps: f64) -> Vec<Vec<f64>> {
    let n = curves.len();
    let mut m = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in (j + 1)..n {
            let lk = linking_number(&curves[j], &curves[k], eps);
            m[j][k] = lk;
            m[k][j] = lk;
        }
    }
    m
}

/// Signed solid angle (over 4π) swept between segment `p1→p2` and segment
/// `p3→p4`; summing over all pairs of two closed polygons gives their exact
/// linking number.
pub fn segment_pair_linking(p1: Vec3, p2: Vec3, p3: Vec3, p4: Vec3) -> f64 {
    let r13 = p3 - p1;
    let r14 = p4 - p1;
    let r23 = p3 - p2;
    let r24 = p4 - p2;
    let normals = [r13.cross(r14), r14.cross(r24), r24.cross(r23), r23.cross(r13)];
    let mut unit = [Vec3::ZERO; 4];
    for (u, n) in unit.iter_mut().zip(normals) {
        match n.normalized() {
            Some(v) => *u = v,
            // Coplanar configuration sweeps no solid angle.
            None => return 0.0,
        }
    }
    let omega: f64 = (0..4)
        .map(|i| unit[i].dot(unit[(i + 1) % 4]).clamp(-1.0, 1.0).asin())
        .sum();
    let orient = (p4 - p3).cross(p2 - p1).dot(r13);
    if orient == 0.0 {
        return 0.0;
    }
    omega.copysign(orient) / (4.0 * PI)
}

/// Exact polygonal linking number; integer-valued (up to rounding) when
/// both polylines are closed and disjoint.
pub fn exact_linking_number(a: &Polyline, b: &Polyline) -> f64 {
    let pa = a.points();
    let pb = b.points();
    let mut sum = 0.0;
    for wa in pa.windows(2) {
        for wb in pb.windows(2) {
            sum += segment_pair_linking(wa[0], wa[1], wb[0], wb[1]);
        }
    }
    sum
}

/// Closes an open arm with a return path far "below" it along `-direction`:
/// tip straight down to `depth`, across to beneath the base, up to the base.
pub fn virtual_closure(arm: &Polyline, direction: Vec3, depth: f64) -> Polyline {
    let mut pts = arm.points().to_vec();
    let base = arm.first();
    let tip = arm.last();
    let drop = |p: Vec3| p - direction * (p.dot(direction) + depth);
    let below_tip = drop(tip);
    let below_base = drop(base);
    for q in [below_tip, below_base, base] {
        if *pts.last().unwrap() != q {
            pts.push(q);
        }
    }
    // Points are distinct by construction unless the arm already dips to
    // `depth`, which callers rule out by choosing depth far below the box.
    Polyline::new(pts).expect("closure of a valid arm is a valid polyline")
}

/// Which arm is nearer the viewer at a projected crossing, seen from arm `i`
/// of the strand-adjacent pair `(i, i+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossingSign {
    /// Arm `i` passes over arm `i+1`.
    Over,
    /// Arm `i` passes under arm `i+1`.
    Under,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingEvent {
    /// 1-based strand index `i` of the pair `(i, i+1)`.
    pub strand_index: usize,
    pub sign: CrossingSign,
    pub time_step: u64,
    /// Segment of arm `i` and of arm `i+1` that cross.
    pub segments: (usize, usize),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub events: Vec<CrossingEvent>,
    /// Projected segment pairs skipped as tangential or collinear.
    pub degenerate: usize,
}

/// Orthonormal basis `(e1, e2)` of the plane perpendicular to `direction`.
/// `e1` is the projection of the x-axis when that is well defined.
pub fn projection_basis(direction: Vec3) -> (Vec3, Vec3) {
    let d = direction.normalized().unwrap_or(Vec3::Z);
    let e1 = (Vec3::X - d * Vec3::X.dot(d))
        .normalized()
        .unwrap_or_else(|| (Vec3::Y - d * Vec3::Y.dot(d)).normalized().unwrap());
    let e2 = d.cross(e1);
    (e1, e2)
}

#[inline]
fn cross2(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

/// Detects transversal crossings between projections of strand-adjacent
/// arms. Arms must already be in strand order. The viewer sits at +∞ along
/// `direction`, so "over" means larger coordinate along `direction`.
pub fn detect_crossings(arms: &[Polyline], direction: Vec3, time_step: u64) -> CrossingReport {
    let d = direction.normalized().unwrap_or(Vec3::Z);
    let (e1, e2) = projection_basis(d);
    let project = |p: Vec3| (p.dot(e1), p.dot(e2));
    let mut report = CrossingReport::default();

    for (i, pair) in arms.windows(2).enumerate() {
        let (a, b) = (pair[0].points(), pair[1].points());
        let (na, nb) = (a.len() - 1, b.len() - 1);
        for sa in 0..na {
            let p0 = project(a[sa]);
            let p1 = project(a[sa + 1]);
            let r = (p1.0 - p0.0, p1.1 - p0.1);
            for sb in 0..nb {
                let q0 = project(b[sb]);
                let q1 = project(b[sb + 1]);
                let s = (q1.0 - q0.0, q1.1 - q0.1);
                let den = cross2(r, s);
                if den.abs() < DEGENERATE_DET {
                    if boxes_touch(p0, p1, q0, q1) {
                        report.degenerate += 1;
                    }
                    continue;
                }
                let qp = (q0.0 - p0.0, q0.1 - p0.1);
                let t = cross2(qp, s) / den;
                let u = cross2(qp, r) / den;
                // Half-open except on the final segment, so vertex hits
                // count once.
                let t_ok = t >= 0.0 && (t < 1.0 || (sa + 1 == na && t <= 1.0));
                let u_ok = u >= 0.0 && (u < 1.0 || (sb + 1 == nb && u <= 1.0));
                if !(t_ok && u_ok) {
                    continue;
                }
                let ha = a[sa].lerp(a[sa + 1], t).dot(d);
                let hb = b[sb].lerp(b[sb + 1], u).dot(d);
                let sign = if ha > hb {
                    CrossingSign::Over
                } else {
                    CrossingSign::Under
                };
                report.events.push(CrossingEvent {
                    strand_index: i + 1,
                    sign,
                    time_step,
                    segments: (sa, sb),
                });
            }
        }
    }
    report
}

fn boxes_touch(p0: (f64, f64), p1: (f64, f64), q0: (f64, f64), q1: (f64, f64)) -> bool {
    let (pxl, pxh) = (p0.0.min(p1.0), p0.0.max(p1.0));
    let (pyl, pyh) = (p0.1.min(p1.1), p0.1.max(p1.1));
    let (qxl, qxh) = (q0.0.min(q1.0), q0.0.max(q1.0));
    let (qyl, qyh) = (q0.1.min(q1.1), q0.1.max(q1.1));
    pxl <= qxh && qxl <= pxh && pyl <= qyh && qyl <= pyh
}

/// Per-step topological summary of all arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoState {
    pub linking: Vec<Vec<f64>>,
    pub writhes: Vec<f64>,
    pub braid_length: usize,
    pub entangled: bool,
    pub risk: f64,
}

impl TopoState {
    /// Fills linking matrix and writhes from the open centerlines and
    /// scores the state.
    pub fn compute(
        arms: &[ArmState],
        braid_length: usize,
        entangled: bool,
        coeffs: &RiskCoeffs,
        eps: f64,
    ) -> TopoState {
        let curves: Vec<Polyline> = arms.iter().map(|a| a.centerline().clone()).collect();
        Self::from_curves(&curves, braid_length, entangled, coeffs, eps)
    }

    pub fn from_curves(
        curves: &[Polyline],
        braid_length: usize,
        entangled: bool,
        coeffs: &RiskCoeffs,
        eps: f64,
    ) -> TopoState {
        let linking = linking_matrix(curves, eps);
        let writhes = curves.iter().map(|c| writhe(c, eps)).collect();
        let risk = risk_score(max_abs_offdiag(&linking), braid_length, entangled, coeffs);
        TopoState {
            linking,
            writhes,
            braid_length,
            entangled,
            risk,
        }
    }

    pub fn max_abs_linking(&self) -> f64 {
        max_abs_offdiag(&self.linking)
    }

    /// Largest `|Lk_jk|` in row `j`.
    pub fn row_max_abs_linking(&self, j: usize) -> f64 {
        self.linking[j]
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != j)
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max)
    }
}

pub fn max_abs_offdiag(m: &[Vec<f64>]) -> f64 {
    let mut best: f64 = 0.0;
    for (j, row) in m.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            if j != k {
                best = best.max(v.abs());
            }
        }
    }
    best
}

/// Convenience wrapper matching the scoring signature used by callers that
/// already hold arm states.
pub fn topo_state(arms: &[ArmState], braid_length: usize, entangled: bool, coeffs: &RiskCoeffs) -> TopoState {
    TopoState::compute(arms, braid_length, entangled, coeffs, DEFAULT_EPS)
}

/// Thresholds for the persistent entanglement indicator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EntanglementThresholds {
    pub linking: f64,
    pub braid_length: usize,
    pub persistence: u32,
}

impl Default for EntanglementThresholds {
    fn default() -> Self {
        Self {
            linking: 0.8,
            braid_length: 4,
            persistence: 3,
        }
    }
}

/// Hysteresis on the entanglement condition: the indicator turns on once
/// `max|Lk| ≥ linking` and `|Br| ≥ braid_length` have held for
/// `persistence` consecutive steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntanglementMonitor {
    pub thresholds: EntanglementThresholds,
    streak: u32,
}

impl EntanglementMonitor {
    pub fn new(thresholds: EntanglementThresholds) -> Self {
        Self { thresholds, streak: 0 }
    }

    pub fn condition(&self, max_abs_linking: f64, braid_length: usize) -> bool {
        max_abs_linking >= self.thresholds.linking && braid_length >= self.thresholds.braid_length
    }

    /// Indicator value if `condition` were observed next, without updating.
    pub fn peek(&self, condition: bool) -> bool {
        condition && self.streak + 1 >= self.thresholds.persistence
    }

    pub fn update(&mut self, condition: bool) -> bool {
        self.streak = if condition { self.streak + 1 } else { 0 };
        self.is_entangled()
    }

    pub fn is_entangled(&self) -> bool {
        self.streak >= self.thresholds.persistence
    }

    pub fn streak(&self) -> u32 {
        self.streak
    }

    pub fn reset(&mut self) {
        self.streak = 0;
    }
}
