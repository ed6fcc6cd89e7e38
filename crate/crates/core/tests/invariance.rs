//! Surrogates for ambient-isotopy invariance: smooth random deformations of
//! space that keep the curves apart should barely move Lk and Wr.

use std::f64::consts::TAU;

use antitangle_core::geometry::{Polyline, Vec3};
use antitangle_core::topology::{linking_number, writhe, DEFAULT_EPS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Peak displacement of the random deformation field.
const AMPLITUDE: f64 = 0.05;
const TRIALS: usize = 100;

fn closed(f: impl Fn(f64) -> Vec3, n: usize) -> Polyline {
    let mut pts: Vec<Vec3> = (0..n).map(|k| f(TAU * k as f64 / n as f64)).collect();
    pts.push(pts[0]);
    Polyline::new(pts).unwrap()
}

fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if let Some(u) = v.normalized() {
            return u;
        }
    }
}

/// `x ↦ x + A·Σ cₘ sin(kₘ·x + φₘ)/3` with random unit `cₘ`, `|kₘ| = 1`:
/// Lipschitz constant of the displacement is below `A`, so the map is a
/// diffeomorphism of space.
struct Deformation {
    modes: Vec<(Vec3, Vec3, f64)>,
}

impl Deformation {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let modes = (0..3)
            .map(|_| (unit(rng), unit(rng), rng.gen_range(0.0..TAU)))
            .collect();
        Self { modes }
    }

    fn apply(&self, p: Vec3) -> Vec3 {
        let mut d = Vec3::ZERO;
        for (c, k, phi) in &self.modes {
            d += *c * (k.dot(p) + phi).sin();
        }
        p + d * (AMPLITUDE / 3.0)
    }
}

fn segment_distance(p0: Vec3, p1: Vec3, q0: Vec3, q1: Vec3) -> f64 {
    let (d1, d2, r) = (p1 - p0, q1 - q0, p0 - q0);
    let (a, e, f) = (d1.dot(d1), d2.dot(d2), d2.dot(r));
    let (c, b) = (d1.dot(r), d1.dot(d2));
    let denom = a * e - b * b;
    let mut s = if denom > 1e-15 {
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
    (p0 + d1 * s).distance(q0 + d2 * t)
}

fn min_distance(a: &Polyline, b: &Polyline) -> f64 {
    let mut best = f64::INFINITY;
    for sa in a.points().windows(2) {
        for sb in b.points().windows(2) {
            best = best.min(segment_distance(sa[0], sa[1], sb[0], sb[1]));
        }
    }
    best
}

/// Minimum distance between non-adjacent segments of one closed curve.
fn min_self_distance(a: &Polyline) -> f64 {
    let p = a.points();
    let n = p.len() - 1;
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            best = best.min(segment_distance(p[i], p[i + 1], p[j], p[j + 1]));
        }
    }
    best
}

#[test]
fn linking_survives_guard_banded_deformation() {
    let a = closed(|t| Vec3::new(t.cos(), t.sin(), 0.0), 200);
    let b = closed(|t| Vec3::new(1.0 + t.cos(), 0.0, t.sin()), 200);
    let lk0 = linking_number(&a, &b, DEFAULT_EPS);
    let guard = 0.1 * min_distance(&a, &b);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..TRIALS {
        let f = Deformation::random(&mut rng);
        let a2 = a.map_points(|p| f.apply(p)).unwrap();
        let b2 = b.map_points(|p| f.apply(p)).unwrap();
        assert!(min_distance(&a2, &b2) > guard);
        worst = worst.max((linking_number(&a2, &b2, DEFAULT_EPS) - lk0).abs());
    }
    eprintln!("worst |dLk| = {worst:e}");
    assert!(worst < 5e-2);
}

#[test]
fn writhe_survives_guard_banded_deformation() {
    let trefoil = closed(
        |t| {
            Vec3::new(
                t.sin() + 2.0 * (2.0 * t).sin(),
                t.cos() - 2.0 * (2.0 * t).cos(),
                -(3.0 * t).sin(),
            )
        },
        300,
    );
    let wr0 = writhe(&trefoil, DEFAULT_EPS);
    let guard = 0.1 * min_self_distance(&trefoil);
    let mut rng = ChaCha8Rng::seed_from_u64(2025);
    let mut worst: f64 = 0.0;
    for _ in 0..TRIALS {
        let f = Deformation::random(&mut rng);
        let k2 = trefoil.map_points(|p| f.apply(p)).unwrap();
        assert!(min_self_distance(&k2) > guard);
        worst = worst.max((writhe(&k2, DEFAULT_EPS) - wr0).abs());
    }
    eprintln!("worst |dWr| = {worst:e} (Wr0 = {wr0})");
    assert!(worst < 5e-2);
}
