use antitangle_core::geometry::{
    arc_length, closest_on_segment, curvature_profile, node_obstacle_clearance, segment_distance, torsion_profile,
    tube_obstacle_clearance, Mat3, Obstacle, Polyline, Vec3,
};
use antitangle_core::risk::{
    adaptive_discount, concurrency_budget, screen_action, Decision, LookaheadRisk, RiskCoeffs, ScalableAction,
};
use antitangle_core::topology::{linking_number, writhe, DEFAULT_EPS};
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = Vec3> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn polyline(n: usize) -> impl Strategy<Value = Polyline> {
    prop::collection::vec(vec3(), n).prop_filter_map("repeated node", |pts| Polyline::new(pts).ok())
}

fn rigid() -> impl Strategy<Value = (Mat3, Vec3)> {
    (vec3(), 0.0..std::f64::consts::TAU, vec3()).prop_filter_map("zero axis", |(axis, angle, shift)| {
        axis.normalized().map(|a| (Mat3::rotation(a, angle), shift))
    })
}

proptest! {
    #[test]
    fn rigid_motions_preserve_geometry_and_topology(
        a in polyline(10), b in polyline(8), (rot, shift) in rigid()
    ) {
        let mv = |p: &Polyline| p.map_points(|x| rot.mul_vec(x) + shift).unwrap();
        let (a2, b2) = (mv(&a), mv(&b));
        prop_assert!((arc_length(&a) - arc_length(&a2)).abs() < 1e-9);
        for (k, k2) in curvature_profile(&a).iter().zip(curvature_profile(&a2)) {
            prop_assert!((k - k2).abs() <= 1e-6 * (1.0 + k.abs()));
        }
        let lk = linking_number(&a, &b, DEFAULT_EPS);
        let lk2 = linking_number(&a2, &b2, DEFAULT_EPS);
        prop_assert!((lk - lk2).abs() < 1e-6 * (1.0 + lk.abs()), "{} {}", lk, lk2);
        let w = writhe(&a, DEFAULT_EPS);
        prop_assert!((w - writhe(&a2, DEFAULT_EPS)).abs() < 1e-6 * (1.0 + w.abs()));
        let t = torsion_profile(&a);
        prop_assert_eq!(t.len(), torsion_profile(&a2).len());
    }

    #[test]
    fn clearance_is_lipschitz_and_monotone(
        nodes in prop::collection::vec(vec3(), 2..12),
        center in vec3(), dir in vec3(), step in 0.01..3.0f64, radius in 0.01..1.0f64,
    ) {
        let Some(d) = dir.normalized() else { return Ok(()) };
        let near = Obstacle::new(center, radius).unwrap();
        let far_center = center + d * step;
        let far = Obstacle::new(far_center, radius).unwrap();
        let c_near = node_obstacle_clearance(&nodes, &[near], 0.05);
        let c_far = node_obstacle_clearance(&nodes, &[far], 0.05);
        // 1-Lipschitz in the obstacle position
        prop_assert!((c_far - c_near).abs() <= step + 1e-12);
        let shrunk = Obstacle::new(center, radius * 0.5).unwrap();
        prop_assert!(node_obstacle_clearance(&nodes, &[shrunk], 0.05) >= c_near);
        prop_assert!(node_obstacle_clearance(&nodes, &[near, far], 0.05) <= c_near);
    }

    #[test]
    fn budget_is_monotone_and_bounded(
        br in 0usize..200, n_min in 1usize..5, extra in 0usize..20, alpha in 0.0..3.0f64, dalpha in 0.0..1.0f64,
    ) {
        let n_max = n_min + extra;
        let b = concurrency_budget(br, n_min, n_max, alpha);
        prop_assert!(n_min <= b && b <= n_max);
        prop_assert!(concurrency_budget(br + 1, n_min, n_max, alpha) <= b);
        prop_assert!(concurrency_budget(br, n_min, n_max, alpha + dalpha) <= b);
    }

    #[test]
    fn discount_is_decreasing_and_lipschitz(r in 0.0..50.0f64, dr in 1e-9..5.0f64) {
        let (g0, g1) = (adaptive_discount(r), adaptive_discount(r + dr));
        prop_assert!(g1 <= g0);
        prop_assert!(g0 - g1 <= 0.4 * dr + 1e-15);
        // tanh saturates to exactly 1 in floating point
        prop_assert!(g1 >= 0.89 && g0 <= 0.99);
    }

    #[test]
    fn screening_never_passes_high_risk_silently(
        base in 0.0..2.0f64, slope in 0.0..1.0f64, speed in 0.0..3.0f64,
    ) {
        let c = RiskCoeffs::default();
        let s = Affine { base, slope };
        let out = screen_action(&s, Speed(speed), &c);
        prop_assert!(out.executed_risk < c.theta_high || out.replan_requested);
        prop_assert_eq!(out.executed_risk, s.lookahead_risk(&out.action));
        if out.decision == Decision::Scaled {
            prop_assert!(out.action.0 <= speed && out.action.0 >= 0.1 * speed - 1e-15);
        }
    }
}

proptest! {
    #[test]
    fn segment_distance_matches_dense_sampling(p0 in vec3(), p1 in vec3(), q0 in vec3(), q1 in vec3()) {
        let (d, s, t) = segment_distance(p0, p1, q0, q1);
        let at = |a: Vec3, b: Vec3, u: f64| a + (b - a) * u;
        prop_assert!((at(p0, p1, s).distance(at(q0, q1, t)) - d).abs() < 1e-9);
        // grid oracle can only overestimate the true minimum
        let n = 200;
        let mut best = f64::INFINITY;
        for i in 0..=n {
            let a = at(p0, p1, i as f64 / n as f64);
            best = best.min(a.distance(closest_on_segment(a, q0, q1)));
        }
        prop_assert!(d <= best + 1e-9);
        let spread = p0.distance(p1) / n as f64;
        prop_assert!(best - d <= spread + 1e-9);
    }

    #[test]
    fn tube_clearance_never_exceeds_node_clearance(nodes in prop::collection::vec(vec3(), 2..6), c in vec3(), r in 0.01..0.5f64) {
        let o = Obstacle::new(c, r).unwrap();
        prop_assert!(tube_obstacle_clearance(&nodes, &[o], 0.02) <= node_obstacle_clearance(&nodes, &[o], 0.02) + 1e-12);
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Speed(f64);

impl ScalableAction for Speed {
    fn scale_velocity(&self, f: f64) -> Self {
        Speed(self.0 * f)
    }
}

struct Affine {
    base: f64,
    slope: f64,
}

impl LookaheadRisk<Speed> for Affine {
    fn lookahead_risk(&self, a: &Speed) -> f64 {
        self.base + self.slope * a.0
    }
    fn conservative_action(&self) -> Speed {
        Speed(0.0)
    }
}
