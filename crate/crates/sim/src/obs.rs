//! Local arm observations for the decentralized policies and the global
//! features appended for the centralized critic.

use antitangle_core::geometry::{chain_distance, closest_on_segment, Vec3};

use crate::env::{nodes_clearance, Env};

/// Length of [`arm_observation`].
pub const ARM_OBS_DIM: usize = 29;
/// Length of [`global_features`].
pub const GLOBAL_DIM: usize = 3;
/// Clearances are reported up to this distance.
const CLEARANCE_CAP: f64 = 0.3;

fn push3(out: &mut Vec<f64>, v: Vec3, scale: f64) {
    out.extend_from_slice(&[v.x * scale, v.y * scale, v.z * scale]);
}

/// What arm `j` sees: its own shape and motion, its topological coupling to
/// neighbours, its goal, and the nearest other arm along the way there.
pub fn arm_observation(env: &Env, j: usize) -> Vec<f64> {
    let s = env.state();
    let sc = &env.scenario;
    let cfg = &sc.config;
    let n = env.arms();
    let arm = &s.arms[j];
    let len = cfg.arm_length();
    let tip = arm.tip();
    let base = arm.base();
    let goal = env.goal(j);
    let topo = &s.topo;
    let mut o = Vec::with_capacity(ARM_OBS_DIM);

    push3(&mut o, tip - base, 1.0 / len);
    push3(
        &mut o,
        arm.velocities().last().copied().unwrap_or(Vec3::ZERO),
        cfg.dt / cfg.segment_length,
    );
    o.push(topo.writhes[j]);
    o.push(topo.row_max_abs_linking(j));
    o.push(if j > 0 { topo.linking[j][j - 1] } else { 0.0 });
    o.push(if j + 1 < n { topo.linking[j][j + 1] } else { 0.0 });
    let nodes = arm.centerline().points();
    o.push(nodes_clearance(nodes, sc).min(CLEARANCE_CAP) / CLEARANCE_CAP);
    let separation = s
        .arms
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != j)
        .map(|(_, a)| chain_distance(nodes, a.centerline().points()) - 2.0 * cfg.arm_radius)
        .fold(f64::INFINITY, f64::min);
    o.push(separation.min(CLEARANCE_CAP) / CLEARANCE_CAP);

    let assigned = s.allocation.assignment[j];
    o.push(if assigned.is_some() { 1.0 } else { 0.0 });
    push3(&mut o, goal - tip, 1.0 / len);
    o.push(goal.distance(tip) / len);
    let between = sc.arms_between(j, goal) as f64;
    o.push((goal.x - base.x).signum() * between / n as f64);

    // nearest other-arm point to the straight path tip → goal
    let mut near_d = CLEARANCE_CAP;
    let mut near_dz = 0.0;
    for (k, a) in s.arms.iter().enumerate() {
        if k == j {
            continue;
        }
        for &q in a.centerline().points() {
            let c = closest_on_segment(q, tip, goal);
            let d = c.distance(q);
            if d < near_d {
                near_d = d;
                near_dz = (q - c).dot(cfg.projection);
            }
        }
    }
    o.push(near_d / CLEARANCE_CAP);
    o.push(near_dz / CLEARANCE_CAP);

    o.push((s.braid.len() as f64 / env.risk.c1).tanh());
    o.push(topo.max_abs_linking());
    o.push(topo.risk.min(10.0));
    o.push(s.allocation.active_count() as f64 / n as f64);
    let persistence = s.monitor.thresholds.persistence.max(1) as f64;
    o.push(s.monitor.streak() as f64 / persistence);
    o.push(assigned.map(|p| s.tasks.progress(p)).unwrap_or(0.0));
    o.push(nodes[0].distance(nodes[1]) / cfg.segment_length);
    o.push(if env.replan_active() { 1.0 } else { 0.0 });
    o.push((tip.z - base.z) / len);
    debug_assert_eq!(o.len(), ARM_OBS_DIM);
    o
}

/// Episode-level features the centralized critic sees in addition.
pub fn global_features(env: &Env) -> [f64; GLOBAL_DIM] {
    let s = env.state();
    [
        s.tasks.completion_fraction(),
        env.time() as f64 / env.scenario.config.horizon as f64,
        s.allocation.active_count() as f64 / env.arms() as f64,
    ]
}

/// Critic input: arm observation followed by the global features.
pub fn value_input(obs: &[f64], global: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(obs.len() + global.len());
    v.extend_from_slice(obs);
    v.extend_from_slice(global);
    v
}
