//! The multi-arm environment: follow-the-leader kinematics with constraint
//! projection, crossing/braid bookkeeping, task progress, rewards and the
//! C1–C8 constraint checker.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use antitangle_core::braid::{simplify, BraidWord, Letter};
use antitangle_core::geometry::{
    chain_distance, closest_on_segment, curvature_profile, min_obstacle_clearance, segment_distance, tangent_frames,
    torsion_profile, tube_obstacle_clearance, ArmState, Mat3, Polyline, Vec3,
};
use antitangle_core::risk::{risk_score, Decision, LookaheadRisk, RiskCoeffs, ScalableAction};
use antitangle_core::topology::{
    detect_crossings, linking_number, max_abs_offdiag, writhe, CrossingSign, EntanglementMonitor, TopoState,
};
use serde::{Deserialize, Serialize};

use crate::config::{RewardCoeffs, RunConfig};
use crate::scenario::Scenario;
use crate::tasks::{standard_tasks, Allocation, ProcessId, Schedule, TaskGraph};

/// Tolerance for the exact-projection constraints (C2–C5).
pub const CONSTRAINT_TOL: f64 = 1e-9;
/// Velocity halvings tried before a projected step is reverted.
const BISECTIONS: usize = 3;
/// Push-out / re-anchor rounds per attempt.
const CLEARANCE_PASSES: usize = 6;
const FABRIK_ITERS: usize = 3;
/// Arc length kept per unit of base-to-tip distance.
const ARC_SLACK: f64 = 1.05;
/// Share of the per-step travel budget usable for retracting/extending.
const RESIZE_RATE: f64 = 0.5;
/// Extra distance kept when pushing nodes clear of obstacles and other arms.
const PUSH_MARGIN: f64 = 0.005;
/// Turning-angle headroom below the curvature bound (rad).
const TURN_MARGIN: f64 = 1e-6;
/// Below this turning sine a joint has no osculating plane (matches the
/// torsion profile's collinear threshold with headroom).
const TORSION_FREE_SIN: f64 = 1e-6;
/// Gain of the conservative retraction toward the rest pose (per step).
const RETRACT_GAIN: f64 = 0.3;
/// Height of the detour waypoint for over/under approaches.
const DETOUR_HEIGHT: f64 = 0.2;
const DETOUR_RANGE: f64 = 0.15;

/// Per-arm command: node velocity profile, orientation adjustment,
/// curvature bound and speed limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmAction {
    /// Commanded velocity of every node (the base entry is ignored).
    pub velocities: Vec<Vec3>,
    /// Twist rate about the local tangent (rad/s).
    pub orientation_rate: f64,
    /// Curvature bound for this step (capped by the scenario's κ_max).
    pub curvature_target: f64,
    /// Fraction of v_max allowed this step.
    pub speed_limit: f64,
}

impl ArmAction {
    pub fn idle(nodes: usize, kappa_max: f64) -> Self {
        Self {
            velocities: vec![Vec3::ZERO; nodes],
            orientation_rate: 0.0,
            curvature_target: kappa_max,
            speed_limit: 1.0,
        }
    }

    pub fn max_speed(&self) -> f64 {
        self.velocities.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

impl ScalableAction for ArmAction {
    fn scale_velocity(&self, factor: f64) -> Self {
        Self {
            velocities: self.velocities.iter().map(|v| *v * factor).collect(),
            orientation_rate: self.orientation_rate * factor,
            ..self.clone()
        }
    }
}

/// Discrete motion primitives the arm policies choose from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    /// Straight toward the goal.
    Direct,
    /// Toward the goal through a raised waypoint.
    Over,
    /// Toward the goal through a lowered waypoint.
    Under,
    Hold,
    /// Tip back toward its rest position.
    Retract,
}

impl Primitive {
    pub const ALL: [Primitive; 5] = [
        Primitive::Direct,
        Primitive::Over,
        Primitive::Under,
        Primitive::Hold,
        Primitive::Retract,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|p| *p == self).unwrap()
    }
}

/// Scheduler decision for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerAction {
    /// New (arm, process) assignments.
    pub assign: Vec<(usize, ProcessId)>,
    pub concurrency: usize,
    /// Use the risk-sensitive discount for this step.
    pub adaptive_gamma: bool,
}

/// An arm's executed command with its screening record.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmCommand {
    pub action: ArmAction,
    /// `None` when screening is disabled.
    pub decision: Option<Decision>,
    pub replan: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepEvents {
    pub completed: Vec<(usize, ProcessId)>,
    pub started: Vec<(usize, ProcessId)>,
    pub released: Vec<(usize, ProcessId)>,
    /// Arms credited with enabling another arm's start.
    pub collaborators: Vec<usize>,
    pub letters: Vec<Letter>,
    /// Arms whose raw step had to be halved or reverted.
    pub projected: Vec<usize>,
    pub rejected_assignments: usize,
    pub degenerate_crossings: usize,
    pub progressed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub scheduler_reward: f64,
    pub arm_rewards: Vec<f64>,
    pub risk: f64,
    pub gamma: f64,
    pub events: StepEvents,
    pub done: bool,
    pub entangled: bool,
    pub success: bool,
}

/// Everything that changes during an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub arms: Vec<ArmState>,
    pub twist: Vec<f64>,
    pub allocation: Allocation,
    pub tasks: TaskGraph,
    /// Target index of each process, keyed by process.
    pub process_targets: BTreeMap<ProcessId, usize>,
    pub braid: BraidWord,
    /// Projected crossings per strand pair currently present: (over, under).
    pub crossings: Vec<(u32, u32)>,
    pub monitor: EntanglementMonitor,
    pub topo: TopoState,
    pub time: u64,
    pub replan_until: u64,
    /// Arm that completed each process.
    pub completed_by: BTreeMap<ProcessId, usize>,
}

pub struct Env {
    pub scenario: Scenario,
    pub risk: RiskCoeffs,
    pub rewards: RewardCoeffs,
    pub eps: f64,
    pub fixture: Schedule,
    /// Steps a replan request keeps the scheduler in reduced-budget mode.
    pub replan_steps: u64,
    state: EnvState,
    done: bool,
    pending: StepEvents,
    adaptive_gamma: bool,
}

fn polyline(nodes: &[Vec3]) -> Polyline {
    Polyline::new(nodes.to_vec()).expect("projected arms keep distinct nodes")
}

fn direction_or(v: Vec3, fallback: Vec3) -> Vec3 {
    v.normalized().unwrap_or(fallback)
}

/// Segment-length, curvature and torsion bounds for re-anchoring a chain.
#[derive(Debug, Clone, Copy)]
struct ChainLimits {
    seg: f64,
    kappa_max: f64,
    tau_max: f64,
}

/// Largest turning angle between consecutive segments of lengths `a` and
/// `b` whose Menger curvature `2 sin θ / |a + b|` stays within `kappa`.
pub fn max_turn_angle(a: f64, b: f64, kappa: f64) -> f64 {
    // 4(1 - c²) <= κ²(a² + b² + 2ab·c) with c = cos θ
    let k2 = kappa * kappa;
    let (qa, qb, qc) = (4.0, 2.0 * k2 * a * b, k2 * (a * a + b * b) - 4.0);
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return std::f64::consts::PI;
    }
    let c_min = (-qb + disc.sqrt()) / (2.0 * qa);
    (c_min.clamp(-1.0, 1.0).acos() - TURN_MARGIN).max(0.0)
}

/// Rotates `d` about the unit axis `t1` so that the folded dihedral angle
/// between planes `(t0, t1)` and `(t1, d)` is at most `phi_max`.
fn limit_dihedral(t0: Vec3, t1: Vec3, d: Vec3, phi_max: f64) -> Vec3 {
    let b1 = t0.cross(t1);
    let b2 = t1.cross(d);
    if b1.norm() <= TORSION_FREE_SIN * t0.norm() || b2.norm() <= TORSION_FREE_SIN * d.norm() {
        return d;
    }
    let psi = b1.cross(b2).dot(t1).atan2(b1.dot(b2));
    let folded = if psi.abs() <= FRAC_PI_2 {
        psi.abs()
    } else {
        PI - psi.abs()
    };
    if folded <= phi_max {
        return d;
    }
    let delta = if psi.abs() <= FRAC_PI_2 {
        -psi.signum() * (psi.abs() - phi_max)
    } else {
        psi.signum() * ((PI - phi_max) - psi.abs())
    };
    Mat3::rotation(t1, delta).mul_vec(d)
}

/// Forward FABRIK pass: re-imposes the segment length outward from the
/// fixed base, limiting each joint's turning angle and dihedral twist.
fn anchor_from_base(p: &mut [Vec3], lim: ChainLimits) {
    let mut prev = direction_or(p[1] - p[0], Vec3::Y);
    let mut before: Option<Vec3> = None;
    for i in 0..p.len() - 1 {
        let len = lim.seg;
        let mut d = direction_or(p[i + 1] - p[i], prev);
        if i > 0 {
            let a = p[i].distance(p[i - 1]);
            let max_turn = max_turn_angle(a, len, lim.kappa_max);
            let c = d.dot(prev).clamp(-1.0, 1.0);
            if c.acos() > max_turn {
                let perp = (d - prev * c).normalized().unwrap_or_else(|| prev.any_orthogonal());
                d = prev * max_turn.cos() + perp * max_turn.sin();
            }
            if let Some(t0) = before {
                let phi_max = (lim.tau_max * a - TURN_MARGIN).max(0.0);
                d = limit_dihedral(t0, prev, d, phi_max);
            }
            before = Some(prev);
        }
        p[i + 1] = p[i] + d * len;
        prev = d;
    }
}

/// Backward FABRIK pass: drags nodes behind the tip at the segment length.
fn follow_tip(p: &mut [Vec3], seg: f64) {
    let m = p.len();
    for i in (1..m - 1).rev() {
        let d = direction_or(p[i] - p[i + 1], -Vec3::Y);
        p[i] = p[i + 1] + d * seg;
    }
}

impl Env {
    pub fn new(cfg: &RunConfig, scenario: Scenario, fixture: Schedule, episode_seed: u64) -> Self {
        let tasks = standard_tasks();
        let gaps = fixture.gap_table(&tasks);
        let graph = TaskGraph::with_gaps(tasks, gaps).expect("chain graph");
        let mut env = Env {
            risk: cfg.risk,
            rewards: cfg.rewards,
            eps: cfg.topology.eps,
            fixture,
            replan_steps: cfg.safety.replan_steps,
            state: EnvState {
                arms: Vec::new(),
                twist: Vec::new(),
                allocation: Allocation::new(0),
                tasks: graph,
                process_targets: BTreeMap::new(),
                braid: BraidWord::identity(scenario.arms().max(2)).unwrap(),
                crossings: Vec::new(),
                monitor: EntanglementMonitor::new(cfg.topology.entanglement),
                topo: TopoState {
                    linking: vec![],
                    writhes: vec![],
                    braid_length: 0,
                    entangled: false,
                    risk: 0.0,
                },
                time: 0,
                replan_until: 0,
                completed_by: BTreeMap::new(),
            },
            scenario,
            done: false,
            pending: StepEvents::default(),
            adaptive_gamma: false,
        };
        env.reset(episode_seed);
        env
    }

    /// Rest pose, fresh tasks, processes mapped to targets by `seed`.
    pub fn reset(&mut self, seed: u64) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = self.scenario.arms();
        let s = &mut self.state;
        s.arms = self
            .scenario
            .rest
            .iter()
            .map(|r| ArmState::at_rest(r.clone()))
            .collect();
        s.twist = vec![0.0; n];
        s.allocation = Allocation::new(n);
        let tasks = s.tasks.tasks.clone();
        let gaps = s.tasks.gaps.clone();
        s.tasks = TaskGraph::with_gaps(tasks, gaps).expect("chain graph");
        let n_targets = self.scenario.workspace.targets.len();
        s.process_targets = s.tasks.processes().map(|p| (p, rng.gen_range(0..n_targets))).collect();
        s.braid = BraidWord::identity(n.max(2)).unwrap();
        s.crossings = vec![(0, 0); n.saturating_sub(1)];
        s.monitor.reset();
        s.time = 0;
        s.replan_until = 0;
        s.completed_by.clear();
        self.done = false;
        self.pending = StepEvents::default();
        self.refresh_topology();
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    /// Direct access for diagnostics and forced-violation tests; bypasses
    /// every projection and gate.
    pub fn state_mut(&mut self) -> &mut EnvState {
        &mut self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn arms(&self) -> usize {
        self.scenario.arms()
    }

    pub fn time(&self) -> u64 {
        self.state.time
    }

    pub fn topo(&self) -> &TopoState {
        &self.state.topo
    }

    pub fn target_of(&self, p: ProcessId) -> Vec3 {
        self.scenario.workspace.targets[self.state.process_targets[&p]]
    }

    /// Goal point of arm `j`: its process target, or its rest tip.
    pub fn goal(&self, j: usize) -> Vec3 {
        match self.state.allocation.assignment[j] {
            Some(p) => self.target_of(p),
            None => self.scenario.rest[j].last(),
        }
    }

    pub fn replan_active(&self) -> bool {
        self.state.time < self.state.replan_until
    }

    fn curves(&self) -> Vec<Polyline> {
        self.state.arms.iter().map(|a| a.centerline().clone()).collect()
    }

    fn refresh_topology(&mut self) {
        let curves = self.curves();
        let br = self.state.braid.len();
        let entangled = self.state.monitor.is_entangled();
        self.state.topo = TopoState::from_curves(&curves, br, entangled, &self.risk, self.eps);
    }

    /// Velocity command for a primitive.
    pub fn primitive_action(&self, j: usize, prim: Primitive) -> ArmAction {
        let cfg = &self.scenario.config;
        let arm = &self.state.arms[j];
        let tip = arm.tip();
        let mut action = ArmAction::idle(cfg.nodes, cfg.kappa_max);
        let goal = match prim {
            Primitive::Hold => return action,
            Primitive::Retract => self.scenario.rest[j].last(),
            _ => self.goal(j),
        };
        let aim = match prim {
            Primitive::Over | Primitive::Under => {
                let horizontal = Vec3::new(goal.x - tip.x, goal.y - tip.y, 0.0).norm();
                let lift = DETOUR_HEIGHT * (horizontal / DETOUR_RANGE).min(1.0);
                let sign = if prim == Primitive::Over { 1.0 } else { -1.0 };
                goal + cfg.projection * (sign * lift)
            }
            _ => goal,
        };
        let delta = aim - tip;
        let dist = delta.norm();
        if dist > 0.0 {
            let speed = (dist / cfg.dt).min(cfg.v_max);
            action.velocities[cfg.nodes - 1] = delta * (speed / dist);
        }
        action
    }

    /// Zero target velocity plus retraction of every node toward rest.
    pub fn conservative_action(&self, j: usize) -> ArmAction {
        let cfg = &self.scenario.config;
        let mut action = ArmAction::idle(cfg.nodes, cfg.kappa_max);
        let rest = self.scenario.rest[j].points();
        for (i, (p, r)) in self.state.arms[j]
            .centerline()
            .points()
            .iter()
            .zip(rest)
            .enumerate()
            .skip(1)
        {
            let v = (*r - *p) * (RETRACT_GAIN / cfg.dt);
            let s = v.norm();
            action.velocities[i] = if s > cfg.v_max { v * (cfg.v_max / s) } else { v };
        }
        action
    }

    /// Every per-arm constraint (C1–C5 and arm separation) for new nodes
    /// `p` of arm `j` reached from `old` in one step.
    fn admissible(&self, j: usize, p: &[Vec3], old: &[Vec3], kappa_max: f64) -> bool {
        let cfg = &self.scenario.config;
        let ws = &self.scenario.workspace;
        let Ok(line) = Polyline::new(p.to_vec()) else {
            return false;
        };
        let arc: f64 = line.segments().map(Vec3::norm).sum();
        p.iter()
            .zip(old)
            .all(|(a, b)| a.distance(*b) <= cfg.v_max * cfg.dt + CONSTRAINT_TOL)
            && p.iter().all(|x| ws.bounds.contains(*x))
            && tube_obstacle_clearance(p, &ws.obstacles, cfg.arm_radius) >= 0.0
            && curvature_profile(&line)
                .iter()
                .all(|k| *k <= kappa_max + CONSTRAINT_TOL)
            && torsion_profile(&line)
                .iter()
                .all(|t| t.abs() <= cfg.tau_max + CONSTRAINT_TOL)
            && arc <= cfg.arm_length() + CONSTRAINT_TOL
            && self
                .state
                .arms
                .iter()
                .enumerate()
                .all(|(k, a)| k == j || chain_distance(p, a.centerline().points()) >= 2.0 * cfg.arm_radius)
    }

    /// Moves nodes of arm `j` out of obstacles, other arms and the
    /// workspace boundary (the base stays fixed).
    fn push_clear(&self, j: usize, p: &mut [Vec3]) {
        let cfg = &self.scenario.config;
        let ws = &self.scenario.workspace;
        for o in &ws.obstacles {
            let need = o.radius + cfg.arm_radius + PUSH_MARGIN;
            for i in 1..p.len() {
                let q = closest_on_segment(o.center, p[i - 1], p[i]);
                let d = q.distance(o.center);
                if d < need {
                    let shift = direction_or(q - o.center, cfg.projection) * (need - d);
                    p[i] += shift;
                    if i > 1 {
                        p[i - 1] += shift;
                    }
                }
            }
        }
        let need = 2.0 * cfg.arm_radius + PUSH_MARGIN;
        for (k, arm) in self.state.arms.iter().enumerate() {
            if k == j {
                continue;
            }
            let other = arm.centerline().points();
            for i in 1..p.len() {
                for w in other.windows(2) {
                    let (d, s, t) = segment_distance(p[i - 1], p[i], w[0], w[1]);
                    if d < need {
                        let a = p[i - 1].lerp(p[i], s);
                        let b = w[0].lerp(w[1], t);
                        let shift = direction_or(a - b, cfg.projection) * (need - d);
                        p[i] += shift;
                        if i > 1 {
                            p[i - 1] += shift;
                        }
                    }
                }
            }
        }
        for x in p.iter_mut().skip(1) {
            *x = ws.bounds.clamp(*x);
        }
    }

    /// One kinematic step of arm `j` against the other arms' current
    /// configuration, projected onto the constraints. Returns the new nodes
    /// and whether the raw command had to be modified.
    pub fn kinematic_preview(&self, j: usize, action: &ArmAction) -> (Vec<Vec3>, bool) {
        let cfg = &self.scenario.config;
        let old = self.state.arms[j].centerline().points();
        let kappa_max = action.curvature_target.min(cfg.kappa_max);
        let lim = ChainLimits {
            seg: 0.0,
            kappa_max,
            tau_max: cfg.tau_max,
        };
        let limit = cfg.v_max * action.speed_limit.clamp(0.0, 1.0);
        // C2 on the command itself
        let mut clamped = false;
        let vel: Vec<Vec3> = action
            .velocities
            .iter()
            .map(|v| {
                let s = v.norm();
                if s > limit {
                    clamped = true;
                    *v * (limit / s)
                } else {
                    *v
                }
            })
            .collect();
        if vel.iter().all(|v| *v == Vec3::ZERO) {
            return (old.to_vec(), clamped);
        }
        let m = old.len();
        let seg_old = old[0].distance(old[1]);
        let mut scale = 1.0;
        for attempt in 0..=BISECTIONS {
            let mut p: Vec<Vec3> = old.iter().zip(&vel).map(|(x, v)| *x + *v * (cfg.dt * scale)).collect();
            p[0] = old[0];
            let tip = p[m - 1];
            // segments lengthen or retract with the base-to-tip distance
            let want =
                (tip.distance(p[0]) * ARC_SLACK / (m - 1) as f64).clamp(cfg.min_segment_length, cfg.segment_length);
            let rate = RESIZE_RATE * limit * cfg.dt * scale / (m - 1) as f64;
            let lim = ChainLimits {
                seg: seg_old + (want - seg_old).clamp(-rate, rate),
                ..lim
            };
            for _ in 0..FABRIK_ITERS {
                p[m - 1] = tip;
                follow_tip(&mut p, lim.seg);
                anchor_from_base(&mut p, lim);
            }
            for _ in 0..CLEARANCE_PASSES {
                if self.admissible(j, &p, old, kappa_max) {
                    break;
                }
                self.push_clear(j, &mut p);
                anchor_from_base(&mut p, lim);
            }
            if self.admissible(j, &p, old, kappa_max) {
                return (p, clamped || attempt > 0);
            }
            scale *= 0.5;
        }
        (old.to_vec(), true)
    }

    /// Braid letters from the change in projected crossings, strand order.
    fn crossing_letters(
        &self,
        curves: &[Polyline],
        strands: &[usize],
    ) -> (Vec<Letter>, Vec<(usize, (u32, u32))>, usize) {
        let mut letters = Vec::new();
        let mut counts = Vec::new();
        let mut degenerate = 0;
        for &i in strands {
            let report = detect_crossings(&curves[i..i + 2], self.scenario.config.projection, self.state.time);
            degenerate += report.degenerate;
            let over = report.events.iter().filter(|e| e.sign == CrossingSign::Over).count() as u32;
            let under = report.events.len() as u32 - over;
            let (po, pu) = self.state.crossings[i];
            let g = (i + 1) as u16;
            push_delta(&mut letters, over as i64 - po as i64, Letter::sigma_inv(g));
            push_delta(&mut letters, under as i64 - pu as i64, Letter::sigma(g));
            counts.push((i, (over, under)));
        }
        (letters, counts, degenerate)
    }

    fn simplified_with(&self, letters: &[Letter]) -> BraidWord {
        if letters.is_empty() {
            return self.state.braid.clone();
        }
        let mut all = self.state.braid.letters().to_vec();
        all.extend_from_slice(letters);
        let w = BraidWord::from_letters(self.state.braid.strands(), all).expect("strand indices in range");
        simplify(&w).expect("braid simplification within its cap").0
    }

    /// Risk of the state reached if arm `j` alone executed `action`.
    pub fn lookahead_risk(&self, j: usize, action: &ArmAction) -> f64 {
        let (nodes, _) = self.kinematic_preview(j, action);
        let mut curves = self.curves();
        curves[j] = polyline(&nodes);
        let lk = &self.state.topo.linking;
        let n = curves.len();
        let mut max_lk: f64 = 0.0;
        for a in 0..n {
            for b in (a + 1)..n {
                let v = if a == j || b == j {
                    linking_number(&curves[a], &curves[b], self.eps)
                } else {
                    lk[a][b]
                };
                max_lk = max_lk.max(v.abs());
            }
        }
        let strands: Vec<usize> = [j.checked_sub(1), (j + 1 < n).then_some(j)]
            .into_iter()
            .flatten()
            .collect();
        let (letters, _, _) = self.crossing_letters(&curves, &strands);
        let br = self.simplified_with(&letters).len();
        let m = &self.state.monitor;
        let entangled = m.peek(m.condition(max_lk, br));
        risk_score(max_lk, br, entangled, &self.risk)
    }

    /// Lookahead adapter for one arm, for use with `screen_action`.
    pub fn arm_view(&self, j: usize) -> ArmView<'_> {
        ArmView { env: self, arm: j }
    }

    /// Applies scheduler decisions and arm commands for one step.
    pub fn step(&mut self, sched: &SchedulerAction, commands: &[ArmCommand]) -> StepResult {
        self.assign(sched);
        self.act(commands)
    }

    /// First half of a step: gated scheduler assignments. Arms observe their
    /// new goals before choosing commands for [`Env::act`].
    pub fn assign(&mut self, sched: &SchedulerAction) {
        assert!(!self.done, "step after episode end");
        let n = self.arms();
        let now = self.state.time;
        let ev = &mut self.pending;
        for &(j, p) in &sched.assign {
            let ok = j < n
                && self.state.allocation.assignment[j].is_none()
                && self.state.allocation.holder(p).is_none()
                && self.state.tasks.is_eligible(p, now);
            if !ok {
                ev.rejected_assignments += 1;
                continue;
            }
            self.state.allocation.assignment[j] = Some(p);
            self.state.tasks.mark_started(p, now);
            ev.started.push((j, p));
            for q in self.state.tasks.predecessors(p) {
                if let Some(&k) = self.state.completed_by.get(&q) {
                    if k != j && !ev.collaborators.contains(&k) {
                        ev.collaborators.push(k);
                    }
                }
            }
        }
        self.adaptive_gamma = sched.adaptive_gamma;
    }

    /// Second half of a step: replans, kinematics, topology, progress and
    /// rewards.
    pub fn act(&mut self, commands: &[ArmCommand]) -> StepResult {
        assert!(!self.done, "step after episode end");
        assert_eq!(commands.len(), self.arms(), "one command per arm");
        let n = self.arms();
        let now = self.state.time;
        let mut ev = std::mem::take(&mut self.pending);

        // Replans hand the flagged arms' processes back to the scheduler.
        for (j, c) in commands.iter().enumerate() {
            if c.replan {
                if let Some(p) = self.state.allocation.assignment[j].take() {
                    ev.released.push((j, p));
                }
                self.state.replan_until = now + self.replan_steps;
            }
        }

        // Kinematics.
        let cfg = self.scenario.config.clone();
        let before_dist: Vec<Option<f64>> = (0..n)
            .map(|j| self.state.allocation.assignment[j].map(|p| self.state.arms[j].tip().distance(self.target_of(p))))
            .collect();
        // Arms move in index order, each against the others' latest nodes.
        for (j, c) in commands.iter().enumerate() {
            let (nodes, projected) = self.kinematic_preview(j, &c.action);
            if projected {
                ev.projected.push(j);
            }
            let old = self.state.arms[j].centerline().points().to_vec();
            let vel: Vec<Vec3> = nodes.iter().zip(&old).map(|(a, b)| (*a - *b) / cfg.dt).collect();
            self.state.twist[j] += c.action.orientation_rate * cfg.dt;
            let line = polyline(&nodes);
            let twist = Mat3::rotation(Vec3::Z, self.state.twist[j]);
            let frames = tangent_frames(&line).iter().map(|f| f.mul_mat(&twist)).collect();
            self.state.arms[j] = ArmState::new(line, vel, frames).expect("consistent arm state");
        }

        // Braid and topology.
        let curves = self.curves();
        let strands: Vec<usize> = (0..n - 1).collect();
        let (letters, counts, degenerate) = self.crossing_letters(&curves, &strands);
        for (i, c) in counts {
            self.state.crossings[i] = c;
        }
        self.state.braid = self.simplified_with(&letters);
        ev.letters = letters;
        ev.degenerate_crossings = degenerate;
        let linking = antitangle_core::topology::linking_matrix(&curves, self.eps);
        let max_lk = max_abs_offdiag(&linking);
        let br = self.state.braid.len();
        let cond = self.state.monitor.condition(max_lk, br);
        let entangled = self.state.monitor.update(cond);
        let writhes = curves.iter().map(|c| writhe(c, self.eps)).collect();
        self.state.topo = TopoState {
            linking,
            writhes,
            braid_length: br,
            entangled,
            risk: risk_score(max_lk, br, entangled, &self.risk),
        };

        // Task progress.
        let mut after_dist = vec![None; n];
        for j in 0..n {
            let Some(p) = self.state.allocation.assignment[j] else {
                continue;
            };
            let d = self.state.arms[j].tip().distance(self.target_of(p));
            after_dist[j] = Some(d);
            if d <= cfg.reach_radius {
                ev.progressed += 1;
                if self.state.tasks.advance(p, now) {
                    ev.completed.push((j, p));
                    self.state.completed_by.insert(p, j);
                    self.state.allocation.assignment[j] = None;
                }
            }
        }

        // Rewards.
        let rc = self.rewards;
        let risk = self.state.topo.risk;
        let throughput = ev.progressed as f64 / n as f64;
        let scheduler_reward = rc.task_completion * ev.completed.len() as f64 + rc.alpha * throughput - rc.beta * risk;
        let arm_rewards = (0..n)
            .map(|j| {
                let local = match (before_dist[j], after_dist[j]) {
                    (Some(a), Some(b)) => a - b,
                    _ => 0.0,
                };
                let intervened = matches!(commands[j].decision, Some(d) if d != Decision::Pass);
                let safety = if intervened { 0.0 } else { rc.safety_bonus };
                let collab = if ev.collaborators.contains(&j) {
                    rc.collab_bonus
                } else {
                    0.0
                };
                local + rc.eta * safety + rc.xi * collab - rc.kappa * self.local_risk(j)
            })
            .collect();

        self.state.time += 1;
        let success = !entangled && self.state.tasks.all_complete();
        self.done = entangled || success || self.state.time >= cfg.horizon;
        StepResult {
            scheduler_reward,
            arm_rewards,
            risk,
            gamma: if self.adaptive_gamma {
                antitangle_core::risk::adaptive_discount(risk)
            } else {
                0.99
            },
            events: ev,
            done: self.done,
            entangled,
            success,
        }
    }

    /// `α₁·max_k |Lk_jk| + α₂·tanh(|Br_j|/c₁)`, with `|Br_j|` counting the
    /// simplified braid's letters on arm `j`'s strand pairs.
    pub fn local_risk(&self, j: usize) -> f64 {
        let g = j as u16;
        let own = self
            .state
            .braid
            .letters()
            .iter()
            .filter(|l| l.generator == g || l.generator == g + 1)
            .count();
        self.risk.alpha1 * self.state.topo.row_max_abs_linking(j)
            + self.risk.alpha2 * (own as f64 / self.risk.c1).tanh()
    }

    pub fn check_constraints(&self) -> ConstraintReport {
        check_constraints(&self.state, &self.scenario)
    }

    /// Writes an arm's nodes directly (diagnostics and tests only).
    pub fn place_arm(&mut self, j: usize, nodes: Vec<Vec3>) {
        let line = Polyline::new(nodes).expect("valid nodes");
        self.state.arms[j] = ArmState::at_rest(line);
        self.refresh_topology();
    }
}

/// `screen_action` adapter: lookahead of one arm against the others' current
/// configuration.
pub struct ArmView<'a> {
    env: &'a Env,
    arm: usize,
}

impl LookaheadRisk<ArmAction> for ArmView<'_> {
    fn lookahead_risk(&self, action: &ArmAction) -> f64 {
        self.env.lookahead_risk(self.arm, action)
    }

    fn conservative_action(&self) -> ArmAction {
        self.env.conservative_action(self.arm)
    }
}

fn push_delta(out: &mut Vec<Letter>, delta: i64, letter: Letter) {
    let l = if delta < 0 { letter.inverted() } else { letter };
    for _ in 0..delta.unsigned_abs() {
        out.push(l);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub satisfied: bool,
    /// Slack (positive when satisfied).
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// Obstacle clearance, arm separation and workspace containment.
    pub c1: ConstraintCheck,
    pub c2_speed: ConstraintCheck,
    pub c3_curvature: ConstraintCheck,
    pub c4_torsion: ConstraintCheck,
    pub c5_arc_length: ConstraintCheck,
    pub c6_precedence: ConstraintCheck,
    pub c7_unique_holder: ConstraintCheck,
    pub c8_single_assignment: ConstraintCheck,
}

impl ConstraintReport {
    pub fn all(&self) -> [(&'static str, ConstraintCheck); 8] {
        [
            ("C1", self.c1),
            ("C2", self.c2_speed),
            ("C3", self.c3_curvature),
            ("C4", self.c4_torsion),
            ("C5", self.c5_arc_length),
            ("C6", self.c6_precedence),
            ("C7", self.c7_unique_holder),
            ("C8", self.c8_single_assignment),
        ]
    }

    pub fn all_satisfied(&self) -> bool {
        self.all().iter().all(|(_, c)| c.satisfied)
    }
}

fn check(margin: f64) -> ConstraintCheck {
    ConstraintCheck {
        satisfied: margin >= -CONSTRAINT_TOL,
        margin,
    }
}

/// Evaluates C1–C8 on a state.
pub fn check_constraints(state: &EnvState, scenario: &Scenario) -> ConstraintReport {
    let cfg = &scenario.config;
    let ws = &scenario.workspace;
    let mut c1 = f64::INFINITY;
    let mut c2 = f64::INFINITY;
    let mut c3 = f64::INFINITY;
    let mut c4 = f64::INFINITY;
    let mut c5 = f64::INFINITY;
    for arm in &state.arms {
        let line = arm.centerline();
        c1 = c1.min(min_obstacle_clearance(arm, ws, cfg.arm_radius));
        for p in line.points() {
            c1 = c1.min(ws.bounds.inner_margin(*p));
        }
        c2 = c2.min(cfg.v_max - arm.max_speed());
        for k in curvature_profile(line) {
            c3 = c3.min(cfg.kappa_max - k);
        }
        for t in torsion_profile(line) {
            c4 = c4.min(cfg.tau_max - t.abs());
        }
        c5 = c5.min(cfg.arm_length() - line.segments().map(Vec3::norm).sum::<f64>());
    }
    for (a, arm) in state.arms.iter().enumerate() {
        for other in &state.arms[a + 1..] {
            let d = chain_distance(arm.centerline().points(), other.centerline().points());
            c1 = c1.min(d - 2.0 * cfg.arm_radius);
        }
    }
    // C6: every started process began after each predecessor ended.
    let mut c6 = f64::INFINITY;
    for p in state.tasks.processes() {
        let Some(start) = state.tasks.started_at(p) else {
            continue;
        };
        for q in state.tasks.predecessors(p) {
            let gap = match state.tasks.ended_at(q) {
                Some(end) => start as f64 - end as f64 - 1.0,
                None => -1.0,
            };
            c6 = c6.min(gap);
        }
    }
    let c7 = if state.allocation.duplicated().is_empty() {
        0.0
    } else {
        -1.0
    };
    ConstraintReport {
        c1: check(c1),
        c2_speed: check(c2),
        c3_curvature: check(c3),
        c4_torsion: check(c4),
        c5_arc_length: check(c5),
        c6_precedence: check(c6),
        c7_unique_holder: check(c7),
        // one slot per arm: at most one assignment by construction
        c8_single_assignment: check(0.0),
    }
}

/// Obstacle clearance of a bare node chain (used by observation code).
pub fn nodes_clearance(nodes: &[Vec3], scenario: &Scenario) -> f64 {
    tube_obstacle_clearance(nodes, &scenario.workspace.obstacles, scenario.config.arm_radius)
}
