//! Training runs: per-seed episode loop, constraint and safety auditing,
//! learning curves and aggregate metrics.

use antitangle_core::risk::{screen_action, Decision};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{ConfigError, RunConfig};
use crate::env::{ArmCommand, Env, Primitive};
use crate::learner::Learner;
use crate::obs::{arm_observation, global_features};
use crate::replay::{DualReplay, Experience};
use crate::scenario::Scenario;
use crate::scheduler::{FlatScheduler, HierarchicalScheduler, Scheduler};
use crate::tasks::Schedule;

/// Moving-average window of the convergence criterion.
pub const CONVERGENCE_WINDOW: usize = 100;
/// Fraction of the final performance that counts as converged.
pub const CONVERGENCE_FRACTION: f64 = 0.95;

/// Fixture used by episode `episode` (cycles v1..v4).
pub fn fixture_name(episode: usize) -> String {
    format!("v{}", episode % 4 + 1)
}

fn episode_seed(seed: u64, episode: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(episode as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub episode: usize,
    pub fixture: String,
    /// Fraction of tasks completed within the horizon.
    pub success: f64,
    pub all_complete: bool,
    pub entangled: bool,
    pub steps: u64,
    /// Arm transitions collected.
    pub samples: u64,
    /// (arm, step) pairs without an assignment while work remained.
    pub idle_pairs: u64,
    pub arm_steps: u64,
    pub interventions: u64,
    pub replans: u64,
    /// Mean per-arm training return.
    pub mean_return: f64,
    pub max_risk: f64,
    /// Steps where C6, C7 or C8 failed.
    pub schedule_violations: u64,
    /// Executed actions at or above `θ_high` without a replan.
    pub safety_violations: u64,
    pub non_finite_risks: u64,
}

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub records: Vec<EpisodeRecord>,
    pub learner: Learner,
    /// Step-level dump of the final episodes.
    pub trace: Vec<serde_json::Value>,
}

/// Runs one seed's full training.
pub fn run_seed(cfg: &RunConfig, seed: u64) -> Result<SeedResult, ConfigError> {
    run_seed_with(cfg, seed, |_| {})
}

/// As [`run_seed`], calling `progress` after every episode.
pub fn run_seed_with(
    cfg: &RunConfig,
    seed: u64,
    mut progress: impl FnMut(&EpisodeRecord),
) -> Result<SeedResult, ConfigError> {
    cfg.validate()?;
    let scenario = Scenario::generate(&cfg.scenario, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1ea2);
    let h = &cfg.hyper;
    let mut learner = Learner::new(h, Primitive::ALL.len(), &mut rng);
    let mut replay = DualReplay::new(
        h.safe_capacity,
        h.neutral_capacity,
        h.risky_capacity,
        h.omega_min,
        h.omega_max,
    );
    replay.uniform = !cfg.components.dual_replay;
    replay.beta_is = h.beta_is;
    let mut records = Vec::with_capacity(cfg.episodes);
    let mut trace = Vec::new();
    for ep in 0..cfg.episodes {
        let fixture = Schedule::fixture(&fixture_name(ep)).expect("shipped fixture");
        let mut env = Env::new(cfg, scenario.clone(), fixture, episode_seed(seed, ep));
        let dump = ep + cfg.trace_episodes >= cfg.episodes;
        let (record, trajs) = run_episode(cfg, &mut env, &learner, &mut rng, seed, ep, dump.then_some(&mut trace));
        for mut traj in trajs {
            learner.annotate(&mut traj);
            for e in traj {
                replay.classify_and_store(e, &cfg.risk);
            }
        }
        for _ in 0..h.updates_per_episode {
            learner.update(&mut replay, &mut rng);
        }
        progress(&record);
        records.push(record);
    }
    Ok(SeedResult {
        seed,
        records,
        learner,
        trace,
    })
}

/// Plays one episode with the current policy; returns its record and one
/// trajectory per arm.
pub fn run_episode(
    cfg: &RunConfig,
    env: &mut Env,
    learner: &Learner,
    rng: &mut ChaCha8Rng,
    seed: u64,
    episode: usize,
    mut trace: Option<&mut Vec<serde_json::Value>>,
) -> (EpisodeRecord, Vec<Vec<Experience>>) {
    let n = env.arms();
    let mut scheduler: Box<dyn Scheduler> = if cfg.components.hierarchical_control {
        Box::new(HierarchicalScheduler::new(cfg.safety))
    } else {
        Box::new(FlatScheduler)
    };
    let mut trajs: Vec<Vec<Experience>> = vec![Vec::new(); n];
    let mut rec = EpisodeRecord {
        seed,
        episode,
        fixture: fixture_name(episode),
        success: 0.0,
        all_complete: false,
        entangled: false,
        steps: 0,
        samples: 0,
        idle_pairs: 0,
        arm_steps: 0,
        interventions: 0,
        replans: 0,
        mean_return: 0.0,
        max_risk: 0.0,
        schedule_violations: 0,
        safety_violations: 0,
        non_finite_risks: 0,
    };
    loop {
        let sa = scheduler.decide(env);
        env.assign(&sa);
        let global = global_features(env).to_vec();
        let obs: Vec<Vec<f64>> = (0..n).map(|j| arm_observation(env, j)).collect();
        // the previous step's transitions end at this decision point
        for (j, traj) in trajs.iter_mut().enumerate() {
            if let Some(last) = traj.last_mut() {
                if last.next_obs.is_empty() {
                    last.next_obs = obs[j].clone();
                    last.next_global = global.clone();
                }
            }
        }
        let work_left = !env.state().tasks.all_complete();
        let free = env.state().allocation.assignment.iter().filter(|a| a.is_none()).count() as u64;
        if work_left {
            rec.idle_pairs += free;
        }
        rec.arm_steps += n as u64;

        let mut actions = Vec::with_capacity(n);
        let mut commands = Vec::with_capacity(n);
        let mut screened = Vec::with_capacity(n);
        for (j, o) in obs.iter().enumerate() {
            let (a, logp) = learner.act(o, rng);
            actions.push((a, logp));
            let candidate = env.primitive_action(j, Primitive::ALL[a]);
            if cfg.components.safety_layer {
                let out = screen_action(&env.arm_view(j), candidate, &env.risk);
                if out.intervened() {
                    rec.interventions += 1;
                }
                if out.replan_requested {
                    rec.replans += 1;
                }
                if out.non_finite {
                    rec.non_finite_risks += 1;
                }
                if out.executed_risk >= env.risk.theta_high && !out.replan_requested {
                    rec.safety_violations += 1;
                }
                screened.push(Some((out.decision, out.risk, out.executed_risk, out.replan_requested)));
                commands.push(ArmCommand {
                    action: out.action,
                    decision: Some(out.decision),
                    replan: out.replan_requested,
                });
            } else {
                screened.push(None);
                commands.push(ArmCommand {
                    action: candidate,
                    decision: None,
                    replan: false,
                });
            }
        }
        let res = env.act(&commands);
        rec.steps += 1;
        rec.max_risk = rec.max_risk.max(res.risk);
        let report = env.check_constraints();
        if !(report.c6_precedence.satisfied
            && report.c7_unique_holder.satisfied
            && report.c8_single_assignment.satisfied)
        {
            rec.schedule_violations += 1;
        }

        let share = res.scheduler_reward / n as f64;
        for j in 0..n {
            let (a, logp) = actions[j];
            let mut e = Experience::bare(res.risk, 0.0);
            e.obs = obs[j].clone();
            e.action = a;
            e.log_prob = logp;
            e.reward = res.arm_rewards[j] + share;
            e.done = res.done;
            e.gamma = res.gamma;
            e.global = global.clone();
            trajs[j].push(e);
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(step_record(env, seed, episode, &actions, &screened, &res));
        }
        if res.done {
            let g = global_features(env).to_vec();
            for (j, traj) in trajs.iter_mut().enumerate() {
                let last = traj.last_mut().expect("at least one step");
                last.next_obs = arm_observation(env, j);
                last.next_global = g.clone();
            }
            rec.entangled = res.entangled;
            rec.all_complete = env.state().tasks.all_complete();
            rec.success = env.state().tasks.completed_task_fraction();
            if let Some(t) = trace.as_deref_mut() {
                t.push(json!({
                    "kind": "episode_end",
                    "seed": seed,
                    "episode": episode,
                    "fixture": rec.fixture,
                    "success": rec.success,
                    "entangled": rec.entangled,
                    "intervals": env.state().tasks.intervals(),
                }));
            }
            break;
        }
    }
    rec.samples = trajs.iter().map(|t| t.len() as u64).sum();
    rec.mean_return = trajs
        .iter()
        .map(|t| t.iter().map(|e| e.reward).sum::<f64>())
        .sum::<f64>()
        / n as f64;
    (rec, trajs)
}

fn step_record(
    env: &Env,
    seed: u64,
    episode: usize,
    actions: &[(usize, f64)],
    screened: &[Option<(Decision, f64, f64, bool)>],
    res: &crate::env::StepResult,
) -> serde_json::Value {
    let s = env.state();
    let arms: Vec<serde_json::Value> = (0..env.arms())
        .map(|j| {
            let tip = s.arms[j].tip();
            let mut v = json!({
                "arm": j,
                "reward": res.arm_rewards[j],
                "primitive": Primitive::ALL[actions[j].0],
                "assignment": s.allocation.assignment[j].map(|p| p.to_string()),
                "tip": [tip.x, tip.y, tip.z],
                "nodes": s.arms[j].centerline().points().iter().map(|p| [p.x, p.y, p.z]).collect::<Vec<_>>(),
            });
            if let Some((d, r, x, replan)) = screened[j] {
                v["decision"] = json!(d);
                v["replan"] = json!(replan);
                v["lookahead_risk"] = json!(r);
                v["executed_risk"] = json!(x);
            }
            v
        })
        .collect();
    json!({
        "kind": "step",
        "seed": seed,
        "episode": episode,
        "t": env.time(),
        "risk": res.risk,
        "scheduler_reward": res.scheduler_reward,
        "braid_length": s.braid.len(),
        "max_abs_linking": s.topo.max_abs_linking(),
        "linking": s.topo.linking,
        "writhes": s.topo.writhes,
        "braid": s.braid.to_string(),
        "entangled": res.entangled,
        "started": res.events.started.iter().map(|(j, p)| (j, p.to_string())).collect::<Vec<_>>(),
        "completed": res.events.completed.iter().map(|(j, p)| (j, p.to_string())).collect::<Vec<_>>(),
        "replans": res.events.released.iter().map(|(j, p)| (j, p.to_string())).collect::<Vec<_>>(),
        "arms": arms,
    })
}

/// Mean and population standard deviation across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self { mean, std }
    }
}

/// Metrics of one seed over its evaluation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub success_rate: f64,
    pub entanglement_rate: f64,
    /// First episode whose moving-average success reaches 95% of the final
    /// level; `None` if never.
    pub convergence_episode: Option<usize>,
    pub idle_rate: f64,
    /// Area under the success curve against cumulative samples (in
    /// thousands), divided by total samples in thousands.
    pub sample_efficiency: f64,
    pub intervention_rate: f64,
    pub replans_per_episode: f64,
    pub mean_return: f64,
    pub schedule_violations: u64,
    pub safety_violations: u64,
}

pub fn seed_metrics(records: &[EpisodeRecord], eval_window: usize) -> SeedMetrics {
    let n = records.len();
    let w = eval_window.min(n).max(1);
    let tail = &records[n.saturating_sub(w)..];
    let mean = |f: &dyn Fn(&EpisodeRecord) -> f64| tail.iter().map(f).sum::<f64>() / tail.len() as f64;
    let success_rate = mean(&|r| r.success);
    let success: Vec<f64> = records.iter().map(|r| r.success).collect();
    let convergence_episode = convergence_episode(&success, success_rate);

    let mut auc = 0.0;
    let mut total = 0.0;
    for r in records {
        let k = r.samples as f64 / 1e3;
        auc += r.success * k;
        total += k;
    }
    let sum = |f: &dyn Fn(&EpisodeRecord) -> u64| tail.iter().map(f).sum::<u64>() as f64;
    SeedMetrics {
        seed: records.first().map(|r| r.seed).unwrap_or(0),
        success_rate,
        entanglement_rate: mean(&|r| if r.entangled { 1.0 } else { 0.0 }),
        convergence_episode,
        idle_rate: sum(&|r| r.idle_pairs) / sum(&|r| r.arm_steps).max(1.0),
        sample_efficiency: if total > 0.0 { auc / total } else { 0.0 },
        intervention_rate: sum(&|r| r.interventions) / sum(&|r| r.arm_steps).max(1.0),
        replans_per_episode: mean(&|r| r.replans as f64),
        mean_return: mean(&|r| r.mean_return),
        schedule_violations: records.iter().map(|r| r.schedule_violations).sum(),
        safety_violations: records.iter().map(|r| r.safety_violations).sum(),
    }
}

/// First index whose trailing moving average reaches the given fraction of
/// `final_level`.
pub fn convergence_episode(series: &[f64], final_level: f64) -> Option<usize> {
    let target = CONVERGENCE_FRACTION * final_level;
    let mut sum = 0.0;
    for (i, x) in series.iter().enumerate() {
        sum += x;
        if i >= CONVERGENCE_WINDOW {
            sum -= series[i - CONVERGENCE_WINDOW];
        }
        if i + 1 >= CONVERGENCE_WINDOW.min(series.len()) {
            let avg = sum / (i + 1).min(CONVERGENCE_WINDOW) as f64;
            if avg >= target {
                return Some(i);
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub label: String,
    pub scenario: String,
    pub episodes: usize,
    pub eval_window: usize,
    pub success_rate: Stat,
    pub entanglement_rate: Stat,
    pub convergence_episode: Stat,
    pub idle_rate: Stat,
    pub sample_efficiency: Stat,
    pub intervention_rate: Stat,
    pub replans_per_episode: Stat,
    pub mean_return: Stat,
    pub schedule_violations: u64,
    pub safety_violations: u64,
    pub per_seed: Vec<SeedMetrics>,
}

pub fn aggregate(cfg: &RunConfig, per_seed: Vec<SeedMetrics>) -> RunMetrics {
    let stat = |f: &dyn Fn(&SeedMetrics) -> f64| Stat::of(&per_seed.iter().map(f).collect::<Vec<_>>());
    RunMetrics {
        label: cfg.components.label(),
        scenario: cfg.scenario.density.to_string(),
        episodes: cfg.episodes,
        eval_window: cfg.eval_window,
        success_rate: stat(&|m| m.success_rate),
        entanglement_rate: stat(&|m| m.entanglement_rate),
        // unconverged seeds count as the full run length
        convergence_episode: stat(&|m| m.convergence_episode.unwrap_or(cfg.episodes) as f64),
        idle_rate: stat(&|m| m.idle_rate),
        sample_efficiency: stat(&|m| m.sample_efficiency),
        intervention_rate: stat(&|m| m.intervention_rate),
        replans_per_episode: stat(&|m| m.replans_per_episode),
        mean_return: stat(&|m| m.mean_return),
        schedule_violations: per_seed.iter().map(|m| m.schedule_violations).sum(),
        safety_violations: per_seed.iter().map(|m| m.safety_violations).sum(),
        per_seed,
    }
}

/// Trains every seed of `cfg` in turn.
pub fn run(
    cfg: &RunConfig,
    mut progress: impl FnMut(&EpisodeRecord),
) -> Result<(RunMetrics, Vec<SeedResult>), ConfigError> {
    let mut results = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        results.push(run_seed_with(cfg, seed, &mut progress)?);
    }
    let per_seed = results
        .iter()
        .map(|r| seed_metrics(&r.records, cfg.eval_window))
        .collect();
    Ok((aggregate(cfg, per_seed), results))
}

/// Learning-curve rows: one per (seed, episode).
pub fn write_curve<W: std::io::Write>(out: W, results: &[SeedResult]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        for rec in &r.records {
            w.serialize(CurveRow {
                seed: rec.seed,
                episode: rec.episode,
                fixture: &rec.fixture,
                success: rec.success,
                entangled: rec.entangled,
                steps: rec.steps,
                samples: rec.samples,
                interventions: rec.interventions,
                replans: rec.replans,
                mean_return: rec.mean_return,
                max_risk: rec.max_risk,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CurveRow<'a> {
    seed: u64,
    episode: usize,
    fixture: &'a str,
    success: f64,
    entangled: bool,
    steps: u64,
    samples: u64,
    interventions: u64,
    replans: u64,
    mean_return: f64,
    max_risk: f64,
}
