//! High-level process-to-arm assignment.
//!
//! The hierarchical scheduler caps concurrency with the braid-driven budget,
//! serves the longest-remaining tasks first and only makes assignments that
//! keep the arms' left-to-right order, so no new crossings enter the braid.
//! The flat scheduler is the ablation: every free arm takes the next
//! eligible process, nearest tip first.

use antitangle_core::geometry::Vec3;
use antitangle_core::risk::concurrency_budget;

use crate::config::SafetyConfig;
use crate::env::{Env, SchedulerAction};
use crate::tasks::ProcessId;

pub trait Scheduler {
    fn decide(&mut self, env: &Env) -> SchedulerAction;
}

/// Unheld, eligible processes at the current step, in id order.
pub fn eligible_processes(env: &Env) -> Vec<ProcessId> {
    let s = env.state();
    let now = env.time();
    s.tasks
        .processes()
        .filter(|p| s.tasks.is_eligible(*p, now) && s.allocation.holder(*p).is_none())
        .collect()
}

/// Lateral clearance kept between neighbouring arms' goals and tips.
pub const ORDER_MARGIN: f64 = 0.08;

/// True when sending arm `j` to `target` keeps every other arm's tip and
/// goal on its own side of `target` along x (with [`ORDER_MARGIN`]), i.e.
/// the arms' projected order is preserved.
pub fn preserves_order(env: &Env, j: usize, target: Vec3) -> bool {
    let s = env.state();
    (0..env.arms()).filter(|k| *k != j).all(|k| {
        let xs = [s.arms[k].tip().x, env.goal(k).x];
        if k < j {
            xs.iter().all(|x| x + ORDER_MARGIN < target.x)
        } else {
            xs.iter().all(|x| x - ORDER_MARGIN > target.x)
        }
    })
}

fn free_arms(env: &Env) -> Vec<usize> {
    let a = &env.state().allocation.assignment;
    (0..a.len()).filter(|j| a[*j].is_none()).collect()
}

#[derive(Debug, Clone)]
pub struct HierarchicalScheduler {
    pub safety: SafetyConfig,
}

impl HierarchicalScheduler {
    pub fn new(safety: SafetyConfig) -> Self {
        Self { safety }
    }

    /// Concurrency allowed now: the braid budget, one lower while a replan
    /// is in effect.
    pub fn budget(&self, env: &Env) -> usize {
        let n = env.arms();
        let n_min = self.safety.n_min.min(n);
        let b = concurrency_budget(env.state().braid.len(), n_min, n, self.safety.budget_alpha);
        if env.replan_active() {
            b.saturating_sub(1).max(n_min)
        } else {
            b
        }
    }
}

impl Scheduler for HierarchicalScheduler {
    fn decide(&mut self, env: &Env) -> SchedulerAction {
        let budget = self.budget(env);
        let s = env.state();
        let mut active = s.allocation.active_count();
        let mut free = free_arms(env);
        let mut procs = eligible_processes(env);
        // longest remaining chain first; ties by id
        procs.sort_by(|a, b| {
            s.tasks
                .remaining_work(b.task)
                .total_cmp(&s.tasks.remaining_work(a.task))
                .then(a.cmp(b))
        });
        let mut assign = Vec::new();
        for p in procs {
            if active >= budget || free.is_empty() {
                break;
            }
            let target = env.target_of(p);
            let candidates: Vec<(usize, usize)> = free
                .iter()
                .copied()
                .enumerate()
                .filter(|(_, j)| preserves_order(env, *j, target))
                .collect();
            let key = |j: usize| {
                (
                    env.scenario.arms_between(j, target),
                    (env.scenario.bases[j].x - target.x).abs(),
                    j,
                )
            };
            let Some(&(k, j)) = candidates.iter().min_by(|(_, a), (_, b)| {
                let (ka, kb) = (key(*a), key(*b));
                ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(ka.2.cmp(&kb.2))
            }) else {
                continue;
            };
            free.swap_remove(k);
            assign.push((j, p));
            active += 1;
        }
        SchedulerAction {
            assign,
            concurrency: budget,
            adaptive_gamma: true,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FlatScheduler;

impl Scheduler for FlatScheduler {
    fn decide(&mut self, env: &Env) -> SchedulerAction {
        let mut free = free_arms(env);
        let mut assign = Vec::new();
        for p in eligible_processes(env) {
            if free.is_empty() {
                break;
            }
            let target = env.target_of(p);
            let (k, &j) = free
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    let da = env.state().arms[**a].tip().distance(target);
                    let db = env.state().arms[**b].tip().distance(target);
                    da.total_cmp(&db)
                })
                .expect("non-empty");
            free.swap_remove(k);
            assign.push((j, p));
        }
        SchedulerAction {
            assign,
            concurrency: env.arms(),
            adaptive_gamma: false,
        }
    }
}
