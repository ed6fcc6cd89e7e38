//! Task processes with chain precedence, arm allocations, the four shipped
//! parallel-execution schedules and a trace validator against them.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Complexity {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    /// 1-based task id.
    pub id: usize,
    /// Duration of each process, in environment steps.
    pub durations: Vec<u32>,
    pub complexity: Complexity,
}

/// The eight-task maintenance workload.
pub fn standard_tasks() -> Vec<Task> {
    use Complexity::*;
    let defs: [(&[u32], Complexity); 8] = [
        (&[6, 6, 1], Low),
        (&[3, 2, 4, 13, 6], High),
        (&[5, 3], Low),
        (&[2, 7, 5, 4], Medium),
        (&[1, 10, 8, 3], Medium),
        (&[6, 5, 6, 6, 7, 5], High),
        (&[2, 5, 4], Low),
        (&[7, 3, 4], Low),
    ];
    defs.iter()
        .enumerate()
        .map(|(i, (d, c))| Task {
            id: i + 1,
            durations: d.to_vec(),
            complexity: *c,
        })
        .collect()
}

/// 1-based (task, process) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProcessId {
    pub task: usize,
    pub process: usize,
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}.P{}", self.task, self.process)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaskError {
    #[error("precedence graph has a cycle")]
    Cyclic,
    #[error("edge references unknown process {0}")]
    UnknownProcess(ProcessId),
    #[error("gap table does not match task {0}")]
    GapShape(usize),
}

/// Processes of every task, precedence edges, minimum latency before each
/// process and per-process progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGraph {
    pub tasks: Vec<Task>,
    pub edges: Vec<(ProcessId, ProcessId)>,
    /// `gaps[k][m]`: steps that must separate the end of every predecessor
    /// of process `m` of task `k` from its start.
    pub gaps: Vec<Vec<u32>>,
    progress: Vec<Vec<f64>>,
    start: Vec<Vec<Option<u64>>>,
    end: Vec<Vec<Option<u64>>>,
}

impl TaskGraph {
    /// Tasks whose processes form a chain, with zero latency.
    pub fn chains(tasks: Vec<Task>) -> Self {
        let gaps = tasks.iter().map(|t| vec![0; t.durations.len()]).collect();
        Self::with_gaps(tasks, gaps).expect("chain graphs are acyclic")
    }

    /// Chain precedence with per-process latencies.
    pub fn with_gaps(tasks: Vec<Task>, gaps: Vec<Vec<u32>>) -> Result<Self, TaskError> {
        let mut edges = Vec::new();
        for t in &tasks {
            for m in 2..=t.durations.len() {
                edges.push((
                    ProcessId {
                        task: t.id,
                        process: m - 1,
                    },
                    ProcessId { task: t.id, process: m },
                ));
            }
        }
        Self::new(tasks, edges, gaps)
    }

    pub fn new(tasks: Vec<Task>, edges: Vec<(ProcessId, ProcessId)>, gaps: Vec<Vec<u32>>) -> Result<Self, TaskError> {
        if gaps.len() != tasks.len() {
            return Err(TaskError::GapShape(gaps.len()));
        }
        for (t, g) in tasks.iter().zip(&gaps) {
            if g.len() != t.durations.len() {
                return Err(TaskError::GapShape(t.id));
            }
        }
        let shape = |v| tasks.iter().map(|t| vec![v; t.durations.len()]).collect::<Vec<_>>();
        let g = TaskGraph {
            progress: shape(0.0),
            start: tasks.iter().map(|t| vec![None; t.durations.len()]).collect(),
            end: tasks.iter().map(|t| vec![None; t.durations.len()]).collect(),
            tasks,
            edges,
            gaps,
        };
        for (a, b) in &g.edges {
            for p in [a, b] {
                if g.index(*p).is_none() {
                    return Err(TaskError::UnknownProcess(*p));
                }
            }
        }
        g.topological_order()?;
        Ok(g)
    }

    fn index(&self, p: ProcessId) -> Option<(usize, usize)> {
        let k = self.tasks.iter().position(|t| t.id == p.task)?;
        (p.process >= 1 && p.process <= self.tasks[k].durations.len()).then_some((k, p.process - 1))
    }

    fn at(&self, p: ProcessId) -> (usize, usize) {
        self.index(p).unwrap_or_else(|| panic!("unknown process {p}"))
    }

    pub fn processes(&self) -> impl Iterator<Item = ProcessId> + '_ {
        self.tasks
            .iter()
            .flat_map(|t| (1..=t.durations.len()).map(move |m| ProcessId { task: t.id, process: m }))
    }

    pub fn process_count(&self) -> usize {
        self.tasks.iter().map(|t| t.durations.len()).sum()
    }

    /// Kahn's algorithm; fails on a cycle.
    pub fn topological_order(&self) -> Result<Vec<ProcessId>, TaskError> {
        let nodes: Vec<ProcessId> = self.processes().collect();
        let mut indeg: BTreeMap<ProcessId, usize> = nodes.iter().map(|p| (*p, 0)).collect();
        for (_, b) in &self.edges {
            *indeg.get_mut(b).unwrap() += 1;
        }
        let mut ready: Vec<ProcessId> = indeg.iter().filter(|(_, d)| **d == 0).map(|(p, _)| *p).collect();
        let mut order = Vec::with_capacity(nodes.len());
        while let Some(p) = ready.pop() {
            order.push(p);
            for (a, b) in &self.edges {
                if *a == p {
                    let d = indeg.get_mut(b).unwrap();
                    *d -= 1;
                    if *d == 0 {
                        ready.push(*b);
                    }
                }
            }
        }
        if order.len() == nodes.len() {
            Ok(order)
        } else {
            Err(TaskError::Cyclic)
        }
    }

    pub fn predecessors(&self, p: ProcessId) -> impl Iterator<Item = ProcessId> + '_ {
        self.edges.iter().filter(move |(_, b)| *b == p).map(|(a, _)| *a)
    }

    pub fn duration(&self, p: ProcessId) -> u32 {
        let (k, m) = self.at(p);
        self.tasks[k].durations[m]
    }

    pub fn progress(&self, p: ProcessId) -> f64 {
        let (k, m) = self.at(p);
        self.progress[k][m]
    }

    pub fn is_complete(&self, p: ProcessId) -> bool {
        self.progress(p) >= 1.0
    }

    pub fn started_at(&self, p: ProcessId) -> Option<u64> {
        let (k, m) = self.at(p);
        self.start[k][m]
    }

    pub fn ended_at(&self, p: ProcessId) -> Option<u64> {
        let (k, m) = self.at(p);
        self.end[k][m]
    }

    /// Whether `p` may start at step `now`: not complete, every predecessor
    /// complete, and each predecessor's latency elapsed.
    pub fn is_eligible(&self, p: ProcessId, now: u64) -> bool {
        if self.is_complete(p) {
            return false;
        }
        let (k, m) = self.at(p);
        let gap = self.gaps[k][m] as u64;
        self.predecessors(p).all(|q| match self.ended_at(q) {
            Some(end) => now > end + gap,
            None => false,
        })
    }

    /// Records the first start of `p`.
    pub fn mark_started(&mut self, p: ProcessId, now: u64) {
        let (k, m) = self.at(p);
        self.start[k][m].get_or_insert(now);
    }

    /// Adds one step of work; returns true when this step completes `p`.
    pub fn advance(&mut self, p: ProcessId, now: u64) -> bool {
        let (k, m) = self.at(p);
        if self.progress[k][m] >= 1.0 {
            return false;
        }
        let d = self.tasks[k].durations[m] as f64;
        // count whole steps so that d increments land exactly on 1.0
        let done = (self.progress[k][m] * d).round() + 1.0;
        self.progress[k][m] = (done / d).min(1.0);
        if done >= d {
            self.progress[k][m] = 1.0;
            self.end[k][m] = Some(now);
            true
        } else {
            false
        }
    }

    pub fn all_complete(&self) -> bool {
        self.progress.iter().flatten().all(|p| *p >= 1.0)
    }

    pub fn completed_count(&self) -> usize {
        self.progress.iter().flatten().filter(|p| **p >= 1.0).count()
    }

    /// Fraction of tasks whose every process is finished.
    pub fn completed_task_fraction(&self) -> f64 {
        if self.progress.is_empty() {
            return 1.0;
        }
        let done = self.progress.iter().filter(|t| t.iter().all(|p| *p >= 1.0)).count();
        done as f64 / self.progress.len() as f64
    }

    /// Overall completion: finished work over total work.
    pub fn completion_fraction(&self) -> f64 {
        let mut done = 0.0;
        let mut total = 0.0;
        for (t, prog) in self.tasks.iter().zip(&self.progress) {
            for (d, p) in t.durations.iter().zip(prog) {
                done += *d as f64 * p;
                total += *d as f64;
            }
        }
        if total == 0.0 {
            1.0
        } else {
            done / total
        }
    }

    /// Work left on task `task` (steps), counting only unfinished processes.
    pub fn remaining_work(&self, task: usize) -> f64 {
        let k = self.tasks.iter().position(|t| t.id == task).expect("known task");
        self.tasks[k]
            .durations
            .iter()
            .zip(&self.progress[k])
            .map(|(d, p)| *d as f64 * (1.0 - p))
            .sum()
    }

    /// Executed intervals so far (started processes; `end` is `None` while
    /// running).
    pub fn intervals(&self) -> Vec<TraceInterval> {
        let mut out = Vec::new();
        for p in self.processes() {
            if let Some(start) = self.started_at(p) {
                out.push(TraceInterval {
                    task: p.task,
                    process: p.process,
                    start,
                    end: self.ended_at(p),
                });
            }
        }
        out
    }

    /// Per-process progress flattened in task/process order.
    pub fn progress_vector(&self) -> Vec<f64> {
        self.progress.iter().flatten().copied().collect()
    }
}

/// Arm → process assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub assignment: Vec<Option<ProcessId>>,
}

impl Allocation {
    pub fn new(n_arms: usize) -> Self {
        Self {
            assignment: vec![None; n_arms],
        }
    }

    pub fn holder(&self, p: ProcessId) -> Option<usize> {
        self.assignment.iter().position(|a| *a == Some(p))
    }

    pub fn active_count(&self) -> usize {
        self.assignment.iter().filter(|a| a.is_some()).count()
    }

    /// Processes held by more than one arm.
    pub fn duplicated(&self) -> Vec<ProcessId> {
        let mut seen = BTreeMap::new();
        for p in self.assignment.iter().flatten() {
            *seen.entry(*p).or_insert(0usize) += 1;
        }
        seen.into_iter().filter(|(_, c)| *c > 1).map(|(p, _)| p).collect()
    }
}

/// One process interval of an executed (or scheduled) trace; steps are
/// inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceInterval {
    pub task: usize,
    pub process: usize,
    pub start: u64,
    pub end: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub process: usize,
    pub start: u64,
    pub end: u64,
}

impl Interval {
    pub fn len(&self) -> u64 {
        self.end + 1 - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSchedule {
    pub task: usize,
    pub intervals: Vec<Interval>,
}

/// A parallel-execution schedule: per task, its processes' time columns.
/// Empty columns between consecutive processes are mandated latency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub name: String,
    pub tasks: Vec<TaskSchedule>,
}

const FIXTURES: [&str; 4] = [
    include_str!("../fixtures/schedule_v1.json"),
    include_str!("../fixtures/schedule_v2.json"),
    include_str!("../fixtures/schedule_v3.json"),
    include_str!("../fixtures/schedule_v4.json"),
];

pub const FIXTURE_NAMES: [&str; 4] = ["v1", "v2", "v3", "v4"];

impl Schedule {
    /// One of the shipped schedules `v1`–`v4`.
    pub fn fixture(name: &str) -> Option<Schedule> {
        let i = FIXTURE_NAMES.iter().position(|n| *n == name)?;
        Some(serde_json::from_str(FIXTURES[i]).expect("shipped fixtures parse"))
    }

    pub fn all_fixtures() -> Vec<Schedule> {
        FIXTURE_NAMES.iter().map(|n| Self::fixture(n).unwrap()).collect()
    }

    fn task(&self, task: usize) -> Option<&TaskSchedule> {
        self.tasks.iter().find(|t| t.task == task)
    }

    /// Latency before process `m` of `task` (0 for the first process and for
    /// processes the schedule does not list).
    pub fn gap(&self, task: usize, process: usize) -> u32 {
        let Some(t) = self.task(task) else { return 0 };
        let find = |m: usize| t.intervals.iter().find(|iv| iv.process == m);
        match (process.checked_sub(1).and_then(find), find(process)) {
            (Some(prev), Some(cur)) => cur.start.saturating_sub(prev.end + 1) as u32,
            _ => 0,
        }
    }

    /// Latency table shaped like `tasks`.
    pub fn gap_table(&self, tasks: &[Task]) -> Vec<Vec<u32>> {
        tasks
            .iter()
            .map(|t| (1..=t.durations.len()).map(|m| self.gap(t.id, m)).collect())
            .collect()
    }

    /// The schedule itself as an executed trace.
    pub fn as_trace(&self) -> Vec<TraceInterval> {
        self.tasks
            .iter()
            .flat_map(|t| {
                t.intervals.iter().map(move |iv| TraceInterval {
                    task: t.task,
                    process: iv.process,
                    start: iv.start,
                    end: Some(iv.end),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// A process started before its predecessor ended (or without it).
    Precedence,
    /// A process started before the mandated latency elapsed.
    Latency,
    /// A process ran for fewer steps than the schedule allots.
    Duration,
    /// The same process appears twice.
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Predecessor end of the violated edge (equal to `to` for duration
    /// and duplicate violations).
    pub from: ProcessId,
    pub to: ProcessId,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleVerdict {
    pub violations: Vec<Violation>,
}

impl ScheduleVerdict {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks an executed trace against a schedule's precedence, latency and
/// duration semantics. Unfinished intervals (`end = None`) only constrain
/// their own start.
pub fn validate_schedule(trace: &[TraceInterval], fixture: &Schedule) -> ScheduleVerdict {
    let mut by_task: BTreeMap<usize, BTreeMap<usize, TraceInterval>> = BTreeMap::new();
    let mut violations = Vec::new();
    for iv in trace {
        let p = ProcessId {
            task: iv.task,
            process: iv.process,
        };
        if by_task.entry(iv.task).or_default().insert(iv.process, *iv).is_some() {
            violations.push(Violation {
                kind: ViolationKind::Duplicate,
                from: p,
                to: p,
                detail: format!("{p} appears more than once"),
            });
        }
    }
    for (&task, procs) in &by_task {
        let sched = fixture.task(task);
        for (&m, iv) in procs {
            let to = ProcessId { task, process: m };
            if let (Some(s), Some(end)) = (sched, iv.end) {
                if let Some(f) = s.intervals.iter().find(|f| f.process == m) {
                    let ran = (end + 1).saturating_sub(iv.start);
                    if ran < f.len() {
                        violations.push(Violation {
                            kind: ViolationKind::Duration,
                            from: to,
                            to,
                            detail: format!("{to} ran {ran} steps, schedule allots {}", f.len()),
                        });
                    }
                }
            }
            if m == 1 {
                continue;
            }
            let from = ProcessId { task, process: m - 1 };
            match procs.get(&(m - 1)).and_then(|prev| prev.end) {
                None => violations.push(Violation {
                    kind: ViolationKind::Precedence,
                    from,
                    to,
                    detail: format!("{to} started at {} but {from} never finished", iv.start),
                }),
                Some(prev_end) if iv.start <= prev_end => violations.push(Violation {
                    kind: ViolationKind::Precedence,
                    from,
                    to,
                    detail: format!("{to} started at {} before {from} ended at {prev_end}", iv.start),
                }),
                Some(prev_end) => {
                    let gap = fixture.gap(task, m) as u64;
                    let waited = iv.start - prev_end - 1;
                    if waited < gap {
                        violations.push(Violation {
                            kind: ViolationKind::Latency,
                            from,
                            to,
                            detail: format!("{to} waited {waited} steps after {from}, needs {gap}"),
                        });
                    }
                }
            }
        }
    }
    ScheduleVerdict { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pid(task: usize, process: usize) -> ProcessId {
        ProcessId { task, process }
    }

    #[test]
    fn fixtures_self_validate() {
        for s in Schedule::all_fixtures() {
            let v = validate_schedule(&s.as_trace(), &s);
            assert!(v.passed(), "{}: {:?}", s.name, v.violations);
        }
    }

    #[test]
    fn early_start_reports_the_edge() {
        let s = Schedule::fixture("v1").unwrap();
        let mut trace = s.as_trace();
        let p3 = trace.iter_mut().find(|iv| iv.task == 2 && iv.process == 3).unwrap();
        // T2.P2 ends at 5
        p3.start = 5;
        let v = validate_schedule(&trace, &s);
        assert!(!v.passed());
        let edge = &v.violations[0];
        assert_eq!(edge.kind, ViolationKind::Precedence);
        assert_eq!((edge.from, edge.to), (pid(2, 2), pid(2, 3)));
    }

    #[test]
    fn latency_is_enforced() {
        let s = Schedule::fixture("v1").unwrap();
        assert_eq!(s.gap(2, 3), 11);
        assert_eq!(s.gap(2, 2), 0);
        assert_eq!(s.gap(1, 1), 0);
        assert_eq!(s.gap(6, 6), 0);
        let trace = [
            TraceInterval {
                task: 2,
                process: 1,
                start: 1,
                end: Some(3),
            },
            TraceInterval {
                task: 2,
                process: 2,
                start: 4,
                end: Some(5),
            },
            TraceInterval {
                task: 2,
                process: 3,
                start: 10,
                end: Some(40),
            },
        ];
        let v = validate_schedule(&trace, &s);
        assert_eq!(v.violations.len(), 1);
        assert_eq!(v.violations[0].kind, ViolationKind::Latency);
    }

    #[test]
    fn task3_needs_eight_steps_in_order() {
        let tasks = standard_tasks();
        let mut g = TaskGraph::chains(vec![tasks[2].clone()]);
        let (p1, p2) = (pid(3, 1), pid(3, 2));
        assert!(g.is_eligible(p1, 0));
        assert!(!g.is_eligible(p2, 0));
        let mut t = 0;
        let mut steps = 0;
        while !g.all_complete() {
            let p = if g.is_eligible(p1, t) { p1 } else { p2 };
            assert!(g.is_eligible(p, t));
            g.advance(p, t);
            t += 1;
            steps += 1;
        }
        assert_eq!(steps, 8);
        assert!((g.progress(p1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn progress_steps_by_inverse_duration() {
        let mut g = TaskGraph::chains(vec![standard_tasks()[2].clone()]);
        g.advance(pid(3, 1), 0);
        assert!((g.progress(pid(3, 1)) - 0.2).abs() < 1e-15);
        g.advance(pid(3, 1), 1);
        assert!((g.progress(pid(3, 1)) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn cycles_are_rejected() {
        let t = standard_tasks()[2].clone();
        let edges = vec![(pid(3, 1), pid(3, 2)), (pid(3, 2), pid(3, 1))];
        assert_eq!(TaskGraph::new(vec![t], edges, vec![vec![0, 0]]), Err(TaskError::Cyclic));
    }

    #[test]
    fn duplicate_holders_are_visible() {
        let mut a = Allocation::new(3);
        a.assignment[0] = Some(pid(1, 1));
        a.assignment[2] = Some(pid(1, 1));
        assert_eq!(a.duplicated(), vec![pid(1, 1)]);
    }
}
