//! Dual experience replay: transitions are split by topological risk into
//! safe / neutral / risky ring buffers and drawn with a priority mixing TD
//! error and risk, `P(i) ∝ (1−ω)·|δ_TD(i)| + ω·TR(i)`, where ω grows with the
//! share of risky experience.

use antitangle_core::risk::RiskCoeffs;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Added to every priority so no stored item becomes unreachable.
pub const PRIORITY_FLOOR: f64 = 1e-6;
/// Sum-tree updates between full rebuilds (bounds float drift).
const REBUILD_EVERY: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub obs: Vec<f64>,
    /// Index of the chosen primitive.
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
    pub topo_risk: f64,
    /// Latest TD error; refreshed after updates.
    pub td_error: f64,
    /// Critic-only features at `obs` and `next_obs`.
    pub global: Vec<f64>,
    pub next_global: Vec<f64>,
    /// Behaviour-policy log-probability of `action`.
    pub log_prob: f64,
    pub advantage: f64,
    /// Value regression target.
    pub value_target: f64,
    /// Discount used on this transition.
    pub gamma: f64,
}

impl Experience {
    /// Minimal record for tests and tools; learner fields are zero.
    pub fn bare(topo_risk: f64, td_error: f64) -> Self {
        Self {
            obs: Vec::new(),
            action: 0,
            reward: 0.0,
            next_obs: Vec::new(),
            done: false,
            topo_risk,
            td_error,
            global: Vec::new(),
            next_global: Vec::new(),
            log_prob: 0.0,
            advantage: 0.0,
            value_target: 0.0,
            gamma: 0.99,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BufferId {
    Safe,
    Neutral,
    Risky,
}

impl BufferId {
    pub const ALL: [BufferId; 3] = [BufferId::Safe, BufferId::Neutral, BufferId::Risky];

    fn index(self) -> usize {
        match self {
            BufferId::Safe => 0,
            BufferId::Neutral => 1,
            BufferId::Risky => 2,
        }
    }
}

/// Three-way rule: safe below `τ_low`, risky at or above `τ_high`, neutral
/// otherwise. Non-finite risk is treated as risky.
pub fn classify(topo_risk: f64, c: &RiskCoeffs) -> BufferId {
    if !topo_risk.is_finite() || topo_risk >= c.tau_high {
        BufferId::Risky
    } else if topo_risk < c.tau_low {
        BufferId::Safe
    } else {
        BufferId::Neutral
    }
}

/// `ω = ω_min + (ω_max − ω_min)·N_entangle/N_total` (ω_min when empty).
pub fn omega(omega_min: f64, omega_max: f64, n_entangle: u64, n_total: u64) -> f64 {
    if n_total == 0 {
        return omega_min;
    }
    omega_min + (omega_max - omega_min) * (n_entangle as f64 / n_total as f64)
}

/// Unnormalized priority of one item.
pub fn priority_score(td_error: f64, topo_risk: f64, omega: f64) -> f64 {
    let risk = if topo_risk.is_finite() { topo_risk.max(0.0) } else { 0.0 };
    let td = if td_error.is_finite() { td_error.abs() } else { 0.0 };
    (1.0 - omega) * td + omega * risk + PRIORITY_FLOOR
}

/// Binary-indexed sum tree over fixed slots.
#[derive(Debug, Clone)]
struct SumTree {
    tree: Vec<f64>,
    values: Vec<f64>,
}

impl SumTree {
    fn new(n: usize) -> Self {
        Self {
            tree: vec![0.0; n + 1],
            values: vec![0.0; n],
        }
    }

    fn set(&mut self, i: usize, v: f64) {
        let delta = v - self.values[i];
        self.values[i] = v;
        let mut k = i + 1;
        while k < self.tree.len() {
            self.tree[k] += delta;
            k += k & k.wrapping_neg();
        }
    }

    fn total(&self) -> f64 {
        let mut k = self.values.len();
        let mut s = 0.0;
        while k > 0 {
            s += self.tree[k];
            k &= k - 1;
        }
        s
    }

    fn rebuild(&mut self) {
        self.tree.iter_mut().for_each(|t| *t = 0.0);
        for i in 0..self.values.len() {
            let mut k = i + 1;
            let v = self.values[i];
            while k < self.tree.len() {
                self.tree[k] += v;
                k += k & k.wrapping_neg();
            }
        }
    }

    /// Smallest slot whose prefix sum exceeds `target`, skipping zero slots.
    fn find(&self, mut target: f64) -> usize {
        let n = self.values.len();
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= target {
                target -= self.tree[next];
                pos = next;
            }
            step >>= 1;
        }
        // float slack can land on an empty slot; walk to a live one
        let mut i = pos.min(n - 1);
        if self.values[i] <= 0.0 {
            if let Some(k) = (i..n).find(|k| self.values[*k] > 0.0) {
                i = k;
            } else if let Some(k) = (0..i).rev().find(|k| self.values[*k] > 0.0) {
                i = k;
            }
        }
        i
    }
}

/// Result of one batch draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Global slot ids (usable with [`DualReplay::get`] and
    /// [`DualReplay::set_td_error`]).
    pub slots: Vec<usize>,
    /// Importance weights `(M·P(i))^(−β)` normalized by the batch max.
    pub weights: Vec<f64>,
    /// Probability of each drawn item at its draw.
    pub probabilities: Vec<f64>,
    /// Set when fewer items were stored than requested.
    pub partial: bool,
}

#[derive(Debug, Clone)]
pub struct DualReplay {
    capacities: [usize; 3],
    offsets: [usize; 3],
    slots: Vec<Option<Experience>>,
    /// Next write position per buffer (ring order).
    heads: [usize; 3],
    lens: [usize; 3],
    td_tree: SumTree,
    risk_tree: SumTree,
    live_tree: SumTree,
    updates: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_entangle: u64,
    pub n_total: u64,
    /// Non-finite risks routed to the risky buffer.
    pub non_finite: u64,
    /// Uniform draws instead of priorities (ablation).
    pub uniform: bool,
    /// Importance-sampling exponent β.
    pub beta_is: f64,
}

impl DualReplay {
    pub fn new(safe: usize, neutral: usize, risky: usize, omega_min: f64, omega_max: f64) -> Self {
        let capacities = [safe, neutral, risky];
        let offsets = [0, safe, safe + neutral];
        let total = safe + neutral + risky;
        assert!(total > 0, "replay needs capacity");
        Self {
            capacities,
            offsets,
            slots: vec![None; total],
            heads: [0; 3],
            lens: [0; 3],
            td_tree: SumTree::new(total),
            risk_tree: SumTree::new(total),
            live_tree: SumTree::new(total),
            updates: 0,
            omega_min,
            omega_max,
            n_entangle: 0,
            n_total: 0,
            non_finite: 0,
            uniform: false,
            beta_is: 0.4,
        }
    }

    pub fn len(&self) -> usize {
        self.lens.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn buffer_len(&self, b: BufferId) -> usize {
        self.lens[b.index()]
    }

    pub fn omega(&self) -> f64 {
        omega(self.omega_min, self.omega_max, self.n_entangle, self.n_total)
    }

    pub fn get(&self, slot: usize) -> Option<&Experience> {
        self.slots.get(slot).and_then(|s| s.as_ref())
    }

    /// Stores `e` in the buffer its risk selects, evicting that buffer's
    /// oldest item when full.
    pub fn classify_and_store(&mut self, e: Experience, c: &RiskCoeffs) -> BufferId {
        let b = classify(e.topo_risk, c);
        if !e.topo_risk.is_finite() {
            self.non_finite += 1;
        }
        self.n_total += 1;
        if b == BufferId::Risky {
            self.n_entangle += 1;
        }
        let k = b.index();
        let slot = self.offsets[k] + self.heads[k];
        self.heads[k] = (self.heads[k] + 1) % self.capacities[k];
        self.lens[k] = (self.lens[k] + 1).min(self.capacities[k]);
        self.write(slot, e);
        b
    }

    fn write(&mut self, slot: usize, e: Experience) {
        let risk = if e.topo_risk.is_finite() {
            e.topo_risk.max(0.0)
        } else {
            0.0
        };
        let td = if e.td_error.is_finite() { e.td_error.abs() } else { 0.0 };
        self.td_tree.set(slot, td);
        self.risk_tree.set(slot, risk);
        self.live_tree.set(slot, 1.0);
        self.slots[slot] = Some(e);
        self.touch(3);
    }

    fn touch(&mut self, n: usize) {
        self.updates += n;
        if self.updates >= REBUILD_EVERY {
            self.td_tree.rebuild();
            self.risk_tree.rebuild();
            self.live_tree.rebuild();
            self.updates = 0;
        }
    }

    pub fn set_td_error(&mut self, slot: usize, td: f64) {
        if let Some(e) = self.slots[slot].as_mut() {
            e.td_error = td;
            self.td_tree.set(slot, if td.is_finite() { td.abs() } else { 0.0 });
            self.touch(1);
        }
    }

    /// Exact draw probability of every stored item at the current ω (slot,
    /// probability), in slot order.
    pub fn probabilities(&self) -> Vec<(usize, f64)> {
        let w = self.omega();
        let scores: Vec<(usize, f64)> = self
            .slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| {
                s.as_ref().map(|e| {
                    let p = if self.uniform {
                        1.0
                    } else {
                        priority_score(e.td_error, e.topo_risk, w)
                    };
                    (i, p)
                })
            })
            .collect();
        let total: f64 = scores.iter().map(|(_, p)| p).sum();
        scores.into_iter().map(|(i, p)| (i, p / total)).collect()
    }

    /// Draws up to `batch` distinct items under `P(i)`.
    pub fn sample(&mut self, batch: usize, rng: &mut impl Rng) -> Sample {
        let m = self.len();
        let k = batch.min(m);
        let w = self.omega();
        let (a_td, a_risk) = if self.uniform { (0.0, 0.0) } else { (1.0 - w, w) };
        let a_live = if self.uniform { 1.0 } else { PRIORITY_FLOOR };
        let mut slots = Vec::with_capacity(k);
        let mut probs = Vec::with_capacity(k);
        let mut removed: Vec<(usize, f64, f64)> = Vec::with_capacity(k);
        for _ in 0..k {
            let parts = [
                a_td * self.td_tree.total().max(0.0),
                a_risk * self.risk_tree.total().max(0.0),
                a_live * self.live_tree.total().max(0.0),
            ];
            let total: f64 = parts.iter().sum();
            let mut u = rng.gen::<f64>() * total;
            // pick a component in proportion to its mass, then a slot within it
            let mut c = 2;
            for (i, part) in parts.iter().enumerate() {
                if *part > 0.0 && u < *part {
                    c = i;
                    break;
                }
                u -= part;
            }
            let (tree, weight) = match c {
                0 => (&self.td_tree, a_td),
                1 => (&self.risk_tree, a_risk),
                _ => (&self.live_tree, a_live),
            };
            let u = u.max(0.0);
            let slot = tree.find(u / weight);
            let score = a_td * self.td_tree.values[slot] + a_risk * self.risk_tree.values[slot] + a_live;
            probs.push(score / total);
            slots.push(slot);
            removed.push((slot, self.td_tree.values[slot], self.risk_tree.values[slot]));
            self.td_tree.set(slot, 0.0);
            self.risk_tree.set(slot, 0.0);
            self.live_tree.set(slot, 0.0);
        }
        for (slot, td, risk) in removed {
            self.td_tree.set(slot, td);
            self.risk_tree.set(slot, risk);
            self.live_tree.set(slot, 1.0);
        }
        self.touch(6 * k);
        let weights = if self.uniform {
            vec![1.0; k]
        } else {
            let raw: Vec<f64> = probs.iter().map(|p| (m as f64 * p).powf(-self.beta_is)).collect();
            let max = raw.iter().copied().fold(0.0, f64::max);
            raw.iter().map(|r| r / max).collect()
        };
        Sample {
            slots,
            weights,
            probabilities: probs,
            partial: k < batch,
        }
    }
}
