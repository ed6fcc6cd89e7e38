//! Clipped-surrogate actor–critic over the dual replay.
//!
//! All arms share one categorical policy over motion primitives (local
//! observations only) and one critic that also sees episode-level features.
//! The policy objective adds a topological-risk penalty weighted by the
//! probability ratio, so the learner is pushed away from actions that led to
//! risky states:
//!
//! `L = E_w[ −min(ρA, clip(ρ, 1±ε)A) + λ_topo·ρ·TR − c_H·H(π) ]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::Hyperparameters;
use crate::nn::{log_softmax, Adam, Mlp};
use crate::obs::{value_input, ARM_OBS_DIM, GLOBAL_DIM};
use crate::replay::{DualReplay, Experience};

/// Bumped whenever the checkpoint layout changes.
pub const CHECKPOINT_VERSION: u32 = 1;
/// Gradient global-norm cap.
const MAX_GRAD_NORM: f64 = 0.5;
const ADV_EPS: f64 = 1e-8;

/// One policy-gradient term.
#[derive(Debug, Clone, Copy)]
pub struct PolicyTerm<'a> {
    pub obs: &'a [f64],
    pub action: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub topo_risk: f64,
    /// Importance weight.
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyLossParams {
    pub clip: f64,
    pub lambda_topo: f64,
    pub entropy: f64,
}

/// Batch policy loss; accumulates its gradient into `grad` when given.
pub fn policy_loss(net: &Mlp, terms: &[PolicyTerm], p: &PolicyLossParams, mut grad: Option<&mut [f64]>) -> f64 {
    if terms.is_empty() {
        return 0.0;
    }
    let scale = 1.0 / terms.len() as f64;
    let mut total = 0.0;
    for t in terms {
        let cache = net.forward(t.obs);
        let logp = log_softmax(cache.output());
        let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let ratio = (logp[t.action] - t.old_log_prob).exp();
        let clipped = ratio.clamp(1.0 - p.clip, 1.0 + p.clip);
        let unclipped_active = ratio * t.advantage <= clipped * t.advantage;
        let surrogate = if unclipped_active {
            ratio * t.advantage
        } else {
            clipped * t.advantage
        };
        let risk = if t.topo_risk.is_finite() { t.topo_risk } else { 0.0 };
        let entropy: f64 = -probs.iter().zip(&logp).map(|(q, l)| q * l).sum::<f64>();
        total += t.weight * (-surrogate + p.lambda_topo * ratio * risk - p.entropy * entropy);

        if let Some(g) = grad.as_deref_mut() {
            // dL/dρ, then dρ/dlogits = ρ·(onehot − π)
            let d_ratio = (if unclipped_active { -t.advantage } else { 0.0 }) + p.lambda_topo * risk;
            let d_logits: Vec<f64> = (0..probs.len())
                .map(|k| {
                    let onehot = if k == t.action { 1.0 } else { 0.0 };
                    let pg = d_ratio * ratio * (onehot - probs[k]);
                    // dH/dz_k = −π_k (log π_k + H)
                    let ent = -p.entropy * (-probs[k] * (logp[k] + entropy));
                    t.weight * scale * (pg + ent)
                })
                .collect();
            net.backward(&cache, &d_logits, g);
        }
    }
    total * scale
}

/// Importance-weighted half mean squared error of the critic.
pub fn value_loss(
    net: &Mlp,
    inputs: &[Vec<f64>],
    targets: &[f64],
    weights: &[f64],
    mut grad: Option<&mut [f64]>,
) -> f64 {
    if inputs.is_empty() {
        return 0.0;
    }
    let scale = 1.0 / inputs.len() as f64;
    let mut total = 0.0;
    for ((x, y), w) in inputs.iter().zip(targets).zip(weights) {
        let cache = net.forward(x);
        let err = cache.output()[0] - y;
        total += 0.5 * w * err * err;
        if let Some(g) = grad.as_deref_mut() {
            net.backward(&cache, &[w * err * scale], g);
        }
    }
    total * scale
}

/// Generalized advantage estimates with per-step discounts.
///
/// `values` has one more entry than `rewards` (the bootstrap value, ignored
/// when the last step is terminal).
pub fn gae(rewards: &[f64], values: &[f64], gammas: &[f64], dones: &[bool], lambda: f64) -> Vec<f64> {
    assert_eq!(values.len(), rewards.len() + 1);
    let mut adv = vec![0.0; rewards.len()];
    let mut running = 0.0;
    for t in (0..rewards.len()).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gammas[t] * values[t + 1] * live - values[t];
        running = delta + gammas[t] * lambda * live * running;
        adv[t] = running;
    }
    adv
}

/// Mixes GAE with one-step TD errors: `α·A_GAE + (1−α)·δ`.
pub fn mixed_advantage(
    rewards: &[f64],
    values: &[f64],
    gammas: &[f64],
    dones: &[bool],
    lambda: f64,
    alpha: f64,
) -> Vec<f64> {
    let g = gae(rewards, values, gammas, dones, lambda);
    (0..rewards.len())
        .map(|t| {
            let live = if dones[t] { 0.0 } else { 1.0 };
            let td = rewards[t] + gammas[t] * values[t + 1] * live - values[t];
            alpha * g[t] + (1.0 - alpha) * td
        })
        .collect()
}

pub fn normalize(xs: &mut [f64]) {
    if xs.len() < 2 {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    xs.iter_mut().for_each(|x| *x = (*x - mean) / (std + ADV_EPS));
}

/// Diagnostics of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub batch: usize,
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub version: u32,
    pub policy: Mlp,
    pub value: Mlp,
    policy_opt: Adam,
    value_opt: Adam,
    pub hyper: Hyperparameters,
    pub updates: u64,
}

impl Learner {
    pub fn new(hyper: &Hyperparameters, actions: usize, rng: &mut impl Rng) -> Self {
        let mut ps = vec![ARM_OBS_DIM];
        ps.extend(&hyper.hidden);
        ps.push(actions);
        let mut vs = vec![ARM_OBS_DIM + GLOBAL_DIM];
        vs.extend(&hyper.hidden);
        vs.push(1);
        // small output layer: near-uniform initial policy, near-zero values
        let policy = Mlp::new(&ps, 0.01, rng);
        let value = Mlp::new(&vs, 0.1, rng);
        Self {
            version: CHECKPOINT_VERSION,
            policy_opt: Adam::new(policy.num_params(), hyper.policy_lr),
            value_opt: Adam::new(value.num_params(), hyper.value_lr),
            policy,
            value,
            hyper: hyper.clone(),
            updates: 0,
        }
    }

    /// Action probabilities for one observation.
    pub fn action_probs(&self, obs: &[f64]) -> Vec<f64> {
        log_softmax(&self.policy.predict(obs)).iter().map(|l| l.exp()).collect()
    }

    /// Samples an action; returns it with its log-probability.
    pub fn act(&self, obs: &[f64], rng: &mut impl Rng) -> (usize, f64) {
        let logp = log_softmax(&self.policy.predict(obs));
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (k, l) in logp.iter().enumerate() {
            acc += l.exp();
            if u < acc {
                return (k, *l);
            }
        }
        let k = logp.len() - 1;
        (k, logp[k])
    }

    pub fn state_value(&self, obs: &[f64], global: &[f64]) -> f64 {
        self.value.predict(&value_input(obs, global))[0]
    }

    fn td_error(&self, e: &Experience) -> f64 {
        let v = self.state_value(&e.obs, &e.global);
        let next = if e.done {
            0.0
        } else {
            self.state_value(&e.next_obs, &e.next_global)
        };
        e.reward + e.gamma * next - v
    }

    /// Fills advantages, value targets and TD errors of one arm's episode
    /// trajectory in place.
    pub fn annotate(&self, traj: &mut [Experience]) {
        if traj.is_empty() {
            return;
        }
        let mut values: Vec<f64> = traj.iter().map(|e| self.state_value(&e.obs, &e.global)).collect();
        let last = traj.last().unwrap();
        values.push(if last.done {
            0.0
        } else {
            self.state_value(&last.next_obs, &last.next_global)
        });
        let rewards: Vec<f64> = traj.iter().map(|e| e.reward).collect();
        let gammas: Vec<f64> = traj.iter().map(|e| e.gamma).collect();
        let dones: Vec<bool> = traj.iter().map(|e| e.done).collect();
        let adv = mixed_advantage(
            &rewards,
            &values,
            &gammas,
            &dones,
            self.hyper.gae_lambda,
            self.hyper.alpha_mix,
        );
        let ret = gae(&rewards, &values, &gammas, &dones, self.hyper.gae_lambda);
        for (t, e) in traj.iter_mut().enumerate() {
            e.advantage = adv[t];
            e.value_target = ret[t] + values[t];
            let live = if e.done { 0.0 } else { 1.0 };
            e.td_error = rewards[t] + gammas[t] * values[t + 1] * live - values[t];
        }
    }

    /// One minibatch step for both networks; refreshes the TD errors of the
    /// drawn items.
    pub fn update(&mut self, replay: &mut DualReplay, rng: &mut impl Rng) -> UpdateStats {
        let sample = replay.sample(self.hyper.batch_size, rng);
        if sample.slots.is_empty() {
            return UpdateStats::default();
        }
        let items: Vec<Experience> = sample
            .slots
            .iter()
            .map(|s| replay.get(*s).expect("drawn slot").clone())
            .collect();
        let mut adv: Vec<f64> = items.iter().map(|e| e.advantage).collect();
        normalize(&mut adv);
        let terms: Vec<PolicyTerm> = items
            .iter()
            .zip(&adv)
            .zip(&sample.weights)
            .map(|((e, a), w)| PolicyTerm {
                obs: &e.obs,
                action: e.action,
                old_log_prob: e.log_prob,
                advantage: *a,
                topo_risk: e.topo_risk,
                weight: *w,
            })
            .collect();
        let params = PolicyLossParams {
            clip: self.hyper.clip,
            lambda_topo: self.hyper.lambda_topo,
            entropy: self.hyper.entropy,
        };
        let mut pg = vec![0.0; self.policy.num_params()];
        let pl = policy_loss(&self.policy, &terms, &params, Some(&mut pg));
        self.policy_opt.step(self.policy.params_mut(), &pg, MAX_GRAD_NORM);

        let inputs: Vec<Vec<f64>> = items.iter().map(|e| value_input(&e.obs, &e.global)).collect();
        let targets: Vec<f64> = items.iter().map(|e| e.value_target).collect();
        let mut vg = vec![0.0; self.value.num_params()];
        let vl = value_loss(&self.value, &inputs, &targets, &sample.weights, Some(&mut vg));
        self.value_opt.step(self.value.params_mut(), &vg, MAX_GRAD_NORM);

        for (slot, e) in sample.slots.iter().zip(&items) {
            replay.set_td_error(*slot, self.td_error(e));
        }
        self.updates += 1;
        UpdateStats {
            policy_loss: pl,
            value_loss: vl,
            batch: items.len(),
            partial: sample.partial,
        }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }

    /// Restores a checkpoint, rejecting other layout versions.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let l: Learner = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if l.version != CHECKPOINT_VERSION {
            return Err(format!(
                "checkpoint version {} (expected {CHECKPOINT_VERSION})",
                l.version
            ));
        }
        Ok(l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gae_with_lambda_one_is_discounted_return_minus_value() {
        let r = [1.0, 2.0, 3.0];
        let v = [0.5, 0.25, 0.125, 9.0];
        let g = [0.9; 3];
        let a = gae(&r, &v, &g, &[false, false, true], 1.0);
        let ret0 = 1.0 + 0.9 * 2.0 + 0.81 * 3.0;
        assert!((a[0] - (ret0 - 0.5)).abs() < 1e-12);
        assert!((a[2] - (3.0 - 0.125)).abs() < 1e-12);
    }

    #[test]
    fn normalize_gives_zero_mean_unit_std() {
        let mut x = vec![1.0, 2.0, 3.0, 10.0];
        normalize(&mut x);
        let m: f64 = x.iter().sum::<f64>() / 4.0;
        let s: f64 = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!(m.abs() < 1e-12 && (s - 1.0).abs() < 1e-6);
    }
}
