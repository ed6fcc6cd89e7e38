//! Run configuration: scenario presets, coefficients, hyperparameters and
//! ablation switches. Every struct deserializes from TOML with defaults for
//! omitted fields.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use antitangle_core::geometry::Vec3;
use antitangle_core::risk::{RiskCoeffs, RiskConfigError};
use antitangle_core::topology::EntanglementThresholds;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown scenario {0:?} (expected low, med or high)")]
    UnknownScenario(String),
    #[error("invalid risk coefficients: {0}")]
    Risk(#[from] RiskConfigError),
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Density {
    Low,
    #[serde(alias = "med")]
    Medium,
    High,
}

impl fmt::Display for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Density::Low => "low",
            Density::Medium => "med",
            Density::High => "high",
        })
    }
}

impl FromStr for Density {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "low" => Ok(Density::Low),
            "med" | "medium" => Ok(Density::Medium),
            "high" => Ok(Density::High),
            other => Err(ConfigError::UnknownScenario(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub density: Density,
    pub arms: usize,
    pub targets: usize,
    pub obstacles: usize,
    /// Nodes per arm centerline.
    pub nodes: usize,
    /// Rest (and maximum) segment length; segments can retract down to
    /// `min_segment_length`.
    pub segment_length: f64,
    pub min_segment_length: f64,
    /// Base spacing along x.
    pub arm_spacing: f64,
    pub base_height: f64,
    pub obstacle_radius: (f64, f64),
    pub arm_radius: f64,
    pub dt: f64,
    pub v_max: f64,
    pub kappa_max: f64,
    pub tau_max: f64,
    pub reach_radius: f64,
    /// Projection direction for crossings.
    pub projection: Vec3,
    /// Step cap per episode.
    pub horizon: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::preset(Density::Low)
    }
}

impl ScenarioConfig {
    pub fn preset(density: Density) -> Self {
        let (arms, targets, obstacles, horizon) = match density {
            Density::Low => (4, 4, 6, 160),
            Density::Medium => (6, 6, 12, 160),
            Density::High => (10, 8, 24, 180),
        };
        Self {
            density,
            arms,
            targets,
            obstacles,
            nodes: 10,
            segment_length: 0.1,
            min_segment_length: 0.04,
            arm_spacing: 0.3,
            base_height: 0.5,
            obstacle_radius: (0.03, 0.06),
            arm_radius: 0.02,
            dt: 0.1,
            v_max: 1.0,
            kappa_max: 12.0,
            tau_max: 16.0,
            reach_radius: 0.05,
            projection: Vec3::Z,
            horizon,
        }
    }

    /// Fully extended arm length.
    pub fn arm_length(&self) -> f64 {
        self.segment_length * (self.nodes - 1) as f64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.arms < 2 {
            return Err(invalid("arms", "need at least 2 arms"));
        }
        if self.targets == 0 {
            return Err(invalid("targets", "need at least 1 target"));
        }
        if self.nodes < 4 {
            return Err(invalid("nodes", "need at least 4 nodes per arm"));
        }
        for (name, v) in [
            ("segment_length", self.segment_length),
            ("arm_spacing", self.arm_spacing),
            ("dt", self.dt),
            ("v_max", self.v_max),
            ("kappa_max", self.kappa_max),
            ("tau_max", self.tau_max),
            ("reach_radius", self.reach_radius),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        let (lo, hi) = self.obstacle_radius;
        if !(lo > 0.0 && lo <= hi) {
            return Err(invalid("obstacle_radius", "need 0 < min <= max"));
        }
        if !(self.min_segment_length > 0.0 && self.min_segment_length <= self.segment_length) {
            return Err(invalid(
                "min_segment_length",
                "need 0 < min_segment_length <= segment_length",
            ));
        }
        if self.projection.normalized().is_none() {
            return Err(invalid("projection", "zero vector"));
        }
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be positive"));
        }
        Ok(())
    }
}

/// Weights of the hierarchical reward terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardCoeffs {
    /// Scheduler throughput weight.
    pub alpha: f64,
    /// Scheduler risk penalty weight.
    pub beta: f64,
    /// Arm safety bonus weight.
    pub eta: f64,
    /// Arm collaboration bonus weight.
    pub xi: f64,
    /// Arm local risk penalty weight.
    pub kappa: f64,
    pub task_completion: f64,
    pub safety_bonus: f64,
    pub collab_bonus: f64,
}

impl Default for RewardCoeffs {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            eta: 1.0,
            xi: 1.0,
            kappa: 1.0,
            task_completion: 10.0,
            safety_bonus: 0.1,
            collab_bonus: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafetyConfig {
    pub n_min: usize,
    /// Budget sensitivity to braid length.
    pub budget_alpha: f64,
    /// Steps a replan event lowers the budget for.
    pub replan_steps: u64,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        Self {
            n_min: 1,
            budget_alpha: 0.25,
            replan_steps: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopologyConfig {
    pub eps: f64,
    pub entanglement: EntanglementThresholds,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            eps: antitangle_core::topology::DEFAULT_EPS,
            entanglement: EntanglementThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub policy_lr: f64,
    pub value_lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub batch_size: usize,
    pub lambda_topo: f64,
    pub alpha_mix: f64,
    pub hidden: Vec<usize>,
    /// Minibatch updates after each episode.
    pub updates_per_episode: usize,
    /// Importance-sampling exponent.
    pub beta_is: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub safe_capacity: usize,
    pub risky_capacity: usize,
    pub neutral_capacity: usize,
    /// Policy entropy bonus weight.
    pub entropy: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            policy_lr: 1e-4,
            value_lr: 1e-4,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.10,
            batch_size: 128,
            lambda_topo: 0.02,
            alpha_mix: 0.70,
            hidden: vec![64, 64],
            updates_per_episode: 2,
            beta_is: 0.4,
            omega_min: 0.2,
            omega_max: 0.8,
            safe_capacity: 50_000,
            risky_capacity: 20_000,
            neutral_capacity: 50_000,
            entropy: 0.0,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [("policy_lr", self.policy_lr), ("value_lr", self.value_lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(invalid("gamma", "discounts must lie in [0, 1]"));
        }
        if !(self.clip > 0.0) {
            return Err(invalid("clip", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.alpha_mix) {
            return Err(invalid("alpha_mix", "must lie in [0, 1]"));
        }
        if !(0.0 <= self.omega_min && self.omega_min <= self.omega_max && self.omega_max <= 1.0) {
            return Err(invalid("omega", "need 0 <= omega_min <= omega_max <= 1"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(invalid("hidden", "need at least one non-empty hidden layer"));
        }
        if self.safe_capacity == 0 || self.risky_capacity == 0 || self.neutral_capacity == 0 {
            return Err(invalid("capacity", "buffer capacities must be positive"));
        }
        Ok(())
    }
}

/// Components that can be switched off for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct Components {
    pub dual_replay: bool,
    pub safety_layer: bool,
    pub hierarchical_control: bool,
}

impl Default for Components {
    fn default() -> Self {
        Self {
            dual_replay: true,
            safety_layer: true,
            hierarchical_control: true,
        }
    }
}

impl Components {
    /// Disables one component by name.
    pub fn ablate(&mut self, name: &str) -> Result<(), ConfigError> {
        match name {
            "dual_replay" => self.dual_replay = false,
            "safety_layer" => self.safety_layer = false,
            "hierarchical_control" => self.hierarchical_control = false,
            other => return Err(invalid("ablate", format!("unknown component {other:?}"))),
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        let off: Vec<&str> = [
            ("dual_replay", self.dual_replay),
            ("safety_layer", self.safety_layer),
            ("hierarchical_control", self.hierarchical_control),
        ]
        .iter()
        .filter(|(_, on)| !on)
        .map(|(n, _)| *n)
        .collect();
        if off.is_empty() {
            "full".to_string()
        } else {
            format!("no_{}", off.join("+no_"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub components: Components,
    pub risk: RiskCoeffs,
    pub rewards: RewardCoeffs,
    pub safety: SafetyConfig,
    pub topology: TopologyConfig,
    pub hyper: Hyperparameters,
    /// Episodes at the end of training whose metrics are reported.
    pub eval_window: usize,
    /// Final episodes per seed written to the trajectory dump.
    pub trace_episodes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_density(Density::Low)
    }
}

impl RunConfig {
    pub fn for_density(density: Density) -> Self {
        Self {
            scenario: ScenarioConfig::preset(density),
            seeds: vec![1, 2, 3],
            episodes: match density {
                Density::High => 5000,
                _ => 2000,
            },
            components: Components::default(),
            risk: RiskCoeffs::default(),
            rewards: RewardCoeffs::default(),
            safety: SafetyConfig::default(),
            topology: TopologyConfig::default(),
            hyper: Hyperparameters::default(),
            eval_window: 500,
            trace_episodes: 1,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario.validate()?;
        self.risk.validate()?;
        self.hyper.validate()?;
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "need at least one seed"));
        }
        if self.episodes == 0 {
            return Err(invalid("episodes", "must be positive"));
        }
        if self.eval_window == 0 {
            return Err(invalid("eval_window", "must be positive"));
        }
        let s = &self.safety;
        if !(1 <= s.n_min && s.n_min <= self.scenario.arms) || !(s.budget_alpha >= 0.0) {
            return Err(invalid("safety", "need 1 <= n_min <= arms and budget_alpha >= 0"));
        }
        if !(self.topology.eps > 0.0) {
            return Err(invalid("topology.eps", "must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for d in [Density::Low, Density::Medium, Density::High] {
            RunConfig::for_density(d).validate().unwrap();
        }
        let high = ScenarioConfig::preset(Density::High);
        assert_eq!((high.arms, high.targets, high.obstacles), (10, 8, 24));
    }

    #[test]
    fn toml_overrides_merge_with_defaults() {
        let cfg = RunConfig::from_toml_str(
            r#"
            seeds = [7]
            episodes = 10
            [components]
            safety_layer = false
            [hyper]
            clip = 0.2
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seeds, vec![7]);
        assert!(!cfg.components.safety_layer && cfg.components.dual_replay);
        assert_eq!(cfg.hyper.clip, 0.2);
        assert_eq!(cfg.hyper.batch_size, 128);
    }

    #[test]
    fn bad_values_fail_before_compute() {
        assert!(RunConfig::from_toml_str("[risk]\ntheta_safe = 5.0").is_err());
        assert!(RunConfig::from_toml_str("episodes = 0").is_err());
        assert!(matches!(
            "huge".parse::<Density>(),
            Err(ConfigError::UnknownScenario(_))
        ));
        let mut c = Components::default();
        assert!(c.ablate("nonsense").is_err());
        c.ablate("safety_layer").unwrap();
        assert_eq!(c.label(), "no_safety_layer");
    }
}
