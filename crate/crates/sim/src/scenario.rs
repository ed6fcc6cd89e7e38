//! Seeded workspace layout: wall-mounted arms along x reaching in +y,
//! targets in front of them, and spherical obstacles placed so the rest
//! pose starts collision-free.

use antitangle_core::geometry::{node_obstacle_clearance, Aabb, Obstacle, Polyline, Vec3, Workspace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub workspace: Workspace,
    pub bases: Vec<Vec3>,
    /// Rest pose of each arm: straight along +y from its base.
    pub rest: Vec<Polyline>,
}

const PLACEMENT_TRIES: usize = 10_000;
/// Targets sit in this band of depth in front of the mounting wall,
/// as fractions of arm length.
const TARGET_DEPTH: (f64, f64) = (0.5, 0.85);
const TARGET_HEIGHT: f64 = 0.15;
const TARGET_SEPARATION: f64 = 0.15;
const OBSTACLE_TARGET_CLEARANCE: f64 = 0.12;
const OBSTACLE_ARM_CLEARANCE: f64 = 0.05;

impl Scenario {
    pub fn generate(config: &ScenarioConfig, seed: u64) -> Result<Self, ConfigError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = config.arm_length();
        let span = (config.arms - 1) as f64 * config.arm_spacing;
        let bounds = Aabb::new(
            Vec3::new(-0.4, -0.1, config.base_height - 0.5),
            Vec3::new(span + 0.4, len + 0.2, config.base_height + 0.5),
        )
        .expect("non-empty workspace");

        let bases: Vec<Vec3> = (0..config.arms)
            .map(|j| Vec3::new(j as f64 * config.arm_spacing, 0.0, config.base_height))
            .collect();
        let rest: Vec<Polyline> = bases
            .iter()
            .map(|b| {
                let pts = (0..config.nodes)
                    .map(|i| *b + Vec3::Y * (i as f64 * config.segment_length))
                    .collect();
                Polyline::new(pts).expect("rest pose has distinct nodes")
            })
            .collect();

        let mut targets: Vec<Vec3> = Vec::with_capacity(config.targets);
        for _ in 0..PLACEMENT_TRIES {
            if targets.len() == config.targets {
                break;
            }
            let t = Vec3::new(
                rng.gen_range(-0.1..span + 0.1),
                rng.gen_range(TARGET_DEPTH.0 * len..TARGET_DEPTH.1 * len),
                config.base_height + rng.gen_range(-TARGET_HEIGHT..TARGET_HEIGHT),
            );
            let reachable = bases.iter().any(|b| b.distance(t) < 0.9 * len);
            if reachable && targets.iter().all(|o| o.distance(t) > TARGET_SEPARATION) {
                targets.push(t);
            }
        }
        if targets.len() < config.targets {
            return Err(ConfigError::Invalid {
                field: "targets",
                reason: format!("could only place {} of {} targets", targets.len(), config.targets),
            });
        }

        let rest_nodes: Vec<Vec3> = rest.iter().flat_map(|p| p.points().iter().copied()).collect();
        let mut obstacles: Vec<Obstacle> = Vec::with_capacity(config.obstacles);
        let (rmin, rmax) = config.obstacle_radius;
        for _ in 0..PLACEMENT_TRIES {
            if obstacles.len() == config.obstacles {
                break;
            }
            let r = if rmax > rmin { rng.gen_range(rmin..rmax) } else { rmin };
            let c = Vec3::new(
                rng.gen_range(bounds.min.x..bounds.max.x),
                rng.gen_range(0.15 * len..bounds.max.y),
                rng.gen_range(bounds.min.z + 0.1..bounds.max.z - 0.1),
            );
            let o = Obstacle::new(c, r).expect("positive radius");
            let clear_of_arms = node_obstacle_clearance(&rest_nodes, &[o], config.arm_radius) > OBSTACLE_ARM_CLEARANCE;
            let clear_of_targets = targets.iter().all(|t| t.distance(c) - r > OBSTACLE_TARGET_CLEARANCE);
            if clear_of_arms && clear_of_targets {
                obstacles.push(o);
            }
        }
        if obstacles.len() < config.obstacles {
            return Err(ConfigError::Invalid {
                field: "obstacles",
                reason: format!("could only place {} of {} obstacles", obstacles.len(), config.obstacles),
            });
        }

        Ok(Scenario {
            config: config.clone(),
            workspace: Workspace {
                bounds,
                obstacles,
                targets,
            },
            bases,
            rest,
        })
    }

    pub fn arms(&self) -> usize {
        self.bases.len()
    }

    /// Arms whose base lies strictly between arm `j`'s base and `point`
    /// along x: the neighbours arm `j` must pass to get there.
    pub fn arms_between(&self, j: usize, point: Vec3) -> usize {
        let (lo, hi) = {
            let x = self.bases[j].x;
            if x < point.x {
                (x, point.x)
            } else {
                (point.x, x)
            }
        };
        self.bases
            .iter()
            .enumerate()
            .filter(|(k, b)| *k != j && b.x > lo && b.x < hi)
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Density;
    use antitangle_core::geometry::min_obstacle_clearance;
    use antitangle_core::geometry::ArmState;

    #[test]
    fn presets_generate_collision_free() {
        for d in [Density::Low, Density::Medium, Density::High] {
            let cfg = ScenarioConfig::preset(d);
            for seed in 0..5 {
                let s = Scenario::generate(&cfg, seed).unwrap();
                assert_eq!(s.workspace.targets.len(), cfg.targets);
                assert_eq!(s.workspace.obstacles.len(), cfg.obstacles);
                for r in &s.rest {
                    let arm = ArmState::at_rest(r.clone());
                    assert!(min_obstacle_clearance(&arm, &s.workspace, cfg.arm_radius) > 0.0);
                    assert!(r.points().iter().all(|p| s.workspace.bounds.contains(*p)));
                }
            }
        }
    }

    #[test]
    fn same_seed_same_layout() {
        let cfg = ScenarioConfig::default();
        assert_eq!(
            Scenario::generate(&cfg, 3).unwrap(),
            Scenario::generate(&cfg, 3).unwrap()
        );
        assert_ne!(
            Scenario::generate(&cfg, 3).unwrap(),
            Scenario::generate(&cfg, 4).unwrap()
        );
    }

    #[test]
    fn counts_arms_in_the_way() {
        let s = Scenario::generate(&ScenarioConfig::default(), 1).unwrap();
        // bases at x = 0, 0.3, 0.6, 0.9
        assert_eq!(s.arms_between(0, Vec3::new(0.7, 0.5, 0.5)), 2);
        assert_eq!(s.arms_between(3, Vec3::new(0.7, 0.5, 0.5)), 0);
        assert_eq!(s.arms_between(1, Vec3::new(0.3, 0.5, 0.5)), 0);
    }
}
