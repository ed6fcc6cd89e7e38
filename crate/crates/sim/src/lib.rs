//! Simulation environment, hierarchical scheduling, dual replay and
//! learning for topology-aware multi-arm coordination.

pub mod config;
pub mod env;
pub mod harness;
pub mod learner;
pub mod nn;
pub mod obs;
pub mod replay;
pub mod scenario;
pub mod scheduler;
pub mod tasks;
