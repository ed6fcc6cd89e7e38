//! Geometry, topology and risk primitives for coordinating many flexible
//! arms in a shared workspace.
//!
//! - [`geometry`]: vectors, polylines, arm states, curvature/torsion, clearance.
//! - [`topology`]: discretized Gauss linking and writhe, crossing detection,
//!   entanglement monitoring.
//! - [`braid`]: braid words, rewriting-based simplification, word-problem oracles.
//! - [`risk`]: topological risk score, action screening, budgets and discounting.

pub mod braid;
pub mod geometry;
pub mod risk;
pub mod topology;

pub use braid::{BraidError, BraidWord, Letter, RewriteTrace};
pub use geometry::{Aabb, ArmState, Mat3, Obstacle, Polyline, Vec3, Workspace};
pub use risk::{RiskCoeffs, ScreeningOutcome};
pub use topology::{CrossingEvent, CrossingSign, TopoState};
