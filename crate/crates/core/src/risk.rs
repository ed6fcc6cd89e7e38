//! Topological risk scoring, staged action screening, concurrency budget and
//! risk-sensitive discounting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskConfigError {
    #[error("coefficient {0} must be finite and non-negative")]
    NegativeCoefficient(&'static str),
    #[error("saturation scale c1 must be positive")]
    NonPositiveScale,
    #[error("screening thresholds must satisfy 0 <= theta_safe < theta_high")]
    ScreeningOrder,
    #[error("replay thresholds must satisfy tau_low < tau_high")]
    ReplayOrder,
}

/// Coefficients and thresholds shared by scoring, screening and replay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskCoeffs {
    /// Weight on `max |Lk|`.
    pub alpha1: f64,
    /// Weight on the saturated braid length.
    pub alpha2: f64,
    /// Weight on the entanglement indicator.
    pub alpha3: f64,
    /// Braid length saturation scale.
    pub c1: f64,
    pub theta_safe: f64,
    pub theta_high: f64,
    pub tau_low: f64,
    pub tau_high: f64,
    pub tau_safe: f64,
}

impl Default for RiskCoeffs {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 1.0,
            alpha3: 5.0,
            c1: 10.0,
            theta_safe: 0.3,
            theta_high: 1.0,
            tau_low: 0.2,
            tau_high: 0.8,
            tau_safe: 1.0,
        }
    }
}

impl RiskCoeffs {
    pub fn validate(&self) -> Result<(), RiskConfigError> {
        for (name, v) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(RiskConfigError::NegativeCoefficient(name));
            }
        }
        if !(self.c1 > 0.0 && self.c1.is_finite()) {
            return Err(RiskConfigError::NonPositiveScale);
        }
        if !(self.theta_safe >= 0.0 && self.theta_safe < self.theta_high) {
            return Err(RiskConfigError::ScreeningOrder);
        }
        if !(self.tau_low < self.tau_high) {
            return Err(RiskConfigError::ReplayOrder);
        }
        Ok(())
    }

    /// Whether a state with this risk lies in the effective (safe) region.
    pub fn is_effective(&self, risk: f64) -> bool {
        risk < self.tau_safe
    }
}

/// `α₁·max|Lk| + α₂·tanh(|Br|/c₁) + α₃·𝟙[entangled]`.
pub fn risk_score(max_abs_linking: f64, braid_length: usize, entangled: bool, c: &RiskCoeffs) -> f64 {
    let indicator = if entangled { 1.0 } else { 0.0 };
    c.alpha1 * max_abs_linking + c.alpha2 * (braid_length as f64 / c.c1).tanh() + c.alpha3 * indicator
}

/// `max(n_min, ⌊n_max / (1 + α·|Br|)⌋)`.
pub fn concurrency_budget(braid_length: usize, n_min: usize, n_max: usize, alpha: f64) -> usize {
    debug_assert!(1 <= n_min && n_min <= n_max && alpha >= 0.0);
    let scaled = (n_max as f64 / (1.0 + alpha * braid_length as f64)).floor() as usize;
    scaled.max(n_min)
}

/// `γ = 0.99 − 0.1·tanh(risk / 0.5)`.
pub fn adaptive_discount(risk: f64) -> f64 {
    0.99 - 0.1 * (risk / 0.5).tanh()
}

/// Factor applied to velocities in the moderate-risk band: a linear ramp
/// from 1 at `θ_safe` to 0 at `θ_high`, floored at 0.1.
pub fn velocity_scale(risk: f64, c: &RiskCoeffs) -> f64 {
    ((c.theta_high - risk) / (c.theta_high - c.theta_safe)).clamp(0.1, 1.0)
}

/// Actions whose velocity content can be scaled by a positive factor.
pub trait ScalableAction: Clone {
    fn scale_velocity(&self, factor: f64) -> Self;
}

/// A state snapshot that can preview the risk of candidate actions and
/// produce a conservative fallback.
pub trait LookaheadRisk<A> {
    fn lookahead_risk(&self, action: &A) -> f64;
    fn conservative_action(&self) -> A;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Pass,
    Scaled,
    Conservative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningOutcome<A> {
    pub action: A,
    pub decision: Decision,
    /// Lookahead risk of the candidate action.
    pub risk: f64,
    /// Lookahead risk of the action actually returned.
    pub executed_risk: f64,
    pub replan_requested: bool,
    /// Set when the candidate's risk was not finite.
    pub non_finite: bool,
}

impl<A> ScreeningOutcome<A> {
    pub fn intervened(&self) -> bool {
        self.decision != Decision::Pass
    }
}

/// Staged screening of one candidate action.
///
/// A scaled action is re-checked; if its own lookahead risk reaches
/// `θ_high` the screen escalates to the conservative branch, so an
/// executed action at or above `θ_high` always carries a replan request.
pub fn screen_action<A, S>(state: &S, candidate: A, c: &RiskCoeffs) -> ScreeningOutcome<A>
where
    A: ScalableAction,
    S: LookaheadRisk<A>,
{
    let r = state.lookahead_risk(&candidate);
    if !r.is_finite() {
        return conservative(state, r, true);
    }
    if r < c.theta_safe {
        return ScreeningOutcome {
            action: candidate,
            decision: Decision::Pass,
            risk: r,
            executed_risk: r,
            replan_requested: false,
            non_finite: false,
        };
    }
    if r < c.theta_high {
        let scaled = candidate.scale_velocity(velocity_scale(r, c));
        let rs = state.lookahead_risk(&scaled);
        if rs.is_finite() && rs < c.theta_high {
            return ScreeningOutcome {
                action: scaled,
                decision: Decision::Scaled,
                risk: r,
                executed_risk: rs,
                replan_requested: false,
                non_finite: false,
            };
        }
    }
    conservative(state, r, false)
}

fn conservative<A, S: LookaheadRisk<A>>(state: &S, r: f64, non_finite: bool) -> ScreeningOutcome<A> {
    let action = state.conservative_action();
    let executed_risk = state.lookahead_risk(&action);
    ScreeningOutcome {
        action,
        decision: Decision::Conservative,
        risk: r,
        executed_risk,
        replan_requested: true,
        non_finite,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct Vel(f64);

    impl ScalableAction for Vel {
        fn scale_velocity(&self, f: f64) -> Self {
            Vel(self.0 * f)
        }
    }

    /// Risk grows linearly with speed on top of a base level.
    struct Linear {
        base: f64,
        slope: f64,
    }

    impl LookaheadRisk<Vel> for Linear {
        fn lookahead_risk(&self, a: &Vel) -> f64 {
            self.base + self.slope * a.0
        }
        fn conservative_action(&self) -> Vel {
            Vel(0.0)
        }
    }

    #[test]
    fn zero_state_scores_zero() {
        assert_eq!(risk_score(0.0, 0, false, &RiskCoeffs::default()), 0.0);
    }

    #[test]
    fn risk_score_arithmetic() {
        let c = RiskCoeffs {
            alpha1: 1.0,
            alpha2: 1.0,
            c1: 7.0,
            ..RiskCoeffs::default()
        };
        let v = risk_score(1.0, 7, false, &c);
        assert!((v - (1.0 + 1f64.tanh())).abs() < 1e-12);
        assert!((v - 1.761594).abs() < 1e-6);
        let e = risk_score(1.0, 7, true, &c);
        assert!((e - v - 5.0).abs() < 1e-12);
    }

    #[test]
    fn budget_examples() {
        assert_eq!(concurrency_budget(0, 2, 10, 1.0), 10);
        assert_eq!(concurrency_budget(4, 2, 10, 1.0), 2);
        assert_eq!(concurrency_budget(4, 2, 10, 0.25), 5);
    }

    #[test]
    fn discount_examples() {
        assert_eq!(adaptive_discount(0.0), 0.99);
        assert!((adaptive_discount(1e6) - 0.89).abs() < 1e-12);
        assert!((adaptive_discount(0.5) - (0.99 - 0.1 * 1f64.tanh())).abs() < 1e-15);
        assert!((adaptive_discount(0.5) - 0.913841).abs() < 1e-6);
    }

    #[test]
    fn screening_stages() {
        let c = RiskCoeffs::default();
        let calm = Linear { base: 0.0, slope: 0.0 };
        let out = screen_action(&calm, Vel(2.0), &c);
        assert_eq!(out.decision, Decision::Pass);
        assert_eq!(out.action, Vel(2.0));

        let boundary = Linear {
            base: c.theta_safe,
            slope: 0.0,
        };
        let out = screen_action(&boundary, Vel(2.0), &c);
        assert_eq!(out.decision, Decision::Scaled);
        assert_eq!(out.action, Vel(2.0));
        assert!(!out.replan_requested);

        let high = Linear {
            base: c.theta_high,
            slope: 0.0,
        };
        let out = screen_action(&high, Vel(2.0), &c);
        assert_eq!(out.decision, Decision::Conservative);
        assert!(out.replan_requested);
        assert_eq!(out.action, Vel(0.0));
    }

    #[test]
    fn scaled_action_keeps_direction() {
        let c = RiskCoeffs::default();
        let s = Linear { base: 0.2, slope: 0.1 };
        let out = screen_action(&s, Vel(5.0), &c);
        assert_eq!(out.decision, Decision::Scaled);
        assert!(out.action.0 > 0.0 && out.action.0 < 5.0);
        assert!((out.action.0 - 5.0 * velocity_scale(0.7, &c)).abs() < 1e-12);
    }

    #[test]
    fn non_finite_risk_is_conservative() {
        let c = RiskCoeffs::default();
        let s = Linear {
            base: f64::NAN,
            slope: 0.0,
        };
        let out = screen_action(&s, Vel(1.0), &c);
        assert_eq!(out.decision, Decision::Conservative);
        assert!(out.non_finite && out.replan_requested);
    }

    #[test]
    fn validation_catches_bad_orderings() {
        let mut c = RiskCoeffs::default();
        assert!(c.validate().is_ok());
        c.theta_safe = 2.0;
        assert_eq!(c.validate(), Err(RiskConfigError::ScreeningOrder));
        let c = RiskCoeffs {
            tau_low: 0.9,
            ..RiskCoeffs::default()
        };
        assert_eq!(c.validate(), Err(RiskConfigError::ReplayOrder));
        let c = RiskCoeffs {
            c1: 0.0,
            ..RiskCoeffs::default()
        };
        assert_eq!(c.validate(), Err(RiskConfigError::NonPositiveScale));
    }
}
