use serde::{Deserialize, Serialize};

use super::PurePursuitConfig;
use crate::environment::{observe, ActionSmoother, Horizons};
use crate::learning::PolicyBundle;
use crate::raceline::Raceline;
use crate::simulator::VehicleState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Fixed,
    Scheduled,
    Learned,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Fixed => "fixed",
            StrategyKind::Scheduled => "scheduled",
            StrategyKind::Learned => "learned",
        }
    }
}

/// Trained policy plus the smoother applied before the lookahead is published.
#[derive(Debug, Clone)]
pub struct LearnedLookahead {
    pub policy: PolicyBundle,
    pub smoother: ActionSmoother,
    pub horizons: Horizons,
}

/// Where each control step's lookahead distance comes from.
#[derive(Debug, Clone)]
pub enum LookaheadSource {
    Fixed(f64),
    /// `clip(a + b v, L_min, L_max)`.
    Scheduled {
        a: f64,
        b: f64,
    },
    Learned(Box<LearnedLookahead>),
}

impl LookaheadSource {
    pub fn kind(&self) -> StrategyKind {
        match self {
            LookaheadSource::Fixed(_) => StrategyKind::Fixed,
            LookaheadSource::Scheduled { .. } => StrategyKind::Scheduled,
            LookaheadSource::Learned(_) => StrategyKind::Learned,
        }
    }

    /// Lookahead for this step, always inside the configured bounds.
    pub fn lookahead(&mut self, state: &VehicleState, raceline: &Raceline, cfg: &PurePursuitConfig) -> f64 {
        let l = match self {
            LookaheadSource::Fixed(l) => *l,
            LookaheadSource::Scheduled { a, b } => *a + *b * state.v,
            LookaheadSource::Learned(learned) => {
                let obs = observe(state, raceline, &learned.horizons);
                let raw = learned.policy.act_deterministic(&obs.to_array());
                learned.smoother.apply(raw)
            }
        };
        cfg.clamp_lookahead(l)
    }

    /// Clears per-episode memory.
    pub fn reset(&mut self) {
        if let LookaheadSource::Learned(learned) = self {
            learned.smoother.reset();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheduled_lookahead_is_clipped() {
        let cfg = PurePursuitConfig::default();
        let line = Raceline::circle(10.0, 0.25, 5.0).unwrap();
        let mut src = LookaheadSource::Scheduled { a: 0.3, b: 0.25 };
        let mut at = |v: f64| {
            let s = VehicleState { x: 10.0, y: 0.0, theta: 1.57, v };
            src.lookahead(&s, &line, &cfg)
        };
        assert_eq!(at(0.0), 0.35);
        assert!((at(6.0) - 1.8).abs() < 1e-12);
        assert_eq!(at(20.0), 4.0);
        let mut fixed = LookaheadSource::Fixed(9.0);
        let s = VehicleState::default();
        assert_eq!(fixed.lookahead(&s, &line, &cfg), 4.0);
        assert_eq!(fixed.kind(), StrategyKind::Fixed);
    }
}
