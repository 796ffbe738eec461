use serde::{Deserialize, Serialize};

/// Weights and thresholds of the shaped reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub w_speed: f64,
    pub w_lookahead_error: f64,
    pub w_jerk: f64,
    pub w_curvature: f64,
    pub w_collision: f64,
    pub w_progress: f64,
    pub w_stall: f64,
    /// `(c0, c1, c2)` in `L* = c0 + c1 v - c2 max(kappa)`.
    pub ideal_coeffs: [f64; 3],
    pub clip: [f64; 2],
    pub collision_range: f64,
    pub stall_speed: f64,
    pub stall_duration: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            w_speed: 0.35,
            w_lookahead_error: 1.0,
            w_jerk: 0.8,
            w_curvature: 0.5,
            w_collision: 30.0,
            w_progress: 0.9,
            w_stall: 5.0,
            ideal_coeffs: [0.50, 0.28, 3.5],
            clip: [-20.0, 50.0],
            collision_range: 0.2,
            stall_speed: 0.05,
            stall_duration: 2.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let weights = [
            self.w_speed,
            self.w_lookahead_error,
            self.w_jerk,
            self.w_curvature,
            self.w_collision,
            self.w_progress,
            self.w_stall,
        ];
        if weights.iter().any(|w| !(*w >= 0.0))
            || !(self.clip[0] < self.clip[1])
            || !(self.collision_range > 0.0 && self.stall_speed > 0.0 && self.stall_duration > 0.0)
        {
            return Err(crate::Error::Config(format!("invalid reward config {self:?}")));
        }
        Ok(())
    }

    /// Heuristic ideal lookahead `c0 + c1 v - c2 max_kappa`.
    pub fn ideal_lookahead(&self, v: f64, max_kappa: f64) -> f64 {
        let [c0, c1, c2] = self.ideal_coeffs;
        c0 + c1 * v - c2 * max_kappa
    }
}

/// Inputs of one reward evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Transition {
    pub v: f64,
    pub lookahead: f64,
    pub prev_lookahead: f64,
    pub kappa: [f64; 3],
    pub min_range: f64,
    pub progress: f64,
    pub stalled: bool,
}

pub fn reward(t: &Transition, cfg: &RewardConfig) -> f64 {
    let max_kappa = t.kappa.iter().fold(0.0f64, |m, k| m.max(k.abs()));
    let ideal = cfg.ideal_lookahead(t.v, max_kappa);
    let collided = t.min_range < cfg.collision_range;
    let r = cfg.w_speed * t.v
        - cfg.w_lookahead_error * (t.lookahead - ideal).abs()
        - cfg.w_jerk * (t.lookahead - t.prev_lookahead).abs()
        - cfg.w_curvature * max_kappa
        - cfg.w_collision * f64::from(u8::from(collided))
        + cfg.w_progress * t.progress
        - cfg.w_stall * f64::from(u8::from(t.stalled));
    r.clamp(cfg.clip[0], cfg.clip[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ideal_lookahead_hand_value() {
        let cfg = RewardConfig::default();
        assert!((cfg.ideal_lookahead(4.0, 0.2) - 0.92).abs() < 1e-12);
    }

    #[test]
    fn collision_only_is_clipped() {
        let cfg = RewardConfig {
            w_speed: 0.0,
            w_lookahead_error: 0.0,
            w_jerk: 0.0,
            w_curvature: 0.0,
            w_collision: 30.0,
            w_progress: 0.0,
            w_stall: 0.0,
            ..Default::default()
        };
        let t = Transition { min_range: 0.1, ..Default::default() };
        assert_eq!(reward(&t, &cfg), -20.0);
        let unclipped = RewardConfig { w_collision: 12.0, ..cfg };
        assert_eq!(reward(&t, &unclipped), -12.0);
    }

    #[test]
    fn quiescent_transition_scores_zero() {
        let cfg = RewardConfig::default();
        let t = Transition {
            v: 0.0,
            lookahead: 0.5,
            prev_lookahead: 0.5,
            kappa: [0.0; 3],
            min_range: 5.0,
            progress: 0.0,
            stalled: false,
        };
        assert_eq!(reward(&t, &cfg), 0.0);
    }

    proptest! {
        #[test]
        fn reward_stays_in_clip_range(
            v in 0.0f64..30.0, l in 0.35f64..4.0, lp in 0.35f64..4.0,
            k in prop::array::uniform3(0.0f64..3.0), range in 0.0f64..30.0,
            progress in -5.0f64..100.0, stalled: bool,
        ) {
            let t = Transition { v, lookahead: l, prev_lookahead: lp, kappa: k, min_range: range, progress, stalled };
            let r = reward(&t, &RewardConfig::default());
            prop_assert!((-20.0..=50.0).contains(&r));
        }
    }
}
