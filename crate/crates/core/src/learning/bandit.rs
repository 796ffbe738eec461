use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::train::{EnvStep, Environment};
use crate::controller::{LOOKAHEAD_MAX, LOOKAHEAD_MIN};
use crate::environment::{action_to_lookahead, Observation, RewardConfig, OBS_DIM};
use crate::{Error, Result};

/// One-step task: each episode presents a logged observation and pays
/// `-|L - L*|`, with `L*` the heuristic ideal lookahead clipped to the
/// admissible range.
#[derive(Debug, Clone)]
pub struct LookaheadBandit {
    states: Vec<[f64; OBS_DIM]>,
    reward: RewardConfig,
    rng: ChaCha8Rng,
    /// Cycle through the states in order instead of sampling them.
    sequential: bool,
    cursor: usize,
    current: usize,
}

impl LookaheadBandit {
    pub fn new(states: Vec<[f64; OBS_DIM]>, reward: RewardConfig, seed: u64, sequential: bool) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Config("bandit needs at least one state".into()));
        }
        Ok(Self { states, reward, rng: ChaCha8Rng::seed_from_u64(seed), sequential, cursor: 0, current: 0 })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn target(&self, state: &[f64; OBS_DIM]) -> f64 {
        let o = Observation::from_array(state);
        self.reward.ideal_lookahead(o.v, o.max_kappa()).clamp(LOOKAHEAD_MIN, LOOKAHEAD_MAX)
    }

    /// Mean `|L - L*|` of `act` over every state.
    pub fn mean_error(&self, act: impl Fn(&[f64]) -> f64) -> f64 {
        let total: f64 = self.states.iter().map(|s| (action_to_lookahead(act(s)) - self.target(s)).abs()).sum();
        total / self.states.len() as f64
    }
}

impl Environment for LookaheadBandit {
    fn reset(&mut self) -> Result<Vec<f64>> {
        self.current = if self.sequential {
            let i = self.cursor;
            self.cursor = (self.cursor + 1) % self.states.len();
            i
        } else {
            self.rng.random_range(0..self.states.len())
        };
        Ok(self.states[self.current].to_vec())
    }

    fn step(&mut self, action: f64) -> Result<EnvStep> {
        let s = self.states[self.current];
        let l = action_to_lookahead(action);
        Ok(EnvStep { obs: s.to_vec(), reward: -(l - self.target(&s)).abs(), terminated: true, truncated: false })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_is_negative_error_and_target_clipped() {
        let states = vec![[4.0, 0.2, 0.0, 0.0, -0.2], [20.0, 0.0, 0.0, 0.0, 0.0], [0.0, 2.0, 0.0, 0.0, -2.0]];
        let mut b = LookaheadBandit::new(states, RewardConfig::default(), 0, true).unwrap();
        b.reset().unwrap();
        let out = b.step(-1.0).unwrap();
        assert!((out.reward + (0.92 - 0.35)).abs() < 1e-12);
        assert!(out.terminated);
        b.reset().unwrap();
        assert_eq!(b.step(1.0).unwrap().reward, 0.0);
        b.reset().unwrap();
        assert_eq!(b.step(-1.0).unwrap().reward, 0.0);
    }
}
