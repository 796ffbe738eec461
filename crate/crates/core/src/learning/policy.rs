use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::network::Mlp;
use super::normalize::Normalizer;
use crate::environment::OBS_DIM;
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// `log N(u; mean, exp(log_std))`.
pub fn gaussian_log_prob(u: f64, mean: f64, log_std: f64) -> f64 {
    let z = (u - mean) / log_std.exp();
    -0.5 * z * z - log_std - 0.5 * LN_2PI
}

/// Entropy of the pre-squash Gaussian.
pub fn gaussian_entropy(log_std: f64) -> f64 {
    0.5 + 0.5 * LN_2PI + log_std
}

/// `log(1 - tanh(u)^2)`, evaluated stably.
pub fn tanh_log_jacobian(u: f64) -> f64 {
    let x = -2.0 * u;
    let softplus = if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
    2.0 * (std::f64::consts::LN_2 - u - softplus)
}

/// Log density of the squashed action `tanh(u)`.
pub fn squashed_log_prob(u: f64, mean: f64, log_std: f64) -> f64 {
    gaussian_log_prob(u, mean, log_std) - tanh_log_jacobian(u)
}

/// Separate actor and critic MLPs plus a state-independent log standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub actor: Mlp,
    pub critic: Mlp,
    pub log_std: f64,
}

impl ActorCritic {
    pub fn new<R: Rng>(obs_dim: usize, hidden: &[usize], log_std: f64, rng: &mut R) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self { actor: Mlp::orthogonal(&sizes, 0.01, rng), critic: Mlp::orthogonal(&sizes, 1.0, rng), log_std }
    }

    pub fn zeros(obs_dim: usize, hidden: &[usize]) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self { actor: Mlp::zeros(&sizes), critic: Mlp::zeros(&sizes), log_std: 0.0 }
    }

    /// Actor parameters, then `log_std`, then critic parameters.
    pub fn num_params(&self) -> usize {
        self.actor.num_params() + 1 + self.critic.num_params()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        self.actor.write_params(&mut p);
        p.push(self.log_std);
        self.critic.write_params(&mut p);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let rest = self.actor.read_params(p);
        self.log_std = rest[0];
        let rest = self.critic.read_params(&rest[1..]);
        debug_assert!(rest.is_empty());
    }

    pub fn mean(&self, obs: &[f64]) -> f64 {
        self.actor.forward(obs)[0]
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.critic.forward(obs)[0]
    }

    /// Samples a pre-squash action; returns `(u, tanh(u), log_prob)`.
    pub fn sample<R: Rng>(&self, obs: &[f64], rng: &mut R) -> (f64, f64, f64) {
        let mean = self.mean(obs);
        let eps: f64 = StandardNormal.sample(rng);
        let u = mean + self.log_std.exp() * eps;
        (u, u.tanh(), squashed_log_prob(u, mean, self.log_std))
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite() && self.critic.is_finite() && self.log_std.is_finite()
    }
}

pub const BUNDLE_FORMAT: u32 = 1;

/// Everything needed to run a trained policy: networks, frozen normalizer
/// statistics and the configuration it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyBundle {
    pub format: u32,
    pub obs_dim: usize,
    pub hidden: Vec<usize>,
    pub model: ActorCritic,
    pub normalizer: Normalizer,
    pub trained_steps: u64,
    /// Resolved training configuration, stored verbatim.
    pub config: serde_json::Value,
}

impl PolicyBundle {
    pub fn new(model: ActorCritic, normalizer: Normalizer, trained_steps: u64, config: serde_json::Value) -> Self {
        let sizes = model.actor.sizes();
        Self {
            format: BUNDLE_FORMAT,
            obs_dim: sizes[0],
            hidden: sizes[1..sizes.len() - 1].to_vec(),
            model,
            normalizer,
            trained_steps,
            config,
        }
    }

    /// Untrained all-zero policy; its deterministic action is 0.
    pub fn zeros() -> Self {
        Self::new(ActorCritic::zeros(OBS_DIM, &[64, 64]), Normalizer::new(OBS_DIM, 0.99), 0, serde_json::Value::Null)
    }

    /// Squashed mean action in `[-1, 1]` for a raw observation.
    pub fn act_deterministic(&self, obs: &[f64]) -> f64 {
        self.model.mean(&self.normalizer.normalize_obs(obs)).tanh()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bundle: Self = serde_json::from_str(&text)?;
        if bundle.format != BUNDLE_FORMAT {
            return Err(Error::Config(format!("{}: unsupported policy format {}", path.display(), bundle.format)));
        }
        let sizes = bundle.model.actor.sizes();
        if sizes[0] != bundle.obs_dim || bundle.model.critic.sizes() != sizes || !bundle.model.is_finite() {
            return Err(Error::Config(format!("{}: inconsistent policy parameters", path.display())));
        }
        Ok(bundle)
    }
}
