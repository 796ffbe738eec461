//! Proximal policy optimization for the lookahead policy, written from scratch:
//! tanh MLPs with manual backpropagation, a tanh-squashed Gaussian actor, GAE,
//! the clipped surrogate with value and entropy terms, and online normalization.

mod bandit;
mod network;
mod normalize;
mod policy;
mod ppo;
mod train;

pub use bandit::LookaheadBandit;
pub use network::{Dense, Mlp, MlpCache};
pub use normalize::{Normalizer, RunningMeanStd};
pub use policy::{
    gaussian_entropy, gaussian_log_prob, squashed_log_prob, tanh_log_jacobian, ActorCritic, PolicyBundle, BUNDLE_FORMAT,
};
pub use ppo::{
    clipped_surrogate, compute_gae, explained_variance, gradient_check, naive_finite_difference, ppo_loss, ppo_update,
    Adam, AdamConfig, LossParts, LossWeights, Minibatch, PpoConfig, RolloutBuffer, UpdateStats,
};
pub use train::{evaluate, train, write_training_log, EnvStep, Environment, LogRow, TrainOptions, TrainOutput};
