use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::{Mlp, MlpCache};
use super::policy::{gaussian_entropy, squashed_log_prob, ActorCritic};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub n_steps: usize,
    pub batch: usize,
    pub epochs: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub target_kl: Option<f64>,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub learning_rate: f64,
    pub total_steps: u64,
    pub max_grad_norm: f64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub hidden: Vec<usize>,
    pub log_std_init: f64,
    pub adam: AdamConfig,
    pub normalize_obs: bool,
    pub normalize_reward: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            n_steps: 10_000,
            batch: 256,
            epochs: 5,
            gamma: 0.99,
            lambda: 0.98,
            clip: 0.2,
            target_kl: Some(0.015),
            ent_coef: 0.02,
            vf_coef: 0.6,
            learning_rate: 2.3927e-4,
            total_steps: 800_000,
            max_grad_norm: 0.5,
            eval_every: 10_000,
            eval_episodes: 1,
            hidden: vec![64, 64],
            log_std_init: 0.0,
            adam: AdamConfig::default(),
            normalize_obs: true,
            normalize_reward: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_steps > 0
            && self.batch > 0
            && self.epochs > 0
            && self.gamma > 0.0
            && self.gamma <= 1.0
            && self.lambda > 0.0
            && self.lambda <= 1.0
            && self.clip > 0.0
            && self.target_kl.is_none_or(|k| k > 0.0)
            && self.ent_coef >= 0.0
            && self.vf_coef > 0.0
            && self.learning_rate > 0.0
            && self.total_steps > 0
            && self.max_grad_norm > 0.0
            && self.eval_every > 0
            && !self.hidden.is_empty();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid PPO config {self:?}")))
        }
    }

    /// `lr(f) = l0 f` with `f` the remaining-progress fraction.
    pub fn learning_rate_at(&self, remaining: f64) -> f64 {
        self.learning_rate * remaining
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, config: AdamConfig) -> Self {
        Self { config, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        let AdamConfig { beta1, beta2, eps } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

/// Generalized advantage estimates and return targets. `dones[t]` marks that
/// step `t` ended its episode; `last_value` bootstraps the step after the end.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "GAE inputs must have equal length");
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { last_value };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Per-sample clipped surrogate `min(r A, clip(r, 1 - eps, 1 + eps) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

/// Collected transitions for one update. Observations are already normalized;
/// `actions` holds the pre-squash sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn push(&mut self, obs: Vec<f64>, action: f64, log_prob: f64, value: f64, reward: f64, done: bool) {
        self.obs.push(obs);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.values.push(value);
        self.rewards.push(reward);
        self.dones.push(done);
    }

    pub fn finish(&mut self, last_value: f64, gamma: f64, lambda: f64) {
        let (adv, ret) = compute_gae(&self.rewards, &self.values, &self.dones, last_value, gamma, lambda);
        self.advantages = adv;
        self.returns = ret;
    }
}

/// Samples entering one loss evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Minibatch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<f64>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Minibatch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

/// Coefficients of the combined loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub clip: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
}

impl From<&PpoConfig> for LossWeights {
    fn from(c: &PpoConfig) -> Self {
        Self { clip: c.clip, vf_coef: c.vf_coef, ent_coef: c.ent_coef }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Loss `-surrogate + c_v (R - V)^2 - c_s H`, averaged over the batch. When
/// `grad` is given, its gradient with respect to [`ActorCritic::params`] is
/// written into it.
pub fn ppo_loss(model: &ActorCritic, batch: &Minibatch, w: LossWeights, mut grad: Option<&mut [f64]>) -> LossParts {
    let n = batch.len() as f64;
    let na = model.actor.num_params();
    let log_std = model.log_std;
    let var = (2.0 * log_std).exp();
    let mut parts = LossParts::default();
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut actor_cache = MlpCache::default();
    let mut critic_cache = MlpCache::default();
    let mut d_log_std = 0.0;
    for i in 0..batch.len() {
        let mean = model.actor.forward_cached(&batch.obs[i], &mut actor_cache)[0];
        let value = model.critic.forward_cached(&batch.obs[i], &mut critic_cache)[0];
        let u = batch.actions[i];
        let adv = batch.advantages[i];
        let log_prob = squashed_log_prob(u, mean, log_std);
        let log_ratio = log_prob - batch.old_log_probs[i];
        let ratio = log_ratio.exp();
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - w.clip, 1.0 + w.clip) * adv;
        parts.policy -= unclipped.min(clipped) / n;
        let err = value - batch.returns[i];
        parts.value += err * err / n;
        parts.approx_kl += ((ratio - 1.0) - log_ratio) / n;
        if (ratio - 1.0).abs() > w.clip {
            parts.clip_fraction += 1.0 / n;
        }
        if let Some(g) = grad.as_deref_mut() {
            // d(-min)/d(log_prob) is -A r on the unclipped branch, 0 where the clip binds
            let d_logp = if unclipped <= clipped { -adv * ratio / n } else { 0.0 };
            if d_logp != 0.0 {
                let d_mean = d_logp * (u - mean) / var;
                d_log_std += d_logp * ((u - mean) * (u - mean) / var - 1.0);
                model.actor.backward(&actor_cache, &[d_mean], &mut g[..na]);
            }
            let d_value = w.vf_coef * 2.0 * err / n;
            model.critic.backward(&critic_cache, &[d_value], &mut g[na + 1..]);
        }
    }
    parts.entropy = gaussian_entropy(log_std);
    parts.total = parts.policy + w.vf_coef * parts.value - w.ent_coef * parts.entropy;
    if let Some(g) = grad {
        g[na] = d_log_std - w.ent_coef;
    }
    parts
}

/// `tanh(a + d) - tanh(a)` given `h = tanh(a)`, without cancellation.
fn tanh_step(h: f64, d: f64) -> f64 {
    let t = d.tanh();
    t * (1.0 - h) * (1.0 + h) / (1.0 + h * t)
}

/// Change of the network output when parameter `param` of layer `layer` moves
/// by `delta`, propagated from the cached base activations.
fn output_change(net: &Mlp, cache: &MlpCache, layer: usize, param: usize, delta: f64) -> f64 {
    let l = &net.layers[layer];
    let mut da = vec![0.0; l.out];
    if param < l.weights.len() {
        da[param / l.inp] = delta * cache.activation(layer)[param % l.inp];
    } else {
        da[param - l.weights.len()] = delta;
    }
    for j in layer..net.layers.len() - 1 {
        let h = cache.activation(j + 1);
        let dh: Vec<f64> = h.iter().zip(&da).map(|(&h, &d)| if d == 0.0 { 0.0 } else { tanh_step(h, d) }).collect();
        let next = &net.layers[j + 1];
        da = (0..next.out)
            .map(|o| {
                let row = &next.weights[o * next.inp..(o + 1) * next.inp];
                row.iter().zip(&dh).map(|(w, d)| w * d).sum()
            })
            .collect();
    }
    da[0]
}

enum Perturbed {
    Mean(Vec<f64>),
    LogStd(f64),
    Value(Vec<f64>),
}

/// Loss change for a perturbation, accumulated per sample from small differences.
fn loss_change(model: &ActorCritic, batch: &Minibatch, w: LossWeights, base: &[(f64, f64)], p: &Perturbed) -> f64 {
    let n = batch.len() as f64;
    let s0 = model.log_std;
    let var = (2.0 * s0).exp();
    let mut total = 0.0;
    for i in 0..batch.len() {
        let (mean, value) = base[i];
        match p {
            Perturbed::Value(dv) => {
                let dv = dv[i];
                total += w.vf_coef * dv * (2.0 * (value - batch.returns[i]) + dv) / n;
            }
            Perturbed::Mean(_) | Perturbed::LogStd(_) => {
                let u = batch.actions[i];
                let z = u - mean;
                let dlp = match p {
                    Perturbed::Mean(dm) => dm[i] * (2.0 * z - dm[i]) / (2.0 * var),
                    Perturbed::LogStd(ds) => -ds - 0.5 * z * z / var * (-2.0 * ds).exp_m1(),
                    Perturbed::Value(_) => unreachable!(),
                };
                let adv = batch.advantages[i];
                let r0 = (squashed_log_prob(u, mean, s0) - batch.old_log_probs[i]).exp();
                let dr = r0 * dlp.exp_m1();
                let r1 = r0 + dr;
                // min(r A, clip(r) A) = A g(r), g piecewise linear with one kink
                let (bound, linear): (f64, fn(f64, f64) -> bool) =
                    if adv >= 0.0 { (1.0 + w.clip, |r, b| r <= b) } else { (1.0 - w.clip, |r, b| r >= b) };
                let dg = match (linear(r0, bound), linear(r1, bound)) {
                    (true, true) => dr,
                    (false, false) => 0.0,
                    (true, false) => bound - r0,
                    (false, true) => (r0 - bound) + dr,
                };
                total -= adv * dg / n;
            }
        }
    }
    if let Perturbed::LogStd(ds) = p {
        total -= w.ent_coef * ds;
    }
    total
}

/// Largest relative discrepancy between the analytic gradient of [`ppo_loss`]
/// and central finite differences over every parameter. Each difference
/// `L(p + eps) - L(p - eps)` is evaluated by propagating the perturbation from
/// the base activations, so tiny gradients are not swamped by rounding.
pub fn gradient_check(model: &ActorCritic, batch: &Minibatch, w: LossWeights, eps: f64) -> f64 {
    let mut analytic = vec![0.0; model.num_params()];
    ppo_loss(model, batch, w, Some(&mut analytic));
    let mut actor_caches = Vec::with_capacity(batch.len());
    let mut critic_caches = Vec::with_capacity(batch.len());
    let mut base = Vec::with_capacity(batch.len());
    for obs in &batch.obs {
        let mut a = MlpCache::default();
        let mut c = MlpCache::default();
        let mean = model.actor.forward_cached(obs, &mut a)[0];
        let value = model.critic.forward_cached(obs, &mut c)[0];
        actor_caches.push(a);
        critic_caches.push(c);
        base.push((mean, value));
    }
    let mut numeric = Vec::with_capacity(model.num_params());
    for (net, caches, is_actor) in [(&model.actor, &actor_caches, true), (&model.critic, &critic_caches, false)] {
        if !is_actor {
            let up = loss_change(model, batch, w, &base, &Perturbed::LogStd(eps));
            let down = loss_change(model, batch, w, &base, &Perturbed::LogStd(-eps));
            numeric.push((up - down) / (2.0 * eps));
        }
        for (k, layer) in net.layers.iter().enumerate() {
            for q in 0..layer.num_params() {
                let mut diff = [0.0; 2];
                for (slot, sign) in [1.0, -1.0].into_iter().enumerate() {
                    let d: Vec<f64> = caches.iter().map(|c| output_change(net, c, k, q, sign * eps)).collect();
                    let p = if is_actor { Perturbed::Mean(d) } else { Perturbed::Value(d) };
                    diff[slot] = loss_change(model, batch, w, &base, &p);
                }
                numeric.push((diff[0] - diff[1]) / (2.0 * eps));
            }
        }
    }
    analytic.iter().zip(&numeric).map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8)).fold(0.0, f64::max)
}

/// Plain central differences of the total loss, for cross-checking the
/// propagated version on well-scaled parameters.
pub fn naive_finite_difference(model: &ActorCritic, batch: &Minibatch, w: LossWeights, eps: f64) -> Vec<f64> {
    let base = model.params();
    let mut probe = model.clone();
    let mut params = base.clone();
    (0..base.len())
        .map(|k| {
            params[k] = base[k] + eps;
            probe.set_params(&params);
            let up = ppo_loss(&probe, batch, w, None).total;
            params[k] = base[k] - eps;
            probe.set_params(&params);
            let down = ppo_loss(&probe, batch, w, None).total;
            params[k] = base[k];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Averages reported by one call to [`ppo_update`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub explained_variance: f64,
    pub learning_rate: f64,
    pub epochs_run: usize,
    pub minibatches: usize,
    pub early_stopped: bool,
    pub aborted: bool,
}

/// `1 - Var(y - y_pred) / Var(y)`; NaN when `y` is constant.
pub fn explained_variance(pred: &[f64], target: &[f64]) -> f64 {
    let n = target.len() as f64;
    let mean = |x: &mut dyn Iterator<Item = f64>| x.sum::<f64>() / n;
    let mt = mean(&mut target.iter().copied());
    let var_t = mean(&mut target.iter().map(|t| (t - mt).powi(2)));
    let diff: Vec<f64> = target.iter().zip(pred).map(|(t, p)| t - p).collect();
    let md = mean(&mut diff.iter().copied());
    let var_d = mean(&mut diff.iter().map(|d| (d - md).powi(2)));
    if var_t == 0.0 {
        f64::NAN
    } else {
        1.0 - var_d / var_t
    }
}

fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / (norm + 1e-6);
        grad.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

/// Runs the clipped-surrogate optimization over a finished buffer. `remaining`
/// is the fraction of training left, which scales the learning rate.
pub fn ppo_update<R: Rng>(
    model: &mut ActorCritic,
    optimizer: &mut Adam,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    remaining: f64,
    rng: &mut R,
) -> UpdateStats {
    let lr = cfg.learning_rate_at(remaining.clamp(0.0, 1.0));
    let n = buffer.len();
    let mut stats = UpdateStats {
        learning_rate: lr,
        explained_variance: explained_variance(&buffer.values, &buffer.returns),
        ..Default::default()
    };
    let mean = buffer.advantages.iter().sum::<f64>() / n as f64;
    let std = (buffer.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let advantages: Vec<f64> = buffer.advantages.iter().map(|a| (a - mean) / (std + 1e-8)).collect();

    let snapshot = model.params();
    let weights = LossWeights::from(cfg);
    let mut grad = vec![0.0; model.num_params()];
    let mut params = snapshot.clone();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut batch = Minibatch::default();
    let mut sums = LossParts::default();
    'epochs: for _ in 0..cfg.epochs {
        indices.shuffle(rng);
        stats.epochs_run += 1;
        for chunk in indices.chunks(cfg.batch) {
            batch.obs.clear();
            batch.obs.extend(chunk.iter().map(|&i| buffer.obs[i].clone()));
            batch.actions = chunk.iter().map(|&i| buffer.actions[i]).collect();
            batch.old_log_probs = chunk.iter().map(|&i| buffer.log_probs[i]).collect();
            batch.advantages = chunk.iter().map(|&i| advantages[i]).collect();
            batch.returns = chunk.iter().map(|&i| buffer.returns[i]).collect();
            let parts = ppo_loss(model, &batch, weights, Some(&mut grad));
            if !parts.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                model.set_params(&snapshot);
                stats.aborted = true;
                break 'epochs;
            }
            if let Some(target) = cfg.target_kl {
                if parts.approx_kl > 1.5 * target {
                    stats.early_stopped = true;
                    break 'epochs;
                }
            }
            clip_grad_norm(&mut grad, cfg.max_grad_norm);
            optimizer.step(&mut params, &grad, lr);
            model.set_params(&params);
            sums.policy += parts.policy;
            sums.value += parts.value;
            sums.entropy += parts.entropy;
            sums.approx_kl += parts.approx_kl;
            sums.clip_fraction += parts.clip_fraction;
            stats.minibatches += 1;
        }
    }
    if !model.is_finite() {
        model.set_params(&snapshot);
        stats.aborted = true;
    }
    let m = stats.minibatches.max(1) as f64;
    stats.policy_loss = sums.policy / m;
    stats.value_loss = sums.value / m;
    stats.entropy = if stats.minibatches > 0 { sums.entropy / m } else { gaussian_entropy(model.log_std) };
    stats.approx_kl = sums.approx_kl / m;
    stats.clip_fraction = sums.clip_fraction / m;
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute_force_gae(r: &[f64], v: &[f64], d: &[bool], last: f64, g: f64, l: f64) -> Vec<f64> {
        let n = r.len();
        let next = |t: usize| if t + 1 < n { v[t + 1] } else { last };
        let delta: Vec<f64> = (0..n).map(|t| r[t] + g * next(t) * if d[t] { 0.0 } else { 1.0 } - v[t]).collect();
        (0..n)
            .map(|t| {
                let mut sum = 0.0;
                let mut w = 1.0;
                for k in t..n {
                    sum += w * delta[k];
                    if d[k] {
                        break;
                    }
                    w *= g * l;
                }
                sum
            })
            .collect()
    }

    #[test]
    fn gae_special_cases() {
        let (a, r) = compute_gae(&[1.0], &[0.5], &[false], 2.0, 0.9, 0.0);
        assert!((a[0] - (1.0 + 0.9 * 2.0 - 0.5)).abs() < 1e-15);
        assert!((r[0] - (a[0] + 0.5)).abs() < 1e-15);
        let rewards = [1.0, 2.0, 3.0, 4.0];
        let (a, _) = compute_gae(&rewards, &[0.0; 4], &[false; 4], 0.0, 1.0, 1.0);
        assert_eq!(a, vec![10.0, 9.0, 7.0, 4.0]);
    }

    #[test]
    fn gae_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(1..=30);
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let d: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.15).collect();
            let last = rng.random_range(-5.0..5.0);
            let (a, ret) = compute_gae(&r, &v, &d, last, 0.99, 0.98);
            let oracle = brute_force_gae(&r, &v, &d, last, 0.99, 0.98);
            for t in 0..n {
                assert!((a[t] - oracle[t]).abs() < 1e-10);
                assert!((ret[t] - a[t] - v[t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn surrogate_hand_values() {
        assert!((clipped_surrogate(1.5, 1.0, 0.2) - 1.2).abs() < 1e-12);
        assert!((clipped_surrogate(0.5, -1.0, 0.2) + 0.8).abs() < 1e-12);
    }

    #[test]
    fn surrogate_is_pessimistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10_000 {
            let r = rng.random_range(0.0..3.0);
            let a = rng.random_range(-3.0..3.0);
            let s = clipped_surrogate(r, a, 0.2);
            assert!(s <= r * a + 1e-15);
        }
    }

    #[test]
    fn learning_rate_is_linear() {
        let c = PpoConfig::default();
        assert_eq!(c.learning_rate_at(1.0), 2.3927e-4);
        assert_eq!(c.learning_rate_at(0.5), 2.3927e-4 * 0.5);
        assert_eq!(c.learning_rate_at(0.0), 0.0);
    }

    fn random_batch(model: &ActorCritic, n: usize, rng: &mut ChaCha8Rng) -> Minibatch {
        let mut b = Minibatch::default();
        for _ in 0..n {
            let obs: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (u, _, _) = model.sample(&obs, rng);
            let mean = model.mean(&obs);
            // old policy slightly different so ratios straddle 1
            b.old_log_probs.push(squashed_log_prob(u, mean + rng.random_range(-0.1..0.1), model.log_std));
            b.obs.push(obs);
            b.actions.push(u);
            b.advantages.push(rng.random_range(-2.0..2.0));
            b.returns.push(rng.random_range(-2.0..2.0));
        }
        b
    }

    #[test]
    fn gradient_check_fresh_nets() {
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = ActorCritic::new(5, &[64, 64], 0.0, &mut rng);
            let batch = random_batch(&model, 16, &mut rng);
            let err = gradient_check(&model, &batch, LossWeights::from(&PpoConfig::default()), 1e-5);
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn propagated_differences_agree_with_naive_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = ActorCritic::new(5, &[8, 8], 0.2, &mut rng);
        let batch = random_batch(&model, 6, &mut rng);
        let w = LossWeights::from(&PpoConfig::default());
        let mut analytic = vec![0.0; model.num_params()];
        ppo_loss(&model, &batch, w, Some(&mut analytic));
        let naive = naive_finite_difference(&model, &batch, w, 1e-6);
        for (a, n) in analytic.iter().zip(&naive) {
            assert!((a - n).abs() < 1e-7, "{a} vs {n}");
        }
        assert!(gradient_check(&model, &batch, w, 1e-5) < 1e-6);
    }

    #[test]
    fn zero_advantage_and_perfect_critic_give_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = ActorCritic::new(5, &[64, 64], 0.0, &mut rng);
        let mut batch = random_batch(&model, 8, &mut rng);
        batch.advantages.iter_mut().for_each(|a| *a = 0.0);
        for i in 0..batch.len() {
            batch.returns[i] = model.value(&batch.obs[i]);
        }
        let w = LossWeights { clip: 0.2, vf_coef: 0.6, ent_coef: 0.0 };
        let mut g = vec![0.0; model.num_params()];
        ppo_loss(&model, &batch, w, Some(&mut g));
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identical_policies_have_zero_kl_and_vanilla_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = ActorCritic::new(5, &[64, 64], -0.3, &mut rng);
        let mut batch = random_batch(&model, 32, &mut rng);
        for i in 0..batch.len() {
            batch.old_log_probs[i] = squashed_log_prob(batch.actions[i], model.mean(&batch.obs[i]), model.log_std);
            batch.returns[i] = model.value(&batch.obs[i]);
        }
        let w = LossWeights { clip: 0.2, vf_coef: 0.6, ent_coef: 0.0 };
        let mut g = vec![0.0; model.num_params()];
        let parts = ppo_loss(&model, &batch, w, Some(&mut g));
        assert_eq!(parts.approx_kl, 0.0);
        assert_eq!(parts.clip_fraction, 0.0);
        // vanilla policy gradient: -mean(A grad log pi)
        let na = model.actor.num_params();
        let mut vanilla = vec![0.0; na];
        let mut cache = MlpCache::default();
        let n = batch.len() as f64;
        let mut d_log_std = 0.0;
        for i in 0..batch.len() {
            let mean = model.actor.forward_cached(&batch.obs[i], &mut cache)[0];
            let var = (2.0 * model.log_std).exp();
            let z = batch.actions[i] - mean;
            model.actor.backward(&cache, &[-batch.advantages[i] * z / var / n], &mut vanilla);
            d_log_std += -batch.advantages[i] * (z * z / var - 1.0) / n;
        }
        for k in 0..na {
            assert!((g[k] - vanilla[k]).abs() < 1e-12);
        }
        assert!((g[na] - d_log_std).abs() < 1e-12);
    }

    #[test]
    fn update_moves_policy_toward_advantage() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut model = ActorCritic::new(5, &[64, 64], 0.0, &mut rng);
        let mut buffer = RolloutBuffer::default();
        let obs = vec![0.1, 0.2, -0.3, 0.0, 0.5];
        for _ in 0..512 {
            let (u, _, _) = model.sample(&obs, &mut rng);
            let lp = squashed_log_prob(u, model.mean(&obs), model.log_std);
            buffer.push(obs.clone(), u, lp, 0.0, u, true);
        }
        buffer.finish(0.0, 0.99, 0.98);
        let before = model.mean(&obs);
        let cfg = PpoConfig { learning_rate: 3e-3, target_kl: None, ..Default::default() };
        let mut adam = Adam::new(model.num_params(), cfg.adam);
        let stats = ppo_update(&mut model, &mut adam, &buffer, &cfg, 1.0, &mut rng);
        assert!(!stats.aborted && stats.minibatches > 0);
        assert!(model.mean(&obs) > before + 0.05);
    }

    #[test]
    fn kl_early_stop_triggers() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut model = ActorCritic::new(5, &[64, 64], 0.0, &mut rng);
        let mut buffer = RolloutBuffer::default();
        for _ in 0..1024 {
            let obs: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (u, _, _) = model.sample(&obs, &mut rng);
            let lp = squashed_log_prob(u, model.mean(&obs), model.log_std);
            buffer.push(obs, u, lp, 0.0, 3.0 * u, true);
        }
        buffer.finish(0.0, 0.99, 0.98);
        let cfg = PpoConfig { learning_rate: 0.05, epochs: 20, ..Default::default() };
        let mut adam = Adam::new(model.num_params(), cfg.adam);
        let stats = ppo_update(&mut model, &mut adam, &buffer, &cfg, 1.0, &mut rng);
        assert!(stats.early_stopped);
        assert!(stats.epochs_run < 20);
    }

    #[test]
    fn explained_variance_cases() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(explained_variance(&y, &y), 1.0);
        assert!((explained_variance(&[2.0, 2.0, 2.0], &y)).abs() < 1e-12);
    }
}
