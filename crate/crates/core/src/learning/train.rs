use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::normalize::Normalizer;
use super::policy::{ActorCritic, PolicyBundle};
use super::ppo::{ppo_update, Adam, PpoConfig, RolloutBuffer, UpdateStats};
use crate::environment::{RacingEnv, OBS_DIM};
use crate::{Error, Result};

/// Result of one environment transition as seen by the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

/// A single-action episodic task with observations of length [`OBS_DIM`].
pub trait Environment {
    fn reset(&mut self) -> Result<Vec<f64>>;
    /// `action` lies in `[-1, 1]`.
    fn step(&mut self, action: f64) -> Result<EnvStep>;
}

impl Environment for RacingEnv {
    fn reset(&mut self) -> Result<Vec<f64>> {
        Ok(RacingEnv::reset(self)?.to_array().to_vec())
    }

    fn step(&mut self, action: f64) -> Result<EnvStep> {
        let out = RacingEnv::step(self, action)?;
        Ok(EnvStep {
            obs: out.observation.to_array().to_vec(),
            reward: out.reward,
            terminated: out.terminated,
            truncated: out.truncated,
        })
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub eval_mean_reward: f64,
    pub eval_ep_len: f64,
    pub explained_variance: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
    pub lr: f64,
}

pub fn write_training_log(path: impl AsRef<Path>, rows: &[LogRow]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Receives `last.json` after every update, `best.json` on each new best
    /// evaluation, and `checkpoint.json` if training aborts.
    pub checkpoint_dir: Option<PathBuf>,
    /// Continue from an earlier bundle instead of fresh weights.
    pub init: Option<PolicyBundle>,
    /// Called after each evaluation.
    pub on_eval: Option<&'a mut dyn FnMut(&LogRow)>,
    /// Resolved configuration embedded into saved bundles.
    pub run_config: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub best: PolicyBundle,
    pub last: PolicyBundle,
    pub best_eval_reward: f64,
    pub log: Vec<LogRow>,
    pub updates: Vec<UpdateStats>,
}

/// Mean undiscounted return and episode length of the deterministic policy.
pub fn evaluate<E: Environment>(env: &mut E, bundle: &PolicyBundle, episodes: usize) -> Result<(f64, f64)> {
    let mut total_reward = 0.0;
    let mut total_len = 0.0;
    for _ in 0..episodes.max(1) {
        let mut obs = env.reset()?;
        loop {
            let out = env.step(bundle.act_deterministic(&obs))?;
            total_reward += out.reward;
            total_len += 1.0;
            if out.terminated || out.truncated {
                break;
            }
            obs = out.obs;
        }
    }
    let k = episodes.max(1) as f64;
    Ok((total_reward / k, total_len / k))
}

struct Learner {
    model: ActorCritic,
    norm: Normalizer,
    adam: Adam,
    steps: u64,
}

impl Learner {
    fn bundle(&self, config: &serde_json::Value) -> PolicyBundle {
        PolicyBundle::new(self.model.clone(), self.norm.clone(), self.steps, config.clone())
    }
}

fn save(dir: &Option<PathBuf>, name: &str, bundle: &PolicyBundle) -> Result<()> {
    match dir {
        Some(d) => bundle.save(d.join(name)),
        None => Ok(()),
    }
}

/// Alternates rollouts on `env` with PPO updates until `cfg.total_steps`,
/// evaluating on `eval_env` every `cfg.eval_every` steps.
pub fn train<E: Environment, V: Environment>(
    env: &mut E,
    eval_env: &mut V,
    cfg: &PpoConfig,
    seed: u64,
    mut options: TrainOptions<'_>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if let Some(dir) = &options.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut learner = match options.init.take() {
        Some(b) => Learner {
            adam: Adam::new(b.model.num_params(), cfg.adam),
            steps: b.trained_steps,
            model: b.model,
            norm: b.normalizer,
        },
        None => {
            let model = ActorCritic::new(OBS_DIM, &cfg.hidden, cfg.log_std_init, &mut rng);
            let mut norm = Normalizer::new(OBS_DIM, cfg.gamma);
            norm.normalize_obs = cfg.normalize_obs;
            norm.normalize_reward = cfg.normalize_reward;
            Learner { adam: Adam::new(model.num_params(), cfg.adam), model, norm, steps: 0 }
        }
    };

    let run_config = options.run_config.clone();
    let result = train_loop(env, eval_env, cfg, &mut rng, &mut learner, &mut options, &run_config);
    if result.is_err() {
        // best effort; the original error is what matters
        let _ = save(&options.checkpoint_dir, "checkpoint.json", &learner.bundle(&run_config));
    }
    result
}

fn train_loop<E: Environment, V: Environment>(
    env: &mut E,
    eval_env: &mut V,
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
    learner: &mut Learner,
    options: &mut TrainOptions<'_>,
    run_config: &serde_json::Value,
) -> Result<TrainOutput> {
    let mut log = Vec::new();
    let mut updates = Vec::new();
    let mut best: Option<(f64, PolicyBundle)> = None;
    let mut next_eval = (learner.steps / cfg.eval_every + 1) * cfg.eval_every;
    learner.norm.reset_return();
    let mut obs = env.reset()?;
    if learner.norm.normalize_obs {
        learner.norm.obs.update(&obs);
    }

    while learner.steps < cfg.total_steps {
        let mut buffer = RolloutBuffer::default();
        for _ in 0..cfg.n_steps {
            let nobs = learner.norm.normalize_obs(&obs);
            let (u, action, log_prob) = learner.model.sample(&nobs, rng);
            let value = learner.model.value(&nobs);
            let out = env.step(action)?;
            if !out.reward.is_finite() || out.obs.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training(format!(
                    "environment produced non-finite values at step {}",
                    learner.steps
                )));
            }
            let done = out.terminated || out.truncated;
            if learner.norm.normalize_obs {
                learner.norm.obs.update(&out.obs);
            }
            let mut reward = learner.norm.observe_reward(out.reward, done);
            if out.truncated && !out.terminated {
                let terminal = learner.norm.normalize_obs(&out.obs);
                reward += cfg.gamma * learner.model.value(&terminal);
            }
            buffer.push(nobs, u, log_prob, value, reward, done);
            learner.steps += 1;
            obs = if done {
                let o = env.reset()?;
                if learner.norm.normalize_obs {
                    learner.norm.obs.update(&o);
                }
                o
            } else {
                out.obs
            };
        }
        let last_value = learner.model.value(&learner.norm.normalize_obs(&obs));
        buffer.finish(last_value, cfg.gamma, cfg.lambda);

        let remaining = 1.0 - (learner.steps as f64 / cfg.total_steps as f64).min(1.0);
        let stats = ppo_update(&mut learner.model, &mut learner.adam, &buffer, cfg, remaining, rng);
        if !learner.model.is_finite() {
            return Err(Error::Training(format!(
                "non-finite parameters after update at step {}: log_std {}",
                learner.steps, learner.model.log_std
            )));
        }
        updates.push(stats);
        save(&options.checkpoint_dir, "last.json", &learner.bundle(run_config))?;

        if learner.steps >= next_eval || learner.steps >= cfg.total_steps {
            while next_eval <= learner.steps {
                next_eval += cfg.eval_every;
            }
            let snapshot = learner.bundle(run_config);
            let (mean_reward, ep_len) = evaluate(eval_env, &snapshot, cfg.eval_episodes)?;
            let row = LogRow {
                step: learner.steps,
                eval_mean_reward: mean_reward,
                eval_ep_len: ep_len,
                explained_variance: stats.explained_variance,
                entropy: stats.entropy,
                approx_kl: stats.approx_kl,
                clip_frac: stats.clip_fraction,
                lr: stats.learning_rate,
            };
            if let Some(cb) = options.on_eval.as_mut() {
                cb(&row);
            }
            log.push(row);
            if best.as_ref().is_none_or(|(b, _)| mean_reward > *b) {
                save(&options.checkpoint_dir, "best.json", &snapshot)?;
                best = Some((mean_reward, snapshot));
            }
        }
    }

    let last = learner.bundle(run_config);
    let (best_eval_reward, best) = match best {
        Some(b) => b,
        None => (f64::NAN, last.clone()),
    };
    Ok(TrainOutput { best, last, best_eval_reward, log, updates })
}
