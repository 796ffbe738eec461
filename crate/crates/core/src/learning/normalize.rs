use serde::{Deserialize, Serialize};

/// Running mean and variance with parallel (Chan) merging of batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningMeanStd {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

impl RunningMeanStd {
    pub fn new(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], var: vec![1.0; dim], count: 1e-4 }
    }

    pub fn update(&mut self, x: &[f64]) {
        self.update_batch(std::slice::from_ref(&x.to_vec()));
    }

    pub fn update_batch(&mut self, batch: &[Vec<f64>]) {
        if batch.is_empty() {
            return;
        }
        let n = batch.len() as f64;
        let dim = self.mean.len();
        let mut bmean = vec![0.0; dim];
        for x in batch {
            for d in 0..dim {
                bmean[d] += x[d] / n;
            }
        }
        let mut bvar = vec![0.0; dim];
        for x in batch {
            for d in 0..dim {
                bvar[d] += (x[d] - bmean[d]).powi(2) / n;
            }
        }
        let total = self.count + n;
        for d in 0..dim {
            let delta = bmean[d] - self.mean[d];
            let m2 = self.var[d] * self.count + bvar[d] * n + delta * delta * self.count * n / total;
            self.mean[d] += delta * n / total;
            self.var[d] = (m2 / total).max(0.0);
        }
        self.count = total;
    }

    pub fn std(&self, d: usize) -> f64 {
        self.var[d].sqrt()
    }
}

/// Observation and reward scaling learned online during training and frozen
/// afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub obs: RunningMeanStd,
    pub ret: RunningMeanStd,
    pub clip_obs: f64,
    pub clip_reward: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub normalize_obs: bool,
    pub normalize_reward: bool,
    #[serde(skip)]
    discounted: f64,
}

impl Normalizer {
    pub fn new(dim: usize, gamma: f64) -> Self {
        Self {
            obs: RunningMeanStd::new(dim),
            ret: RunningMeanStd::new(1),
            clip_obs: 10.0,
            clip_reward: 10.0,
            gamma,
            epsilon: 1e-8,
            normalize_obs: true,
            normalize_reward: true,
            discounted: 0.0,
        }
    }

    pub fn normalize_obs(&self, x: &[f64]) -> Vec<f64> {
        if !self.normalize_obs {
            return x.to_vec();
        }
        x.iter()
            .enumerate()
            .map(|(d, v)| {
                ((v - self.obs.mean[d]) / (self.obs.var[d] + self.epsilon).sqrt()).clamp(-self.clip_obs, self.clip_obs)
            })
            .collect()
    }

    /// Folds `reward` into the discounted return statistics and scales it.
    pub fn observe_reward(&mut self, reward: f64, done: bool) -> f64 {
        self.discounted = self.discounted * self.gamma + reward;
        self.ret.update(&[self.discounted]);
        let scaled = self.scale_reward(reward);
        if done {
            self.discounted = 0.0;
        }
        scaled
    }

    pub fn scale_reward(&self, reward: f64) -> f64 {
        if !self.normalize_reward {
            return reward;
        }
        (reward / (self.ret.var[0] + self.epsilon).sqrt()).clamp(-self.clip_reward, self.clip_reward)
    }

    pub fn reset_return(&mut self) {
        self.discounted = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn converges_to_gaussian_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dists = [Normal::new(3.0, 2.0).unwrap(), Normal::new(-1.0, 0.5).unwrap()];
        let mut rms = RunningMeanStd::new(2);
        for chunk in 0..100 {
            let batch: Vec<Vec<f64>> = (0..1000).map(|_| dists.iter().map(|d| d.sample(&mut rng)).collect()).collect();
            if chunk % 2 == 0 {
                rms.update_batch(&batch);
            } else {
                batch.iter().for_each(|x| rms.update(x));
            }
        }
        assert!((rms.mean[0] - 3.0).abs() < 0.02 * 3.0);
        assert!((rms.std(0) - 2.0).abs() < 0.02 * 2.0);
        assert!((rms.mean[1] + 1.0).abs() < 0.02);
        assert!((rms.std(1) - 0.5).abs() < 0.02 * 0.5);
    }

    #[test]
    fn batch_and_single_updates_agree() {
        let data: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64).sin() * 3.0]).collect();
        let mut a = RunningMeanStd::new(1);
        let mut b = RunningMeanStd::new(1);
        a.update_batch(&data);
        data.iter().for_each(|x| b.update(x));
        assert!((a.mean[0] - b.mean[0]).abs() < 1e-12);
        assert!((a.var[0] - b.var[0]).abs() < 1e-12);
    }

    #[test]
    fn obs_clipping() {
        let mut n = Normalizer::new(1, 0.99);
        n.obs.mean = vec![0.0];
        n.obs.var = vec![1e-6];
        assert_eq!(n.normalize_obs(&[5.0]), vec![10.0]);
    }
}
