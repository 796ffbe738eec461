//! Monte Carlo localization: a particle filter over planar poses scored with a
//! beam-based LiDAR likelihood against the occupancy grid.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Pose, Vec2};
use crate::track::OccupancyGrid;
use crate::{Error, Result};

pub const MIN_PARTICLES: usize = 100;

/// Zero-mean process noise added during prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionNoise {
    pub sigma_xy: f64,
    pub sigma_heading: f64,
    pub sigma_v: f64,
}

impl Default for MotionNoise {
    fn default() -> Self {
        Self { sigma_xy: 0.02, sigma_heading: 0.01, sigma_v: 0.05 }
    }
}

/// Mixture weights of the beam likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeamModel {
    pub sigma_hit: f64,
    pub z_hit: f64,
    pub z_rand: f64,
    pub z_max: f64,
    pub beams: usize,
    pub max_range: f64,
}

impl Default for BeamModel {
    fn default() -> Self {
        Self { sigma_hit: 0.1, z_hit: 0.85, z_rand: 0.1, z_max: 0.05, beams: 60, max_range: 30.0 }
    }
}

impl BeamModel {
    /// Probability density of reading `z` when the map predicts `expected`.
    pub fn likelihood(&self, z: f64, expected: f64) -> f64 {
        let d = (z - expected) / self.sigma_hit;
        let hit = (-0.5 * d * d).exp() / (self.sigma_hit * (2.0 * std::f64::consts::PI).sqrt());
        let rand = if (0.0..=self.max_range).contains(&z) { 1.0 / self.max_range } else { 0.0 };
        let max = if z >= self.max_range - 1e-9 { 1.0 } else { 0.0 };
        self.z_hit * hit + self.z_rand * rand + self.z_max * max
    }
}

/// Filter settings for closed-loop use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MclConfig {
    pub particles: usize,
    pub init_radius: f64,
    pub init_heading_spread: f64,
    pub ess_threshold: f64,
    pub motion: MotionNoise,
    pub beam: BeamModel,
}

impl Default for MclConfig {
    fn default() -> Self {
        Self {
            particles: 1000,
            init_radius: 2.0,
            init_heading_spread: 0.3,
            ess_threshold: 0.5,
            motion: MotionNoise::default(),
            beam: BeamModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    poses: Vec<Pose>,
    weights: Vec<f64>,
}

impl ParticleSet {
    /// Equally weighted set.
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        if poses.len() < MIN_PARTICLES {
            return Err(Error::Config(format!("need at least {MIN_PARTICLES} particles, got {}", poses.len())));
        }
        let n = poses.len();
        Ok(Self { poses, weights: vec![1.0 / n as f64; n] })
    }

    pub fn with_weights(poses: Vec<Pose>, weights: Vec<f64>) -> Result<Self> {
        let mut set = Self::new(poses)?;
        if weights.len() != set.len() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("weights must be finite, non-negative and one per particle".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Config("weights sum to zero".into()));
        }
        set.weights = weights.into_iter().map(|w| w / total).collect();
        Ok(set)
    }

    /// `count` poses drawn uniformly from the free cells of a disc around `center`,
    /// headings uniform within `heading_spread` of the center heading.
    pub fn around<R: Rng>(
        center: Pose,
        radius: f64,
        heading_spread: f64,
        count: usize,
        grid: &OccupancyGrid,
        rng: &mut R,
    ) -> Result<Self> {
        let mut poses = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while poses.len() < count {
            attempts += 1;
            if attempts > 1000 * count.max(1) {
                return Err(Error::Config(format!("no free space within {radius} m of ({}, {})", center.x, center.y)));
            }
            let r = radius * rng.random::<f64>().sqrt();
            let a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let p = center.position() + Vec2::from_angle(a) * r;
            if grid.is_occupied(p) {
                continue;
            }
            let h = if heading_spread > 0.0 { rng.random_range(-heading_spread..=heading_spread) } else { 0.0 };
            poses.push(Pose::new(p.x, p.y, wrap_angle(center.heading + h)));
        }
        Self::new(poses)
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `1 / sum(w^2)`.
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

/// Advances every particle through the bicycle kinematics under `(v, steer)`,
/// with `v` perturbed per particle and `(x, y, heading)` jittered afterwards.
pub fn predict<R: Rng>(
    set: &mut ParticleSet,
    v: f64,
    steer: f64,
    wheelbase: f64,
    dt: f64,
    noise: &MotionNoise,
    rng: &mut R,
) {
    let gauss = |sigma: f64, rng: &mut R| {
        if sigma > 0.0 {
            Normal::new(0.0, sigma).map(|n| n.sample(rng)).unwrap_or(0.0)
        } else {
            0.0
        }
    };
    let turn = steer.tan() / wheelbase;
    for p in &mut set.poses {
        let vi = v + gauss(noise.sigma_v, rng);
        let dpsi = vi * turn * dt;
        let mid = p.heading + 0.5 * dpsi;
        p.x += vi * mid.cos() * dt + gauss(noise.sigma_xy, rng);
        p.y += vi * mid.sin() * dt + gauss(noise.sigma_xy, rng);
        p.heading = wrap_angle(p.heading + dpsi + gauss(noise.sigma_heading, rng));
    }
}

/// Indices of `count` beams spread evenly over a scan of `total` beams.
pub fn subsample_indices(total: usize, count: usize) -> Vec<usize> {
    let count = count.min(total).max(1);
    (0..count).map(|k| (k * total) / count + total / (2 * count)).map(|i| i.min(total - 1)).collect()
}

/// Log-likelihood of `scan` seen from `pose`; `-inf` when the pose is inside a wall.
pub fn scan_log_likelihood(
    pose: Pose,
    scan: &[f64],
    angles: &[f64],
    beams: &[usize],
    grid: &OccupancyGrid,
    model: &BeamModel,
) -> f64 {
    if grid.is_occupied(pose.position()) {
        return f64::NEG_INFINITY;
    }
    beams
        .iter()
        .map(|&i| {
            let expected = grid.cast_ray(pose.position(), pose.heading + angles[i], model.max_range);
            model.likelihood(scan[i], expected).ln()
        })
        .sum()
}

/// Rescores every particle against `scan`. Returns `true` when every particle had
/// zero likelihood, in which case the weights are reset to uniform.
pub fn update_weights(
    set: &mut ParticleSet,
    scan: &[f64],
    angles: &[f64],
    grid: &OccupancyGrid,
    model: &BeamModel,
) -> Result<bool> {
    if scan.len() != angles.len() || scan.len() < model.beams {
        return Err(Error::Config(format!(
            "scan has {} ranges for {} angles, model needs {} beams",
            scan.len(),
            angles.len(),
            model.beams
        )));
    }
    let beams = subsample_indices(scan.len(), model.beams);
    let log_w: Vec<f64> = set
        .poses
        .par_iter()
        .zip(set.weights.par_iter())
        .map(|(&pose, &w)| w.ln() + scan_log_likelihood(pose, scan, angles, &beams, grid, model))
        .collect();
    let peak = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let n = set.len();
    if !peak.is_finite() {
        set.weights = vec![1.0 / n as f64; n];
        return Ok(true);
    }
    let mut total = 0.0;
    for (w, lw) in set.weights.iter_mut().zip(&log_w) {
        *w = (lw - peak).exp();
        total += *w;
    }
    for w in &mut set.weights {
        *w /= total;
    }
    Ok(false)
}

/// Low-variance resampling of `n` equally weighted particles.
pub fn systematic_resample<R: Rng>(set: &mut ParticleSet, rng: &mut R) {
    let n = set.len();
    let step = 1.0 / n as f64;
    let mut u = rng.random::<f64>() * step;
    let mut cumulative = set.weights[0];
    let mut i = 0;
    let mut poses = Vec::with_capacity(n);
    for _ in 0..n {
        while u > cumulative && i + 1 < n {
            i += 1;
            cumulative += set.weights[i];
        }
        poses.push(set.poses[i]);
        u += step;
    }
    set.poses = poses;
    set.weights = vec![step; n];
}

/// Resamples when the effective sample size drops below `threshold * N`.
pub fn resample_if_needed<R: Rng>(set: &mut ParticleSet, threshold: f64, rng: &mut R) -> bool {
    if set.effective_sample_size() < threshold * set.len() as f64 {
        systematic_resample(set, rng);
        true
    } else {
        false
    }
}

/// Weighted mean position and circular-mean heading, accumulated as offsets
/// from the heaviest particle.
pub fn estimate(set: &ParticleSet) -> Pose {
    let mut anchor = 0;
    for (i, w) in set.weights.iter().enumerate() {
        if *w > set.weights[anchor] {
            anchor = i;
        }
    }
    let r = set.poses[anchor];
    let (mut dx, mut dy, mut s, mut c) = (0.0, 0.0, 0.0, 0.0);
    for (p, w) in set.poses.iter().zip(&set.weights) {
        dx += w * (p.x - r.x);
        dy += w * (p.y - r.y);
        let d = p.heading - r.heading;
        s += w * d.sin();
        c += w * d.cos();
    }
    Pose::new(r.x + dx, r.y + dy, wrap_angle(r.heading + s.atan2(c)))
}

/// Particle filter bound to a map and settings.
#[derive(Debug, Clone)]
pub struct Localizer {
    pub config: MclConfig,
    pub particles: ParticleSet,
    pub degenerate_updates: usize,
}

impl Localizer {
    pub fn new<R: Rng>(config: MclConfig, guess: Pose, grid: &OccupancyGrid, rng: &mut R) -> Result<Self> {
        let particles =
            ParticleSet::around(guess, config.init_radius, config.init_heading_spread, config.particles, grid, rng)?;
        Ok(Self { config, particles, degenerate_updates: 0 })
    }

    /// One predict, score, resample cycle; returns the new estimate.
    #[allow(clippy::too_many_arguments)]
    pub fn update<R: Rng>(
        &mut self,
        v: f64,
        steer: f64,
        wheelbase: f64,
        dt: f64,
        scan: &[f64],
        angles: &[f64],
        grid: &OccupancyGrid,
        rng: &mut R,
    ) -> Result<Pose> {
        predict(&mut self.particles, v, steer, wheelbase, dt, &self.config.motion, rng);
        if update_weights(&mut self.particles, scan, angles, grid, &self.config.beam)? {
            self.degenerate_updates += 1;
        }
        let pose = estimate(&self.particles);
        resample_if_needed(&mut self.particles, self.config.ess_threshold, rng);
        Ok(pose)
    }

    pub fn estimate(&self) -> Pose {
        estimate(&self.particles)
    }
}
