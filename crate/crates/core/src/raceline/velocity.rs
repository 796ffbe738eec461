//! Friction-limited speed profiles over a closed, uniformly spaced path.

use serde::{Deserialize, Serialize};

/// Parameters of the friction-circle speed profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeedLimits {
    pub mu: f64,
    pub g: f64,
    /// Keeps the pointwise limit finite where curvature vanishes.
    pub epsilon: f64,
    pub a_long_max: f64,
    pub v_cap: f64,
}

impl Default for SpeedLimits {
    fn default() -> Self {
        Self { mu: 0.8, g: 9.81, epsilon: 1e-3, a_long_max: 6.0, v_cap: 12.0 }
    }
}

const MAX_SWEEPS: usize = 10;
const FIXED_POINT_TOL: f64 = 1e-6;

impl SpeedLimits {
    fn grip(&self) -> f64 {
        self.mu * self.g
    }
}

/// `min(v_cap, sqrt(mu g / (|kappa| + epsilon)))` at every point.
pub fn pointwise_speed_limit(kappa: &[f64], limits: &SpeedLimits) -> Vec<f64> {
    let grip = limits.grip();
    kappa.iter().map(|k| (grip / (k.abs() + limits.epsilon)).sqrt().min(limits.v_cap)).collect()
}

/// Largest squared speed at a point with curvature `kappa` from which the car
/// can brake to squared speed `w` over `ds` without leaving the friction circle.
fn braking_entry_sq(w: f64, kappa: f64, ds: f64, grip: f64, a_long_max: f64) -> f64 {
    let a = 1.0 + 4.0 * ds * ds * kappa * kappa;
    let disc = 4.0 * ds * ds * (a * grip * grip - kappa * kappa * w * w);
    let friction = if disc >= 0.0 { (w + disc.sqrt()) / a } else { f64::INFINITY };
    friction.min(w + 2.0 * ds * a_long_max)
}

/// Closed-loop speed profile: the pointwise cap, then forward (acceleration)
/// and backward (braking) passes around the loop, repeated to a fixed point.
///
/// The acceleration available at point `i` is what remains of the friction
/// circle after the lateral demand `v_i^2 kappa_i`, further bounded by `a_long_max`.
pub fn velocity_profile(kappa: &[f64], ds: f64, limits: &SpeedLimits) -> Vec<f64> {
    let n = kappa.len();
    let mut v = pointwise_speed_limit(kappa, limits);
    if n < 2 {
        return v;
    }
    let grip = limits.grip();
    let start = v.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);

    for _ in 0..MAX_SWEEPS {
        let before = v.clone();
        for k in 0..n {
            let i = (start + k) % n;
            let j = (i + 1) % n;
            let lateral = v[i] * v[i] * kappa[i];
            let a_avail = (grip * grip - lateral * lateral).max(0.0).sqrt().min(limits.a_long_max);
            let reach = (v[i] * v[i] + 2.0 * a_avail * ds).sqrt();
            if reach < v[j] {
                v[j] = reach;
            }
        }
        for k in 0..n {
            let j = (start + n - k) % n;
            let i = (j + n - 1) % n;
            let entry = braking_entry_sq(v[j] * v[j], kappa[i], ds, grip, limits.a_long_max).sqrt();
            if entry < v[i] {
                v[i] = entry;
            }
        }
        let change = v.iter().zip(&before).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if change < FIXED_POINT_TOL {
            break;
        }
    }
    v
}

/// Largest relative friction-circle violation of a closed profile,
/// `((v_i^2 k_i)^2 + a_x,i^2) / (mu g)^2 - 1`, with `a_x,i` the forward difference.
pub fn friction_circle_excess(v: &[f64], kappa: &[f64], ds: f64, mu: f64, g: f64) -> f64 {
    let n = v.len();
    let grip_sq = (mu * g).powi(2);
    (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            let lat = v[i] * v[i] * kappa[i];
            let lon = (v[j] * v[j] - v[i] * v[i]) / (2.0 * ds);
            (lat * lat + lon * lon) / grip_sq - 1.0
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
