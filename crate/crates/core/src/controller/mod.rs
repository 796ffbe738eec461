//! Pure Pursuit steering with a low-pass filtered curvature command, a
//! speed-scheduled steering gain, and pluggable lookahead sources.

mod lookahead;

pub use lookahead::{LearnedLookahead, LookaheadSource, StrategyKind};

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Vec2};
use crate::raceline::Raceline;
use crate::simulator::{DriveCommand, VehicleState};
use crate::track::project_to_path;

/// Admissible lookahead range shared by every strategy, meters.
pub const LOOKAHEAD_MIN: f64 = 0.35;
pub const LOOKAHEAD_MAX: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PurePursuitConfig {
    pub wheelbase: f64,
    /// Low-pass coefficient on the curvature command.
    pub beta: f64,
    pub gain_min: f64,
    pub gain_max: f64,
    /// Speeds at which the gain schedule leaves `gain_max` and reaches `gain_min`.
    pub gain_v_min: f64,
    pub gain_v_max: f64,
    pub max_steer: f64,
    pub lookahead_min: f64,
    pub lookahead_max: f64,
}

impl Default for PurePursuitConfig {
    fn default() -> Self {
        Self {
            wheelbase: 0.3302,
            beta: 0.4,
            gain_min: 0.55,
            gain_max: 1.0,
            gain_v_min: 2.0,
            gain_v_max: 10.0,
            max_steer: 0.4189,
            lookahead_min: LOOKAHEAD_MIN,
            lookahead_max: LOOKAHEAD_MAX,
        }
    }
}

impl PurePursuitConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.beta > 0.0
            && self.beta <= 1.0
            && self.gain_min <= self.gain_max
            && self.gain_v_min < self.gain_v_max
            && self.lookahead_min == LOOKAHEAD_MIN
            && self.lookahead_max == LOOKAHEAD_MAX
            && self.wheelbase > 0.0;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Config(format!("invalid Pure Pursuit config {self:?}")))
        }
    }

    pub fn clamp_lookahead(&self, l: f64) -> f64 {
        l.clamp(self.lookahead_min, self.lookahead_max)
    }
}

/// Pursuit target expressed in the vehicle frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub local: Vec2,
    pub world: Vec2,
    /// Waypoint at the end of the segment holding the target.
    pub index: usize,
}

/// Walks forward from the nearest waypoint to the first waypoint at least `lookahead`
/// from the rear axle and places the target on the final segment exactly
/// `lookahead` away. When the car is farther than `lookahead` from the path, the
/// target falls back to `lookahead` of cumulative chord length past the nearest waypoint.
pub fn find_target(raceline: &Raceline, pose: Pose, lookahead: f64) -> Target {
    let pts = &raceline.points;
    let n = pts.len();
    let origin = pose.position();
    let start = project_to_path(raceline, origin).index;

    let finish = |world: Vec2, index: usize| Target { local: pose.to_local(world), world, index };

    if pts[start].distance(origin) < lookahead {
        for k in 0..n {
            let a = pts[(start + k) % n];
            let j = (start + k + 1) % n;
            let b = pts[j];
            if b.distance(origin) >= lookahead {
                // |a + t (b - a) - origin| = lookahead, larger root in [0, 1]
                let ab = b - a;
                let ao = a - origin;
                let qa = ab.norm_sq();
                let qb = 2.0 * ao.dot(ab);
                let qc = ao.norm_sq() - lookahead * lookahead;
                let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
                let t = ((-qb + disc.sqrt()) / (2.0 * qa)).clamp(0.0, 1.0);
                return finish(a + ab * t, j);
            }
        }
    }

    let mut travelled = 0.0;
    for k in 0..n {
        let a = pts[(start + k) % n];
        let j = (start + k + 1) % n;
        let b = pts[j];
        let seg = a.distance(b);
        if travelled + seg >= lookahead {
            let t = (lookahead - travelled) / seg;
            return finish(a.lerp(b, t), j);
        }
        travelled += seg;
    }
    finish(pts[start], start)
}

/// `2 y' / L^2`.
#[inline]
pub fn curvature_command(lateral: f64, lookahead: f64) -> f64 {
    2.0 * lateral / (lookahead * lookahead)
}

/// First-order low-pass: `(1 - beta) prev + beta gamma`.
#[inline]
pub fn filter_curvature(gamma: f64, prev: f64, beta: f64) -> f64 {
    (1.0 - beta) * prev + beta * gamma
}

/// Linear schedule from `gain_max` at `gain_v_min` down to `gain_min` at
/// `gain_v_max`, clamped outside.
pub fn steering_gain(v: f64, cfg: &PurePursuitConfig) -> f64 {
    let m = (cfg.gain_min - cfg.gain_max) / (cfg.gain_v_max - cfg.gain_v_min);
    let b = cfg.gain_max - m * cfg.gain_v_min;
    (m * v + b).min(cfg.gain_max).max(cfg.gain_min)
}

/// Per-vehicle controller memory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SteeringFilter {
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteerOutput {
    pub command: DriveCommand,
    pub target: Target,
    /// Raw curvature command before filtering.
    pub gamma: f64,
    pub gamma_filtered: f64,
}

/// One Pure Pursuit control update.
pub fn steer(
    state: &VehicleState,
    raceline: &Raceline,
    lookahead: f64,
    cfg: &PurePursuitConfig,
    filter: &mut SteeringFilter,
    speed_scale: f64,
) -> SteerOutput {
    let target = find_target(raceline, state.pose(), lookahead);
    let gamma = curvature_command(target.local.y, lookahead);
    filter.gamma = filter_curvature(gamma, filter.gamma, cfg.beta);
    let delta = (cfg.wheelbase * steering_gain(state.v, cfg) * filter.gamma).atan();
    SteerOutput {
        command: DriveCommand {
            speed: raceline.v_max[target.index] * speed_scale,
            steer: delta.clamp(-cfg.max_steer, cfg.max_steer),
        },
        target,
        gamma,
        gamma_filtered: filter.gamma,
    }
}
