//! The lookahead decision process: observation, smoothed action, shaped reward,
//! termination and lap bookkeeping around the simulator and Pure Pursuit.

mod laps;
mod observation;
mod reward;

use std::sync::Arc;

pub use laps::{wrapped_progress, FinishLine, LapTimer};
pub use observation::{action_to_lookahead, observe, ActionSmoother, Horizons, Observation, OBS_DIM};
pub use reward::{reward, RewardConfig, Transition};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{steer, PurePursuitConfig, SteeringFilter};
use crate::geometry::{Pose, Vec2};
use crate::localization::{Localizer, MclConfig};
use crate::raceline::Raceline;
use crate::simulator::{Simulator, VehicleParams, VehicleState};
use crate::track::{project_to_path, OccupancyGrid};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub horizons: Horizons,
    pub smoothing_alpha: f64,
    pub reward: RewardConfig,
    /// Control steps before truncation.
    pub max_steps: usize,
    /// Episode ends once this many laps are timed.
    pub max_laps: Option<usize>,
    pub speed_scale: f64,
    /// When set, each episode draws its speed scale uniformly from this range.
    pub speed_scale_range: Option<[f64; 2]>,
    /// Spawn at a random waypoint instead of waypoint 0.
    pub random_spawn: bool,
    /// Spawn this far before the start/finish line; lap timing then begins at
    /// the first crossing.
    pub start_offset: f64,
    /// Half length of the start/finish gate.
    pub gate_half_width: f64,
    pub controller: PurePursuitConfig,
    pub vehicle: VehicleParams,
    /// Drive on the particle-filter estimate instead of the true pose.
    pub mcl: Option<MclConfig>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            horizons: Horizons::default(),
            smoothing_alpha: 0.3,
            reward: RewardConfig::default(),
            max_steps: 3000,
            max_laps: None,
            speed_scale: 1.0,
            speed_scale_range: None,
            random_spawn: false,
            start_offset: 0.0,
            gate_half_width: 2.5,
            controller: PurePursuitConfig::default(),
            vehicle: VehicleParams::default(),
            mcl: None,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.reward.validate()?;
        self.controller.validate()?;
        self.vehicle.validate()?;
        let ok = self.smoothing_alpha > 0.0
            && self.smoothing_alpha <= 1.0
            && self.max_steps > 0
            && self.speed_scale > 0.0
            && self.speed_scale_range.is_none_or(|[lo, hi]| lo > 0.0 && lo <= hi)
            && self.horizons.medium >= 0.0
            && self.horizons.far >= self.horizons.medium
            && self.max_laps != Some(0)
            && self.start_offset >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid environment config {self:?}")))
        }
    }
}

/// Why an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndReason {
    Collision,
    Stall,
    Laps,
    StepLimit,
}

/// Per-episode bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub steps: usize,
    pub time: f64,
    pub prev_lookahead: Option<f64>,
    pub prev_index: usize,
    /// Signed waypoints advanced since reset.
    pub progress: i64,
    pub stall_time: f64,
    pub timer: LapTimer,
    pub end: Option<EndReason>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub lookahead: f64,
    pub lap_time: Option<f64>,
    pub collided: bool,
    pub stalled: bool,
    pub min_range: f64,
    /// Waypoints advanced this step.
    pub progress: i64,
    pub time: f64,
    pub state: VehicleState,
    pub estimate: Option<Pose>,
    pub steer: f64,
    pub speed_command: f64,
    pub index: usize,
    pub end: Option<EndReason>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    /// Collision or stall.
    pub terminated: bool,
    /// Lap or step limit.
    pub truncated: bool,
    pub info: StepInfo,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// One vehicle following a fixed raceline on a shared map.
#[derive(Debug, Clone)]
pub struct RacingEnv {
    raceline: Arc<Raceline>,
    config: EnvConfig,
    sim: Simulator,
    smoother: ActionSmoother,
    filter: SteeringFilter,
    rng: ChaCha8Rng,
    localizer: Option<Localizer>,
    estimate: Option<Pose>,
    observation: Observation,
    episode: EpisodeState,
    speed_scale: f64,
}

impl RacingEnv {
    pub fn new(raceline: Arc<Raceline>, grid: Arc<OccupancyGrid>, config: EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if raceline.len() < 16 {
            return Err(Error::Config("raceline too short for an environment".into()));
        }
        let sim = Simulator::new(grid, config.vehicle, seed)?;
        let line = FinishLine::new(&raceline, config.gate_half_width);
        let n = raceline.len();
        Ok(Self {
            smoother: ActionSmoother::new(config.smoothing_alpha),
            filter: SteeringFilter::default(),
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15),
            localizer: None,
            estimate: None,
            observation: Observation { v: 0.0, kappa0: 0.0, kappa1: 0.0, kappa2: 0.0 },
            episode: EpisodeState {
                steps: 0,
                time: 0.0,
                prev_lookahead: None,
                prev_index: 0,
                progress: 0,
                stall_time: 0.0,
                timer: LapTimer::new(line, n, true),
                end: None,
            },
            speed_scale: config.speed_scale,
            raceline,
            config,
            sim,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn raceline(&self) -> &Arc<Raceline> {
        &self.raceline
    }

    pub fn state(&self) -> VehicleState {
        self.sim.state()
    }

    pub fn episode(&self) -> &EpisodeState {
        &self.episode
    }

    pub fn observation(&self) -> Observation {
        self.observation
    }

    /// Speed scale of the current episode.
    pub fn speed_scale(&self) -> f64 {
        self.speed_scale
    }

    pub fn lap_times(&self) -> &[f64] {
        &self.episode.timer.lap_times
    }

    /// State the controller acts on: the filter estimate with true speed under
    /// MCL, otherwise ground truth.
    fn control_state(&self) -> VehicleState {
        let truth = self.sim.state();
        match self.estimate {
            Some(p) => VehicleState { x: p.x, y: p.y, theta: p.heading, v: truth.v },
            None => truth,
        }
    }

    /// Spawns at rest on the raceline and returns the first observation.
    pub fn reset(&mut self) -> Result<Observation> {
        let n = self.raceline.len();
        self.speed_scale = match self.config.speed_scale_range {
            Some([lo, hi]) if hi > lo => self.rng.random_range(lo..hi),
            Some([lo, _]) => lo,
            None => self.config.speed_scale,
        };
        let index = if self.config.random_spawn {
            self.rng.random_range(0..n)
        } else {
            self.raceline.index_ahead(0, -self.config.start_offset)
        };
        let p = self.raceline.points[index];
        let dir = self.raceline.points[(index + 1) % n] - self.raceline.points[(index + n - 1) % n];
        let spawn = Pose::new(p.x, p.y, dir.y.atan2(dir.x));
        self.sim.reset(spawn)?;
        self.smoother.reset();
        self.filter = SteeringFilter::default();
        self.localizer = match self.config.mcl {
            Some(cfg) => Some(Localizer::new(cfg, spawn, self.sim.grid(), &mut self.rng)?),
            None => None,
        };
        self.estimate = self.localizer.as_ref().map(|l| l.estimate());
        let line = FinishLine::new(&self.raceline, self.config.gate_half_width);
        self.episode = EpisodeState {
            steps: 0,
            time: 0.0,
            prev_lookahead: None,
            prev_index: project_to_path(self.raceline.as_ref(), spawn.position()).index,
            progress: 0,
            stall_time: 0.0,
            timer: LapTimer::new(line, n, index == 0),
            end: None,
        };
        self.observation = observe(&self.control_state(), &self.raceline, &self.config.horizons);
        Ok(self.observation)
    }

    /// Maps and smooths a raw policy action, then advances one control period.
    pub fn step(&mut self, raw: f64) -> Result<StepOutcome> {
        if !raw.is_finite() {
            return Err(Error::Simulation(format!("non-finite action {raw}")));
        }
        let lookahead = self.smoother.apply(raw);
        self.advance(lookahead)
    }

    /// Advances one control period with an already published lookahead.
    pub fn advance(&mut self, lookahead: f64) -> Result<StepOutcome> {
        if self.episode.end.is_some() {
            return Err(Error::Simulation("step called on a finished episode; reset first".into()));
        }
        let lookahead = self.config.controller.clamp_lookahead(lookahead);
        let before = self.observation;
        let prev_lookahead = self.episode.prev_lookahead.unwrap_or(lookahead);
        let control = self.control_state();
        let out =
            steer(&control, &self.raceline, lookahead, &self.config.controller, &mut self.filter, self.speed_scale);
        let start = self.sim.state();
        let result = self.sim.step(out.command)?;
        let period = self.config.vehicle.control_period;
        let t0 = self.episode.time;
        let t1 = t0 + period;

        if let Some(loc) = self.localizer.as_mut() {
            let angles = self.sim.scan_angles().to_vec();
            let est = loc.update(
                result.state.v,
                out.command.steer,
                self.config.vehicle.wheelbase,
                period,
                &result.scan,
                &angles,
                self.sim.grid(),
                &mut self.rng,
            )?;
            self.estimate = Some(est);
        }

        let n = self.raceline.len();
        let b = Vec2::new(result.state.x, result.state.y);
        let index = project_to_path(self.raceline.as_ref(), b).index;
        let dp = wrapped_progress(self.episode.prev_index, index, n);
        self.episode.prev_index = index;
        self.episode.progress += dp;
        let lap_time = self.episode.timer.update(start.pose().position(), b, t0, t1, self.episode.progress);

        if result.state.v < self.config.reward.stall_speed {
            self.episode.stall_time += period;
        } else {
            self.episode.stall_time = 0.0;
        }
        let stalled = self.episode.stall_time >= self.config.reward.stall_duration - 1e-9;
        let collided = result.min_range < self.config.reward.collision_range;

        let r = reward(
            &Transition {
                v: before.v,
                lookahead,
                prev_lookahead,
                kappa: [before.kappa0, before.kappa1, before.kappa2],
                min_range: result.min_range,
                progress: dp as f64,
                stalled,
            },
            &self.config.reward,
        );

        self.episode.steps += 1;
        self.episode.time = t1;
        self.episode.prev_lookahead = Some(lookahead);
        self.observation = observe(&self.control_state(), &self.raceline, &self.config.horizons);

        let end = if collided {
            Some(EndReason::Collision)
        } else if stalled {
            Some(EndReason::Stall)
        } else if self.config.max_laps.is_some_and(|m| self.episode.timer.lap_times.len() >= m) {
            Some(EndReason::Laps)
        } else if self.episode.steps >= self.config.max_steps {
            Some(EndReason::StepLimit)
        } else {
            None
        };
        self.episode.end = end;

        Ok(StepOutcome {
            observation: self.observation,
            reward: r,
            terminated: matches!(end, Some(EndReason::Collision | EndReason::Stall)),
            truncated: matches!(end, Some(EndReason::Laps | EndReason::StepLimit)),
            info: StepInfo {
                lookahead,
                lap_time,
                collided,
                stalled,
                min_range: result.min_range,
                progress: dp,
                time: t1,
                state: result.state,
                estimate: self.estimate,
                steer: out.command.steer,
                speed_command: out.command.speed,
                index,
                end,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raceline::{build_raceline, RacelineParams};
    use crate::track::{corpus_track, rasterize, CorpusTrack};
    use proptest::prelude::*;

    fn oval_env(cfg: EnvConfig, seed: u64) -> RacingEnv {
        let track = corpus_track(CorpusTrack::Oval, 0.25).unwrap();
        let (line, _) = build_raceline(&track, &RacelineParams::default()).unwrap();
        let grid = rasterize(&track, 0.05).unwrap();
        RacingEnv::new(Arc::new(line), Arc::new(grid), cfg, seed).unwrap()
    }

    #[test]
    fn laps_progress_and_bounds() {
        let cfg = EnvConfig { max_laps: Some(2), max_steps: 20_000, ..Default::default() };
        let mut env = oval_env(cfg, 7);
        let n = env.raceline().len() as i64;
        env.reset().unwrap();
        let mut prev_l: Option<f64> = None;
        let mut laps = Vec::new();
        loop {
            let out = env.step(0.0).unwrap();
            assert!((-20.0..=50.0).contains(&out.reward));
            let l = out.info.lookahead;
            assert!((0.35..=4.0).contains(&l));
            if let Some(p) = prev_l {
                assert!((l - p).abs() <= 0.3 * 3.65 + 1e-12);
            }
            prev_l = Some(l);
            if let Some(t) = out.info.lap_time {
                laps.push((t, env.episode().progress));
            }
            if out.done() {
                assert_eq!(out.info.end, Some(EndReason::Laps));
                break;
            }
        }
        assert_eq!(laps.len(), 2);
        for (k, (t, progress)) in laps.iter().enumerate() {
            assert!(*t > 5.0);
            // crossing happens within a waypoint or two of index 0
            assert!((progress - (k as i64 + 1) * n).abs() <= 2, "{progress} vs {n}");
        }
        // telescoping: total progress matches the net index change modulo N exactly
        let idx = env.episode().prev_index as i64;
        assert_eq!(env.episode().progress.rem_euclid(n), idx.rem_euclid(n));
    }

    #[test]
    fn episodes_are_deterministic() {
        let run = || {
            let mut env = oval_env(EnvConfig { max_steps: 300, ..Default::default() }, 3);
            env.reset().unwrap();
            let mut trace = Vec::new();
            for k in 0..300 {
                let out = env.step(((k as f64) * 0.1).sin()).unwrap();
                trace.push((out.reward.to_bits(), out.info.state.x.to_bits()));
                if out.done() {
                    break;
                }
            }
            trace
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn crash_into_wall_terminates_with_penalty() {
        let cfg = EnvConfig { speed_scale: 3.0, max_steps: 5000, ..Default::default() };
        let mut env = oval_env(cfg, 1);
        env.reset().unwrap();
        let out = loop {
            let out = env.step(1.0).unwrap();
            if out.done() {
                break out;
            }
        };
        assert!(out.terminated && out.info.collided);
        assert_eq!(out.info.end, Some(EndReason::Collision));
        assert!(out.reward <= -20.0 + 0.35 * 12.0 * 3.0 + 10.0);
        assert!(env.advance(1.0).is_err());
    }

    #[test]
    fn standing_still_stalls() {
        let cfg = EnvConfig { speed_scale: 1e-4, ..Default::default() };
        let mut env = oval_env(cfg, 1);
        env.reset().unwrap();
        let mut steps = 0;
        let out = loop {
            steps += 1;
            let out = env.step(0.0).unwrap();
            if out.done() {
                break out;
            }
        };
        assert!(out.terminated && out.info.stalled);
        assert_eq!(steps, 100);
        assert!(out.reward < 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn lookahead_trace_is_bounded(actions in prop::collection::vec(-3.0f64..3.0, 1..60)) {
            let mut env = oval_env(EnvConfig::default(), 0);
            env.reset().unwrap();
            let mut prev: Option<f64> = None;
            for a in actions {
                let out = env.step(a).unwrap();
                let l = out.info.lookahead;
                prop_assert!((0.35..=4.0).contains(&l));
                if let Some(p) = prev {
                    prop_assert!((l - p).abs() <= 0.3 * 3.65 + 1e-12);
                }
                prev = Some(l);
                if out.done() { break; }
            }
        }
    }
}
