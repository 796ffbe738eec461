//! Experiment orchestration: track preparation, multi-lap trials, speed-scale
//! sweeps, controller comparisons, training runs and localization demos.

mod compare;
pub mod plot;
mod trial;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controller::StrategyKind;
use crate::environment::EnvConfig;
use crate::learning::{PolicyBundle, PpoConfig};
use crate::raceline::{build_raceline, OptimizationReport, Raceline, RacelineParams};
use crate::track::{corpus_track, load_track, rasterize, CorpusTrack, OccupancyGrid, Track};
use crate::{Error, Result};

pub use compare::{compare_controllers, trace_plot, trajectory_plot, Comparison};
pub use trial::{
    collect_observations, lookahead_split, mcl_demo, monotonicity_exceptions, run_trial, sweep_speed_scale,
    train_policy, write_pose_csv, LapReport, LapStats, PoseRow, SweepRow, TraceRow,
};

/// A corpus track by name or a racetrack CSV on disk.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TrackSource {
    Corpus(CorpusTrack),
    Csv(PathBuf),
}

impl FromStr for TrackSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::Config("empty track name".into()));
        }
        Ok(match CorpusTrack::from_name(s) {
            Some(t) => TrackSource::Corpus(t),
            None => TrackSource::Csv(PathBuf::from(s)),
        })
    }
}

impl TryFrom<String> for TrackSource {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TrackSource> for String {
    fn from(t: TrackSource) -> String {
        t.to_string()
    }
}

impl fmt::Display for TrackSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrackSource::Corpus(t) => f.write_str(t.name()),
            TrackSource::Csv(p) => write!(f, "{}", p.display()),
        }
    }
}

/// How tracks are turned into simulator inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackBuild {
    pub stepsize: f64,
    pub grid_resolution: f64,
    pub raceline: RacelineParams,
}

impl Default for TrackBuild {
    fn default() -> Self {
        Self { stepsize: 0.25, grid_resolution: 0.05, raceline: RacelineParams::default() }
    }
}

/// Track, optimized raceline and occupancy grid, ready to simulate.
#[derive(Debug, Clone)]
pub struct PreparedTrack {
    pub name: String,
    pub track: Track,
    pub raceline: Arc<Raceline>,
    pub grid: Arc<OccupancyGrid>,
    pub report: OptimizationReport,
}

pub fn prepare_track(source: &TrackSource, build: &TrackBuild) -> Result<PreparedTrack> {
    let track = match source {
        TrackSource::Corpus(t) => corpus_track(*t, build.stepsize)?,
        TrackSource::Csv(p) => load_track(p, build.stepsize)?,
    };
    let (raceline, report) = build_raceline(&track, &build.raceline)?;
    let grid = rasterize(&track, build.grid_resolution)?;
    Ok(PreparedTrack { name: track.name.clone(), track, raceline: Arc::new(raceline), grid: Arc::new(grid), report })
}

/// Lookahead strategy and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Fixed lookahead, meters.
    pub lookahead: f64,
    /// Scheduled lookahead `a + b v`.
    pub a: f64,
    pub b: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self { kind: StrategyKind::Fixed, lookahead: 1.5, a: 0.30, b: 0.25 }
    }
}

/// One experiment: which track, which controller, how fast, how many laps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Track driven by trials, sweeps and comparisons.
    pub track: TrackSource,
    /// Track the policy is trained on.
    pub train_track: TrackSource,
    /// Tracks never seen in training.
    pub held_out: Vec<TrackSource>,
    pub strategy: StrategyConfig,
    /// Policy bundle for the learned strategy.
    pub policy: Option<PathBuf>,
    /// Multiplier on the raceline speed profile.
    pub speed_scale: f64,
    pub laps: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Drive on the particle-filter estimate instead of ground truth.
    pub mcl: bool,
    /// Trial step budget per requested lap, seconds of simulated time.
    pub max_lap_time: f64,
    /// Trials spawn this far before the line so every timed lap is a flying lap.
    pub rolling_start: f64,
    pub build: TrackBuild,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    /// Speed scales drawn per training episode.
    pub train_speed_scale: [f64; 2],
    /// Speed scale of the evaluation episodes run during training.
    pub train_eval_speed_scale: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            track: TrackSource::Corpus(CorpusTrack::Oval),
            train_track: TrackSource::Corpus(CorpusTrack::Circuit),
            held_out: vec![
                TrackSource::Corpus(CorpusTrack::Oval),
                TrackSource::Corpus(CorpusTrack::Chicane),
                TrackSource::Corpus(CorpusTrack::Hairpin),
            ],
            strategy: StrategyConfig::default(),
            policy: None,
            speed_scale: 1.0,
            laps: 10,
            seed: 0,
            out: None,
            mcl: false,
            max_lap_time: 120.0,
            rolling_start: 15.0,
            build: TrackBuild::default(),
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
            train_speed_scale: [1.0, 5.0],
            train_eval_speed_scale: 3.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed_scale > 0.0 && self.speed_scale.is_finite()) {
            return Err(Error::Config(format!("speed scale must be positive, got {}", self.speed_scale)));
        }
        if self.laps == 0 {
            return Err(Error::Config("lap count must be at least 1".into()));
        }
        if !(self.max_lap_time > 0.0) {
            return Err(Error::Config("max_lap_time must be positive".into()));
        }
        if !(self.rolling_start >= 0.0) {
            return Err(Error::Config("rolling_start must be non-negative".into()));
        }
        let [lo, hi] = self.train_speed_scale;
        if !(lo > 0.0 && lo <= hi && self.train_eval_speed_scale > 0.0) {
            return Err(Error::Config(format!("invalid training speed scales {:?}", self.train_speed_scale)));
        }
        self.env.validate()?;
        self.ppo.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).unwrap_or_default();
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Loads the policy bundle when the strategy needs one.
    pub fn load_policy(&self) -> Result<Option<PolicyBundle>> {
        match (&self.policy, self.strategy.kind) {
            (Some(p), _) => PolicyBundle::load(p).map(Some),
            (None, StrategyKind::Learned) => {
                Err(Error::Config("the learned strategy needs a policy bundle (--policy)".into()))
            }
            (None, _) => Ok(None),
        }
    }

    /// Environment settings for evaluation trials.
    pub fn trial_env(&self) -> EnvConfig {
        let period = self.env.vehicle.control_period;
        EnvConfig {
            speed_scale: self.speed_scale,
            speed_scale_range: None,
            random_spawn: false,
            start_offset: self.rolling_start,
            max_laps: Some(self.laps),
            max_steps: (((self.laps + 1) as f64 * self.max_lap_time) / period).ceil() as usize,
            mcl: self.mcl.then(|| self.env.mcl.unwrap_or_default()),
            ..self.env.clone()
        }
    }

    /// Writes the resolved config next to run outputs.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let path = dir.as_ref().join("config.toml");
        std::fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))
    }
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}
