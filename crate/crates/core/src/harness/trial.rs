use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{create_dir, prepare_track, ExperimentConfig, PreparedTrack, StrategyConfig};
use crate::controller::StrategyKind;
use crate::environment::{EndReason, EnvConfig, RacingEnv, StepOutcome};
use crate::learning::{train, write_training_log, LogRow, PolicyBundle, TrainOptions, TrainOutput};
use crate::{wrap_angle, Error, Pose, Result};

/// Curvature below which a waypoint counts as straight, 1/m.
pub const STRAIGHT_KAPPA: f64 = 0.02;
/// Curvature above which a waypoint counts as a corner, 1/m.
pub const CORNER_KAPPA: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LapStats {
    pub mean: f64,
    /// Sample standard deviation; zero for a single lap.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl LapStats {
    pub fn from_laps(laps: &[f64]) -> Option<Self> {
        if laps.is_empty() {
            return None;
        }
        let n = laps.len() as f64;
        let mean = laps.iter().sum::<f64>() / n;
        let var = if laps.len() > 1 { laps.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Some(Self {
            mean,
            std: var.sqrt(),
            min: laps.iter().cloned().fold(f64::INFINITY, f64::min),
            max: laps.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// One control step of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub delta: f64,
    pub lookahead: f64,
    /// Station and curvature of the nearest raceline waypoint.
    pub s: f64,
    pub kappa: f64,
    pub estimate: Option<Pose>,
}

/// Outcome of a multi-lap trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LapReport {
    pub track: String,
    pub strategy: StrategyKind,
    pub speed_scale: f64,
    pub laps: usize,
    pub lap_times: Vec<f64>,
    /// Absent for DNF trials.
    pub stats: Option<LapStats>,
    pub completed: usize,
    pub dnf: bool,
    pub end: EndReason,
    pub config_hash: String,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

impl LapReport {
    pub fn write_trace_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "x", "y", "theta", "v", "delta", "L_d"])?;
        for r in &self.trace {
            w.write_record([r.t, r.x, r.y, r.theta, r.v, r.delta, r.lookahead].map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_laps_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["lap", "time"])?;
        for (i, t) in self.lap_times.iter().enumerate() {
            w.write_record([(i + 1).to_string(), t.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn summary_header() -> [&'static str; 12] {
        [
            "track",
            "controller",
            "speed_scale",
            "completed",
            "laps",
            "dnf",
            "end",
            "mean",
            "std",
            "min",
            "max",
            "config_hash",
        ]
    }

    pub fn summary_record(&self) -> Vec<String> {
        let stat = |f: fn(&LapStats) -> f64| self.stats.as_ref().map(|s| f(s).to_string()).unwrap_or_default();
        vec![
            self.track.clone(),
            self.strategy.name().to_string(),
            self.speed_scale.to_string(),
            self.completed.to_string(),
            self.laps.to_string(),
            self.dnf.to_string(),
            format!("{:?}", self.end).to_lowercase(),
            stat(|s| s.mean),
            stat(|s| s.std),
            stat(|s| s.min),
            stat(|s| s.max),
            self.config_hash.clone(),
        ]
    }

    pub fn write_summary_csv(reports: &[LapReport], path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(Self::summary_header())?;
        for r in reports {
            w.write_record(r.summary_record())?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Trace, lap list and summary under `dir`, file names prefixed by the controller.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        create_dir(dir)?;
        let name = self.strategy.name();
        self.write_trace_csv(dir.join(format!("{name}_trace.csv")))?;
        self.write_laps_csv(dir.join(format!("{name}_laps.csv")))?;
        Self::write_summary_csv(std::slice::from_ref(self), dir.join(format!("{name}_report.csv")))
    }
}

/// Mean lookahead on straights and in corners of a trace.
pub fn lookahead_split(trace: &[TraceRow]) -> (Option<f64>, Option<f64>) {
    let mean = |pred: &dyn Fn(f64) -> bool| {
        let (sum, n) =
            trace.iter().filter(|r| pred(r.kappa.abs())).fold((0.0, 0usize), |(s, n), r| (s + r.lookahead, n + 1));
        (n > 0).then(|| sum / n as f64)
    };
    (mean(&|k| k < STRAIGHT_KAPPA), mean(&|k| k > CORNER_KAPPA))
}

fn step_with(env: &mut RacingEnv, strategy: &StrategyConfig, policy: Option<&PolicyBundle>) -> Result<StepOutcome> {
    match strategy.kind {
        StrategyKind::Fixed => env.advance(strategy.lookahead),
        StrategyKind::Scheduled => env.advance(strategy.a + strategy.b * env.state().v),
        StrategyKind::Learned => {
            let policy = policy.ok_or_else(|| Error::Config("the learned strategy needs a policy bundle".into()))?;
            let raw = policy.act_deterministic(&env.observation().to_array());
            env.step(raw)
        }
    }
}

/// Drives the configured controller until the lap count is reached or the car
/// crashes, stalls or runs out of time.
pub fn run_trial(cfg: &ExperimentConfig, track: &PreparedTrack, policy: Option<&PolicyBundle>) -> Result<LapReport> {
    cfg.validate()?;
    if cfg.strategy.kind == StrategyKind::Learned && policy.is_none() {
        return Err(Error::Config("the learned strategy needs a policy bundle".into()));
    }
    let mut env = RacingEnv::new(track.raceline.clone(), track.grid.clone(), cfg.trial_env(), cfg.seed)?;
    env.reset()?;
    let line = track.raceline.clone();
    let mut trace = Vec::new();
    let end = loop {
        let out = step_with(&mut env, &cfg.strategy, policy)?;
        let st = out.info.state;
        trace.push(TraceRow {
            t: out.info.time,
            x: st.x,
            y: st.y,
            theta: st.theta,
            v: st.v,
            delta: out.info.steer,
            lookahead: out.info.lookahead,
            s: line.s[out.info.index],
            kappa: line.kappa[out.info.index],
            estimate: out.info.estimate,
        });
        if let Some(end) = out.info.end {
            break end;
        }
    };
    let lap_times = env.lap_times().to_vec();
    let completed = lap_times.len().min(cfg.laps);
    let dnf = completed < cfg.laps;
    Ok(LapReport {
        track: track.name.clone(),
        strategy: cfg.strategy.kind,
        speed_scale: cfg.speed_scale,
        laps: cfg.laps,
        stats: if dnf { None } else { LapStats::from_laps(&lap_times) },
        lap_times,
        completed,
        dnf,
        end,
        config_hash: cfg.hash(),
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scale: f64,
    pub completed: usize,
    pub laps: usize,
    pub dnf: bool,
    pub mean_lap_time: Option<f64>,
    pub end: EndReason,
}

/// Runs one trial per scale in parallel; rows come back sorted by scale and
/// always include the 1.0 baseline.
pub fn sweep_speed_scale(
    cfg: &ExperimentConfig,
    track: &PreparedTrack,
    policy: Option<&PolicyBundle>,
    scales: &[f64],
) -> Result<Vec<SweepRow>> {
    if scales.is_empty() {
        return Err(Error::Config("a sweep needs at least one speed scale".into()));
    }
    let mut scales = scales.to_vec();
    scales.push(1.0);
    scales.sort_by(f64::total_cmp);
    scales.dedup();
    scales
        .par_iter()
        .map(|&scale| {
            let c = ExperimentConfig { speed_scale: scale, ..cfg.clone() };
            let r = run_trial(&c, track, policy)?;
            Ok(SweepRow {
                scale,
                completed: r.completed,
                laps: r.laps,
                dnf: r.dnf,
                mean_lap_time: r.stats.map(|s| s.mean),
                end: r.end,
            })
        })
        .collect()
}

impl SweepRow {
    /// Largest scale with every lap completed.
    pub fn max_full_completion(rows: &[SweepRow]) -> Option<f64> {
        rows.iter().filter(|r| !r.dnf).map(|r| r.scale).fold(None, |m, s| Some(m.map_or(s, |m: f64| m.max(s))))
    }

    pub fn write_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["scale", "completed", "laps", "dnf", "mean_lap_time", "end"])?;
        for r in rows {
            w.write_record([
                r.scale.to_string(),
                r.completed.to_string(),
                r.laps.to_string(),
                r.dnf.to_string(),
                r.mean_lap_time.map(|t| t.to_string()).unwrap_or_default(),
                format!("{:?}", r.end).to_lowercase(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Scales at which completion rises above that of some lower scale.
pub fn monotonicity_exceptions(rows: &[SweepRow]) -> Vec<f64> {
    let mut worst = usize::MAX;
    let mut out = Vec::new();
    for r in rows {
        if r.completed > worst {
            out.push(r.scale);
        }
        worst = worst.min(r.completed);
    }
    out
}

/// Raw observations logged every `stride` steps while the scheduled controller
/// drives one episode per speed scale.
pub fn collect_observations(
    track: &PreparedTrack,
    env: &EnvConfig,
    scales: &[f64],
    max_steps: usize,
    stride: usize,
    seed: u64,
) -> Result<Vec<[f64; 5]>> {
    let strategy = StrategyConfig { kind: StrategyKind::Scheduled, ..Default::default() };
    let mut out = Vec::new();
    for (k, &scale) in scales.iter().enumerate() {
        let cfg = EnvConfig {
            speed_scale: scale,
            speed_scale_range: None,
            max_steps,
            max_laps: None,
            mcl: None,
            ..env.clone()
        };
        let mut env = RacingEnv::new(track.raceline.clone(), track.grid.clone(), cfg, seed + k as u64)?;
        env.reset()?;
        for step in 0.. {
            let o = step_with(&mut env, &strategy, None)?;
            if step % stride.max(1) == 0 {
                out.push(o.observation.to_array());
            }
            if o.done() {
                break;
            }
        }
    }
    Ok(out)
}

/// True pose against the particle-filter estimate at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_theta: f64,
    pub position_error: f64,
    pub heading_error: f64,
}

/// Runs a trial driving on the particle-filter estimate and returns it with
/// the per-step localization error.
pub fn mcl_demo(
    cfg: &ExperimentConfig,
    track: &PreparedTrack,
    policy: Option<&PolicyBundle>,
) -> Result<(LapReport, Vec<PoseRow>)> {
    let cfg = ExperimentConfig { mcl: true, ..cfg.clone() };
    let report = run_trial(&cfg, track, policy)?;
    let rows = report
        .trace
        .iter()
        .filter_map(|r| {
            let e = r.estimate?;
            Some(PoseRow {
                t: r.t,
                x: r.x,
                y: r.y,
                theta: r.theta,
                est_x: e.x,
                est_y: e.y,
                est_theta: e.heading,
                position_error: (e.x - r.x).hypot(e.y - r.y),
                heading_error: wrap_angle(e.heading - r.theta).abs(),
            })
        })
        .collect();
    Ok((report, rows))
}

pub fn write_pose_csv(rows: &[PoseRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Trains a lookahead policy on the training track with per-episode random
/// speed scales. With `out`, writes the config, checkpoints, `policy.json`
/// (best evaluation) and `training_log.csv` there.
pub fn train_policy(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
    on_eval: Option<&mut dyn FnMut(&LogRow)>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    let track = prepare_track(&cfg.train_track, &cfg.build)?;
    let train_env = EnvConfig {
        speed_scale_range: Some(cfg.train_speed_scale),
        random_spawn: true,
        max_laps: None,
        mcl: cfg.mcl.then(|| cfg.env.mcl.unwrap_or_default()),
        ..cfg.env.clone()
    };
    let eval_env = EnvConfig {
        speed_scale: cfg.train_eval_speed_scale,
        speed_scale_range: None,
        random_spawn: false,
        ..train_env.clone()
    };
    let mut env = RacingEnv::new(track.raceline.clone(), track.grid.clone(), train_env, cfg.seed)?;
    let mut eval = RacingEnv::new(track.raceline.clone(), track.grid.clone(), eval_env, cfg.seed.wrapping_add(1))?;
    if let Some(dir) = out {
        create_dir(dir)?;
        cfg.write_to(dir)?;
    }
    let options = TrainOptions {
        checkpoint_dir: out.map(Path::to_path_buf),
        init: None,
        on_eval,
        run_config: serde_json::to_value(cfg)?,
    };
    let result = train(&mut env, &mut eval, &cfg.ppo, cfg.seed, options)?;
    if let Some(dir) = out {
        result.best.save(dir.join("policy.json"))?;
        write_training_log(dir.join("training_log.csv"), &result.log)?;
    }
    Ok(result)
}
