//! `rlpp`: build racelines, train lookahead policies and run lap-time experiments.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rlpp_core::controller::StrategyKind;
use rlpp_core::harness::plot::{Plot, Series, PALETTE};
use rlpp_core::harness::{
    compare_controllers, mcl_demo, monotonicity_exceptions, prepare_track, run_trial, sweep_speed_scale, trace_plot,
    train_policy, trajectory_plot, write_pose_csv, ExperimentConfig, LapReport, PreparedTrack, SweepRow, TrackSource,
};
use rlpp_core::learning::{LogRow, PolicyBundle};
use rlpp_core::track::write_track_csv;
use rlpp_core::Vec2;

#[derive(Parser)]
#[command(name = "rlpp", version, about = "Pure Pursuit racing with learned lookahead")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Corpus track name (circuit, oval, chicane, hairpin) or racetrack CSV.
    #[arg(long, global = true)]
    track: Option<TrackSource>,
    /// Policy bundle JSON for the learned strategy.
    #[arg(long, global = true)]
    policy: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    strategy: Option<Strategy>,
    /// Fixed lookahead distance, meters.
    #[arg(long, global = true)]
    lookahead: Option<f64>,
    /// Multiplier on the raceline speed profile.
    #[arg(long, global = true)]
    speed_scale: Option<f64>,
    #[arg(long, global = true)]
    laps: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Drive on the particle-filter pose estimate.
    #[arg(long, global = true)]
    mcl: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Fixed,
    Scheduled,
    Learned,
}

impl From<Strategy> for StrategyKind {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::Fixed => StrategyKind::Fixed,
            Strategy::Scheduled => StrategyKind::Scheduled,
            Strategy::Learned => StrategyKind::Learned,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the raceline and velocity profile of a track.
    Raceline,
    /// Train a lookahead policy on the training track.
    Train {
        /// Environment steps, overriding the config.
        #[arg(long)]
        steps: Option<u64>,
        /// Training track, overriding the config.
        #[arg(long)]
        train_track: Option<TrackSource>,
    },
    /// Run one multi-lap trial.
    Eval,
    /// Run trials over a list of speed scales.
    Sweep {
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0])]
        scales: Vec<f64>,
    },
    /// Fixed, scheduled and learned controllers side by side.
    Compare,
    /// Trial driven on the particle-filter estimate, with localization error.
    #[command(name = "mcl-demo")]
    McLDemo,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = resolve(&cli.common)?;
    match cli.command {
        Command::Raceline => raceline(&cfg),
        Command::Train { steps, train_track } => train(cfg, steps, train_track),
        Command::Eval => eval(&cfg),
        Command::Sweep { scales } => sweep(&cfg, &scales),
        Command::Compare => compare(&cfg),
        Command::McLDemo => mcl(&cfg),
    }
}

fn resolve(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(t) = &c.track {
        cfg.track = t.clone();
    }
    if let Some(p) = &c.policy {
        cfg.policy = Some(p.clone());
    }
    if let Some(s) = c.strategy {
        cfg.strategy.kind = s.into();
    }
    if let Some(l) = c.lookahead {
        cfg.strategy.lookahead = l;
    }
    if let Some(s) = c.speed_scale {
        cfg.speed_scale = s;
    }
    if let Some(n) = c.laps {
        cfg.laps = n;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = Some(o.clone());
    }
    cfg.mcl |= c.mcl;
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig, default: &str) -> Result<PathBuf> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(default));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    cfg.write_to(&dir)?;
    Ok(dir)
}

fn load_track(cfg: &ExperimentConfig) -> Result<PreparedTrack> {
    prepare_track(&cfg.track, &cfg.build).with_context(|| format!("preparing track {}", cfg.track))
}

fn raceline(cfg: &ExperimentConfig) -> Result<()> {
    let track = load_track(cfg)?;
    let dir = out_dir(cfg, "raceline")?;
    write_track_csv(&track.track, dir.join("track.csv"))?;
    track.raceline.write_csv(dir.join("raceline.csv"))?;
    track.grid.write_pgm(dir.join("map.pgm"))?;

    let r = &track.report;
    let mut log = String::from("iteration,objective\n");
    for (i, j) in r.history.iter().enumerate() {
        log += &format!("{i},{j}\n");
    }
    std::fs::write(dir.join("optimization_log.csv"), log)?;

    let c = &track.track.centerline;
    let mut p = Plot::new(format!("Raceline on {}", track.name), "x [m]", "y [m]");
    p.equal_aspect = true;
    let closed = |mut v: Vec<Vec2>| {
        v.push(v[0]);
        v
    };
    p.series.push(Series::new("", closed(c.left_boundary(&track.track.arc)), "#444444"));
    p.series.push(Series::new("", closed(c.right_boundary(&track.track.arc)), "#444444"));
    p.series.push(Series::new("centerline", closed(track.track.points().to_vec()), "#aaaaaa"));
    p.series.push(Series::new("raceline", closed(track.raceline.points.clone()), PALETTE[0]));
    p.save(dir.join("raceline.svg"))?;

    let spacing = track.raceline.spacing();
    let mut v = Plot::new("Speed profile", "s [m]", "v [m/s]");
    let pts = track.raceline.v_max.iter().enumerate().map(|(i, &v)| Vec2::new(i as f64 * spacing, v)).collect();
    v.series.push(Series::new("v_max", pts, PALETTE[0]));
    v.save(dir.join("speed_profile.svg"))?;

    println!(
        "{}: {} waypoints, objective {:.4} -> {:.4} in {} iterations, lap length {:.1} m",
        track.name,
        track.raceline.len(),
        r.initial_objective,
        r.objective,
        r.iterations,
        spacing * track.raceline.len() as f64
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn train(mut cfg: ExperimentConfig, steps: Option<u64>, train_track: Option<TrackSource>) -> Result<()> {
    if let Some(s) = steps {
        cfg.ppo.total_steps = s;
    }
    if let Some(t) = train_track {
        cfg.train_track = t;
    }
    cfg.validate()?;
    let dir = out_dir(&cfg, "train")?;
    let mut progress = |r: &LogRow| {
        println!(
            "step {:>8}  eval reward {:>9.2}  episode length {:>6.0}  entropy {:.3}",
            r.step, r.eval_mean_reward, r.eval_ep_len, r.entropy
        )
    };
    let result = train_policy(&cfg, Some(&dir), Some(&mut progress))?;
    let log = &result.log;
    let mut p = Plot::new("Evaluation reward", "step", "reward");
    p.series.push(Series::new(
        "eval",
        log.iter().map(|r| Vec2::new(r.step as f64, r.eval_mean_reward)).collect(),
        PALETTE[0],
    ));
    p.save(dir.join("training_curve.svg"))?;
    println!("best eval reward {:.2}; policy at {}", result.best_eval_reward, dir.join("policy.json").display());
    Ok(())
}

fn policy(cfg: &ExperimentConfig) -> Result<Option<PolicyBundle>> {
    Ok(cfg.load_policy()?)
}

fn print_report(r: &LapReport) {
    match r.stats {
        Some(s) => println!(
            "{} on {} at x{}: {}/{} laps, mean {:.3} s, std {:.3} s, min {:.3} s, max {:.3} s",
            r.strategy.name(),
            r.track,
            r.speed_scale,
            r.completed,
            r.laps,
            s.mean,
            s.std,
            s.min,
            s.max
        ),
        None => println!(
            "{} on {} at x{}: DNF after {}/{} laps ({:?})",
            r.strategy.name(),
            r.track,
            r.speed_scale,
            r.completed,
            r.laps,
            r.end
        ),
    }
}

fn eval(cfg: &ExperimentConfig) -> Result<()> {
    let track = load_track(cfg)?;
    let policy = policy(cfg)?;
    let dir = out_dir(cfg, "eval")?;
    let report = run_trial(cfg, &track, policy.as_ref())?;
    report.write_to(&dir)?;
    save_report_plots(&dir, &track, &report)?;
    print_report(&report);
    Ok(())
}

fn save_report_plots(dir: &Path, track: &PreparedTrack, report: &LapReport) -> Result<()> {
    let reports = std::slice::from_ref(report);
    trajectory_plot(track, reports).save(dir.join("trajectory.svg"))?;
    trace_plot("Lookahead vs station", "L_d [m]", reports, |r| r.lookahead).save(dir.join("lookahead.svg"))?;
    trace_plot("Speed vs station", "v [m/s]", reports, |r| r.v).save(dir.join("speed.svg"))?;
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, scales: &[f64]) -> Result<()> {
    if scales.is_empty() {
        bail!("--scales needs at least one value");
    }
    let track = load_track(cfg)?;
    let policy = policy(cfg)?;
    let dir = out_dir(cfg, "sweep")?;
    let rows = sweep_speed_scale(cfg, &track, policy.as_ref(), scales)?;
    SweepRow::write_csv(&rows, dir.join("sweep.csv"))?;
    let mut p = Plot::new(format!("Completion vs speed scale on {}", track.name), "speed scale", "laps completed");
    p.series.push(Series::new(
        cfg.strategy.kind.name(),
        rows.iter().map(|r| Vec2::new(r.scale, r.completed as f64)).collect(),
        PALETTE[0],
    ));
    p.save(dir.join("sweep.svg"))?;
    for r in &rows {
        let time = r.mean_lap_time.map(|t| format!("{t:.3} s")).unwrap_or_else(|| "-".into());
        println!("x{:<5} {:>2}/{} laps  mean lap {time}", r.scale, r.completed, r.laps);
    }
    match SweepRow::max_full_completion(&rows) {
        Some(s) => println!("max scale with full completion: {s}"),
        None => println!("no scale completed every lap"),
    }
    let exceptions = monotonicity_exceptions(&rows);
    if !exceptions.is_empty() {
        println!("completion rises again at scales {exceptions:?}");
    }
    Ok(())
}

fn compare(cfg: &ExperimentConfig) -> Result<()> {
    let Some(policy_path) = &cfg.policy else {
        bail!("compare needs a trained policy (--policy)");
    };
    let bundle = PolicyBundle::load(policy_path).with_context(|| format!("loading {}", policy_path.display()))?;
    let track = load_track(cfg)?;
    let dir = out_dir(cfg, "compare")?;
    let cmp = compare_controllers(cfg, &track, &bundle)?;
    cmp.write_to(&dir, &track)?;
    print!("{}", cmp.markdown());
    Ok(())
}

fn mcl(cfg: &ExperimentConfig) -> Result<()> {
    let track = load_track(cfg)?;
    let policy = policy(cfg)?;
    let dir = out_dir(cfg, "mcl-demo")?;
    let (report, rows) = mcl_demo(cfg, &track, policy.as_ref())?;
    report.write_to(&dir)?;
    write_pose_csv(&rows, dir.join("localization.csv"))?;
    save_report_plots(&dir, &track, &report)?;
    let mut p = Plot::new("Localization error", "t [s]", "position error [m]");
    p.series.push(Series::new("position", rows.iter().map(|r| Vec2::new(r.t, r.position_error)).collect(), PALETTE[0]));
    p.save(dir.join("localization_error.svg"))?;
    print_report(&report);
    if !rows.is_empty() {
        let n = rows.len() as f64;
        let pos = rows.iter().map(|r| r.position_error).sum::<f64>() / n;
        let head = rows.iter().map(|r| r.heading_error.to_degrees()).sum::<f64>() / n;
        println!("mean localization error {pos:.3} m, {head:.2} deg over {} steps", rows.len());
    }
    Ok(())
}
