use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::plot::{Plot, Series, PALETTE};
use super::trial::{lookahead_split, run_trial, LapReport};
use super::{create_dir, ExperimentConfig, PreparedTrack, StrategyConfig};
use crate::controller::StrategyKind;
use crate::geometry::Vec2;
use crate::learning::PolicyBundle;
use crate::{Error, Result};

/// Fixed, scheduled and learned controllers on one track at one speed scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub track: String,
    pub speed_scale: f64,
    pub laps: usize,
    pub config_hash: String,
    pub reports: Vec<LapReport>,
}

impl Comparison {
    pub fn report(&self, kind: StrategyKind) -> Option<&LapReport> {
        self.reports.iter().find(|r| r.strategy == kind)
    }

    /// Lap-time table: one row per controller, DNF rows without statistics.
    pub fn markdown(&self) -> String {
        let mut md = String::new();
        let _ = writeln!(md, "# {} at speed scale {}\n", self.track, self.speed_scale);
        let _ = writeln!(
            md,
            "| Controller | Mean [s] | Std [s] | Min [s] | Max [s] | Laps | Straight L_d [m] | Corner L_d [m] |"
        );
        let _ = writeln!(md, "|---|---|---|---|---|---|---|---|");
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
        for r in &self.reports {
            let (ls, lc) = lookahead_split(&r.trace);
            let cells = match r.stats {
                Some(s) => format!("{:.2} | {:.3} | {:.2} | {:.2}", s.mean, s.std, s.min, s.max),
                None => "DNF | - | - | -".to_string(),
            };
            let _ = writeln!(
                md,
                "| {} | {cells} | {}/{} ({}) | {} | {} |",
                r.strategy.name(),
                r.completed,
                r.laps,
                format!("{:?}", r.end).to_lowercase(),
                opt(ls),
                opt(lc)
            );
        }
        let _ = writeln!(md, "\nconfig hash: `{}`", self.config_hash);
        md
    }

    /// Markdown and CSV tables, per-controller traces and the three SVG plots.
    pub fn write_to(&self, dir: impl AsRef<Path>, track: &PreparedTrack) -> Result<()> {
        let dir = dir.as_ref();
        create_dir(dir)?;
        let md = dir.join("comparison.md");
        std::fs::write(&md, self.markdown()).map_err(|e| Error::io(&md, e))?;
        LapReport::write_summary_csv(&self.reports, dir.join("comparison.csv"))?;
        for r in &self.reports {
            r.write_trace_csv(dir.join(format!("{}_trace.csv", r.strategy.name())))?;
            r.write_laps_csv(dir.join(format!("{}_laps.csv", r.strategy.name())))?;
        }
        trajectory_plot(track, &self.reports).save(dir.join("trajectory.svg"))?;
        trace_plot("Lookahead vs station", "L_d [m]", &self.reports, |r| r.lookahead)
            .save(dir.join("lookahead.svg"))?;
        trace_plot("Speed vs station", "v [m/s]", &self.reports, |r| r.v).save(dir.join("speed.svg"))
    }
}

/// Track boundaries, raceline and every controller's path.
pub fn trajectory_plot(track: &PreparedTrack, reports: &[LapReport]) -> Plot {
    let mut p = Plot::new(format!("Trajectories on {}", track.name), "x [m]", "y [m]");
    p.equal_aspect = true;
    let close = |mut v: Vec<Vec2>| {
        if let Some(&first) = v.first() {
            v.push(first);
        }
        v
    };
    let c = &track.track.centerline;
    let mut left = Series::new("", close(c.left_boundary(&track.track.arc)), "#444444");
    let mut right = Series::new("", close(c.right_boundary(&track.track.arc)), "#444444");
    left.width = 2.0;
    right.width = 2.0;
    p.series.push(left);
    p.series.push(right);
    let mut line = Series::new("raceline", close(track.raceline.points.clone()), "#aaaaaa");
    line.width = 1.0;
    p.series.push(line);
    for (i, r) in reports.iter().enumerate() {
        let pts = r.trace.iter().map(|t| Vec2::new(t.x, t.y)).collect();
        p.series.push(Series::new(r.strategy.name(), pts, PALETTE[i % PALETTE.len()]));
    }
    p
}

/// A trace quantity against raceline station over the final completed lap, or
/// the whole run when no lap finished.
pub fn trace_plot(title: &str, y_label: &str, reports: &[LapReport], f: fn(&super::TraceRow) -> f64) -> Plot {
    let mut p = Plot::new(title, "s [m]", y_label);
    for (i, r) in reports.iter().enumerate() {
        let start = last_lap_start(r);
        let mut pts: Vec<Vec2> = Vec::new();
        for t in &r.trace[start..] {
            // break the polyline where the station wraps
            if pts.last().is_some_and(|q| t.s < q.x - 1.0) {
                pts.push(Vec2::new(f64::NAN, f64::NAN));
            }
            pts.push(Vec2::new(t.s, f(t)));
        }
        let mut segs = pts.split(|q| !q.is_finite()).filter(|s| !s.is_empty());
        let color = PALETTE[i % PALETTE.len()];
        if let Some(first) = segs.next() {
            p.series.push(Series::new(r.strategy.name(), first.to_vec(), color));
        }
        for s in segs {
            p.series.push(Series::new("", s.to_vec(), color));
        }
    }
    p
}

fn last_lap_start(r: &LapReport) -> usize {
    match r.lap_times.len() {
        0 | 1 => 0,
        n => {
            let t_prev: f64 = r.lap_times[..n - 1].iter().sum();
            let t0 = r.trace.first().map_or(0.0, |t| t.t);
            r.trace.partition_point(|t| t.t - t0 < t_prev)
        }
    }
}

/// Runs the three controllers in parallel on one track.
pub fn compare_controllers(cfg: &ExperimentConfig, track: &PreparedTrack, policy: &PolicyBundle) -> Result<Comparison> {
    cfg.validate()?;
    let kinds = [StrategyKind::Fixed, StrategyKind::Scheduled, StrategyKind::Learned];
    let reports = kinds
        .par_iter()
        .map(|&kind| {
            let c = ExperimentConfig { strategy: StrategyConfig { kind, ..cfg.strategy }, ..cfg.clone() };
            run_trial(&c, track, Some(policy))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison {
        track: track.name.clone(),
        speed_scale: cfg.speed_scale,
        laps: cfg.laps,
        config_hash: cfg.hash(),
        reports,
    })
}
