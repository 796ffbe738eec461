//! Minimum-curvature racing line and its friction-limited speed profile.

mod optimize;
mod velocity;

pub use optimize::{curvature_cost, optimize_min_curvature, OptimizationReport, OptimizerConfig, RacelineProblem};
pub use velocity::{friction_circle_excess, pointwise_speed_limit, velocity_profile, SpeedLimits};

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::track::{curvature_profile, PeriodicSpline, Track, WaypointPath, DEFAULT_STEPSIZE};

/// Which speed profile a raceline carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Pointwise,
    #[default]
    Smoothed,
}

/// Everything needed to turn a track into a raceline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RacelineParams {
    pub margin: f64,
    /// Spacing of the output waypoints.
    pub stepsize: f64,
    /// Centerline spacing the offsets are optimized on.
    pub optimization_stepsize: f64,
    pub optimizer: OptimizerConfig,
    pub limits: SpeedLimits,
    pub profile: ProfileKind,
}

impl Default for RacelineParams {
    fn default() -> Self {
        Self {
            margin: 0.45,
            stepsize: DEFAULT_STEPSIZE,
            optimization_stepsize: 1.0,
            optimizer: OptimizerConfig::default(),
            limits: SpeedLimits::default(),
            profile: ProfileKind::Smoothed,
        }
    }
}

/// Periodic reference trajectory: stations, positions, curvature, speed limit.
#[derive(Debug, Clone, PartialEq)]
pub struct Raceline {
    pub s: Vec<f64>,
    pub points: Vec<Vec2>,
    pub kappa: Vec<f64>,
    pub v_max: Vec<f64>,
    /// Closed-loop length (last station plus the closing chord).
    pub length: f64,
}

impl WaypointPath for Raceline {
    fn waypoints(&self) -> &[Vec2] {
        &self.points
    }
    fn stations(&self) -> &[f64] {
        &self.s
    }
}

impl Raceline {
    /// Assembles a raceline from closed-loop samples, recomputing stations.
    pub fn from_parts(points: Vec<Vec2>, kappa: Vec<f64>, v_max: Vec<f64>) -> Result<Self> {
        let n = points.len();
        if n < 3 || kappa.len() != n || v_max.len() != n {
            return Err(Error::Geometry("raceline sequences must be parallel and non-trivial".into()));
        }
        if let Some(i) = v_max.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::Geometry(format!("non-positive speed limit at waypoint {i}")));
        }
        let mut s = Vec::with_capacity(n);
        let mut acc = 0.0;
        for i in 0..n {
            s.push(acc);
            acc += points[i].distance(points[(i + 1) % n]);
        }
        Ok(Self { s, points, kappa, v_max, length: acc })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Mean spacing between consecutive waypoints.
    pub fn spacing(&self) -> f64 {
        self.length / self.len() as f64
    }

    /// Index of the waypoint `distance` meters of arc ahead of waypoint `from`,
    /// wrapping around the loop.
    pub fn index_ahead(&self, from: usize, distance: f64) -> usize {
        let n = self.len();
        let target = (self.s[from] + distance).rem_euclid(self.length);
        // stations are sorted; take the last station not beyond the target
        let idx = self.s.partition_point(|&s| s <= target);
        (idx + n - 1) % n
    }

    /// Circular track of radius `radius` with constant speed limit, useful as a fixture.
    pub fn circle(radius: f64, spacing: f64, speed: f64) -> Result<Self> {
        let n = ((2.0 * std::f64::consts::PI * radius / spacing).round() as usize).max(16);
        let points: Vec<Vec2> =
            (0..n).map(|i| Vec2::from_angle(2.0 * std::f64::consts::PI * i as f64 / n as f64) * radius).collect();
        let kappa = curvature_profile(&points, true)?;
        Self::from_parts(points, kappa, vec![speed; n])
    }

    /// Writes the `# s_m;x_m;y_m;kappa;v_mps` waypoint file.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("# s_m;x_m;y_m;kappa;v_mps\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{};{};{};{};{}\n",
                self.s[i], self.points[i].x, self.points[i].y, self.kappa[i], self.v_max[i]
            ));
        }
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Reads a waypoint file written by [`Raceline::write_csv`].
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut s = Vec::new();
        let mut points = Vec::new();
        let mut kappa = Vec::new();
        let mut v_max = Vec::new();
        for (lineno, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals = line
                .split(';')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Ingestion(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
            let [si, x, y, k, v] = vals[..] else {
                return Err(Error::Ingestion(format!(
                    "{}:{}: expected 5 fields, found {}",
                    path.display(),
                    lineno + 1,
                    vals.len()
                )));
            };
            s.push(si);
            points.push(Vec2::new(x, y));
            kappa.push(k);
            v_max.push(v);
        }
        let mut line = Self::from_parts(points, kappa, v_max)?;
        // keep the stored stations verbatim
        line.s = s;
        Ok(line)
    }
}

/// Optimizes offsets, resamples the optimal path uniformly, recomputes its
/// curvature and attaches the speed profile.
pub fn build_raceline(track: &Track, params: &RacelineParams) -> Result<(Raceline, OptimizationReport)> {
    let coarse = Track::resampled(track.name.clone(), track.centerline.clone(), params.optimization_stepsize)?;
    let problem = RacelineProblem::new(&coarse, params.margin)?;
    let report = optimize_min_curvature(&problem, &params.optimizer)?;
    let path = problem.path(&report.offsets);
    let spline = PeriodicSpline::new(&path);
    let count = ((spline.period() / params.stepsize).round() as usize).max(16);
    let (points, _, _) = spline.resample_uniform(count);
    let kappa = curvature_profile(&points, true)?;
    let mut line = Raceline::from_parts(points, kappa, vec![1.0; count])?;
    let ds = line.spacing();
    line.v_max = match params.profile {
        ProfileKind::Pointwise => pointwise_speed_limit(&line.kappa, &params.limits),
        ProfileKind::Smoothed => velocity_profile(&line.kappa, ds, &params.limits),
    };
    Ok((line, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::{circle_track, corpus_track, project_to_path, CorpusTrack};

    #[test]
    fn annulus_raceline_hugs_the_outer_wall_at_constant_speed() {
        let t = circle_track(20.0, 1.8, 0.25).unwrap();
        let params = RacelineParams::default();
        let (line, _) = build_raceline(&t, &params).unwrap();
        let mean_r = line.points.iter().map(|p| p.norm()).sum::<f64>() / line.len() as f64;
        let outer = 20.0 + 1.8 - params.margin;
        assert!((mean_r - outer).abs() < 0.05, "radius {mean_r}");
        let vmean = line.v_max.iter().sum::<f64>() / line.len() as f64;
        assert!(line.v_max.iter().all(|v| (v - vmean).abs() < 0.01 * vmean));
    }

    #[test]
    fn oval_is_fast_on_straights_and_slow_in_corners() {
        let t = corpus_track(CorpusTrack::Oval, 0.25).unwrap();
        let (line, _) = build_raceline(&t, &RacelineParams::default()).unwrap();
        let cap = RacelineParams::default().limits.v_cap;
        let straight_v: Vec<f64> =
            (0..line.len()).filter(|&i| line.kappa[i].abs() < 1e-3).map(|i| line.v_max[i]).collect();
        assert!(!straight_v.is_empty());
        assert!(straight_v.iter().any(|v| (v - cap).abs() < 1e-9));
        let vmin = line.v_max.iter().cloned().fold(f64::MAX, f64::min);
        assert!(vmin < 0.8 * cap);
        // within the corridor
        let problem = RacelineProblem::new(&t, RacelineParams::default().margin).unwrap();
        for p in &line.points {
            let proj = project_to_path(&t, *p);
            assert!(proj.offset >= problem.d_min[proj.index] - 0.02);
            assert!(proj.offset <= problem.d_max[proj.index] + 0.02);
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = corpus_track(CorpusTrack::Hairpin, 0.5).unwrap();
        let params = RacelineParams {
            stepsize: 0.5,
            optimizer: OptimizerConfig { iters: 50, ..Default::default() },
            ..Default::default()
        };
        let (line, _) = build_raceline(&t, &params).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("line.csv");
        line.write_csv(&path).unwrap();
        let back = Raceline::load_csv(&path).unwrap();
        assert_eq!(back, line);
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("# s_m;x_m;y_m;kappa;v_mps\n"));
    }

    #[test]
    fn index_ahead_wraps() {
        let line = Raceline::circle(10.0, 0.25, 5.0).unwrap();
        let n = line.len();
        assert_eq!(line.index_ahead(0, 0.0), 0);
        let i = line.index_ahead(n - 2, 1.0);
        assert!(i < 5, "{i}");
    }
}
