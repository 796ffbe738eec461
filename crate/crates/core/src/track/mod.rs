//! Racetrack geometry: centerline with half-widths, arc-length parameterization,
//! curvature, nearest-waypoint projection, occupancy grids and raycasting.

mod corpus;
mod grid;
mod io;
mod spline;

pub use corpus::{circle_track, corpus_track, CorpusTrack};
pub use grid::{rasterize, raycast, OccupancyGrid, DEFAULT_GRID_RESOLUTION};
pub use io::{load_track, write_track_csv};
pub use spline::PeriodicSpline;

use crate::error::{Error, Result};
use crate::geometry::{segments_intersect, Vec2};

/// Default waypoint spacing used when ingesting tracks, in meters.
pub const DEFAULT_STEPSIZE: f64 = 0.25;

const MIN_POINTS: usize = 16;
const MIN_SEGMENT: f64 = 1e-9;

/// Closed centerline with per-point left/right half-widths.
#[derive(Debug, Clone, PartialEq)]
pub struct Centerline {
    pub points: Vec<Vec2>,
    pub w_left: Vec<f64>,
    pub w_right: Vec<f64>,
    pub closed: bool,
}

impl Centerline {
    /// Builds a closed centerline, checking every ingestion invariant.
    pub fn new(points: Vec<Vec2>, w_left: Vec<f64>, w_right: Vec<f64>) -> Result<Self> {
        let c = Self { points, w_left, w_right, closed: true };
        c.validate()?;
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if n < MIN_POINTS {
            return Err(Error::Ingestion(format!("centerline has {n} points, at least {MIN_POINTS} required")));
        }
        if self.w_left.len() != n || self.w_right.len() != n {
            return Err(Error::Ingestion("width columns do not match point count".into()));
        }
        if let Some(i) = (0..n).find(|&i| !self.points[i].is_finite()) {
            return Err(Error::Ingestion(format!("non-finite coordinate at point {i}")));
        }
        for i in 0..n {
            let j = (i + 1) % n;
            if self.points[i].distance(self.points[j]) <= MIN_SEGMENT {
                return Err(Error::Ingestion(format!("consecutive points {i} and {j} coincide")));
            }
        }
        if let Some(i) = (0..n).find(|&i| !(self.w_left[i] > 0.0 && self.w_right[i] > 0.0)) {
            return Err(Error::Ingestion(format!("non-positive track width at point {i}")));
        }
        if let Some((i, j)) = first_self_intersection(&self.points) {
            return Err(Error::Ingestion(format!("centerline is self-intersecting (segments {i} and {j})")));
        }
        Ok(())
    }

    pub fn left_boundary(&self, arc: &ArcParam) -> Vec<Vec2> {
        self.points.iter().zip(&arc.normal).zip(&self.w_left).map(|((p, n), w)| *p + *n * *w).collect()
    }

    pub fn right_boundary(&self, arc: &ArcParam) -> Vec<Vec2> {
        self.points.iter().zip(&arc.normal).zip(&self.w_right).map(|((p, n), w)| *p - *n * *w).collect()
    }
}

fn first_self_intersection(points: &[Vec2]) -> Option<(usize, usize)> {
    let n = points.len();
    for i in 0..n {
        let (a0, a1) = (points[i], points[(i + 1) % n]);
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_intersect(a0, a1, points[j], points[(j + 1) % n]) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Arc-length parameterization of a closed polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcParam {
    pub s: Vec<f64>,
    pub length: f64,
    pub tangent: Vec<Vec2>,
    /// Unit left normal (tangent rotated +90 degrees).
    pub normal: Vec<Vec2>,
}

impl ArcParam {
    pub fn closed(points: &[Vec2]) -> Result<Self> {
        let n = points.len();
        if n < 3 {
            return Err(Error::Geometry("need at least 3 points".into()));
        }
        let mut s = Vec::with_capacity(n);
        let mut acc = 0.0;
        for i in 0..n {
            s.push(acc);
            acc += points[i].distance(points[(i + 1) % n]);
        }
        let tangent = (0..n)
            .map(|i| {
                let d = points[(i + 1) % n] - points[(i + n - 1) % n];
                d.normalized().ok_or_else(|| Error::Geometry(format!("degenerate tangent at point {i}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let normal = tangent.iter().map(|t| t.perp()).collect();
        Ok(Self { s, length: acc, tangent, normal })
    }
}

/// A validated closed track: resampled centerline with its arc parameterization.
#[derive(Debug, Clone)]
pub struct Track {
    pub name: String,
    pub centerline: Centerline,
    pub arc: ArcParam,
}

impl Track {
    /// Wraps an already-sampled centerline without resampling it.
    pub fn from_centerline(name: impl Into<String>, centerline: Centerline) -> Result<Self> {
        let arc = ArcParam::closed(&centerline.points)?;
        Ok(Self { name: name.into(), centerline, arc })
    }

    /// Validates raw samples, then resamples them with a periodic cubic spline
    /// at uniform arc-length spacing close to `stepsize`.
    pub fn resampled(name: impl Into<String>, raw: Centerline, stepsize: f64) -> Result<Self> {
        if !(stepsize > 0.0 && stepsize.is_finite()) {
            return Err(Error::Ingestion(format!("stepsize must be positive, got {stepsize}")));
        }
        raw.validate()?;
        let spline = PeriodicSpline::new(&raw.points);
        let approx_len = spline.period();
        let count = ((approx_len / stepsize).round() as usize).max(MIN_POINTS);
        let (points, coords, _) = spline.resample_uniform(count);
        let n = raw.len();
        let interp = |w: &[f64], c: f64| {
            let i = (c.floor() as usize) % n;
            let t = c - c.floor();
            w[i] * (1.0 - t) + w[(i + 1) % n] * t
        };
        let w_left = coords.iter().map(|&c| interp(&raw.w_left, c)).collect();
        let w_right = coords.iter().map(|&c| interp(&raw.w_right, c)).collect();
        let centerline = Centerline::new(points, w_left, w_right)?;
        Self::from_centerline(name, centerline)
    }

    pub fn len(&self) -> usize {
        self.centerline.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centerline.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.arc.length
    }

    pub fn points(&self) -> &[Vec2] {
        &self.centerline.points
    }

    pub fn curvature(&self) -> Result<Vec<f64>> {
        curvature_profile(&self.centerline.points, true)
    }
}

/// Signed curvature of a sampled path (left turns positive), from three-point
/// finite differences over the chord-length grid. Closed paths wrap periodically;
/// open paths copy the neighbouring value at each end.
pub fn curvature_profile(path: &[Vec2], closed: bool) -> Result<Vec<f64>> {
    let n = path.len();
    if n < 8 {
        return Err(Error::Geometry(format!("curvature needs at least 8 points, got {n}")));
    }
    let mut kappa = vec![0.0; n];
    let interior = if closed { 0..n } else { 1..n - 1 };
    for i in interior {
        let prev = path[(i + n - 1) % n];
        let cur = path[i];
        let next = path[(i + 1) % n];
        let h1 = cur.distance(prev);
        let h2 = next.distance(cur);
        if h1 * h1 < 1e-12 || h2 * h2 < 1e-12 {
            return Err(Error::Geometry(format!("degenerate segment at point {i}")));
        }
        let w_prev = -h2 / (h1 * (h1 + h2));
        let w_cur = (h2 - h1) / (h1 * h2);
        let w_next = h1 / (h2 * (h1 + h2));
        let d1 = prev * w_prev + cur * w_cur + next * w_next;
        let d2 = (prev * (1.0 / (h1 * (h1 + h2))) - cur * (1.0 / (h1 * h2)) + next * (1.0 / (h2 * (h1 + h2)))) * 2.0;
        let speed_sq = d1.norm_sq();
        if speed_sq < 1e-12 {
            return Err(Error::Geometry(format!("degenerate derivative at point {i}")));
        }
        kappa[i] = d1.cross(d2) / speed_sq.powf(1.5);
    }
    if !closed {
        kappa[0] = kappa[1];
        kappa[n - 1] = kappa[n - 2];
    }
    Ok(kappa)
}

/// Anything with sampled waypoints and their stations along a closed loop.
pub trait WaypointPath {
    fn waypoints(&self) -> &[Vec2];
    fn stations(&self) -> &[f64];
}

impl WaypointPath for Track {
    fn waypoints(&self) -> &[Vec2] {
        &self.centerline.points
    }
    fn stations(&self) -> &[f64] {
        &self.arc.s
    }
}

/// Result of projecting a point onto a waypoint path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub index: usize,
    pub s: f64,
    /// Signed lateral offset, positive to the left of travel.
    pub offset: f64,
}

/// Unit left normal at waypoint `i` of a closed path.
pub fn path_normal(points: &[Vec2], i: usize) -> Vec2 {
    let n = points.len();
    if n < 2 {
        return Vec2::new(0.0, 1.0);
    }
    let d = points[(i + 1) % n] - points[(i + n - 1) % n];
    d.normalized().unwrap_or(Vec2::new(1.0, 0.0)).perp()
}

/// Nearest waypoint by Euclidean distance; ties go to the lower index.
pub fn project_to_path<P: WaypointPath + ?Sized>(path: &P, point: Vec2) -> Projection {
    let pts = path.waypoints();
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in pts.iter().enumerate() {
        let d = p.distance(point);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    let offset = (point - pts[best]).dot(path_normal(pts, best));
    Projection { index: best, s: path.stations()[best], offset }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle_points(radius: f64, spacing: f64, ccw: bool) -> Vec<Vec2> {
        let n = (2.0 * PI * radius / spacing).round() as usize;
        (0..n)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / n as f64;
                let t = if ccw { t } else { -t };
                Vec2::from_angle(t) * radius
            })
            .collect()
    }

    #[test]
    fn curvature_of_circles() {
        let ccw = curvature_profile(&circle_points(10.0, 0.25, true), true).unwrap();
        assert!(ccw.iter().all(|k| (k - 0.1).abs() < 1e-3));
        let cw = curvature_profile(&circle_points(10.0, 0.25, false), true).unwrap();
        assert!(cw.iter().all(|k| (k + 0.1).abs() < 1e-3));
    }

    #[test]
    fn curvature_of_straight_open_path() {
        let pts: Vec<Vec2> = (0..20).map(|i| Vec2::new(0.3 * i as f64, 0.1 * i as f64)).collect();
        let k = curvature_profile(&pts, false).unwrap();
        assert!(k.iter().all(|k| k.abs() < 1e-9));
    }

    #[test]
    fn curvature_rejects_degenerate_input() {
        let mut pts = circle_points(10.0, 1.0, true);
        pts[5] = pts[4];
        assert!(matches!(curvature_profile(&pts, true), Err(Error::Geometry(_))));
        assert!(curvature_profile(&pts[..5], true).is_err());
    }

    fn straight_path() -> Track {
        let pts: Vec<Vec2> = circle_points(50.0, 0.5, true);
        let n = pts.len();
        Track::from_centerline("c", Centerline::new(pts, vec![1.0; n], vec![1.0; n]).unwrap()).unwrap()
    }

    #[test]
    fn projection_exact_hit_and_offset() {
        let t = straight_path();
        let p = project_to_path(&t, t.points()[7]);
        assert_eq!(p.index, 7);
        assert_eq!(p.s, t.arc.s[7]);
        assert!(p.offset.abs() < 1e-12);

        let q = t.points()[7] + t.arc.normal[7] * 0.5;
        let proj = project_to_path(&t, q);
        assert_eq!(proj.index, 7);
        assert!((proj.offset - 0.5).abs() < 1e-6);
    }

    #[test]
    fn projection_tie_goes_to_lower_index() {
        let t = straight_path();
        let mid = t.points()[3].lerp(t.points()[4], 0.5);
        assert_eq!(project_to_path(&t, mid).index, 3);
    }

    #[test]
    fn centerline_rejects_bad_input() {
        let pts = circle_points(5.0, 1.0, true);
        let n = pts.len();
        let err = Centerline::new(pts[..10].to_vec(), vec![1.0; 10], vec![1.0; 10]).unwrap_err();
        assert!(err.to_string().contains("at least 16"));
        let mut w = vec![1.0; n];
        w[3] = 0.0;
        assert!(Centerline::new(pts.clone(), w, vec![1.0; n]).is_err());

        // figure-eight
        let eight: Vec<Vec2> = (0..64)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / 64.0;
                Vec2::new(10.0 * t.sin(), 5.0 * (2.0 * t).sin())
            })
            .collect();
        let err = Centerline::new(eight, vec![1.0; 64], vec![1.0; 64]).unwrap_err();
        assert!(err.to_string().contains("self-intersecting"));
    }

    #[test]
    fn arc_param_invariants() {
        let t = straight_path();
        assert_eq!(t.arc.s[0], 0.0);
        assert!(t.arc.s.windows(2).all(|w| w[1] > w[0]));
        let n = t.len();
        let closing = t.points()[n - 1].distance(t.points()[0]);
        assert!((t.arc.length - (t.arc.s[n - 1] + closing)).abs() < 1e-12);
        for (tg, nm) in t.arc.tangent.iter().zip(&t.arc.normal) {
            assert!((tg.norm() - 1.0).abs() < 1e-9);
            assert!((nm.norm() - 1.0).abs() < 1e-9);
            assert!(nm.distance(tg.perp()) < 1e-15);
        }
    }

    #[test]
    fn uniform_input_is_a_resampling_fixed_point() {
        // chord spacing exactly 1.0
        let n = 80;
        let radius = 0.5 / (PI / n as f64).sin();
        let pts: Vec<Vec2> = (0..n).map(|i| Vec2::from_angle(2.0 * PI * i as f64 / n as f64) * radius).collect();
        let raw = Centerline::new(pts.clone(), vec![1.0; n], vec![1.0; n]).unwrap();
        let t = Track::resampled("fixed", raw, 1.0).unwrap();
        assert_eq!(t.len(), n);
        for (a, b) in t.points().iter().zip(&pts) {
            assert!(a.distance(*b) < 1e-6, "{a:?} vs {b:?}");
        }
    }
}
