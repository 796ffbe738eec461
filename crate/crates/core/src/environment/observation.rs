use serde::{Deserialize, Serialize};

use crate::controller::{LOOKAHEAD_MAX, LOOKAHEAD_MIN};
use crate::raceline::Raceline;
use crate::simulator::VehicleState;
use crate::track::project_to_path;

/// Arc distances ahead of the nearest waypoint at which curvature is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Horizons {
    pub medium: f64,
    pub far: f64,
}

impl Default for Horizons {
    fn default() -> Self {
        Self { medium: 3.0, far: 8.0 }
    }
}

/// Speed and absolute raceline curvature at three horizons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub v: f64,
    pub kappa0: f64,
    pub kappa1: f64,
    pub kappa2: f64,
}

pub const OBS_DIM: usize = 5;

impl Observation {
    pub fn delta_kappa(&self) -> f64 {
        self.kappa1 - self.kappa0
    }

    pub fn max_kappa(&self) -> f64 {
        self.kappa0.max(self.kappa1).max(self.kappa2)
    }

    /// `[v, k0, k1, k2, k1 - k0]`.
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        [self.v, self.kappa0, self.kappa1, self.kappa2, self.delta_kappa()]
    }

    pub fn from_array(a: &[f64; OBS_DIM]) -> Self {
        Self { v: a[0], kappa0: a[1], kappa1: a[2], kappa2: a[3] }
    }
}

pub fn observe(state: &VehicleState, raceline: &Raceline, horizons: &Horizons) -> Observation {
    let i0 = project_to_path(raceline, state.pose().position()).index;
    let i1 = raceline.index_ahead(i0, horizons.medium);
    let i2 = raceline.index_ahead(i0, horizons.far);
    Observation {
        v: state.v,
        kappa0: raceline.kappa[i0].abs(),
        kappa1: raceline.kappa[i1].abs(),
        kappa2: raceline.kappa[i2].abs(),
    }
}

/// Affine map of a raw action in `[-1, 1]` onto the lookahead bounds, clamped.
pub fn action_to_lookahead(raw: f64) -> f64 {
    let l = LOOKAHEAD_MIN + 0.5 * (raw + 1.0) * (LOOKAHEAD_MAX - LOOKAHEAD_MIN);
    l.clamp(LOOKAHEAD_MIN, LOOKAHEAD_MAX)
}

/// Exponential smoothing of published lookaheads; the first action passes through.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionSmoother {
    pub alpha: f64,
    last: Option<f64>,
}

impl ActionSmoother {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, last: None }
    }

    pub fn reset(&mut self) {
        self.last = None;
    }

    pub fn last(&self) -> Option<f64> {
        self.last
    }

    /// Maps `raw` to a lookahead and blends it into the running value.
    pub fn apply(&mut self, raw: f64) -> f64 {
        let l = action_to_lookahead(raw);
        let smoothed = match self.last {
            None => l,
            Some(prev) => (1.0 - self.alpha) * prev + self.alpha * l,
        };
        self.last = Some(smoothed);
        smoothed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;

    fn straight_into_corner() -> Raceline {
        // curvature labels are set by hand: zero up to station 20 m, 0.5 after
        let n = 400;
        let pts: Vec<Vec2> =
            (0..n).map(|i| Vec2::from_angle(2.0 * std::f64::consts::PI * i as f64 / n as f64) * 15.9).collect();
        let mut line = Raceline::from_parts(pts, vec![0.0; n], vec![5.0; n]).unwrap();
        let spacing = line.spacing();
        for i in 0..n {
            if line.s[i] >= 20.0 - 1e-9 && line.s[i] < 40.0 {
                line.kappa[i] = 0.5;
            }
        }
        assert!(spacing > 0.2);
        line
    }

    #[test]
    fn straight_ahead_gives_zero_curvatures() {
        let mut line = Raceline::circle(20.0, 0.25, 5.0).unwrap();
        line.kappa.iter_mut().for_each(|k| *k = 0.0);
        let s = VehicleState { x: 20.0, y: 0.0, theta: 1.57, v: 3.5 };
        let o = observe(&s, &line, &Horizons::default());
        assert_eq!(o.to_array(), [3.5, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn corner_at_medium_horizon() {
        let line = straight_into_corner();
        let h = Horizons { medium: 3.0, far: 8.0 };
        // the waypoint whose station is exactly 3 m before the corner
        let i = line.s.iter().position(|&s| s >= 17.0 - 1e-9).unwrap();
        let corner = line.s.iter().position(|&s| s >= 20.0 - 1e-9).unwrap();
        let ahead = line.index_ahead(i, h.medium);
        assert!(ahead >= corner || line.kappa[ahead] == 0.0);
        let p = line.points[i];
        let state = VehicleState { x: p.x, y: p.y, theta: 0.0, v: 2.0 };
        let o = observe(&state, &line, &h);
        assert_eq!(o.kappa0, 0.0);
        if line.kappa[ahead] == 0.5 {
            assert_eq!(o.kappa1, 0.5);
            assert_eq!(o.delta_kappa(), 0.5);
        }
        // a car a little further on sees the corner for certain
        let p = line.points[i + 2];
        let o = observe(&VehicleState { x: p.x, y: p.y, theta: 0.0, v: 2.0 }, &line, &h);
        assert_eq!((o.kappa0, o.kappa1, o.kappa2), (0.0, 0.5, 0.5));
        assert_eq!(o.delta_kappa(), 0.5);
    }

    #[test]
    fn constant_curvature_has_no_delta() {
        let line = Raceline::circle(10.0, 0.25, 5.0).unwrap();
        for i in (0..line.len()).step_by(13) {
            let p = line.points[i];
            let o = observe(&VehicleState { x: p.x, y: p.y, theta: 0.0, v: 1.0 }, &line, &Horizons::default());
            assert!(o.delta_kappa().abs() < 1e-6);
        }
    }

    #[test]
    fn action_mapping_and_smoothing() {
        assert_eq!(action_to_lookahead(-1.0), 0.35);
        assert_eq!(action_to_lookahead(1.0), 4.0);
        assert!((action_to_lookahead(0.0) - 2.175).abs() < 1e-12);
        assert_eq!(action_to_lookahead(7.0), 4.0);
        let mut s = ActionSmoother::new(1.0);
        assert_eq!(s.apply(-1.0), 0.35);
        assert_eq!(s.apply(1.0), 4.0);
        let mut s = ActionSmoother::new(0.3);
        assert_eq!(s.apply(1.0), 4.0);
        let next = s.apply(-1.0);
        assert!((next - (0.7 * 4.0 + 0.3 * 0.35)).abs() < 1e-12);
        assert!((4.0 - next) <= 0.3 * (4.0 - 0.35) + 1e-12);
    }
}
