use crate::geometry::Vec2;
use crate::raceline::Raceline;

/// Start/finish line through waypoint 0, perpendicular to the raceline there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinishLine {
    pub origin: Vec2,
    pub tangent: Vec2,
    pub half_width: f64,
}

impl FinishLine {
    pub fn new(raceline: &Raceline, half_width: f64) -> Self {
        let n = raceline.len();
        let tangent = (raceline.points[1] - raceline.points[n - 1]).normalized().unwrap_or(Vec2::new(1.0, 0.0));
        Self { origin: raceline.points[0], tangent, half_width }
    }

    /// Signed distance along the raceline direction; non-negative past the line.
    pub fn side(&self, p: Vec2) -> f64 {
        (p - self.origin).dot(self.tangent)
    }

    /// Fraction in `(0, 1]` of the segment `a -> b` at which it crosses the line
    /// forward within the gate, if it does.
    pub fn crossing(&self, a: Vec2, b: Vec2) -> Option<f64> {
        let sa = self.side(a);
        let sb = self.side(b);
        if !(sa < 0.0 && sb >= 0.0) {
            return None;
        }
        let t = -sa / (sb - sa);
        let hit = a.lerp(b, t);
        let lateral = (hit - self.origin).cross(self.tangent).abs();
        (lateral <= self.half_width).then_some(t)
    }
}

/// Lap bookkeeping with sub-step interpolated crossing times.
#[derive(Debug, Clone, PartialEq)]
pub struct LapTimer {
    pub line: FinishLine,
    /// Waypoints that must be advanced between crossings for a lap to count.
    pub min_progress: i64,
    started: bool,
    last_crossing: f64,
    progress_at_crossing: i64,
    pub lap_times: Vec<f64>,
}

impl LapTimer {
    /// `on_line` marks a start on the line itself; otherwise timing begins at the
    /// first crossing.
    pub fn new(line: FinishLine, waypoints: usize, on_line: bool) -> Self {
        Self {
            line,
            min_progress: (waypoints / 2) as i64,
            started: on_line,
            last_crossing: 0.0,
            progress_at_crossing: 0,
            lap_times: Vec::new(),
        }
    }

    pub fn started(&self) -> bool {
        self.started
    }

    /// Feeds one control step from `a` at `t0` to `b` at `t1`; `progress` is the
    /// cumulative waypoint count at `b`. Returns a completed lap time.
    pub fn update(&mut self, a: Vec2, b: Vec2, t0: f64, t1: f64, progress: i64) -> Option<f64> {
        let frac = self.line.crossing(a, b)?;
        let time = t0 + frac * (t1 - t0);
        if !self.started {
            if progress > 0 {
                self.started = true;
                self.last_crossing = time;
                self.progress_at_crossing = progress;
            }
            return None;
        }
        if progress - self.progress_at_crossing < self.min_progress {
            return None;
        }
        let lap = time - self.last_crossing;
        self.last_crossing = time;
        self.progress_at_crossing = progress;
        self.lap_times.push(lap);
        Some(lap)
    }
}

/// Waypoint index change wrapped into `(-N/2, N/2]`.
pub fn wrapped_progress(prev: usize, next: usize, n: usize) -> i64 {
    let n = n as i64;
    let mut d = (next as i64 - prev as i64).rem_euclid(n);
    if d > n / 2 {
        d -= n;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn progress_wraps() {
        assert_eq!(wrapped_progress(98, 2, 100), 4);
        assert_eq!(wrapped_progress(2, 98, 100), -4);
        assert_eq!(wrapped_progress(10, 10, 100), 0);
        assert_eq!(wrapped_progress(0, 50, 100), 50);
    }

    #[test]
    fn crossing_is_interpolated_and_gated() {
        let line = Raceline::circle(10.0, 0.25, 5.0).unwrap();
        let fl = FinishLine::new(&line, 1.0);
        // waypoint 0 is (10, 0) heading +y
        assert!((fl.tangent.y - 1.0).abs() < 1e-9);
        let t = fl.crossing(Vec2::new(10.0, -0.3), Vec2::new(10.0, 0.1)).unwrap();
        assert!((t - 0.75).abs() < 1e-12);
        assert!(fl.crossing(Vec2::new(10.0, 0.1), Vec2::new(10.0, -0.3)).is_none());
        assert!(fl.crossing(Vec2::new(12.0, -0.3), Vec2::new(12.0, 0.1)).is_none());

        let mut timer = LapTimer::new(fl, line.len(), true);
        let a = Vec2::new(10.0, -0.3);
        let b = Vec2::new(10.0, 0.1);
        assert_eq!(timer.update(a, b, 1.0, 1.1, 3), None);
        let lap = timer.update(a, b, 30.0, 30.1, line.len() as i64).unwrap();
        assert!((lap - 30.075).abs() < 1e-12);
    }
}
