//! Periodic cubic spline through a closed polyline, with arc-length resampling.

use crate::geometry::Vec2;

/// Solves a cyclic tridiagonal system with sub-diagonal `a`, diagonal `b`,
/// super-diagonal `c`. `a[0]` couples row 0 to the last unknown and `c[n-1]`
/// couples the last row to unknown 0.
pub(crate) fn solve_cyclic_tridiagonal(a: &[f64], b: &[f64], c: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = b.len();
    assert!(n >= 3 && a.len() == n && c.len() == n && rhs.len() == n);
    let alpha = c[n - 1];
    let beta = a[0];
    let gamma = -b[0];

    let mut bb = b.to_vec();
    bb[0] = b[0] - gamma;
    bb[n - 1] = b[n - 1] - alpha * beta / gamma;

    let x = solve_tridiagonal(a, &bb, c, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = solve_tridiagonal(a, &bb, c, &u);

    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

fn solve_tridiagonal(a: &[f64], b: &[f64], c: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    dp[0] = rhs[0] / b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / m;
        dp[i] = (rhs[i] - a[i] * dp[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}

/// C2 periodic cubic spline parameterized by cumulative chord length.
#[derive(Debug, Clone)]
pub struct PeriodicSpline {
    knots: Vec<f64>,
    period: f64,
    values: Vec<Vec2>,
    second: Vec<Vec2>,
}

impl PeriodicSpline {
    /// `points` must be pairwise-distinct consecutive vertices of a closed loop
    /// (the closing edge is implicit).
    pub fn new(points: &[Vec2]) -> Self {
        let n = points.len();
        let mut knots = Vec::with_capacity(n);
        let mut t = 0.0;
        for i in 0..n {
            knots.push(t);
            t += points[i].distance(points[(i + 1) % n]);
        }
        let period = t;
        let h = |i: usize| {
            let next = if i + 1 == n { period } else { knots[i + 1] };
            next - knots[i]
        };

        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut rx = vec![0.0; n];
        let mut ry = vec![0.0; n];
        for i in 0..n {
            let prev = (i + n - 1) % n;
            let next = (i + 1) % n;
            let (hp, hi) = (h(prev), h(i));
            sub[i] = hp;
            diag[i] = 2.0 * (hp + hi);
            sup[i] = hi;
            let slope_next = (points[next] - points[i]) * (1.0 / hi);
            let slope_prev = (points[i] - points[prev]) * (1.0 / hp);
            let r = (slope_next - slope_prev) * 6.0;
            rx[i] = r.x;
            ry[i] = r.y;
        }
        let mx = solve_cyclic_tridiagonal(&sub, &diag, &sup, &rx);
        let my = solve_cyclic_tridiagonal(&sub, &diag, &sup, &ry);
        let second = mx.into_iter().zip(my).map(|(x, y)| Vec2::new(x, y)).collect();

        Self { knots, period, values: points.to_vec(), second }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn segment_len(&self, i: usize) -> f64 {
        let next = if i + 1 == self.len() { self.period } else { self.knots[i + 1] };
        next - self.knots[i]
    }

    /// Position on segment `i` at local parameter `u` in `[0, h_i]`.
    pub fn eval_segment(&self, i: usize, u: f64) -> Vec2 {
        let n = self.len();
        let j = (i + 1) % n;
        let h = self.segment_len(i);
        let (a, b) = (h - u, u);
        let (mi, mj) = (self.second[i], self.second[j]);
        let (yi, yj) = (self.values[i], self.values[j]);
        mi * (a * a * a / (6.0 * h))
            + mj * (b * b * b / (6.0 * h))
            + (yi * (1.0 / h) - mi * (h / 6.0)) * a
            + (yj * (1.0 / h) - mj * (h / 6.0)) * b
    }

    /// First derivative on segment `i` at local parameter `u`.
    pub fn derivative_segment(&self, i: usize, u: f64) -> Vec2 {
        let n = self.len();
        let j = (i + 1) % n;
        let h = self.segment_len(i);
        let (a, b) = (h - u, u);
        let (mi, mj) = (self.second[i], self.second[j]);
        let (yi, yj) = (self.values[i], self.values[j]);
        mi * (-a * a / (2.0 * h)) + mj * (b * b / (2.0 * h)) - (yi * (1.0 / h) - mi * (h / 6.0))
            + (yj * (1.0 / h) - mj * (h / 6.0))
    }

    /// Arc length of segment `i` between local parameters `u0` and `u1`.
    fn arc_length(&self, i: usize, u0: f64, u1: f64) -> f64 {
        // 5-point Gauss-Legendre
        const NODES: [f64; 5] =
            [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
        const WEIGHTS: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let half = 0.5 * (u1 - u0);
        let mid = 0.5 * (u1 + u0);
        NODES.iter().zip(WEIGHTS).map(|(x, w)| w * self.derivative_segment(i, mid + half * x).norm()).sum::<f64>()
            * half
    }

    /// Samples `count` points spaced uniformly by arc length, starting at knot 0.
    /// Also returns, for each sample, the fractional knot coordinate
    /// (segment index plus local fraction) used for interpolating side data.
    pub fn resample_uniform(&self, count: usize) -> (Vec<Vec2>, Vec<f64>, f64) {
        const SUB: usize = 16;
        let n = self.len();
        // cumulative arc length table at SUB subdivisions per segment
        let mut table = Vec::with_capacity(n * SUB + 1);
        let mut acc = 0.0;
        table.push(0.0);
        for i in 0..n {
            let h = self.segment_len(i);
            for k in 0..SUB {
                let u0 = h * k as f64 / SUB as f64;
                let u1 = h * (k + 1) as f64 / SUB as f64;
                acc += self.arc_length(i, u0, u1);
                table.push(acc);
            }
        }
        let total = acc;

        let mut points = Vec::with_capacity(count);
        let mut coords = Vec::with_capacity(count);
        let mut cursor = 0usize;
        for m in 0..count {
            let target = total * m as f64 / count as f64;
            while cursor + 1 < table.len() - 1 && table[cursor + 1] <= target {
                cursor += 1;
            }
            let seg = cursor / SUB;
            let sub = cursor % SUB;
            let h = self.segment_len(seg);
            let u_start = h * sub as f64 / SUB as f64;
            let u_end = h * (sub + 1) as f64 / SUB as f64;
            let want = target - table[cursor];
            let span = table[cursor + 1] - table[cursor];
            let mut u = u_start + (u_end - u_start) * if span > 0.0 { want / span } else { 0.0 };
            for _ in 0..3 {
                let err = self.arc_length(seg, u_start, u) - want;
                let speed = self.derivative_segment(seg, u).norm();
                if speed <= 0.0 {
                    break;
                }
                u = (u - err / speed).clamp(u_start, u_end);
            }
            points.push(self.eval_segment(seg, u));
            coords.push(seg as f64 + u / h);
        }
        (points, coords, total)
    }
}
