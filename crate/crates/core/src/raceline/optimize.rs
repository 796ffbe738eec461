//! Minimum-curvature lateral offsets by projected gradient descent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::track::Track;

/// Box-constrained offset problem over a track's centerline samples.
#[derive(Debug, Clone)]
pub struct RacelineProblem<'a> {
    pub track: &'a Track,
    pub d_min: Vec<f64>,
    pub d_max: Vec<f64>,
    pub margin: f64,
}

impl<'a> RacelineProblem<'a> {
    /// Bounds from the half-widths shrunk by `margin` on each side.
    pub fn new(track: &'a Track, margin: f64) -> Result<Self> {
        let c = &track.centerline;
        let d_min: Vec<f64> = c.w_right.iter().map(|w| -(w - margin)).collect();
        let d_max: Vec<f64> = c.w_left.iter().map(|w| w - margin).collect();
        if let Some(i) = (0..d_min.len()).find(|&i| !(d_min[i] < 0.0 && d_max[i] > 0.0)) {
            return Err(Error::Config(format!("safety margin {margin} m leaves no room at point {i}")));
        }
        Ok(Self { track, d_min, d_max, margin })
    }

    /// Explicit bounds; requires `d_min <= 0 <= d_max` pointwise.
    pub fn with_bounds(track: &'a Track, d_min: Vec<f64>, d_max: Vec<f64>) -> Result<Self> {
        let n = track.len();
        if d_min.len() != n || d_max.len() != n {
            return Err(Error::Config("bound vectors must match the track length".into()));
        }
        if let Some(i) = (0..n).find(|&i| !(d_min[i] <= 0.0 && 0.0 <= d_max[i])) {
            return Err(Error::Config(format!("bounds at point {i} exclude the centerline")));
        }
        Ok(Self { track, d_min, d_max, margin: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.d_min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_min.is_empty()
    }

    /// Path points `c_i + d_i n_i`.
    pub fn path(&self, d: &[f64]) -> Vec<Vec2> {
        self.track.points().iter().zip(&self.track.arc.normal).zip(d).map(|((c, n), di)| *c + *n * *di).collect()
    }

    fn project(&self, d: &mut [f64]) {
        for ((x, lo), hi) in d.iter_mut().zip(&self.d_min).zip(&self.d_max) {
            *x = x.clamp(*lo, *hi);
        }
    }

    /// Discrete integrated squared curvature of the offset path.
    pub fn objective(&self, d: &[f64]) -> f64 {
        curvature_cost(&self.path(d))
    }

    /// Objective and its gradient with respect to the offsets.
    pub fn objective_and_gradient(&self, d: &[f64]) -> (f64, Vec<f64>) {
        let pts = self.path(d);
        let (cost, grad_p) = curvature_cost_with_gradient(&pts);
        let grad = grad_p.iter().zip(&self.track.arc.normal).map(|(g, n)| g.dot(*n)).collect();
        (cost, grad)
    }
}

/// `sum_i kappa_i^2 ds_i` on a closed polyline, with derivatives taken by central
/// differences in the sample index. With `p' = (p_{i+1} - p_{i-1}) / 2` and
/// `p'' = p_{i+1} - 2 p_i + p_{i-1}`, each term is `(p' x p'')^2 / |p'|^5`.
pub fn curvature_cost(points: &[Vec2]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| {
            let (prev, cur, next) = (points[(i + n - 1) % n], points[i], points[(i + 1) % n]);
            let d1 = (next - prev) * 0.5;
            let d2 = next - cur * 2.0 + prev;
            let num = d1.cross(d2);
            num * num / d1.norm_sq().powf(2.5)
        })
        .sum()
}

fn curvature_cost_with_gradient(points: &[Vec2]) -> (f64, Vec<Vec2>) {
    let n = points.len();
    let mut grad = vec![Vec2::ZERO; n];
    let mut cost = 0.0;
    for i in 0..n {
        let (ip, inx) = ((i + n - 1) % n, (i + 1) % n);
        let d1 = (points[inx] - points[ip]) * 0.5;
        let d2 = points[inx] - points[i] * 2.0 + points[ip];
        let num = d1.cross(d2);
        let q = d1.norm_sq();
        let q52 = q.powf(2.5);
        cost += num * num / q52;

        // dT/dp' and dT/dp''
        let g1 = Vec2::new(d2.y, -d2.x) * (2.0 * num / q52) - d1 * (5.0 * num * num / (q52 * q));
        let g2 = Vec2::new(-d1.y, d1.x) * (2.0 * num / q52);
        grad[inx] += g1 * 0.5 + g2;
        grad[ip] += g1 * -0.5 + g2;
        grad[i] += g2 * -2.0;
    }
    (cost, grad)
}

/// Solver settings for [`optimize_min_curvature`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub iters: usize,
    pub tol: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { iters: 5000, tol: 1e-10, armijo: 1e-4 }
    }
}

/// Summary of one optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationReport {
    pub offsets: Vec<f64>,
    pub objective: f64,
    pub initial_objective: f64,
    pub iterations: usize,
    /// Objective after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

/// Projected gradient descent from the centerline (`d = 0`). Trial steps use a
/// Barzilai-Borwein length and are halved until the Armijo condition holds on
/// the projected point, so every accepted step decreases the objective.
pub fn optimize_min_curvature(problem: &RacelineProblem<'_>, cfg: &OptimizerConfig) -> Result<OptimizationReport> {
    if cfg.iters == 0 {
        return Err(Error::Config("optimizer needs at least one iteration".into()));
    }
    let n = problem.len();
    let mut d = vec![0.0; n];
    let (mut f, mut g) = problem.objective_and_gradient(&d);
    check_finite(0, f, &g)?;
    let initial = f;
    let mut history = vec![f];

    let span = (0..n).map(|i| problem.d_max[i] - problem.d_min[i]).fold(0.0, f64::max);
    let g_inf = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if span == 0.0 || g_inf == 0.0 {
        return Ok(OptimizationReport { offsets: d, objective: f, initial_objective: initial, iterations: 0, history });
    }
    let mut step = span / g_inf;
    let mut iterations = 0;

    for iter in 1..=cfg.iters {
        iterations = iter;
        let mut accepted = None;
        let mut trial_step = step;
        for _ in 0..60 {
            let mut trial: Vec<f64> = d.iter().zip(&g).map(|(x, gx)| x - trial_step * gx).collect();
            problem.project(&mut trial);
            let decrease: f64 = g.iter().zip(trial.iter().zip(&d)).map(|(gx, (t, x))| gx * (t - x)).sum();
            if decrease == 0.0 {
                break;
            }
            let ft = problem.objective(&trial);
            if !ft.is_finite() {
                return Err(Error::Optimization { iteration: iter, reason: "non-finite objective".into() });
            }
            if ft <= f + cfg.armijo * decrease {
                accepted = Some((trial, ft));
                break;
            }
            trial_step *= 0.5;
        }
        let Some((next, _)) = accepted else { break };

        let (f_next, g_next) = problem.objective_and_gradient(&next);
        check_finite(iter, f_next, &g_next)?;
        let s: Vec<f64> = next.iter().zip(&d).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(g_next.iter().zip(&g)).map(|(si, (a, b))| si * (a - b)).sum();
        let ss: f64 = s.iter().map(|x| x * x).sum();
        step = if sy > 0.0 { ss / sy } else { trial_step * 2.0 };

        let rel = (f - f_next) / f.abs().max(f64::MIN_POSITIVE);
        d = next;
        f = f_next;
        g = g_next;
        history.push(f);
        if rel < cfg.tol {
            break;
        }
    }

    Ok(OptimizationReport { offsets: d, objective: f, initial_objective: initial, iterations, history })
}

fn check_finite(iteration: usize, f: f64, g: &[f64]) -> Result<()> {
    if !f.is_finite() {
        return Err(Error::Optimization { iteration, reason: "non-finite objective".into() });
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::Optimization { iteration, reason: "non-finite gradient".into() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::{circle_track, corpus_track, CorpusTrack};
    use std::f64::consts::PI;

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let track = corpus_track(CorpusTrack::Chicane, 0.5).unwrap();
        let problem = RacelineProblem::new(&track, 0.3).unwrap();
        let d: Vec<f64> = (0..problem.len()).map(|i| 0.4 * (i as f64 * 0.13).sin()).collect();
        let (_, g) = problem.objective_and_gradient(&d);
        let h = 1e-6;
        for i in (0..d.len()).step_by(7) {
            let mut dp = d.clone();
            dp[i] += h;
            let mut dm = d.clone();
            dm[i] -= h;
            let fd = (problem.objective(&dp) - problem.objective(&dm)) / (2.0 * h);
            let scale = g[i].abs().max(fd.abs()).max(1e-6);
            assert!((g[i] - fd).abs() / scale < 1e-5, "i={i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn circle_cost_approximates_two_pi_over_radius() {
        let t = circle_track(10.0, 1.0, 0.25).unwrap();
        let cost = curvature_cost(t.points());
        assert!((cost - 2.0 * PI / 10.0).abs() < 1e-3);
    }

    #[test]
    fn fully_constrained_problem_returns_centerline() {
        let t = circle_track(20.0, 2.0, 1.0).unwrap();
        let n = t.len();
        let p = RacelineProblem::with_bounds(&t, vec![0.0; n], vec![0.0; n]).unwrap();
        let r = optimize_min_curvature(&p, &OptimizerConfig::default()).unwrap();
        assert!(r.offsets.iter().all(|&x| x == 0.0));
        assert_eq!(r.objective, curvature_cost(t.points()));
    }

    #[test]
    fn annulus_moves_to_the_outer_bound() {
        let t = circle_track(20.0, 1.5, 1.0).unwrap();
        let n = t.len();
        let p = RacelineProblem::with_bounds(&t, vec![-1.5; n], vec![1.5; n]).unwrap();
        let r = optimize_min_curvature(&p, &OptimizerConfig::default()).unwrap();
        let mean = r.offsets.iter().sum::<f64>() / n as f64;
        assert!((mean + 1.5).abs() < 0.05 * 1.5, "mean offset {mean}");
        assert!(r.objective < r.initial_objective);
    }

    #[test]
    fn descent_is_monotone_and_feasible_on_the_corpus() {
        for which in CorpusTrack::ALL {
            let t = corpus_track(which, 0.5).unwrap();
            let p = RacelineProblem::new(&t, 0.3).unwrap();
            let cfg = OptimizerConfig { iters: 300, ..Default::default() };
            let r = optimize_min_curvature(&p, &cfg).unwrap();
            assert!(r.history.windows(2).all(|w| w[1] <= w[0]), "{}", which.name());
            assert!(r.objective <= p.objective(&vec![0.0; p.len()]));
            for (i, x) in r.offsets.iter().enumerate() {
                assert!(p.d_min[i] <= *x && *x <= p.d_max[i]);
            }
        }
    }

    #[test]
    fn margin_too_wide_is_rejected() {
        let t = circle_track(10.0, 0.3, 0.5).unwrap();
        assert!(RacelineProblem::new(&t, 0.3).is_err());
    }
}
