//! Kinematic bicycle vehicle on an occupancy grid with a simulated planar LiDAR.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose};
use crate::track::OccupancyGrid;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Heading in (-pi, pi].
    pub theta: f64,
    pub v: f64,
}

impl VehicleState {
    pub fn pose(&self) -> Pose {
        Pose::new(self.x, self.y, self.theta)
    }

    pub fn at_rest(pose: Pose) -> Self {
        Self { x: pose.x, y: pose.y, theta: wrap_angle(pose.heading), v: 0.0 }
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite() && self.v.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    pub beams: usize,
    /// Total field of view in radians, centred on the heading.
    pub fov: f64,
    pub max_range: f64,
    pub noise_std: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { beams: 1080, fov: 270f64.to_radians(), max_range: 30.0, noise_std: 0.01 }
    }
}

impl ScanConfig {
    /// Body-frame beam angles, evenly spread over the field of view.
    pub fn angles(&self) -> Vec<f64> {
        if self.beams == 1 {
            return vec![0.0];
        }
        (0..self.beams).map(|i| -0.5 * self.fov + self.fov * i as f64 / (self.beams - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub max_steer: f64,
    pub a_max: f64,
    pub a_min: f64,
    /// Physics integration step.
    pub dt: f64,
    /// Period over which one command is held.
    pub control_period: f64,
    /// Proportional gain of the speed loop, 1/s.
    pub speed_gain: f64,
    pub collision_range: f64,
    pub scan: ScanConfig,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 0.3302,
            max_steer: 0.4189,
            a_max: 9.51,
            a_min: -9.51,
            dt: 0.01,
            control_period: 0.02,
            speed_gain: 8.0,
            collision_range: 0.2,
            scan: ScanConfig::default(),
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.wheelbase > 0.0) {
            return Err(Error::Config("wheelbase must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt <= 0.05) {
            return Err(Error::Config(format!("dt {} outside (0, 0.05]", self.dt)));
        }
        if !(self.max_steer > 0.0 && self.max_steer < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Config("max_steer outside (0, pi/2)".into()));
        }
        if !(self.control_period >= self.dt) {
            return Err(Error::Config("control period shorter than dt".into()));
        }
        if !(self.a_min < 0.0 && self.a_max > 0.0) {
            return Err(Error::Config("acceleration limits must bracket zero".into()));
        }
        Ok(())
    }

    /// Number of physics substeps per control period and their length.
    pub fn substeps(&self) -> (usize, f64) {
        let n = (self.control_period / self.dt - 1e-9).ceil().max(1.0) as usize;
        (n, self.control_period / n as f64)
    }
}

/// Speed target and steering angle held over one control period.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DriveCommand {
    pub speed: f64,
    pub steer: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: VehicleState,
    pub scan: Vec<f64>,
    pub collided: bool,
    pub min_range: f64,
}

fn derivative(s: &[f64; 4], cmd: DriveCommand, p: &VehicleParams) -> [f64; 4] {
    let a = (p.speed_gain * (cmd.speed - s[3])).clamp(p.a_min, p.a_max);
    [s[3] * s[2].cos(), s[3] * s[2].sin(), s[3] / p.wheelbase * cmd.steer.tan(), a]
}

/// One RK4 step of the bicycle ODEs with the speed loop closed inside the stages.
pub fn integrate(state: VehicleState, cmd: DriveCommand, params: &VehicleParams, dt: f64) -> VehicleState {
    let cmd = DriveCommand { speed: cmd.speed, steer: cmd.steer.clamp(-params.max_steer, params.max_steer) };
    let s0 = [state.x, state.y, state.theta, state.v];
    let add = |s: &[f64; 4], k: &[f64; 4], h: f64| std::array::from_fn::<f64, 4, _>(|i| s[i] + h * k[i]);
    let k1 = derivative(&s0, cmd, params);
    let k2 = derivative(&add(&s0, &k1, 0.5 * dt), cmd, params);
    let k3 = derivative(&add(&s0, &k2, 0.5 * dt), cmd, params);
    let k4 = derivative(&add(&s0, &k3, dt), cmd, params);
    let s: [f64; 4] = std::array::from_fn(|i| s0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    VehicleState { x: s[0], y: s[1], theta: wrap_angle(s[2]), v: s[3].max(0.0) }
}

/// Single vehicle on a shared, immutable grid.
#[derive(Debug, Clone)]
pub struct Simulator {
    grid: Arc<OccupancyGrid>,
    params: VehicleParams,
    angles: Vec<f64>,
    state: VehicleState,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
}

impl Simulator {
    pub fn new(grid: Arc<OccupancyGrid>, params: VehicleParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let noise = if params.scan.noise_std > 0.0 {
            Some(Normal::new(0.0, params.scan.noise_std).map_err(|e| Error::Config(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            angles: params.scan.angles(),
            grid,
            params,
            state: VehicleState::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise,
        })
    }

    pub fn state(&self) -> VehicleState {
        self.state
    }

    pub fn params(&self) -> &VehicleParams {
        &self.params
    }

    pub fn grid(&self) -> &Arc<OccupancyGrid> {
        &self.grid
    }

    pub fn scan_angles(&self) -> &[f64] {
        &self.angles
    }

    /// Places the car at rest at `spawn` and renders a fresh scan.
    pub fn reset(&mut self, spawn: Pose) -> Result<StepResult> {
        if self.grid.is_occupied(spawn.position()) {
            return Err(Error::Reset { x: spawn.x, y: spawn.y });
        }
        self.state = VehicleState::at_rest(spawn);
        let (scan, min_range) = self.render_scan();
        Ok(StepResult { state: self.state, collided: false, scan, min_range })
    }

    /// Holds `cmd` for one control period, then renders the scan.
    pub fn step(&mut self, cmd: DriveCommand) -> Result<StepResult> {
        let (n, h) = self.params.substeps();
        let mut s = self.state;
        for _ in 0..n {
            s = integrate(s, cmd, &self.params, h);
        }
        if !s.is_finite() {
            return Err(Error::Simulation(format!("non-finite state {s:?}")));
        }
        self.state = s;
        let (scan, min_range) = self.render_scan();
        let collided = min_range < self.params.collision_range;
        Ok(StepResult { state: s, scan, collided, min_range })
    }

    /// Noisy ranges at the current pose; all zero when inside a wall.
    fn render_scan(&mut self) -> (Vec<f64>, f64) {
        let pose = self.state.pose();
        let origin = pose.position();
        let max_range = self.params.scan.max_range;
        let mut min_range = f64::INFINITY;
        let scan: Vec<f64> = if self.grid.is_occupied(origin) {
            vec![0.0; self.angles.len()]
        } else {
            self.angles
                .iter()
                .map(|a| {
                    let clean = self.grid.cast_ray(origin, pose.heading + a, max_range);
                    let noisy = match &self.noise {
                        Some(n) => clean + n.sample(&mut self.rng),
                        None => clean,
                    };
                    noisy.clamp(0.0, max_range)
                })
                .collect()
        };
        for &r in &scan {
            min_range = min_range.min(r);
        }
        (scan, min_range)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn open_grid() -> Arc<OccupancyGrid> {
        let mut g = OccupancyGrid::empty(0.05, Pose::new(-20.0, -20.0, 0.0), 800, 800);
        for i in 0..800 {
            g.set(i, 0, true);
            g.set(i, 799, true);
            g.set(0, i, true);
            g.set(799, i, true);
        }
        Arc::new(g)
    }

    #[test]
    fn straight_line_step() {
        let params = VehicleParams { control_period: 0.1, dt: 0.05, ..Default::default() };
        let mut sim = Simulator::new(open_grid(), params, 0).unwrap();
        sim.reset(Pose::new(0.0, 0.0, 0.0)).unwrap();
        sim.state.v = 1.0;
        let r = sim.step(DriveCommand { speed: 1.0, steer: 0.0 }).unwrap();
        assert!((r.state.x - 0.1).abs() < 1e-12);
        assert_eq!(r.state.y, 0.0);
        assert_eq!(r.state.theta, 0.0);
        assert_eq!(r.state.v, 1.0);
    }

    #[test]
    fn constant_steer_traces_the_turning_circle() {
        let params = VehicleParams::default();
        // tan(delta) / L = 0.2 -> radius 5
        let steer = (0.2 * params.wheelbase).atan();
        let v = 3.0;
        let mut s = VehicleState { x: 0.0, y: 0.0, theta: 0.0, v };
        let cmd = DriveCommand { speed: v, steer };
        let period = 2.0 * PI * 5.0 / v;
        let steps = (period / params.dt).round() as usize;
        let center = (0.0, 5.0);
        let mut worst: f64 = 0.0;
        for _ in 0..steps {
            s = integrate(s, cmd, &params, params.dt);
            let r = (s.x - center.0).hypot(s.y - center.1);
            worst = worst.max((r - 5.0).abs() / 5.0);
        }
        assert!(worst < 1e-3, "relative radius error {worst}");
        assert!(s.x.abs() < 0.05 && s.y.abs() < 0.05);
    }

    #[test]
    fn coasting_is_exact() {
        let params = VehicleParams::default();
        let mut s = VehicleState { x: 1.0, y: 2.0, theta: 0.7, v: 4.2 };
        for _ in 0..1000 {
            s = integrate(s, DriveCommand { speed: 4.2, steer: 0.0 }, &params, params.dt);
        }
        assert_eq!(s.v, 4.2);
        assert_eq!(s.theta, 0.7);
    }

    #[test]
    fn no_reverse() {
        let params = VehicleParams::default();
        let s = VehicleState { x: 0.0, y: 0.0, theta: 0.0, v: 0.01 };
        let s = integrate(s, DriveCommand { speed: 0.0, steer: 0.0 }, &params, 0.05);
        assert!(s.v >= 0.0);
    }

    #[test]
    fn near_wall_is_a_collision() {
        let grid = open_grid();
        let mut sim = Simulator::new(grid, VehicleParams::default(), 3).unwrap();
        // left wall occupies x in [-20, -19.95); stand 0.15 m from it, facing it
        let r = sim.reset(Pose::new(-19.8, 0.0, PI)).unwrap();
        assert!(!r.collided);
        let r = sim.step(DriveCommand { speed: 0.0, steer: 0.0 }).unwrap();
        assert!(r.collided, "min range {}", r.min_range);
        assert!(r.min_range < 0.2);
    }

    #[test]
    fn reset_checks_spawn_and_is_deterministic() {
        let grid = open_grid();
        let mut sim = Simulator::new(grid.clone(), VehicleParams::default(), 11).unwrap();
        assert!(matches!(sim.reset(Pose::new(-19.99, 0.0, 0.0)), Err(Error::Reset { .. })));
        let a = sim.reset(Pose::new(1.0, 2.0, 0.3)).unwrap();
        assert_eq!(a.state.x, 1.0);
        assert_eq!(a.state.v, 0.0);
        assert!(!a.collided);
        let mut other = Simulator::new(grid, VehicleParams::default(), 11).unwrap();
        let b = other.reset(Pose::new(1.0, 2.0, 0.3)).unwrap();
        assert_eq!(a, b);
        for _ in 0..20 {
            let cmd = DriveCommand { speed: 2.0, steer: 0.1 };
            assert_eq!(sim.step(cmd).unwrap(), other.step(cmd).unwrap());
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        let bad = VehicleParams { dt: 0.1, ..Default::default() };
        assert!(Simulator::new(open_grid(), bad, 0).is_err());
    }
}
