//! Racing workbench: minimum-curvature racelines with friction-limited speed
//! profiles, a LiDAR-equipped kinematic bicycle simulator, Monte Carlo
//! localization, Pure Pursuit with fixed, scheduled and learned lookahead, and a
//! from-scratch PPO trainer for the lookahead policy.

// `!(x > 0.0)` style checks reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod environment;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod learning;
pub mod localization;
pub mod raceline;
pub mod simulator;
pub mod track;

pub use error::{Error, Result};
pub use geometry::{wrap_angle, Pose, Vec2};
