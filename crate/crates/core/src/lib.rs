//! Linear interpolation of non-linear torque controllers.
//!
//! A slow controller (inverse-dynamics task tracker or neural policy) is
//! evaluated at a few hundred hertz and replaced between evaluations by its
//! first-order expansion `τ = A·x + b`, which an emulated chain of two-motor
//! driver boards executes at up to 40 kHz.
//!
//! The numerical core is generic over the scalar type ([`Real`], `f32` or
//! `f64`); the aliases below fix it to `f64`, which the simulator and the
//! experiment harness use.

pub mod affine;
pub mod control;
pub mod drivernet;
pub mod experiment;
pub mod linearize;
pub mod rbd;
mod scalar;
pub mod sim;

pub use scalar::Real;

pub type RobotModel = rbd::RobotModel<f64>;
pub type JointState = rbd::JointState<f64>;
pub type LinearFeedbackLaw = linearize::LinearFeedbackLaw<f64>;
pub type MlpPolicy = control::MlpPolicy<f64>;
pub type IdTracker = control::IdTracker<f64>;
pub type CircleTrajectory = control::CircleTrajectory<f64>;
