//! Multirate executor: a slow controller loop, the law channel, the fast
//! feedback loop on the emulated boards, and the plant.
//!
//! Each fast tick `k` (period `1 / fast_hz`):
//!
//! 1. every `decimation` ticks, velocities are sensed (noise, low-pass);
//! 2. on controller ticks the controller runs on the sensed state; direct
//!    mode holds its torque, interpolated mode linearizes it;
//! 3. on law-push ticks the newest unpushed law is staged, so it is active
//!    from this very tick;
//! 4. the fast torque (held, or computed by the boards) is clamped, passed
//!    through the actuation delay line and integrated over `plant_substeps`
//!    plant steps;
//! 5. every `trace_stride` ticks a row is stored.

mod config;
mod executor;
mod trace;

pub use config::{
    ControllerKind, ExperimentConfig, GainsConfig, Mode, PdConfig, PolicyConfig, RealismConfig,
    TrajectoryConfig, MAX_LAW_PUSH_HZ,
};
pub use executor::{
    decimation_equivalence_check, run_experiment, run_with_options, RunOptions, Sensor,
    BLOWUP_SPEED,
};
pub use trace::{RunCounters, SimTrace, TraceRow};

use thiserror::Error;

use crate::control::ControlError;
use crate::drivernet::NetworkError;
use crate::linearize::LinearizeError;
use crate::rbd::{DynamicsError, ModelError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Linearize(#[from] LinearizeError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
