//! Non-linear torque controllers behind one interface: the task-space
//! inverse-dynamics tracker, a feed-forward tanh policy, and fixed affine
//! laws (joint PD) used as baselines and for equivalence checks.

mod affine;
mod id;
mod mlp;
mod trajectory;

pub use affine::AffineController;
pub use id::{IdTerms, IdTracker, TaskGains};
pub use mlp::{Layer, MlpPolicy, MlpTracker, StandInGains, POLICY_MAGIC};
pub use trajectory::{CircleTrajectory, TaskReference};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::rbd::{DynamicsError, JointState};
use crate::Real;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("controller produced a non-finite torque")]
    NonFiniteOutput,
    #[error("task Jacobian is rank deficient and no damping is set")]
    SingularTask,
    #[error("invalid gains: {0}")]
    InvalidGains(&'static str),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(&'static str),
    #[error("policy weights are not finite")]
    NonFiniteWeights,
    #[error("layer {layer}: expects {expected} inputs, previous layer gives {got}")]
    LayerChain {
        layer: usize,
        expected: usize,
        got: usize,
    },
    #[error("malformed policy file: {0}")]
    PolicyFormat(String),
    #[error("failed to read policy file: {0}")]
    Io(#[from] std::io::Error),
}

/// A time- and state-dependent torque map `τ(x; t)` for an `n`-joint robot.
pub trait TorqueController<T: Real>: Send + Sync {
    fn dof(&self) -> usize;

    fn state_dimension(&self) -> usize {
        2 * self.dof()
    }

    fn evaluate(&self, x: &JointState<T>, t: T) -> Result<DVector<T>, ControlError>;

    /// Exact first-order expansion `(A, b)` with `τ ≈ A·x + b` near `x`, for
    /// controllers that can differentiate themselves. `None` means the caller
    /// should fall back to finite differences.
    fn exact_linearization(
        &self,
        _x: &JointState<T>,
        _t: T,
    ) -> Option<Result<(DMatrix<T>, DVector<T>), ControlError>> {
        None
    }
}

impl<T: Real, C: TorqueController<T> + ?Sized> TorqueController<T> for Box<C> {
    fn dof(&self) -> usize {
        (**self).dof()
    }

    fn evaluate(&self, x: &JointState<T>, t: T) -> Result<DVector<T>, ControlError> {
        (**self).evaluate(x, t)
    }

    fn exact_linearization(
        &self,
        x: &JointState<T>,
        t: T,
    ) -> Option<Result<(DMatrix<T>, DVector<T>), ControlError>> {
        (**self).exact_linearization(x, t)
    }
}

pub(crate) fn check_state<T: Real>(x: &JointState<T>, n: usize) -> Result<(), ControlError> {
    for len in [x.q.len(), x.v.len()] {
        if len != n {
            return Err(ControlError::DimensionMismatch {
                expected: n,
                got: len,
            });
        }
    }
    Ok(())
}

pub(crate) fn finite_or_blowup<T: Real>(tau: DVector<T>) -> Result<DVector<T>, ControlError> {
    if tau.iter().all(|t| t.is_finite()) {
        Ok(tau)
    } else {
        Err(ControlError::NonFiniteOutput)
    }
}
