//! Rigid-body kinematics and dynamics for fixed-base revolute-joint trees.
//!
//! Everything here works in the world frame with plain 3-vectors: a forward
//! pass propagates link poses, angular rates and origin accelerations from
//! the base, and a backward pass accumulates link wrenches (Newton-Euler).
//! The mass matrix uses composite rigid bodies and is checked against
//! column-wise inverse dynamics in the tests.

mod dynamics;
mod kinematics;
mod model;

pub use dynamics::{
    bias_forces, forward_dynamics, gravity_torques, integrate_step, inverse_dynamics, mass_matrix,
};
pub use kinematics::{
    forward_kinematics, forward_kinematics_at, frame_jacobian, frame_jacobian_at, jdot_v,
    jdot_v_at, FramePose,
};
pub use model::{
    FrameEntry, FrameId, JointEntry, JointSpec, ModelError, ModelFile, RobotModel, TaskFrame,
    DEFAULT_DAMPING, DEFAULT_TORQUE_LIMIT,
};

use nalgebra::{DVector, Matrix3xX, Vector3};
use thiserror::Error;

use crate::Real;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DynamicsError {
    #[error("unknown frame `{0}`")]
    UnknownFrame(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("mass matrix is not positive definite")]
    SingularMassMatrix,
    #[error("integration produced a non-finite state")]
    NonFiniteState,
}

/// Joint angles (rad) and velocities (rad/s).
#[derive(Debug, Clone, PartialEq)]
pub struct JointState<T: Real> {
    pub q: DVector<T>,
    pub v: DVector<T>,
}

impl<T: Real> JointState<T> {
    pub fn new(q: DVector<T>, v: DVector<T>) -> Result<Self, DynamicsError> {
        if q.len() != v.len() {
            return Err(DynamicsError::DimensionMismatch {
                expected: q.len(),
                got: v.len(),
            });
        }
        Ok(Self { q, v })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            q: DVector::zeros(n),
            v: DVector::zeros(n),
        }
    }

    pub fn at_rest(q: DVector<T>) -> Self {
        let n = q.len();
        Self {
            q,
            v: DVector::zeros(n),
        }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    /// Stacked state `x = (q, v)`.
    pub fn stacked(&self) -> DVector<T> {
        let n = self.dof();
        DVector::from_fn(2 * n, |i, _| if i < n { self.q[i] } else { self.v[i - n] })
    }

    pub fn from_stacked(x: &DVector<T>) -> Result<Self, DynamicsError> {
        if !x.len().is_multiple_of(2) {
            return Err(DynamicsError::DimensionMismatch {
                expected: x.len() + 1,
                got: x.len(),
            });
        }
        let n = x.len() / 2;
        Ok(Self {
            q: x.rows(0, n).into_owned(),
            v: x.rows(n, n).into_owned(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }
}

pub(crate) fn check_len<T: Real>(v: &DVector<T>, n: usize) -> Result<(), DynamicsError> {
    if v.len() != n {
        return Err(DynamicsError::DimensionMismatch {
            expected: n,
            got: v.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_finite<T: Real>(v: &DVector<T>) -> Result<(), DynamicsError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(DynamicsError::NonFiniteInput)
    }
}

/// Forward sweep with zero joint acceleration and no gravity, shared by the
/// tracker so poses, Jacobian and drift come from one pass.
pub(crate) fn kinematics_sweep<T: Real>(
    model: &RobotModel<T>,
    q: &DVector<T>,
    v: &DVector<T>,
) -> kinematics::LinkStates<T> {
    kinematics::LinkStates::sweep(model, q, Some(v), None, Vector3::zeros())
}

pub(crate) fn jacobian_from_sweep<T: Real>(
    model: &RobotModel<T>,
    links: &kinematics::LinkStates<T>,
    frame: FrameId,
) -> Matrix3xX<T> {
    kinematics::jacobian_from(model, links, frame)
}

pub(crate) fn jdot_v_from_sweep<T: Real>(
    model: &RobotModel<T>,
    links: &kinematics::LinkStates<T>,
    frame: FrameId,
) -> Vector3<T> {
    kinematics::jdot_v_from(model, links, frame)
}
