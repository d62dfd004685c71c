use nalgebra::{DMatrix, DVector};

use super::{check_state, finite_or_blowup, ControlError, TorqueController};
use crate::affine::affine_apply;
use crate::rbd::{gravity_torques, JointState, RobotModel};
use crate::Real;

/// A fixed, time-invariant law `τ = K·x + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineController<T: Real> {
    gain: DMatrix<T>,
    offset: DVector<T>,
}

impl<T: Real> AffineController<T> {
    pub fn new(gain: DMatrix<T>, offset: DVector<T>) -> Result<Self, ControlError> {
        let n = offset.len();
        if gain.nrows() != n {
            return Err(ControlError::DimensionMismatch {
                expected: n,
                got: gain.nrows(),
            });
        }
        if gain.ncols() != 2 * n {
            return Err(ControlError::DimensionMismatch {
                expected: 2 * n,
                got: gain.ncols(),
            });
        }
        if !gain.iter().chain(offset.iter()).all(|v| v.is_finite()) {
            return Err(ControlError::NonFiniteWeights);
        }
        Ok(Self { gain, offset })
    }

    /// Joint PD about `q_ref` with gravity compensation at `q_ref`:
    /// `τ = kp(q_ref − q) − kd·v + g(q_ref)`.
    pub fn joint_pd(
        model: &RobotModel<T>,
        q_ref: &DVector<T>,
        kp: T,
        kd: T,
    ) -> Result<Self, ControlError> {
        let n = model.dof();
        let g = gravity_torques(model, q_ref)?;
        let mut gain = DMatrix::zeros(n, 2 * n);
        for j in 0..n {
            gain[(j, j)] = -kp;
            gain[(j, n + j)] = -kd;
        }
        Self::new(gain, q_ref * kp + g)
    }

    pub fn gain(&self) -> &DMatrix<T> {
        &self.gain
    }

    pub fn offset(&self) -> &DVector<T> {
        &self.offset
    }
}

impl<T: Real> TorqueController<T> for AffineController<T> {
    fn dof(&self) -> usize {
        self.offset.len()
    }

    fn evaluate(&self, x: &JointState<T>, _t: T) -> Result<DVector<T>, ControlError> {
        check_state(x, self.dof())?;
        finite_or_blowup(affine_apply(&self.gain, &x.stacked(), &self.offset))
    }

    fn exact_linearization(
        &self,
        _x: &JointState<T>,
        _t: T,
    ) -> Option<Result<(DMatrix<T>, DVector<T>), ControlError>> {
        Some(Ok((self.gain.clone(), self.offset.clone())))
    }
}
