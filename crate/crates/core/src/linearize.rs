//! First-order expansion of a torque controller into `τ = A·x + b`.
//!
//! `b` absorbs the expansion point: `b = τ(x_k; t_k) − A·x_k`, so a consumer
//! needs only `(A, b)` and the raw state. Time is frozen at `t_k` while
//! differentiating.

use nalgebra::{DMatrix, DVector, Vector3};
use thiserror::Error;

use crate::affine::{affine_apply, affine_row};
use crate::control::{ControlError, MlpPolicy, TorqueController};
use crate::rbd::JointState;
use crate::Real;

/// Central-difference step, rad or rad/s.
pub const DEFAULT_STEP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum LinearizeError {
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("controller output is not finite when probing coordinate {coordinate}")]
    NonFiniteProbe { coordinate: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("law entries are not finite")]
    NonFiniteLaw,
    #[error("step must be positive and finite")]
    InvalidStep,
}

/// An affine torque law with the state and time it was expanded at.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFeedbackLaw<T: Real> {
    a: DMatrix<T>,
    b: DVector<T>,
    x_k: JointState<T>,
    t_k: T,
    sequence: u32,
}

impl<T: Real> LinearFeedbackLaw<T> {
    pub fn new(
        a: DMatrix<T>,
        b: DVector<T>,
        x_k: JointState<T>,
        t_k: T,
        sequence: u32,
    ) -> Result<Self, LinearizeError> {
        let n = b.len();
        if a.nrows() != n || a.ncols() != 2 * n {
            return Err(LinearizeError::DimensionMismatch {
                expected: 2 * n * n,
                got: a.len(),
            });
        }
        if x_k.dof() != n {
            return Err(LinearizeError::DimensionMismatch {
                expected: n,
                got: x_k.dof(),
            });
        }
        if !a.iter().chain(b.iter()).all(|v| v.is_finite()) {
            return Err(LinearizeError::NonFiniteLaw);
        }
        Ok(Self {
            a,
            b,
            x_k,
            t_k,
            sequence,
        })
    }

    pub fn with_sequence(mut self, sequence: u32) -> Self {
        self.sequence = sequence;
        self
    }

    pub fn dof(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn b(&self) -> &DVector<T> {
        &self.b
    }

    pub fn x_k(&self) -> &JointState<T> {
        &self.x_k
    }

    pub fn t_k(&self) -> T {
        self.t_k
    }

    pub fn sequence(&self) -> u32 {
        self.sequence
    }

    /// `A·x + b`.
    pub fn eval(&self, x: &JointState<T>) -> Result<DVector<T>, LinearizeError> {
        self.eval_stacked(&x.stacked())
    }

    pub fn eval_stacked(&self, x: &DVector<T>) -> Result<DVector<T>, LinearizeError> {
        if x.len() != 2 * self.dof() {
            return Err(LinearizeError::DimensionMismatch {
                expected: 2 * self.dof(),
                got: x.len(),
            });
        }
        Ok(affine_apply(&self.a, x, &self.b))
    }
}

pub fn eval_law<T: Real>(
    law: &LinearFeedbackLaw<T>,
    x: &JointState<T>,
) -> Result<DVector<T>, LinearizeError> {
    law.eval(x)
}

/// `b = τ_k − A·x_k`, row by row with the shared affine kernel.
fn offset_from_anchor<T: Real>(a: &DMatrix<T>, tau: &DVector<T>, x: &DVector<T>) -> DVector<T> {
    DVector::from_fn(tau.len(), |i, _| {
        tau[i] - affine_row(a, i, x.as_slice(), T::zero())
    })
}

fn eval_checked<T: Real, C: TorqueController<T> + ?Sized>(
    ctrl: &C,
    x: &DVector<T>,
    t: T,
    coordinate: usize,
) -> Result<DVector<T>, LinearizeError> {
    let state = JointState::from_stacked(x).map_err(ControlError::from)?;
    match ctrl.evaluate(&state, t) {
        Ok(tau) => Ok(tau),
        Err(ControlError::NonFiniteOutput) => Err(LinearizeError::NonFiniteProbe { coordinate }),
        Err(e) => Err(e.into()),
    }
}

/// Central differences per state coordinate with step `h`.
pub fn linearize_fd<T: Real, C: TorqueController<T> + ?Sized>(
    ctrl: &C,
    x_k: &JointState<T>,
    t_k: T,
    h: T,
) -> Result<LinearFeedbackLaw<T>, LinearizeError> {
    if !(h > T::zero() && h.is_finite()) {
        return Err(LinearizeError::InvalidStep);
    }
    let n = ctrl.dof();
    if x_k.dof() != n {
        return Err(LinearizeError::DimensionMismatch {
            expected: n,
            got: x_k.dof(),
        });
    }
    let x = x_k.stacked();
    let tau = ctrl.evaluate(x_k, t_k)?;
    let two_h = h + h;
    let mut a = DMatrix::zeros(n, 2 * n);
    for j in 0..2 * n {
        let mut plus = x.clone();
        plus[j] += h;
        let mut minus = x.clone();
        minus[j] -= h;
        let tp = eval_checked(ctrl, &plus, t_k, j)?;
        let tm = eval_checked(ctrl, &minus, t_k, j)?;
        a.set_column(j, &((tp - tm) / two_h));
    }
    let b = offset_from_anchor(&a, &tau, &x);
    LinearFeedbackLaw::new(a, b, x_k.clone(), t_k, 0)
}

/// `A = ∂π/∂x` through the network, target held fixed.
pub fn linearize_analytic<T: Real>(
    policy: &MlpPolicy<T>,
    x_k: &JointState<T>,
    target: &Vector3<T>,
    t_k: T,
) -> Result<LinearFeedbackLaw<T>, LinearizeError> {
    let (a, b) = analytic_parts(policy, x_k, target)?;
    LinearFeedbackLaw::new(a, b, x_k.clone(), t_k, 0)
}

pub(crate) fn analytic_parts<T: Real>(
    policy: &MlpPolicy<T>,
    x_k: &JointState<T>,
    target: &Vector3<T>,
) -> Result<(DMatrix<T>, DVector<T>), ControlError> {
    let (tau, a) = policy.eval_with_jacobian(x_k, target)?;
    let b = offset_from_anchor(&a, &tau, &x_k.stacked());
    Ok((a, b))
}

/// Exact expansion when the controller provides one, central differences with
/// [`DEFAULT_STEP`] otherwise.
pub fn linearize<T: Real, C: TorqueController<T> + ?Sized>(
    ctrl: &C,
    x_k: &JointState<T>,
    t_k: T,
) -> Result<LinearFeedbackLaw<T>, LinearizeError> {
    match ctrl.exact_linearization(x_k, t_k) {
        Some(parts) => {
            let (a, b) = parts?;
            LinearFeedbackLaw::new(a, b, x_k.clone(), t_k, 0)
        }
        None => linearize_fd(ctrl, x_k, t_k, T::lit(DEFAULT_STEP)),
    }
}
