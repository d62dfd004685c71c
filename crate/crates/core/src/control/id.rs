use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3xX, MatrixXx3, Vector3};

use super::{check_state, finite_or_blowup, CircleTrajectory, ControlError, TorqueController};
use crate::rbd::{inverse_dynamics, FrameId, JointState, RobotModel};
use crate::Real;

/// Task-space feedback gains and redundancy-resolution settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskGains<T: Real> {
    /// Position gain per task axis, s⁻².
    pub kp: Vector3<T>,
    /// Velocity gain per task axis, s⁻¹.
    pub kd: Vector3<T>,
    /// Damped least-squares regularization λ (adds λ²·I to J Jᵀ).
    pub dls_damping: T,
    /// Null-space pull toward the nominal posture, s⁻².
    pub posture_kp: T,
    pub posture_kd: T,
}

impl<T: Real> TaskGains<T> {
    pub const DEFAULT_DLS_DAMPING: f64 = 1e-4;
    pub const DEFAULT_POSTURE_KP: f64 = 10.0;

    /// `Kd = √(2·Kp)` on every axis, with the same rule for the posture task.
    pub fn critically_damped(kp: T) -> Result<Self, ControlError> {
        Self::new(
            Vector3::repeat(kp),
            Vector3::repeat((kp + kp).sqrt()),
            T::lit(Self::DEFAULT_DLS_DAMPING),
            T::lit(Self::DEFAULT_POSTURE_KP),
            T::lit(2.0 * Self::DEFAULT_POSTURE_KP).sqrt(),
        )
    }

    pub fn new(
        kp: Vector3<T>,
        kd: Vector3<T>,
        dls_damping: T,
        posture_kp: T,
        posture_kd: T,
    ) -> Result<Self, ControlError> {
        if !kp.iter().all(|&k| k > T::zero() && k.is_finite()) {
            return Err(ControlError::InvalidGains("Kp must be positive"));
        }
        if !kd.iter().all(|&k| k > T::zero() && k.is_finite()) {
            return Err(ControlError::InvalidGains("Kd must be positive"));
        }
        if !(dls_damping >= T::zero()) {
            return Err(ControlError::InvalidGains("damping must be non-negative"));
        }
        if !(posture_kp >= T::zero() && posture_kd >= T::zero()) {
            return Err(ControlError::InvalidGains(
                "posture gains must be non-negative",
            ));
        }
        Ok(Self {
            kp,
            kd,
            dls_damping,
            posture_kp,
            posture_kd,
        })
    }
}

/// Intermediate quantities of one tracker evaluation.
#[derive(Debug, Clone)]
pub struct IdTerms<T: Real> {
    pub position: Vector3<T>,
    pub velocity: Vector3<T>,
    pub jacobian: Matrix3xX<T>,
    pub drift: Vector3<T>,
    /// Commanded task acceleration `p̈* + Kp(p* − p) + Kd(ṗ* − ṗ)`.
    pub command: Vector3<T>,
    /// Joint acceleration `a*` handed to inverse dynamics.
    pub joint_accel: DVector<T>,
}

/// Instantaneous task-space inverse-dynamics tracker:
/// `τ = ID(q, v, a*)` with `J a* = p̈_cmd − J̇v` solved by damped least
/// squares plus a null-space posture term.
#[derive(Debug, Clone)]
pub struct IdTracker<T: Real> {
    model: Arc<RobotModel<T>>,
    frame: FrameId,
    gains: TaskGains<T>,
    trajectory: CircleTrajectory<T>,
    posture: DVector<T>,
}

impl<T: Real> IdTracker<T> {
    pub fn new(
        model: Arc<RobotModel<T>>,
        frame: &str,
        gains: TaskGains<T>,
        trajectory: CircleTrajectory<T>,
    ) -> Result<Self, ControlError> {
        let frame = model
            .frame_id(frame)
            .ok_or_else(|| crate::rbd::DynamicsError::UnknownFrame(frame.to_string()))?;
        let posture = model.home().clone();
        Ok(Self {
            model,
            frame,
            gains,
            trajectory,
            posture,
        })
    }

    pub fn with_posture(mut self, posture: DVector<T>) -> Result<Self, ControlError> {
        if posture.len() != self.model.dof() {
            return Err(ControlError::DimensionMismatch {
                expected: self.model.dof(),
                got: posture.len(),
            });
        }
        self.posture = posture;
        Ok(self)
    }

    pub fn gains(&self) -> &TaskGains<T> {
        &self.gains
    }

    pub fn trajectory(&self) -> &CircleTrajectory<T> {
        &self.trajectory
    }

    pub fn model(&self) -> &RobotModel<T> {
        &self.model
    }

    /// Everything up to (not including) the inverse-dynamics call.
    pub fn terms(&self, x: &JointState<T>, t: T) -> Result<IdTerms<T>, ControlError> {
        let model = &*self.model;
        let n = model.dof();
        check_state(x, n)?;
        let links = crate::rbd::kinematics_sweep(model, &x.q, &x.v);
        let frame = model.frame(self.frame);
        let position = links.origin[frame.link] + links.lever(frame.link, &frame.offset);
        let jacobian = crate::rbd::jacobian_from_sweep(model, &links, self.frame);
        let drift = crate::rbd::jdot_v_from_sweep(model, &links, self.frame);
        let velocity = &jacobian * &x.v;

        let reference = self.trajectory.reference(t);
        let g = &self.gains;
        let command = reference.acceleration
            + g.kp.component_mul(&(reference.position - position))
            + g.kd.component_mul(&(reference.velocity - velocity));

        let lambda2 = g.dls_damping * g.dls_damping;
        // Jᵀ(JJᵀ + λ²I)⁻¹ and (JᵀJ + λ²I)⁻¹Jᵀ coincide; pick the one that stays
        // invertible at λ = 0 for the chain's shape.
        let pinv: MatrixXx3<T> = if n >= 3 {
            let jjt: Matrix3<T> = &jacobian * jacobian.transpose() + Matrix3::identity() * lambda2;
            let inv = jjt.try_inverse().ok_or(ControlError::SingularTask)?;
            jacobian.transpose() * inv
        } else {
            let jtj = jacobian.transpose() * &jacobian + DMatrix::identity(n, n) * lambda2;
            let inv = jtj.try_inverse().ok_or(ControlError::SingularTask)?;
            inv * jacobian.transpose()
        };

        let task_accel = &pinv * (command - drift);
        let posture_accel = (&self.posture - &x.q) * g.posture_kp - &x.v * g.posture_kd;
        let projector = DMatrix::identity(n, n) - &pinv * &jacobian;
        let joint_accel = task_accel + projector * posture_accel;

        Ok(IdTerms {
            position,
            velocity,
            jacobian,
            drift,
            command,
            joint_accel,
        })
    }
}

impl<T: Real> TorqueController<T> for IdTracker<T> {
    fn dof(&self) -> usize {
        self.model.dof()
    }

    fn evaluate(&self, x: &JointState<T>, t: T) -> Result<DVector<T>, ControlError> {
        let terms = self.terms(x, t)?;
        let tau = inverse_dynamics(&self.model, &x.q, &x.v, &terms.joint_accel)?;
        finite_or_blowup(tau)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rbd::{forward_kinematics, frame_jacobian, jdot_v};
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bolt() -> Arc<RobotModel<f64>> {
        Arc::new(RobotModel::bolt_lite())
    }

    fn circle_at(center: Vector3<f64>, omega: f64) -> CircleTrajectory<f64> {
        CircleTrajectory::sagittal(center, 0.05, omega).unwrap()
    }

    #[test]
    fn critically_damped_gains() {
        let g = TaskGains::<f64>::critically_damped(500.0).unwrap();
        assert!((g.kd.x - 31.6227766016838).abs() < 1e-12);
        // √ is correctly rounded, so squaring it back is exact to within an ulp or two
        for kp in [1.0, 37.5, 100.0, 200.0, 500.0, 1000.0, 2000.0, 0.3] {
            let g = TaskGains::<f64>::critically_damped(kp).unwrap();
            assert!((g.kd.x * g.kd.x - 2.0 * kp).abs() <= 4.0 * f64::EPSILON * 2.0 * kp);
        }
        assert_eq!(
            TaskGains::<f64>::critically_damped(50.0).unwrap().kd.x,
            10.0
        );
        assert!(TaskGains::<f64>::critically_damped(0.0).is_err());
        assert!(TaskGains::<f64>::critically_damped(-5.0).is_err());
    }

    #[test]
    fn on_reference_reduces_to_gravity_and_damping_compensation() {
        let model = bolt();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let q = model.home() + DVector::from_fn(6, |_, _| rng.random_range(-0.2..0.2));
            let v = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            let p = forward_kinematics(&model, &q, "right_foot")
                .unwrap()
                .position;
            let pd = frame_jacobian(&model, &q, "right_foot").unwrap() * &v;
            // stationary reference the foot sits on; at rest the velocities match too
            let traj = CircleTrajectory::new(
                p - Vector3::x() * 0.05,
                0.05,
                0.0,
                Vector3::x(),
                Vector3::z(),
                0.0,
            )
            .unwrap();
            let mut gains = TaskGains::critically_damped(500.0).unwrap();
            gains.dls_damping = 0.0;
            gains.posture_kp = 0.0;
            gains.posture_kd = 0.0;
            let ctrl = IdTracker::new(model.clone(), "right_foot", gains, traj).unwrap();
            let x0 = JointState::at_rest(q.clone());
            let terms0 = ctrl.terms(&x0, 0.0).unwrap();
            assert!(terms0.joint_accel.amax() < 1e-12);
            let tau = ctrl.evaluate(&x0, 0.0).unwrap();
            let comp = inverse_dynamics(&model, &q, &x0.v, &DVector::zeros(6)).unwrap();
            assert!((tau - comp).amax() < 1e-12);

            // ṗ comes from the same sweep as J
            let x = JointState::new(q.clone(), v.clone()).unwrap();
            let terms = ctrl.terms(&x, 0.0).unwrap();
            assert!((terms.velocity - pd).norm() < 1e-15);
        }
    }

    #[test]
    fn pendulum_scalar_chain_oracle() {
        // −y axis: positive q lifts the foot; at q = 0 the foot moves purely vertically.
        let model = Arc::new(
            RobotModel::<f64>::from_toml_str(
                r#"
name = "pendulum"
gravity = [0.0, 0.0, -9.81]
[[joints]]
name = "hinge"
axis = [0.0, -1.0, 0.0]
mass = 1.0
com = [1.0, 0.0, 0.0]
damping = 0.0
[[frames]]
name = "right_foot"
link = "hinge"
offset = [1.0, 0.0, 0.0]
"#,
            )
            .unwrap(),
        );
        let (m, l, g, kp) = (1.0, 1.0, 9.81, 500.0);
        for e in [0.01, -0.003, 0.02] {
            // reference sits e above the foot, stationary
            let traj = CircleTrajectory::new(
                Vector3::new(1.0, 0.0, e) - Vector3::x() * 0.05,
                0.05,
                0.0,
                Vector3::x(),
                Vector3::z(),
                0.0,
            )
            .unwrap();
            let mut gains = TaskGains::critically_damped(kp).unwrap();
            gains.dls_damping = 0.0;
            let ctrl = IdTracker::new(model.clone(), "right_foot", gains, traj).unwrap();
            let tau = ctrl.evaluate(&JointState::zeros(1), 0.0).unwrap();
            let dp_dq = l; // ∂p_z/∂q at q = 0
            let oracle = m * l * l * (kp * e) / dp_dq + m * g * l;
            assert!((tau[0] - oracle).abs() < 1e-9, "{} vs {}", tau[0], oracle);
        }
    }

    #[test]
    fn task_space_consistency_without_damping() {
        let model = bolt();
        let center = forward_kinematics(&model, model.home(), "right_foot")
            .unwrap()
            .position;
        let mut gains = TaskGains::critically_damped(800.0).unwrap();
        gains.dls_damping = 0.0;
        let ctrl =
            IdTracker::new(model.clone(), "right_foot", gains, circle_at(center, 3.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let q = model.home() + DVector::from_fn(6, |_, _| rng.random_range(-0.3..0.3));
            let v = DVector::from_fn(6, |_, _| rng.random_range(-2.0..2.0));
            let t = rng.random_range(0.0..5.0);
            let x = JointState::new(q.clone(), v.clone()).unwrap();
            let terms = ctrl.terms(&x, t).unwrap();
            let jdv = jdot_v(&model, &q, &v, "right_foot").unwrap();
            let resid = &terms.jacobian * &terms.joint_accel + jdv - terms.command;
            assert!(resid.norm() <= 1e-9, "residual {}", resid.norm());
        }
    }

    #[test]
    fn idle_leg_follows_posture_only() {
        let model = bolt();
        let center = forward_kinematics(&model, model.home(), "right_foot")
            .unwrap()
            .position;
        let gains = TaskGains::critically_damped(500.0).unwrap();
        let ctrl = IdTracker::new(
            model.clone(),
            "right_foot",
            gains.clone(),
            circle_at(center, 3.0),
        )
        .unwrap();
        let mut q = model.home().clone();
        q[1] += 0.1;
        let terms = ctrl.terms(&JointState::at_rest(q), 0.2).unwrap();
        assert!((terms.joint_accel[1] - (-0.1 * gains.posture_kp)).abs() < 1e-12);
        assert_eq!(terms.joint_accel[0], 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = bolt();
        let gains = TaskGains::critically_damped(500.0).unwrap();
        let traj = circle_at(Vector3::zeros(), 1.0);
        assert!(IdTracker::new(model.clone(), "nose", gains.clone(), traj.clone()).is_err());
        let ctrl = IdTracker::new(model, "right_foot", gains, traj).unwrap();
        let bad = JointState::new(dvector![0.0], dvector![0.0]).unwrap();
        assert!(matches!(
            ctrl.evaluate(&bad, 0.0),
            Err(ControlError::DimensionMismatch {
                expected: 6,
                got: 1
            })
        ));
    }
}
