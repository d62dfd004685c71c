use nalgebra::Vector3;

use super::ControlError;
use crate::Real;

/// Reference position, velocity and acceleration of the tracked point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskReference<T: Real> {
    pub position: Vector3<T>,
    pub velocity: Vector3<T>,
    pub acceleration: Vector3<T>,
}

/// `p*(t) = c + R (cos(ωt + φ) u + sin(ωt + φ) w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleTrajectory<T: Real> {
    center: Vector3<T>,
    radius: T,
    omega: T,
    u: Vector3<T>,
    w: Vector3<T>,
    phase: T,
}

impl<T: Real> CircleTrajectory<T> {
    pub fn new(
        center: Vector3<T>,
        radius: T,
        omega: T,
        u: Vector3<T>,
        w: Vector3<T>,
        phase: T,
    ) -> Result<Self, ControlError> {
        let tol = T::lit(1e-12).max(T::eps() * T::lit(16.0));
        if !(radius > T::zero()) {
            return Err(ControlError::InvalidTrajectory("radius must be positive"));
        }
        if (u.norm() - T::one()).abs() > tol || (w.norm() - T::one()).abs() > tol {
            return Err(ControlError::InvalidTrajectory(
                "basis vectors must be unit",
            ));
        }
        if u.dot(&w).abs() > tol {
            return Err(ControlError::InvalidTrajectory(
                "basis vectors must be orthogonal",
            ));
        }
        Ok(Self {
            center,
            radius,
            omega,
            u,
            w,
            phase,
        })
    }

    /// Circle in the sagittal (x, z) plane.
    pub fn sagittal(center: Vector3<T>, radius: T, omega: T) -> Result<Self, ControlError> {
        Self::new(center, radius, omega, Vector3::x(), Vector3::z(), T::zero())
    }

    pub fn center(&self) -> &Vector3<T> {
        &self.center
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn omega(&self) -> T {
        self.omega
    }

    pub fn reference(&self, t: T) -> TaskReference<T> {
        let theta = self.omega * t + self.phase;
        let (s, c) = theta.sin_cos();
        let radial = self.u * c + self.w * s;
        let tangent = self.w * c - self.u * s;
        let rw = self.radius * self.omega;
        TaskReference {
            position: self.center + radial * self.radius,
            velocity: tangent * rw,
            acceleration: -radial * (rw * self.omega),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn circle(omega: f64, phase: f64) -> CircleTrajectory<f64> {
        CircleTrajectory::new(
            Vector3::new(0.1, -0.1, -0.3),
            0.05,
            omega,
            Vector3::x(),
            Vector3::z(),
            phase,
        )
        .unwrap()
    }

    #[test]
    fn start_of_circle() {
        let c = circle(std::f64::consts::PI, 0.0);
        let r = c.reference(0.0);
        let (rad, om) = (0.05, std::f64::consts::PI);
        assert_eq!(r.position, c.center() + Vector3::x() * rad);
        assert_eq!(r.velocity, Vector3::z() * (rad * om));
        assert_eq!(r.acceleration, -Vector3::x() * (rad * om * om));
    }

    #[test]
    fn stationary_when_omega_is_zero() {
        let c = circle(0.0, 0.4);
        for t in [0.0, 1.3, 7.0] {
            let r = c.reference(t);
            assert_eq!(r.velocity, Vector3::zeros());
            assert_eq!(r.acceleration, Vector3::zeros());
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        let c = Vector3::zeros();
        assert!(CircleTrajectory::new(c, 0.0, 1.0, Vector3::x(), Vector3::z(), 0.0).is_err());
        assert!(CircleTrajectory::new(c, 0.1, 1.0, Vector3::x(), Vector3::x(), 0.0).is_err());
        assert!(CircleTrajectory::new(c, 0.1, 1.0, Vector3::x() * 2.0, Vector3::z(), 0.0).is_err());
    }

    proptest! {
        #[test]
        fn stays_on_circle_and_derivatives_are_consistent(
            t in -20.0f64..20.0, omega in -10.0f64..10.0, phase in -3.0f64..3.0
        ) {
            let c = circle(omega, phase);
            let r = c.reference(t);
            prop_assert!(((r.position - c.center()).norm() - 0.05).abs() < 1e-12);
            let eps = 1e-6;
            let (p, m) = (c.reference(t + eps), c.reference(t - eps));
            let dp = (p.position - m.position) / (2.0 * eps);
            let dv = (p.velocity - m.velocity) / (2.0 * eps);
            prop_assert!((dp - r.velocity).norm() < 1e-6);
            prop_assert!((dv - r.acceleration).norm() < 1e-6);
        }
    }
}
