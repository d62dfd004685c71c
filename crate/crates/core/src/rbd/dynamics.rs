use nalgebra::{Cholesky, DMatrix, DVector, Matrix3, Vector3};

use super::kinematics::LinkStates;
use super::{check_finite, check_len, DynamicsError, JointState, RobotModel};
use crate::Real;

/// Recursive Newton-Euler. `gravity` and `damping` switch the corresponding
/// terms on; the public entry points fix them.
fn rnea<T: Real>(
    model: &RobotModel<T>,
    q: &DVector<T>,
    v: &DVector<T>,
    a: &DVector<T>,
    gravity: bool,
    damping: bool,
) -> DVector<T> {
    let n = model.dof();
    let base_accel = if gravity {
        -model.gravity()
    } else {
        Vector3::zeros()
    };
    let links = LinkStates::sweep(model, q, Some(v), Some(a), base_accel);

    let mut force = vec![Vector3::<T>::zeros(); n];
    let mut moment = vec![Vector3::<T>::zeros(); n];
    for (i, joint) in model.joints().iter().enumerate() {
        let rc = links.lever(i, &joint.com);
        let rot = links.rotation[i].matrix();
        let inertia = rot * joint.inertia * rot.transpose();
        let w = &links.omega[i];
        let f = links.point_accel(i, &rc) * joint.mass;
        force[i] = f;
        moment[i] = inertia * links.alpha[i] + w.cross(&(inertia * w)) + rc.cross(&f);
    }

    let mut tau = DVector::zeros(n);
    for i in (0..n).rev() {
        let joint = &model.joints()[i];
        tau[i] = links.axis[i].dot(&moment[i]);
        if damping {
            tau[i] += joint.damping * v[i];
        }
        if let Some(p) = joint.parent {
            let r = links.origin[i] - links.origin[p];
            let (f, m) = (force[i], moment[i]);
            force[p] += f;
            moment[p] += m + r.cross(&f);
        }
    }
    tau
}

fn check_state<T: Real>(
    model: &RobotModel<T>,
    vectors: &[&DVector<T>],
) -> Result<(), DynamicsError> {
    for v in vectors {
        check_len(v, model.dof())?;
        check_finite(v)?;
    }
    Ok(())
}

/// Joint torques realizing acceleration `a`:
/// `M(q)a + C(q,v)v + g(q) + D·v`.
pub fn inverse_dynamics<T: Real>(
    model: &RobotModel<T>,
    q: &DVector<T>,
    v: &DVector<T>,
    a: &DVector<T>,
) -> Result<DVector<T>, DynamicsError> {
    check_state(model, &[q, v, a])?;
    Ok(rnea(model, q, v, a, true, true))
}

/// Velocity-product, gravity and damping torques (`inverse_dynamics` at a = 0).
pub fn bias_forces<T: Real>(
    model: &RobotModel<T>,
    q: &DVector<T>,
    v: &DVector<T>,
) -> Result<DVector<T>, DynamicsError> {
    check_state(model, &[q, v])?;
    Ok(rnea(model, q, v, &DVector::zeros(model.dof()), true, true))
}

pub fn gravity_torques<T: Real>(
    model: &RobotModel<T>,
    q: &DVector<T>,
) -> Result<DVector<T>, DynamicsError> {
    check_state(model, &[q])?;
    let zero = DVector::zeros(model.dof());
    Ok(rnea(model, q, &zero, &zero, true, false))
}

/// Joint-space inertia matrix via composite rigid bodies.
pub fn mass_matrix<T: Real>(
    model: &RobotModel<T>,
    q: &DVector<T>,
) -> Result<DMatrix<T>, DynamicsError> {
    check_state(model, &[q])?;
    let n = model.dof();
    let links = LinkStates::poses(model, q);

    // Composite mass, first moment and rotational inertia about the world origin.
    let mut mass = vec![T::zero(); n];
    let mut first = vec![Vector3::<T>::zeros(); n];
    let mut inertia_o = vec![Matrix3::<T>::zeros(); n];
    for (i, joint) in model.joints().iter().enumerate() {
        let c = links.origin[i] + links.lever(i, &joint.com);
        let rot = links.rotation[i].matrix();
        mass[i] = joint.mass;
        first[i] = c * joint.mass;
        inertia_o[i] = rot * joint.inertia * rot.transpose() + parallel_axis(joint.mass, &c);
    }
    for i in (0..n).rev() {
        if let Some(p) = model.joints()[i].parent {
            let (m, h, io) = (mass[i], first[i], inertia_o[i]);
            mass[p] += m;
            first[p] += h;
            inertia_o[p] += io;
        }
    }

    let mut mm = DMatrix::zeros(n, n);
    for j in 0..n {
        let c = first[j] / mass[j];
        let inertia_c = inertia_o[j] - parallel_axis(mass[j], &c);
        let z = links.axis[j];
        let d = c - links.origin[j];
        // Wrench that gives the subtree a unit angular acceleration about joint j.
        let f = z.cross(&d) * mass[j];
        let n_j = inertia_c * z + d.cross(&f);
        for &i in model.support(j) {
            let lever = links.origin[j] - links.origin[i];
            let val = links.axis[i].dot(&(n_j + lever.cross(&f)));
            mm[(i, j)] = val;
            mm[(j, i)] = val;
        }
    }
    Ok(mm)
}

/// `m (|c|² E − c cᵀ)`.
fn parallel_axis<T: Real>(m: T, c: &Vector3<T>) -> Matrix3<T> {
    (Matrix3::identity() * c.norm_squared() - c * c.transpose()) * m
}

/// Joint accelerations produced by torques `tau`: solves `M a = τ − bias`.
pub fn forward_dynamics<T: Real>(
    model: &RobotModel<T>,
    q: &DVector<T>,
    v: &DVector<T>,
    tau: &DVector<T>,
) -> Result<DVector<T>, DynamicsError> {
    check_state(model, &[q, v, tau])?;
    let mm = mass_matrix(model, q)?;
    let rhs = tau - rnea(model, q, v, &DVector::zeros(model.dof()), true, true);
    let chol = Cholesky::new(mm).ok_or(DynamicsError::SingularMassMatrix)?;
    Ok(chol.solve(&rhs))
}

/// One semi-implicit Euler step: `v⁺ = v + a·dt`, `q⁺ = q + v⁺·dt`.
pub fn integrate_step<T: Real>(
    model: &RobotModel<T>,
    state: &JointState<T>,
    tau: &DVector<T>,
    dt: T,
) -> Result<JointState<T>, DynamicsError> {
    let a = forward_dynamics(model, &state.q, &state.v, tau).map_err(|e| match e {
        DynamicsError::NonFiniteInput => DynamicsError::NonFiniteState,
        other => other,
    })?;
    let v = &state.v + a * dt;
    let q = &state.q + &v * dt;
    let next = JointState { q, v };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(DynamicsError::NonFiniteState)
    }
}
