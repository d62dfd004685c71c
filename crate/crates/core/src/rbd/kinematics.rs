use nalgebra::{DVector, Matrix3xX, Rotation3, Vector3};

use super::{check_len, DynamicsError, FrameId, RobotModel};
use crate::Real;

/// World pose of a task frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePose<T: Real> {
    pub position: Vector3<T>,
    pub rotation: Rotation3<T>,
}

/// Per-link world quantities from one forward sweep over the tree.
pub(crate) struct LinkStates<T: Real> {
    pub rotation: Vec<Rotation3<T>>,
    pub origin: Vec<Vector3<T>>,
    /// World-frame joint axis.
    pub axis: Vec<Vector3<T>>,
    pub omega: Vec<Vector3<T>>,
    pub alpha: Vec<Vector3<T>>,
    /// Linear acceleration of the link frame origin.
    pub accel: Vec<Vector3<T>>,
}

impl<T: Real> LinkStates<T> {
    /// Poses only; rates and accelerations are left at zero.
    pub fn poses(model: &RobotModel<T>, q: &DVector<T>) -> Self {
        Self::sweep(model, q, None, None, Vector3::zeros())
    }

    /// Full sweep. `base_accel` is the linear acceleration imposed on the base
    /// (`-gravity` folds gravity into the recursion).
    pub fn sweep(
        model: &RobotModel<T>,
        q: &DVector<T>,
        v: Option<&DVector<T>>,
        a: Option<&DVector<T>>,
        base_accel: Vector3<T>,
    ) -> Self {
        let n = model.dof();
        let mut s = Self {
            rotation: Vec::with_capacity(n),
            origin: Vec::with_capacity(n),
            axis: Vec::with_capacity(n),
            omega: Vec::with_capacity(n),
            alpha: Vec::with_capacity(n),
            accel: Vec::with_capacity(n),
        };
        for (i, joint) in model.joints().iter().enumerate() {
            let (p_rot, p_org, p_om, p_al, p_acc) = match joint.parent {
                Some(p) => (
                    s.rotation[p],
                    s.origin[p],
                    s.omega[p],
                    s.alpha[p],
                    s.accel[p],
                ),
                None => (
                    Rotation3::identity(),
                    Vector3::zeros(),
                    Vector3::zeros(),
                    Vector3::zeros(),
                    base_accel,
                ),
            };
            let frame_rot = p_rot * joint.placement.rotation.to_rotation_matrix();
            let r = p_rot * joint.placement.translation.vector;
            let z = frame_rot * joint.axis.into_inner();
            let rot = frame_rot * Rotation3::from_axis_angle(&joint.axis, q[i]);
            let qd = v.map_or(T::zero(), |v| v[i]);
            let qdd = a.map_or(T::zero(), |a| a[i]);

            s.rotation.push(rot);
            s.origin.push(p_org + r);
            s.axis.push(z);
            s.omega.push(p_om + z * qd);
            s.alpha.push(p_al + z * qdd + p_om.cross(&(z * qd)));
            s.accel
                .push(p_acc + p_al.cross(&r) + p_om.cross(&p_om.cross(&r)));
        }
        s
    }

    /// World offset from the link origin to a point fixed in the link.
    pub fn lever(&self, link: usize, offset: &Vector3<T>) -> Vector3<T> {
        self.rotation[link] * offset
    }

    /// Acceleration of a point fixed in `link` at world lever arm `r`.
    pub fn point_accel(&self, link: usize, r: &Vector3<T>) -> Vector3<T> {
        let w = &self.omega[link];
        self.accel[link] + self.alpha[link].cross(r) + w.cross(&w.cross(r))
    }
}

fn resolve<T: Real>(model: &RobotModel<T>, frame: &str) -> Result<FrameId, DynamicsError> {
    model
        .frame_id(frame)
        .ok_or_else(|| DynamicsError::UnknownFrame(frame.to_string()))
}

/// World pose of the named frame.
pub fn forward_kinematics<T: Real>(
    model: &RobotModel<T>,
    q: &DVector<T>,
    frame: &str,
) -> Result<FramePose<T>, DynamicsError> {
    forward_kinematics_at(model, q, resolve(model, frame)?)
}

pub fn forward_kinematics_at<T: Real>(
    model: &RobotModel<T>,
    q: &DVector<T>,
    frame: FrameId,
) -> Result<FramePose<T>, DynamicsError> {
    check_len(q, model.dof())?;
    let f = model.frame(frame);
    let links = LinkStates::poses(model, q);
    Ok(FramePose {
        position: links.origin[f.link] + links.lever(f.link, &f.offset),
        rotation: links.rotation[f.link],
    })
}

/// Linear-velocity Jacobian of the frame origin, world axes (3×n).
pub fn frame_jacobian<T: Real>(
    model: &RobotModel<T>,
    q: &DVector<T>,
    frame: &str,
) -> Result<Matrix3xX<T>, DynamicsError> {
    frame_jacobian_at(model, q, resolve(model, frame)?)
}

pub fn frame_jacobian_at<T: Real>(
    model: &RobotModel<T>,
    q: &DVector<T>,
    frame: FrameId,
) -> Result<Matrix3xX<T>, DynamicsError> {
    check_len(q, model.dof())?;
    let links = LinkStates::poses(model, q);
    Ok(jacobian_from(model, &links, frame))
}

pub(crate) fn jacobian_from<T: Real>(
    model: &RobotModel<T>,
    links: &LinkStates<T>,
    frame: FrameId,
) -> Matrix3xX<T> {
    let f = model.frame(frame);
    let p = links.origin[f.link] + links.lever(f.link, &f.offset);
    let mut jac = Matrix3xX::zeros(model.dof());
    for &j in model.support(f.link) {
        jac.set_column(j, &links.axis[j].cross(&(p - links.origin[j])));
    }
    jac
}

/// Drift term `J̇(q, v)·v`: frame acceleration with zero joint acceleration and
/// no gravity.
pub fn jdot_v<T: Real>(
    model: &RobotModel<T>,
    q: &DVector<T>,
    v: &DVector<T>,
    frame: &str,
) -> Result<Vector3<T>, DynamicsError> {
    jdot_v_at(model, q, v, resolve(model, frame)?)
}

pub fn jdot_v_at<T: Real>(
    model: &RobotModel<T>,
    q: &DVector<T>,
    v: &DVector<T>,
    frame: FrameId,
) -> Result<Vector3<T>, DynamicsError> {
    check_len(q, model.dof())?;
    check_len(v, model.dof())?;
    let links = LinkStates::sweep(model, q, Some(v), None, Vector3::zeros());
    Ok(jdot_v_from(model, &links, frame))
}

pub(crate) fn jdot_v_from<T: Real>(
    model: &RobotModel<T>,
    links: &LinkStates<T>,
    frame: FrameId,
) -> Vector3<T> {
    let f = model.frame(frame);
    links.point_accel(f.link, &links.lever(f.link, &f.offset))
}
