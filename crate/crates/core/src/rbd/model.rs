//! Robot description: a fixed-base tree of revolute joints with named task
//! frames, plus the TOML model file schema.
//!
//! # Model file
//!
//! Joints are listed in topological order (a joint's parent must appear
//! before it). Units are SI throughout.
//!
//! ```toml
//! name = "pendulum"
//! gravity = [0.0, 0.0, -9.81]        # m/s², world frame
//! home = [0.0]                       # rad, optional nominal posture
//!
//! [[joints]]
//! name = "hinge"
//! parent = "base"                    # "base" or the name of an earlier joint
//! translation = [0.0, 0.0, 0.0]      # m, placement in the parent link frame
//! rpy = [0.0, 0.0, 0.0]              # rad, placement rotation (roll, pitch, yaw)
//! axis = [0.0, 1.0, 0.0]             # unit rotation axis in the joint frame
//! mass = 1.0                         # kg
//! com = [1.0, 0.0, 0.0]              # m, link COM in the joint frame
//! inertia = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]  # kg·m² about COM: ixx iyy izz ixy ixz iyz
//! damping = 0.0                      # N·m·s/rad
//! torque_limit = 2.7                 # N·m
//!
//! [[frames]]
//! name = "right_foot"
//! link = "hinge"                     # joint whose link carries the frame
//! offset = [1.0, 0.0, 0.0]           # m, in the link frame
//! ```

use std::path::Path;

use nalgebra::{DVector, Isometry3, Matrix3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Real;

const BOLT_LITE: &str = include_str!("../../models/bolt_lite.toml");

/// Problems found while loading or validating a robot description.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("failed to read model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Parse(String),
    #[error("model has no joints")]
    Empty,
    #[error("joint `{joint}`: parent `{parent}` is not an earlier joint")]
    BadParent { joint: String, parent: String },
    #[error("joint `{0}`: link mass must be positive")]
    NonPositiveMass(String),
    #[error("joint `{0}`: inertia tensor is not symmetric positive semi-definite")]
    BadInertia(String),
    #[error("joint `{0}`: rotation axis must have unit norm")]
    AxisNotUnit(String),
    #[error("joint `{0}`: torque limit must be positive")]
    BadTorqueLimit(String),
    #[error("joint `{0}`: damping must be non-negative")]
    NegativeDamping(String),
    #[error("frame `{frame}` references unknown link `{link}`")]
    UnknownLink { frame: String, link: String },
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("home posture has length {got}, expected {expected}")]
    HomeLength { expected: usize, got: usize },
    #[error("non-finite value in model")]
    NonFinite,
}

/// One revolute joint together with the link it drives.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSpec<T: Real> {
    pub name: String,
    /// Index of the parent joint's link, `None` for the fixed base.
    pub parent: Option<usize>,
    /// Fixed transform from the parent link frame to this joint frame.
    pub placement: Isometry3<T>,
    pub axis: Unit<Vector3<T>>,
    pub mass: T,
    /// COM of the link, expressed in the joint frame.
    pub com: Vector3<T>,
    /// Rotational inertia about the COM, joint-frame axes.
    pub inertia: Matrix3<T>,
    pub damping: T,
    pub torque_limit: T,
}

/// A named point rigidly attached to a link.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskFrame<T: Real> {
    pub name: String,
    pub link: usize,
    pub offset: Vector3<T>,
}

/// Handle to a validated task frame of a particular model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameId(pub(crate) usize);

/// Fixed-base revolute-joint tree. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel<T: Real> {
    name: String,
    joints: Vec<JointSpec<T>>,
    frames: Vec<TaskFrame<T>>,
    gravity: Vector3<T>,
    home: DVector<T>,
    /// For each link, the chain of joint indices from the root to the link.
    support: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl<T: Real> RobotModel<T> {
    pub fn new(
        name: impl Into<String>,
        joints: Vec<JointSpec<T>>,
        frames: Vec<TaskFrame<T>>,
        gravity: Vector3<T>,
        home: Option<DVector<T>>,
    ) -> Result<Self, ModelError> {
        if joints.is_empty() {
            return Err(ModelError::Empty);
        }
        let n = joints.len();
        let axis_tol = T::lit(1e-12).max(T::eps() * T::lit(16.0));
        let sym_tol = T::eps() * T::lit(64.0);
        let mut names = std::collections::HashSet::new();
        for (i, j) in joints.iter().enumerate() {
            if !names.insert(j.name.clone()) {
                return Err(ModelError::DuplicateName(j.name.clone()));
            }
            if let Some(p) = j.parent {
                if p >= i {
                    return Err(ModelError::BadParent {
                        joint: j.name.clone(),
                        parent: p.to_string(),
                    });
                }
            }
            let finite = j.mass.is_finite()
                && j.damping.is_finite()
                && j.torque_limit.is_finite()
                && j.com.iter().all(|c| c.is_finite())
                && j.inertia.iter().all(|c| c.is_finite())
                && j.placement.translation.vector.iter().all(|c| c.is_finite());
            if !finite {
                return Err(ModelError::NonFinite);
            }
            if j.mass <= T::zero() {
                return Err(ModelError::NonPositiveMass(j.name.clone()));
            }
            if (j.axis.norm() - T::one()).abs() > axis_tol {
                return Err(ModelError::AxisNotUnit(j.name.clone()));
            }
            if j.torque_limit <= T::zero() {
                return Err(ModelError::BadTorqueLimit(j.name.clone()));
            }
            if j.damping < T::zero() {
                return Err(ModelError::NegativeDamping(j.name.clone()));
            }
            let scale = j.inertia.amax().max(T::one());
            if (j.inertia - j.inertia.transpose()).amax() > sym_tol * scale {
                return Err(ModelError::BadInertia(j.name.clone()));
            }
            let eig = j.inertia.symmetric_eigenvalues();
            if eig.iter().any(|&e| e < -sym_tol * scale) {
                return Err(ModelError::BadInertia(j.name.clone()));
            }
        }
        for f in &frames {
            if f.link >= n {
                return Err(ModelError::UnknownLink {
                    frame: f.name.clone(),
                    link: f.link.to_string(),
                });
            }
            if !names.insert(f.name.clone()) {
                return Err(ModelError::DuplicateName(f.name.clone()));
            }
        }
        let home = match home {
            Some(h) if h.len() != n => {
                return Err(ModelError::HomeLength {
                    expected: n,
                    got: h.len(),
                })
            }
            Some(h) => h,
            None => DVector::zeros(n),
        };

        let mut support: Vec<Vec<usize>> = Vec::with_capacity(n);
        let mut children = vec![Vec::new(); n];
        for (i, j) in joints.iter().enumerate() {
            let mut chain = match j.parent {
                Some(p) => {
                    children[p].push(i);
                    support[p].clone()
                }
                None => Vec::new(),
            };
            chain.push(i);
            support.push(chain);
        }

        Ok(Self {
            name: name.into(),
            joints,
            frames,
            gravity,
            home,
            support,
            children,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of joints.
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[JointSpec<T>] {
        &self.joints
    }

    pub fn frames(&self) -> &[TaskFrame<T>] {
        &self.frames
    }

    pub fn gravity(&self) -> &Vector3<T> {
        &self.gravity
    }

    /// Nominal posture, zeros unless the model file sets `home`.
    pub fn home(&self) -> &DVector<T> {
        &self.home
    }

    pub fn torque_limits(&self) -> DVector<T> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.torque_limit))
    }

    pub fn frame_id(&self, name: &str) -> Option<FrameId> {
        self.frames.iter().position(|f| f.name == name).map(FrameId)
    }

    pub fn frame(&self, id: FrameId) -> &TaskFrame<T> {
        &self.frames[id.0]
    }

    /// Joints from the root down to (and including) `link`.
    pub fn support(&self, link: usize) -> &[usize] {
        &self.support[link]
    }

    pub fn children(&self, link: usize) -> &[usize] {
        &self.children[link]
    }

    /// Copy of the model with a different gravity vector.
    pub fn with_gravity(&self, gravity: Vector3<T>) -> Self {
        Self {
            gravity,
            ..self.clone()
        }
    }

    /// Copy of the model with every joint's viscous damping replaced.
    pub fn with_damping(&self, damping: T) -> Self {
        let mut out = self.clone();
        for j in &mut out.joints {
            j.damping = damping;
        }
        out
    }

    /// The shipped six-joint biped-leg model.
    pub fn bolt_lite() -> Self {
        Self::from_toml_str(BOLT_LITE).expect("bundled bolt-lite model is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = toml::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        file.into_model()
    }

    pub fn to_model_file(&self) -> ModelFile {
        let v3 = |v: &Vector3<T>| [v.x.as_f64(), v.y.as_f64(), v.z.as_f64()];
        ModelFile {
            name: self.name.clone(),
            gravity: v3(&self.gravity),
            home: Some(self.home.iter().map(|h| h.as_f64()).collect()),
            joints: self
                .joints
                .iter()
                .map(|j| {
                    let (r, p, y) = j.placement.rotation.euler_angles();
                    let i = &j.inertia;
                    JointEntry {
                        name: j.name.clone(),
                        parent: j
                            .parent
                            .map(|p| self.joints[p].name.clone())
                            .unwrap_or_else(|| "base".to_string()),
                        translation: v3(&j.placement.translation.vector),
                        rpy: [r.as_f64(), p.as_f64(), y.as_f64()],
                        axis: v3(&j.axis),
                        mass: j.mass.as_f64(),
                        com: v3(&j.com),
                        inertia: [
                            i[(0, 0)].as_f64(),
                            i[(1, 1)].as_f64(),
                            i[(2, 2)].as_f64(),
                            i[(0, 1)].as_f64(),
                            i[(0, 2)].as_f64(),
                            i[(1, 2)].as_f64(),
                        ],
                        damping: Some(j.damping.as_f64()),
                        torque_limit: Some(j.torque_limit.as_f64()),
                    }
                })
                .collect(),
            frames: self
                .frames
                .iter()
                .map(|f| FrameEntry {
                    name: f.name.clone(),
                    link: self.joints[f.link].name.clone(),
                    offset: v3(&f.offset),
                })
                .collect(),
        }
    }
}

pub const DEFAULT_DAMPING: f64 = 0.01;
pub const DEFAULT_TORQUE_LIMIT: f64 = 2.7;

/// Serialized form of [`RobotModel`]; see the module docs for the schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub name: String,
    pub gravity: [f64; 3],
    #[serde(default)]
    pub home: Option<Vec<f64>>,
    pub joints: Vec<JointEntry>,
    #[serde(default)]
    pub frames: Vec<FrameEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointEntry {
    pub name: String,
    #[serde(default = "base_name")]
    pub parent: String,
    #[serde(default)]
    pub translation: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
    pub axis: [f64; 3],
    pub mass: f64,
    #[serde(default)]
    pub com: [f64; 3],
    #[serde(default)]
    pub inertia: [f64; 6],
    #[serde(default)]
    pub damping: Option<f64>,
    #[serde(default)]
    pub torque_limit: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub name: String,
    pub link: String,
    #[serde(default)]
    pub offset: [f64; 3],
}

fn base_name() -> String {
    "base".to_string()
}

impl ModelFile {
    pub fn into_model<T: Real>(self) -> Result<RobotModel<T>, ModelError> {
        let v3 = |a: [f64; 3]| Vector3::new(T::lit(a[0]), T::lit(a[1]), T::lit(a[2]));
        let mut index = std::collections::HashMap::new();
        let mut joints = Vec::with_capacity(self.joints.len());
        for (i, j) in self.joints.into_iter().enumerate() {
            let parent = if j.parent == "base" {
                None
            } else {
                Some(*index.get(&j.parent).ok_or_else(|| ModelError::BadParent {
                    joint: j.name.clone(),
                    parent: j.parent.clone(),
                })?)
            };
            let [ixx, iyy, izz, ixy, ixz, iyz] = j.inertia;
            let inertia = Matrix3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz).map(T::lit);
            let rotation = UnitQuaternion::from_euler_angles(
                T::lit(j.rpy[0]),
                T::lit(j.rpy[1]),
                T::lit(j.rpy[2]),
            );
            index.insert(j.name.clone(), i);
            joints.push(JointSpec {
                name: j.name,
                parent,
                placement: Isometry3::from_parts(Translation3::from(v3(j.translation)), rotation),
                // Stored unnormalized so the unit-norm invariant is checked, not assumed.
                axis: Unit::new_unchecked(v3(j.axis)),
                mass: T::lit(j.mass),
                com: v3(j.com),
                inertia,
                damping: T::lit(j.damping.unwrap_or(DEFAULT_DAMPING)),
                torque_limit: T::lit(j.torque_limit.unwrap_or(DEFAULT_TORQUE_LIMIT)),
            });
        }
        let frames = self
            .frames
            .into_iter()
            .map(|f| {
                let link = *index.get(&f.link).ok_or_else(|| ModelError::UnknownLink {
                    frame: f.name.clone(),
                    link: f.link.clone(),
                })?;
                Ok(TaskFrame {
                    name: f.name,
                    link,
                    offset: v3(f.offset),
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        let home = self
            .home
            .map(|h| DVector::from_iterator(h.len(), h.into_iter().map(T::lit)));
        RobotModel::new(self.name, joints, frames, v3(self.gravity), home)
    }
}
