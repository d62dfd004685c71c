//! Feed-forward torque policy `π(q, v, p*) → τ` with tanh hidden layers.
//!
//! # Policy file layout
//!
//! All integers are `u32` and all reals `f64`, little-endian.
//!
//! | field                          | size                 |
//! |--------------------------------|----------------------|
//! | magic `b"TQPOLICY"`            | 8                    |
//! | layer count `L`                | 4                    |
//! | per layer: rows, cols          | 8·L                  |
//! | per layer: weights (row-major), then biases | 8·(rows·cols + rows) each |
//! | input offsets                  | 8·cols₀              |
//! | input scales                   | 8·cols₀              |
//!
//! The input vector is `(q, v, p*)` and is normalized as
//! `(input − offset) ⊙ scale` before the first layer.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{check_state, finite_or_blowup, CircleTrajectory, ControlError, TorqueController};
use crate::rbd::{forward_kinematics, frame_jacobian, gravity_torques, JointState, RobotModel};
use crate::Real;

pub const POLICY_MAGIC: &[u8; 8] = b"TQPOLICY";

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T: Real> {
    pub weight: DMatrix<T>,
    pub bias: DVector<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpPolicy<T: Real> {
    layers: Vec<Layer<T>>,
    input_offset: DVector<T>,
    input_scale: DVector<T>,
}

impl<T: Real> MlpPolicy<T> {
    pub fn new(
        layers: Vec<Layer<T>>,
        input_offset: DVector<T>,
        input_scale: DVector<T>,
    ) -> Result<Self, ControlError> {
        let first = layers
            .first()
            .ok_or_else(|| ControlError::PolicyFormat("policy has no layers".into()))?;
        let input_dim = first.weight.ncols();
        let mut width = input_dim;
        for (i, l) in layers.iter().enumerate() {
            if l.weight.ncols() != width {
                return Err(ControlError::LayerChain {
                    layer: i,
                    expected: l.weight.ncols(),
                    got: width,
                });
            }
            if l.bias.len() != l.weight.nrows() {
                return Err(ControlError::PolicyFormat(format!(
                    "layer {i}: {} biases for {} rows",
                    l.bias.len(),
                    l.weight.nrows()
                )));
            }
            width = l.weight.nrows();
        }
        if input_offset.len() != input_dim || input_scale.len() != input_dim {
            return Err(ControlError::PolicyFormat(
                "normalization vectors must match the input width".into(),
            ));
        }
        let finite = layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
            .chain(input_offset.iter())
            .chain(input_scale.iter())
            .all(|w| w.is_finite());
        if !finite {
            return Err(ControlError::NonFiniteWeights);
        }
        Ok(Self {
            layers,
            input_offset,
            input_scale,
        })
    }

    /// Policy without input normalization.
    pub fn unnormalized(layers: Vec<Layer<T>>) -> Result<Self, ControlError> {
        let dim = layers.first().map_or(0, |l| l.weight.ncols());
        Self::new(
            layers,
            DVector::zeros(dim),
            DVector::from_element(dim, T::one()),
        )
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.nrows()
    }

    /// Joint count implied by the `(q, v, p*)` input layout.
    pub fn dof(&self) -> usize {
        self.input_dim().saturating_sub(3) / 2
    }

    fn check_layout(&self, x: &JointState<T>) -> Result<usize, ControlError> {
        let n = self.output_dim();
        if self.input_dim() != 2 * n + 3 {
            return Err(ControlError::DimensionMismatch {
                expected: 2 * n + 3,
                got: self.input_dim(),
            });
        }
        check_state(x, n)?;
        Ok(n)
    }

    fn normalized_input(&self, x: &JointState<T>, target: &Vector3<T>) -> DVector<T> {
        let n = x.dof();
        DVector::from_fn(2 * n + 3, |i, _| {
            let raw = if i < n {
                x.q[i]
            } else if i < 2 * n {
                x.v[i - n]
            } else {
                target[i - 2 * n]
            };
            (raw - self.input_offset[i]) * self.input_scale[i]
        })
    }

    /// Hidden activations of every tanh layer, then the output.
    fn forward(&self, input: DVector<T>) -> (Vec<DVector<T>>, DVector<T>) {
        let mut hidden = Vec::with_capacity(self.layers.len() - 1);
        let mut h = input;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = &layer.weight * &h + &layer.bias;
            if i == last {
                return (hidden, z);
            }
            h = z.map(|v| v.tanh());
            hidden.push(h.clone());
        }
        unreachable!("policy has at least one layer")
    }

    /// Torque command for state `x` and tracking target `target`.
    pub fn eval(&self, x: &JointState<T>, target: &Vector3<T>) -> Result<DVector<T>, ControlError> {
        self.check_layout(x)?;
        let (_, out) = self.forward(self.normalized_input(x, target));
        finite_or_blowup(out)
    }

    /// `∂τ/∂x` (n × 2n) by the chain rule; the target columns are dropped.
    pub fn state_jacobian(
        &self,
        x: &JointState<T>,
        target: &Vector3<T>,
    ) -> Result<DMatrix<T>, ControlError> {
        Ok(self.eval_with_jacobian(x, target)?.1)
    }

    pub fn eval_with_jacobian(
        &self,
        x: &JointState<T>,
        target: &Vector3<T>,
    ) -> Result<(DVector<T>, DMatrix<T>), ControlError> {
        let n = self.check_layout(x)?;
        let (hidden, out) = self.forward(self.normalized_input(x, target));
        let last = self.layers.len() - 1;
        let mut grad = self.layers[last].weight.clone();
        for i in (0..last).rev() {
            // scale columns by tanh' = 1 − h², then pull back through the layer
            for (c, h) in hidden[i].iter().enumerate() {
                let d = T::one() - *h * *h;
                grad.column_mut(c).scale_mut(d);
            }
            grad *= &self.layers[i].weight;
        }
        let mut jac = grad.columns(0, 2 * n).into_owned();
        for c in 0..2 * n {
            jac.column_mut(c).scale_mut(self.input_scale[c]);
        }
        Ok((finite_or_blowup(out)?, jac))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(POLICY_MAGIC);
        buf.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            buf.extend_from_slice(&(l.weight.nrows() as u32).to_le_bytes());
            buf.extend_from_slice(&(l.weight.ncols() as u32).to_le_bytes());
        }
        let mut put = |v: T| buf.extend_from_slice(&v.as_f64().to_le_bytes());
        for l in &self.layers {
            for r in 0..l.weight.nrows() {
                for c in 0..l.weight.ncols() {
                    put(l.weight[(r, c)]);
                }
            }
            l.bias.iter().for_each(|&b| put(b));
        }
        self.input_offset.iter().for_each(|&v| put(v));
        self.input_scale.iter().for_each(|&v| put(v));
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ControlError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != POLICY_MAGIC {
            return Err(ControlError::PolicyFormat("bad magic".into()));
        }
        let count = r.u32()? as usize;
        if count == 0 {
            return Err(ControlError::PolicyFormat("policy has no layers".into()));
        }
        let mut shapes = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            shapes.push((r.u32()? as usize, r.u32()? as usize));
        }
        let mut layers = Vec::with_capacity(count.min(1024));
        for &(rows, cols) in &shapes {
            let weights = r.reals(rows.checked_mul(cols).ok_or_else(overflow)?)?;
            let weight = DMatrix::from_row_iterator(rows, cols, weights.into_iter().map(T::lit));
            let bias = DVector::from_iterator(rows, r.reals(rows)?.into_iter().map(T::lit));
            layers.push(Layer { weight, bias });
        }
        let dim = shapes[0].1;
        let offset = DVector::from_iterator(dim, r.reals(dim)?.into_iter().map(T::lit));
        let scale = DVector::from_iterator(dim, r.reals(dim)?.into_iter().map(T::lit));
        if r.pos != bytes.len() {
            return Err(ControlError::PolicyFormat(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Self::new(layers, offset, scale)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ControlError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ControlError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Dense tanh network with Gaussian weights, `std = weight_scale / √fan_in`.
    /// `widths` lists every layer width from input to output.
    pub fn random(seed: u64, widths: &[usize], weight_scale: f64) -> Result<Self, ControlError> {
        if widths.len() < 2 {
            return Err(ControlError::PolicyFormat(
                "need input and output widths".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|w| {
                let normal =
                    Normal::new(0.0, weight_scale / (w[0] as f64).sqrt()).expect("finite std");
                Layer {
                    weight: DMatrix::from_fn(w[1], w[0], |_, _| T::lit(normal.sample(&mut rng))),
                    bias: DVector::from_fn(w[1], |_, _| T::lit(rng.random_range(-0.1..0.1))),
                }
            })
            .collect();
        Self::unnormalized(layers)
    }

    /// A deterministic stand-in for a trained tracking policy.
    ///
    /// The first `2n + 3` hidden units read one normalized input each in their
    /// near-linear range; the output layer combines them into joint PD about
    /// the nominal posture, Cartesian stiffness toward the target (mapped
    /// through the nominal-pose Jacobian) and gravity compensation at the
    /// nominal posture. The remaining hidden units are random and feed small
    /// output weights, giving a smooth non-linear perturbation. Every output
    /// is bounded because every hidden unit is.
    pub fn tracking_stand_in(
        model: &RobotModel<T>,
        frame: &str,
        gains: &StandInGains,
        seed: u64,
    ) -> Result<Self, ControlError> {
        let n = model.dof();
        let dim = 2 * n + 3;
        let home = model.home();
        let anchor = forward_kinematics(model, home, frame)?.position;
        let jac = frame_jacobian(model, home, frame)?;
        let gravity = gravity_torques(model, home)?;

        const GAIN: f64 = 0.5;
        let (q_scale, v_scale, p_scale) = (1.0, 0.1, 10.0);
        let offset = DVector::from_fn(dim, |i, _| {
            if i < n {
                home[i]
            } else if i < 2 * n {
                T::zero()
            } else {
                anchor[i - 2 * n]
            }
        });
        let scale = DVector::from_fn(dim, |i, _| {
            T::lit(if i < n {
                q_scale
            } else if i < 2 * n {
                v_scale
            } else {
                p_scale
            })
        });

        let width = dim + gains.random_units;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let in_w = Normal::new(0.0, 0.5).expect("finite std");
        let out_w = Normal::new(0.0, gains.random_torque).expect("finite std");
        let mut w1 = DMatrix::zeros(width, dim);
        for i in 0..dim {
            w1[(i, i)] = T::lit(GAIN);
        }
        for r in dim..width {
            for c in 0..dim {
                w1[(r, c)] = T::lit(in_w.sample(&mut rng));
            }
        }
        let b1 = DVector::from_fn(width, |i, _| {
            if i < dim {
                T::zero()
            } else {
                T::lit(rng.random_range(-0.2..0.2))
            }
        });

        // Linear-range unit i outputs ≈ GAIN·scale_i·(input_i − offset_i).
        let kx = T::lit(gains.task_stiffness);
        let jtkj = jac.transpose() * &jac * kx;
        let mut w2 = DMatrix::zeros(n, width);
        for r in 0..n {
            for c in 0..n {
                let mut k = jtkj[(r, c)];
                if r == c {
                    k += T::lit(gains.joint_stiffness);
                }
                w2[(r, c)] = -k / T::lit(GAIN * q_scale);
            }
            w2[(r, n + r)] = -T::lit(gains.joint_damping / (GAIN * v_scale));
            for a in 0..3 {
                w2[(r, 2 * n + a)] = jac[(a, r)] * kx / T::lit(GAIN * p_scale);
            }
            for c in dim..width {
                w2[(r, c)] = T::lit(out_w.sample(&mut rng));
            }
        }
        Self::new(
            vec![
                Layer {
                    weight: w1,
                    bias: b1,
                },
                Layer {
                    weight: w2,
                    bias: gravity,
                },
            ],
            offset,
            scale,
        )
    }
}

/// Shape parameters of [`MlpPolicy::tracking_stand_in`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StandInGains {
    /// N·m/rad about the nominal posture.
    pub joint_stiffness: f64,
    /// N·m·s/rad.
    pub joint_damping: f64,
    /// N/m toward the target point.
    pub task_stiffness: f64,
    pub random_units: usize,
    /// Std of the random units' output weights, N·m.
    pub random_torque: f64,
}

impl Default for StandInGains {
    fn default() -> Self {
        Self {
            joint_stiffness: 1.0,
            joint_damping: 1.0,
            task_stiffness: 400.0,
            random_units: 16,
            random_torque: 0.02,
        }
    }
}

fn overflow() -> ControlError {
    ControlError::PolicyFormat("layer size overflow".into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], ControlError> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| ControlError::PolicyFormat("truncated policy file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, ControlError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn reals(&mut self, count: usize) -> Result<Vec<f64>, ControlError> {
        let raw = self.take(count.checked_mul(8).ok_or_else(overflow)?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

/// Policy driven by a circular reference: `τ(x; t) = π(x, p*(t))`.
#[derive(Debug, Clone)]
pub struct MlpTracker<T: Real> {
    policy: Arc<MlpPolicy<T>>,
    trajectory: CircleTrajectory<T>,
}

impl<T: Real> MlpTracker<T> {
    pub fn new(
        policy: Arc<MlpPolicy<T>>,
        trajectory: CircleTrajectory<T>,
    ) -> Result<Self, ControlError> {
        let n = policy.output_dim();
        if policy.input_dim() != 2 * n + 3 {
            return Err(ControlError::DimensionMismatch {
                expected: 2 * n + 3,
                got: policy.input_dim(),
            });
        }
        Ok(Self { policy, trajectory })
    }

    pub fn policy(&self) -> &MlpPolicy<T> {
        &self.policy
    }

    pub fn target(&self, t: T) -> Vector3<T> {
        self.trajectory.reference(t).position
    }
}

impl<T: Real> TorqueController<T> for MlpTracker<T> {
    fn dof(&self) -> usize {
        self.policy.output_dim()
    }

    fn evaluate(&self, x: &JointState<T>, t: T) -> Result<DVector<T>, ControlError> {
        self.policy.eval(x, &self.target(t))
    }

    fn exact_linearization(
        &self,
        x: &JointState<T>,
        t: T,
    ) -> Option<Result<(DMatrix<T>, DVector<T>), ControlError>> {
        Some(crate::linearize::analytic_parts(
            &self.policy,
            x,
            &self.target(t),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};

    fn random_state(rng: &mut ChaCha8Rng, n: usize) -> (JointState<f64>, Vector3<f64>) {
        let q = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let v = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let p = Vector3::from_fn(|_, _| rng.random_range(-0.3..0.3));
        (JointState::new(q, v).unwrap(), p)
    }

    /// Straight-line re-implementation of the forward pass with explicit loops.
    fn reference_forward(policy: &MlpPolicy<f64>, input: &[f64]) -> Vec<f64> {
        let mut h: Vec<f64> = input
            .iter()
            .enumerate()
            .map(|(i, x)| (x - policy.input_offset[i]) * policy.input_scale[i])
            .collect();
        for (li, l) in policy.layers().iter().enumerate() {
            let mut next = vec![0.0; l.weight.nrows()];
            for r in 0..l.weight.nrows() {
                let mut acc = l.bias[r];
                for c in 0..l.weight.ncols() {
                    acc += l.weight[(r, c)] * h[c];
                }
                next[r] = if li + 1 < policy.layers().len() {
                    acc.tanh()
                } else {
                    acc
                };
            }
            h = next;
        }
        h
    }

    fn stacked_input(x: &JointState<f64>, p: &Vector3<f64>) -> Vec<f64> {
        x.q.iter()
            .chain(x.v.iter())
            .chain(p.iter())
            .copied()
            .collect()
    }

    #[test]
    fn zero_policy_outputs_zero() {
        let n = 6;
        let layers = vec![
            Layer {
                weight: DMatrix::zeros(8, 2 * n + 3),
                bias: DVector::zeros(8),
            },
            Layer {
                weight: DMatrix::zeros(n, 8),
                bias: DVector::zeros(n),
            },
        ];
        let p = MlpPolicy::unnormalized(layers).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, target) = random_state(&mut rng, n);
        assert_eq!(p.eval(&x, &target).unwrap(), DVector::zeros(n));
        assert_eq!(
            p.state_jacobian(&x, &target).unwrap(),
            DMatrix::zeros(n, 2 * n)
        );
    }

    #[test]
    fn single_affine_layer() {
        let n = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = DMatrix::from_fn(n, 2 * n + 3, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let p = MlpPolicy::unnormalized(vec![Layer {
            weight: w.clone(),
            bias: b.clone(),
        }])
        .unwrap();
        let (x, target) = random_state(&mut rng, n);
        let input = DVector::from_vec(stacked_input(&x, &target));
        let direct = &w * input + &b;
        assert!((p.eval(&x, &target).unwrap() - direct).amax() < 1e-15);
        assert_eq!(
            p.state_jacobian(&x, &target).unwrap(),
            w.columns(0, 2 * n).into_owned()
        );
    }

    #[test]
    fn forward_matches_independent_reimplementation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..20 {
            let p = MlpPolicy::<f64>::random(seed, &[15, 32, 32, 6], 1.0).unwrap();
            let (x, target) = random_state(&mut rng, 6);
            let out = p.eval(&x, &target).unwrap();
            let oracle = reference_forward(&p, &stacked_input(&x, &target));
            for (a, b) in out.iter().zip(oracle) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    fn fd_jacobian(p: &MlpPolicy<f64>, x: &JointState<f64>, target: &Vector3<f64>) -> DMatrix<f64> {
        let n = x.dof();
        let h = 1e-5;
        let base = x.stacked();
        let mut jac = DMatrix::zeros(n, 2 * n);
        for c in 0..2 * n {
            let mut plus = base.clone();
            plus[c] += h;
            let mut minus = base.clone();
            minus[c] -= h;
            let tp = p
                .eval(&JointState::from_stacked(&plus).unwrap(), target)
                .unwrap();
            let tm = p
                .eval(&JointState::from_stacked(&minus).unwrap(), target)
                .unwrap();
            jac.set_column(c, &((tp - tm) / (2.0 * h)));
        }
        jac
    }

    #[test]
    fn stand_in_policy_is_bounded_and_pd_like() {
        let model = RobotModel::<f64>::bolt_lite();
        let gains = StandInGains::default();
        let p = MlpPolicy::tracking_stand_in(&model, "right_foot", &gains, 4).unwrap();
        let home = JointState::at_rest(model.home().clone());
        let anchor = forward_kinematics(&model, model.home(), "right_foot")
            .unwrap()
            .position;
        let jac = p.state_jacobian(&home, &anchor).unwrap();
        // velocity block is close to −Kd·I
        for j in 0..6 {
            assert!((jac[(j, 6 + j)] + gains.joint_damping).abs() < 0.1);
        }
        // bounded: sum of |output weights| + |bias|
        let bound: Vec<f64> = (0..6)
            .map(|r| {
                p.layers()[1]
                    .weight
                    .row(r)
                    .iter()
                    .map(|w| w.abs())
                    .sum::<f64>()
                    + p.layers()[1].bias[r].abs()
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (x, t) = random_state(&mut rng, 6);
            let x = JointState::new(&x.q * 50.0, &x.v * 500.0).unwrap();
            let tau = p.eval(&x, &(t * 100.0)).unwrap();
            for r in 0..6 {
                assert!(tau[r].abs() <= bound[r]);
            }
        }
    }

    #[test]
    fn file_roundtrip_and_errors() {
        let model = RobotModel::<f64>::bolt_lite();
        let p = MlpPolicy::tracking_stand_in(&model, "right_foot", &StandInGains::default(), 9)
            .unwrap();
        let bytes = p.to_bytes();
        assert_eq!(&bytes[..8], POLICY_MAGIC);
        assert_eq!(MlpPolicy::<f64>::from_bytes(&bytes).unwrap(), p);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.bin");
        p.save(&path).unwrap();
        assert_eq!(MlpPolicy::<f64>::load(&path).unwrap(), p);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            MlpPolicy::<f64>::from_bytes(&bad),
            Err(ControlError::PolicyFormat(_))
        ));
        assert!(MlpPolicy::<f64>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(MlpPolicy::<f64>::from_bytes(&extra).is_err());
        // a NaN weight is rejected
        let mut nan = bytes.clone();
        let first_weight = 8 + 4 + 8 * 2;
        nan[first_weight..first_weight + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(
            MlpPolicy::<f64>::from_bytes(&nan),
            Err(ControlError::NonFiniteWeights)
        ));
    }

    #[test]
    fn layer_chain_is_validated() {
        let layers = vec![
            Layer {
                weight: DMatrix::<f64>::zeros(4, 5),
                bias: DVector::zeros(4),
            },
            Layer {
                weight: DMatrix::zeros(1, 3),
                bias: DVector::zeros(1),
            },
        ];
        assert!(matches!(
            MlpPolicy::unnormalized(layers),
            Err(ControlError::LayerChain { layer: 1, .. })
        ));
        let p = MlpPolicy::<f64>::random(0, &[15, 8, 6], 1.0).unwrap();
        let wrong = JointState::zeros(5);
        assert!(p.eval(&wrong, &Vector3::zeros()).is_err());
    }

    #[test]
    fn generic_over_single_precision() {
        let p32 = MlpPolicy::<f32>::random(7, &[15, 16, 6], 1.0).unwrap();
        let p64 = MlpPolicy::<f64>::random(7, &[15, 16, 6], 1.0).unwrap();
        let x32 = JointState::new(
            DVector::from_element(6, 0.3f32),
            DVector::from_element(6, -0.2f32),
        )
        .unwrap();
        let x64 = JointState::new(
            DVector::from_element(6, 0.3),
            DVector::from_element(6, -0.2),
        )
        .unwrap();
        let a = p32.eval(&x32, &Vector3::repeat(0.1f32)).unwrap();
        let b = p64.eval(&x64, &Vector3::repeat(0.1)).unwrap();
        for (a, b) in a.iter().zip(b.iter()) {
            assert!((*a as f64 - b).abs() < 1e-5);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn analytic_jacobian_matches_central_differences(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let hidden = rng.random_range(4..40);
            let p = MlpPolicy::<f64>::random(seed, &[15, hidden, hidden, 6], 1.5).unwrap();
            let (x, target) = random_state(&mut rng, 6);
            let analytic = p.state_jacobian(&x, &target).unwrap();
            let fd = fd_jacobian(&p, &x, &target);
            prop_assert!((analytic - fd).amax() <= 1e-5);
        }
    }
}
