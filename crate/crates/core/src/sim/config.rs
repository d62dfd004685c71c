use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::control::{
    AffineController, CircleTrajectory, IdTracker, MlpPolicy, MlpTracker, StandInGains, TaskGains,
    TorqueController,
};
use crate::drivernet::{NetworkConfig, WireFormat};
use crate::rbd::{forward_kinematics, RobotModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    /// Task-space inverse-dynamics tracker.
    Id,
    /// Feed-forward tanh policy.
    Mlp,
    /// Fixed joint PD about the home posture.
    Pd,
}

impl ControllerKind {
    pub fn default_rate_hz(self) -> u32 {
        match self {
            ControllerKind::Id | ControllerKind::Pd => 500,
            ControllerKind::Mlp => 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Zero-order hold of the slow-loop torque.
    Direct,
    /// Linear law executed by the driver boards.
    Interpolated,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Direct => "direct",
            Mode::Interpolated => "interpolated",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Mode::Direct),
            "interpolated" => Ok(Mode::Interpolated),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// Task-space gains of the tracker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainsConfig {
    /// s⁻².
    pub kp: f64,
    /// s⁻¹; `√(2·kp)` when absent.
    pub kd: Option<f64>,
    pub dls_damping: f64,
    /// s⁻²; the posture Kd is always `√(2·posture_kp)`.
    pub posture_kp: f64,
}

impl Default for GainsConfig {
    fn default() -> Self {
        Self {
            kp: 500.0,
            kd: None,
            dls_damping: TaskGains::<f64>::DEFAULT_DLS_DAMPING,
            posture_kp: TaskGains::<f64>::DEFAULT_POSTURE_KP,
        }
    }
}

/// Circle followed by the task frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    /// m, world frame; the frame's home-posture position when absent.
    pub center: Option<[f64; 3]>,
    /// m.
    pub radius: f64,
    /// rad/s.
    pub omega: f64,
    pub u: [f64; 3],
    pub w: [f64; 3],
    /// rad.
    pub phase: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            center: None,
            radius: 0.05,
            omega: std::f64::consts::PI,
            u: [1.0, 0.0, 0.0],
            w: [0.0, 0.0, 1.0],
            phase: 0.0,
        }
    }
}

/// Sensing and actuation imperfections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RealismConfig {
    /// Std of Gaussian noise added to measured velocities, rad/s; 0 disables.
    pub velocity_noise_std: f64,
    /// First-order low-pass on measured velocities, Hz; 0 disables.
    pub velocity_cutoff_hz: f64,
    /// Plant steps between a torque command and its application.
    pub actuation_delay: usize,
    /// Overrides every joint's limit, N·m.
    pub torque_limit: Option<f64>,
}

impl Default for RealismConfig {
    fn default() -> Self {
        Self {
            velocity_noise_std: 0.05,
            velocity_cutoff_hz: 500.0,
            actuation_delay: 1,
            torque_limit: None,
        }
    }
}

impl RealismConfig {
    /// No noise, no filter, no delay.
    pub fn ideal() -> Self {
        Self {
            velocity_noise_std: 0.0,
            velocity_cutoff_hz: 0.0,
            actuation_delay: 0,
            torque_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct PolicyConfig {
    /// Policy weights; a seeded stand-in is generated when absent.
    pub file: Option<PathBuf>,
    pub seed: u64,
    pub stand_in: StandInGains,
}

/// Joint-space PD baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdConfig {
    /// N·m/rad.
    pub kp: f64,
    /// N·m·s/rad.
    pub kd: f64,
}

impl Default for PdConfig {
    fn default() -> Self {
        Self { kp: 20.0, kd: 0.5 }
    }
}

/// One simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Robot model file; the bundled biped when absent.
    pub model: Option<PathBuf>,
    pub frame: String,
    pub controller: ControllerKind,
    pub mode: Mode,
    pub fast_hz: u32,
    /// Defaults to 500 Hz for `id` and `pd`, 200 Hz for `mlp`.
    pub controller_hz: Option<u32>,
    /// Defaults to `min(controller_hz, 1000)`.
    pub law_push_hz: Option<u32>,
    pub decimation: usize,
    pub hop_delay: usize,
    pub law_latency: usize,
    pub wire: WireFormat,
    pub plant_substeps: usize,
    /// s.
    pub duration: f64,
    /// Fast ticks between stored trace rows.
    pub trace_stride: usize,
    pub seed: u64,
    /// Joint angles at t = 0, rad; the model's home posture when absent.
    pub initial_q: Option<Vec<f64>>,
    /// Track `max ‖τ_fast − τ_controller(x(t))‖` over every tick.
    pub record_fidelity: bool,
    pub gains: GainsConfig,
    pub trajectory: TrajectoryConfig,
    pub realism: RealismConfig,
    pub policy: PolicyConfig,
    pub pd: PdConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: None,
            frame: "right_foot".into(),
            controller: ControllerKind::Id,
            mode: Mode::Interpolated,
            fast_hz: 40_000,
            controller_hz: None,
            law_push_hz: None,
            decimation: 1,
            hop_delay: 0,
            law_latency: 0,
            wire: WireFormat::Float32,
            plant_substeps: 1,
            duration: 5.0,
            trace_stride: 20,
            seed: 0,
            initial_q: None,
            record_fidelity: false,
            gains: GainsConfig::default(),
            trajectory: TrajectoryConfig::default(),
            realism: RealismConfig::default(),
            policy: PolicyConfig::default(),
            pd: PdConfig::default(),
        }
    }
}

pub const MAX_LAW_PUSH_HZ: u32 = 1000;

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative `model` or `policy.file` path is taken
    /// relative to the config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(m) = cfg.model.as_mut() {
            if m.is_relative() {
                *m = base.join(&*m);
            }
        }
        if let Some(f) = cfg.policy.file.as_mut() {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn controller_hz(&self) -> u32 {
        self.controller_hz
            .unwrap_or_else(|| self.controller.default_rate_hz())
    }

    pub fn law_push_hz(&self) -> u32 {
        self.law_push_hz
            .unwrap_or_else(|| self.controller_hz().min(MAX_LAW_PUSH_HZ))
    }

    pub fn tick_count(&self) -> u64 {
        (self.duration * f64::from(self.fast_hz)).round() as u64
    }

    pub fn controller_period(&self) -> u64 {
        u64::from(self.fast_hz / self.controller_hz())
    }

    pub fn push_period(&self) -> u64 {
        u64::from(self.fast_hz / self.law_push_hz())
    }

    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            hop_delay: self.hop_delay,
            decimation: self.decimation,
            law_latency: self.law_latency,
            wire: self.wire,
            drop_probability: 0.0,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        let (fast, ctrl, push) = (self.fast_hz, self.controller_hz(), self.law_push_hz());
        if fast == 0 || ctrl == 0 || push == 0 {
            return bad("rates must be positive".into());
        }
        if fast % ctrl != 0 {
            return bad(format!(
                "fast_hz {fast} is not a multiple of controller_hz {ctrl}"
            ));
        }
        if fast % push != 0 {
            return bad(format!(
                "fast_hz {fast} is not a multiple of law_push_hz {push}"
            ));
        }
        if push > MAX_LAW_PUSH_HZ {
            return bad(format!("law_push_hz {push} exceeds {MAX_LAW_PUSH_HZ}"));
        }
        if self.decimation == 0 {
            return bad("decimation must be at least 1".into());
        }
        let d = self.decimation as u64;
        if !self.controller_period().is_multiple_of(d) || !self.push_period().is_multiple_of(d) {
            return bad(format!(
                "controller and law-push periods must be multiples of the decimation {d}"
            ));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad("duration must be positive".into());
        }
        if self.trace_stride == 0 || self.plant_substeps == 0 {
            return bad("trace_stride and plant_substeps must be at least 1".into());
        }
        let r = &self.realism;
        if !(r.velocity_noise_std >= 0.0 && r.velocity_cutoff_hz >= 0.0) {
            return bad("noise std and cutoff must be non-negative".into());
        }
        if r.torque_limit.is_some_and(|l| !(l >= 0.0)) {
            return bad("torque limit must be non-negative".into());
        }
        if !(self.gains.kp > 0.0) || self.gains.kd.is_some_and(|k| !(k > 0.0)) {
            return bad("gains must be positive".into());
        }
        Ok(())
    }

    pub fn load_model(&self) -> Result<RobotModel<f64>, SimError> {
        let model = match &self.model {
            Some(path) => RobotModel::load(path)?,
            None => RobotModel::bolt_lite(),
        };
        if let Some(q) = &self.initial_q {
            if q.len() != model.dof() {
                return Err(SimError::Config(format!(
                    "initial_q has {} entries for {} joints",
                    q.len(),
                    model.dof()
                )));
            }
        }
        Ok(model)
    }

    pub fn initial_q(&self, model: &RobotModel<f64>) -> DVector<f64> {
        match &self.initial_q {
            Some(q) => DVector::from_column_slice(q),
            None => model.home().clone(),
        }
    }

    pub fn torque_limits(&self, model: &RobotModel<f64>) -> DVector<f64> {
        match self.realism.torque_limit {
            Some(l) => DVector::from_element(model.dof(), l),
            None => model.torque_limits(),
        }
    }

    pub fn build_trajectory(
        &self,
        model: &RobotModel<f64>,
    ) -> Result<CircleTrajectory<f64>, SimError> {
        let t = &self.trajectory;
        let center = match t.center {
            Some(c) => Vector3::from(c),
            None => forward_kinematics(model, model.home(), &self.frame)?.position,
        };
        Ok(CircleTrajectory::new(
            center,
            t.radius,
            t.omega,
            Vector3::from(t.u),
            Vector3::from(t.w),
            t.phase,
        )?)
    }

    pub fn task_gains(&self) -> Result<TaskGains<f64>, SimError> {
        let g = &self.gains;
        let kd = g.kd.unwrap_or_else(|| (g.kp + g.kp).sqrt());
        Ok(TaskGains::new(
            Vector3::repeat(g.kp),
            Vector3::repeat(kd),
            g.dls_damping,
            g.posture_kp,
            (2.0 * g.posture_kp).sqrt(),
        )?)
    }

    pub fn build_controller(
        &self,
        model: &Arc<RobotModel<f64>>,
    ) -> Result<Box<dyn TorqueController<f64>>, SimError> {
        let traj = self.build_trajectory(model)?;
        Ok(match self.controller {
            ControllerKind::Id => Box::new(IdTracker::new(
                model.clone(),
                &self.frame,
                self.task_gains()?,
                traj,
            )?),
            ControllerKind::Mlp => {
                let policy = match &self.policy.file {
                    Some(path) => MlpPolicy::load(path)?,
                    None => MlpPolicy::tracking_stand_in(
                        model,
                        &self.frame,
                        &self.policy.stand_in,
                        self.policy.seed,
                    )?,
                };
                Box::new(MlpTracker::new(Arc::new(policy), traj)?)
            }
            ControllerKind::Pd => Box::new(AffineController::joint_pd(
                model,
                model.home(),
                self.pd.kp,
                self.pd.kd,
            )?),
        })
    }
}
