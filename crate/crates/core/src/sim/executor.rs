use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ExperimentConfig, Mode, RunCounters, SimError, SimTrace, TraceRow};
use crate::control::{CircleTrajectory, ControlError, TorqueController};
use crate::drivernet::DriverNetwork;
use crate::linearize::{linearize, LinearFeedbackLaw, LinearizeError};
use crate::rbd::{
    forward_kinematics_at, frame_jacobian_at, integrate_step, DynamicsError, FrameId, JointState,
    RobotModel,
};

/// Any joint speed above this counts as divergence, rad/s.
pub const BLOWUP_SPEED: f64 = 1e3;

/// Velocity measurement: additive Gaussian noise, then a first-order
/// low-pass discretized at the sensing period. Positions are exact.
pub struct Sensor {
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
    /// Filter gain per sample, 1 when the filter is off.
    alpha: f64,
    filtered: Option<DVector<f64>>,
}

impl Sensor {
    pub fn new(noise_std: f64, cutoff_hz: f64, period: f64, seed: u64) -> Self {
        let alpha = if cutoff_hz > 0.0 {
            1.0 - (-2.0 * std::f64::consts::PI * cutoff_hz * period).exp()
        } else {
            1.0
        };
        Self {
            noise: (noise_std > 0.0).then(|| Normal::new(0.0, noise_std).expect("finite std")),
            rng: ChaCha8Rng::seed_from_u64(seed),
            alpha,
            filtered: None,
        }
    }

    pub fn sense(&mut self, x: &JointState<f64>) -> JointState<f64> {
        let mut v = x.v.clone();
        if let Some(noise) = &self.noise {
            for vi in v.iter_mut() {
                *vi += noise.sample(&mut self.rng);
            }
        }
        let v = match self.filtered.take() {
            Some(prev) => &prev + (v - &prev) * self.alpha,
            None => v,
        };
        self.filtered = Some(v.clone());
        JointState { q: x.q.clone(), v }
    }
}

/// Extra outputs a caller may ask for.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Keep the clamped torque command of every fast tick.
    pub capture_commands: bool,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SimTrace, SimError> {
    run_with_options(cfg, RunOptions::default())
}

pub fn run_with_options(cfg: &ExperimentConfig, opts: RunOptions) -> Result<SimTrace, SimError> {
    let mut exec = Executor::new(cfg, opts)?;
    let ticks = cfg.tick_count();
    let mut blowup = None;
    for k in 0..ticks {
        if exec.tick(k)? == Flow::Diverged {
            let t = (k + 1) as f64 / f64::from(cfg.fast_hz);
            exec.record(t, true);
            blowup = Some(t);
            break;
        }
    }
    Ok(SimTrace {
        dof: exec.model.dof(),
        rows: exec.rows,
        blowup,
        counters: exec.counters,
        fidelity: exec.fidelity,
        commands: exec.commands,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Flow {
    Continue,
    Diverged,
}

fn control_diverged(e: &ControlError) -> bool {
    match e {
        ControlError::NonFiniteOutput | ControlError::SingularTask => true,
        ControlError::Dynamics(d) => dynamics_diverged(d),
        _ => false,
    }
}

fn dynamics_diverged(e: &DynamicsError) -> bool {
    matches!(
        e,
        DynamicsError::NonFiniteInput
            | DynamicsError::NonFiniteState
            | DynamicsError::SingularMassMatrix
    )
}

struct Executor<'a> {
    cfg: &'a ExperimentConfig,
    model: Arc<RobotModel<f64>>,
    controller: Box<dyn TorqueController<f64>>,
    trajectory: CircleTrajectory<f64>,
    frame: FrameId,
    limits: DVector<f64>,
    network: Option<DriverNetwork<f64>>,
    sensor: Sensor,
    state: JointState<f64>,
    sensed: JointState<f64>,
    /// Slow-loop torque held in direct mode.
    held: DVector<f64>,
    latest_law: Option<LinearFeedbackLaw<f64>>,
    unpushed: bool,
    sequence: u32,
    delay: VecDeque<DVector<f64>>,
    /// Torque applied over the first plant step of the current tick.
    applied: DVector<f64>,
    counters: RunCounters,
    rows: Vec<TraceRow>,
    commands: Option<Vec<DVector<f64>>>,
    fidelity: Option<f64>,
}

impl<'a> Executor<'a> {
    fn new(cfg: &'a ExperimentConfig, opts: RunOptions) -> Result<Self, SimError> {
        cfg.validate()?;
        let model = Arc::new(cfg.load_model()?);
        let n = model.dof();
        let controller = cfg.build_controller(&model)?;
        if controller.dof() != n {
            return Err(SimError::Config(format!(
                "controller drives {} joints, model has {n}",
                controller.dof()
            )));
        }
        let trajectory = cfg.build_trajectory(&model)?;
        let frame = model
            .frame_id(&cfg.frame)
            .ok_or_else(|| DynamicsError::UnknownFrame(cfg.frame.clone()))?;
        let network = match cfg.mode {
            Mode::Interpolated => {
                if n % 2 != 0 {
                    return Err(SimError::Config(format!(
                        "{n} joints cannot be split over two-joint boards"
                    )));
                }
                Some(DriverNetwork::chain(n / 2, cfg.network_config())?)
            }
            Mode::Direct => None,
        };
        let sensor = Sensor::new(
            cfg.realism.velocity_noise_std,
            cfg.realism.velocity_cutoff_hz,
            cfg.decimation as f64 / f64::from(cfg.fast_hz),
            cfg.seed,
        );
        let state = JointState::at_rest(cfg.initial_q(&model));
        Ok(Self {
            limits: cfg.torque_limits(&model),
            sensed: state.clone(),
            state,
            held: DVector::zeros(n),
            latest_law: None,
            unpushed: false,
            sequence: 0,
            delay: std::iter::repeat_n(DVector::zeros(n), cfg.realism.actuation_delay).collect(),
            applied: DVector::zeros(n),
            counters: RunCounters::default(),
            rows: Vec::new(),
            commands: opts.capture_commands.then(Vec::new),
            fidelity: cfg.record_fidelity.then_some(0.0),
            cfg,
            model,
            controller,
            trajectory,
            frame,
            network,
            sensor,
        })
    }

    fn tick(&mut self, k: u64) -> Result<Flow, SimError> {
        let cfg = self.cfg;
        let t = k as f64 / f64::from(cfg.fast_hz);
        self.counters.ticks += 1;

        // sense
        if k.is_multiple_of(cfg.decimation as u64) {
            self.sensed = self.sensor.sense(&self.state);
        }

        // slow loop
        if k.is_multiple_of(cfg.controller_period()) {
            self.counters.controller_evals += 1;
            match cfg.mode {
                Mode::Direct => match self.controller.evaluate(&self.sensed, t) {
                    Ok(tau) => self.held = tau,
                    Err(e) if control_diverged(&e) => return Ok(Flow::Diverged),
                    Err(e) => return Err(e.into()),
                },
                Mode::Interpolated => match linearize(&*self.controller, &self.sensed, t) {
                    Ok(law) => {
                        self.latest_law = Some(law.with_sequence(self.sequence));
                        self.sequence = self.sequence.wrapping_add(1);
                        self.unpushed = true;
                    }
                    Err(LinearizeError::NonFiniteProbe { .. } | LinearizeError::NonFiniteLaw) => {
                        return Ok(Flow::Diverged)
                    }
                    Err(LinearizeError::Control(e)) if control_diverged(&e) => {
                        return Ok(Flow::Diverged)
                    }
                    Err(e) => return Err(e.into()),
                },
            }
        }

        // law channel and fast loop
        let command = match &mut self.network {
            None => self.held.clone(),
            Some(net) => {
                if self.unpushed && k.is_multiple_of(cfg.push_period()) {
                    net.stage_law(self.latest_law.as_ref().expect("law exists when unpushed"))?;
                    self.counters.laws_staged += 1;
                    self.unpushed = false;
                }
                if k.is_multiple_of(cfg.decimation as u64) {
                    self.counters.torque_updates += 1;
                }
                net.tick_full(&self.sensed)?
            }
        };
        if cfg.mode == Mode::Direct && k.is_multiple_of(cfg.controller_period()) {
            self.counters.torque_updates += 1;
        }
        if !command.iter().all(|v| v.is_finite()) {
            return Ok(Flow::Diverged);
        }
        if let Some(fid) = self.fidelity.as_mut() {
            match self.controller.evaluate(&self.sensed, t) {
                Ok(reference) => *fid = fid.max((&command - reference).norm()),
                Err(e) if control_diverged(&e) => return Ok(Flow::Diverged),
                Err(e) => return Err(e.into()),
            }
        }
        let clamped = command.zip_map(&self.limits, |c, l| c.clamp(-l, l));
        if let Some(c) = self.commands.as_mut() {
            c.push(clamped.clone());
        }

        // plant
        let plant_dt = 1.0 / (u64::from(cfg.fast_hz) * cfg.plant_substeps as u64) as f64;
        let mut next = self.state.clone();
        for s in 0..cfg.plant_substeps {
            self.delay.push_back(clamped.clone());
            let applied = self.delay.pop_front().expect("delay line is never empty");
            if s == 0 {
                self.applied = applied.clone();
            }
            next = match integrate_step(&self.model, &next, &applied, plant_dt) {
                Ok(x) => x,
                Err(e) if dynamics_diverged(&e) => return Ok(Flow::Diverged),
                Err(e) => return Err(e.into()),
            };
        }
        if k.is_multiple_of(cfg.trace_stride as u64) {
            self.record(t, false);
        }
        if next.v.amax() > BLOWUP_SPEED {
            return Ok(Flow::Diverged);
        }
        self.state = next;
        Ok(Flow::Continue)
    }

    /// Stores the current plant state with the torque applied over the tick.
    fn record(&mut self, t: f64, blowup: bool) {
        let x = &self.state;
        let (p, p_dot) = match (
            forward_kinematics_at(&self.model, &x.q, self.frame),
            frame_jacobian_at(&self.model, &x.q, self.frame),
        ) {
            (Ok(pose), Ok(j)) => (pose.position, j * &x.v),
            _ => (
                nalgebra::Vector3::repeat(f64::NAN),
                nalgebra::Vector3::repeat(f64::NAN),
            ),
        };
        let reference = self.trajectory.reference(t);
        self.rows.push(TraceRow {
            t,
            q: x.q.clone(),
            v: x.v.clone(),
            tau: self.applied.clone(),
            p,
            p_dot,
            p_ref: reference.position,
            p_dot_ref: reference.velocity,
            pos_err: (reference.position - p).norm(),
            vel_err: (reference.velocity - p_dot).norm(),
            blowup,
        });
    }
}

/// Runs `cfg` (interpolated) at `fast_hz` with decimation `d` and again at
/// `fast_hz / d` without decimation and `d` plant substeps per tick, then
/// compares the torque commands at the ticks both runs share.
pub fn decimation_equivalence_check(cfg: &ExperimentConfig, d: usize) -> Result<bool, SimError> {
    if cfg.mode != Mode::Interpolated {
        return Err(SimError::Config(
            "decimation applies to interpolated runs".into(),
        ));
    }
    if cfg.hop_delay != 0 || cfg.law_latency != 0 {
        return Err(SimError::Config(
            "decimation equivalence needs hop_delay = 0 and law_latency = 0".into(),
        ));
    }
    if d == 0 || !cfg.fast_hz.is_multiple_of(d as u32) {
        return Err(SimError::Config(format!("fast_hz is not divisible by {d}")));
    }
    let mut fine = cfg.clone();
    fine.decimation = d;
    let mut coarse = cfg.clone();
    coarse.decimation = 1;
    coarse.fast_hz = cfg.fast_hz / d as u32;
    coarse.plant_substeps = cfg.plant_substeps * d;
    if coarse.law_push_hz.is_none() {
        coarse.law_push_hz = Some(fine.law_push_hz());
    }
    fine.validate()?;
    coarse.validate()?;

    let opts = RunOptions {
        capture_commands: true,
    };
    let a = run_with_options(&fine, opts)?;
    let b = run_with_options(&coarse, opts)?;
    if a.blowup.is_some() != b.blowup.is_some() {
        return Ok(false);
    }
    let fine_cmds = a.commands.expect("captured");
    let coarse_cmds = b.commands.expect("captured");
    let shared: Vec<_> = fine_cmds.iter().step_by(d).collect();
    Ok(shared.len() == coarse_cmds.len() && shared.iter().zip(&coarse_cmds).all(|(x, y)| *x == y))
}
