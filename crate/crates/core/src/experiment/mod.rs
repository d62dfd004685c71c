//! Sweeps over the task gain, direct-versus-interpolated comparisons and
//! the statistics behind them.

mod stats;

pub use stats::{percentile, percentile_sorted, sort_checked, welch_psd};

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{run_experiment, ExperimentConfig, Mode, SimError, SimTrace, TraceRow};

/// Samples before this time (s) are start-up transient and ignored.
pub const STEADY_STATE_START: f64 = 1.0;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("no samples")]
    EmptySamples,
    #[error("non-finite sample")]
    NonFiniteSample,
    #[error("percentile {0} outside [0, 100]")]
    PercentileRange(f64),
    #[error("signal too short: need {needed} samples, got {got}")]
    ShortSignal { needed: usize, got: usize },
    #[error("invalid sweep: {0}")]
    Spec(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Grid of runs: every gain × mode × seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Task position gains, s⁻², strictly increasing.
    pub kp: Vec<f64>,
    #[serde(default = "both_modes")]
    pub modes: Vec<Mode>,
    /// Runs per cell; seeds are `base.seed + r` unless `seeds` is given.
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub base: ExperimentConfig,
}

fn both_modes() -> Vec<Mode> {
    vec![Mode::Direct, Mode::Interpolated]
}

fn one() -> usize {
    1
}

impl SweepSpec {
    pub fn new(base: ExperimentConfig, kp: Vec<f64>, modes: Vec<Mode>, repetitions: usize) -> Self {
        Self {
            kp,
            modes,
            repetitions,
            seeds: None,
            base,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let spec: Self = toml::from_str(text).map_err(|e| ExperimentError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Reads a sweep file; relative paths in `base` resolve against it.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let mut spec = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for p in [spec.base.model.as_mut(), spec.base.policy.file.as_mut()]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(spec)
    }

    pub fn seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.repetitions as u64)
                .map(|r| self.base.seed + r)
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Spec(m.into()));
        if self.kp.is_empty() || !self.kp.iter().all(|&k| k > 0.0 && k.is_finite()) {
            return bad("kp values must be positive");
        }
        if self.kp.windows(2).any(|w| w[0] >= w[1]) {
            return bad("kp values must be strictly increasing");
        }
        if self.modes.is_empty() {
            return bad("no modes");
        }
        if self.seeds().is_empty() {
            return bad("at least one repetition is required");
        }
        self.base.validate()?;
        Ok(())
    }

    fn cell_config(&self, kp: f64, mode: Mode, seed: u64) -> ExperimentConfig {
        let mut cfg = self.base.clone();
        cfg.gains.kp = kp;
        cfg.gains.kd = None;
        cfg.mode = mode;
        cfg.seed = seed;
        cfg
    }
}

/// Pooled statistics of one (gain, mode) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub kp: f64,
    pub mode: Mode,
    pub seed_count: usize,
    pub pos_err_med: f64,
    pub pos_err_p5: f64,
    pub pos_err_p95: f64,
    pub vel_err_med: f64,
    pub vel_err_p5: f64,
    pub vel_err_p95: f64,
    pub vel_err_p9: f64,
    pub blowup_frac: f64,
}

impl SummaryRow {
    pub const HEADER: [&'static str; 11] = [
        "kp",
        "mode",
        "seed_count",
        "pos_err_med",
        "pos_err_p5",
        "pos_err_p95",
        "vel_err_med",
        "vel_err_p5",
        "vel_err_p95",
        "vel_err_p9",
        "blowup_frac",
    ];

    /// Pools the steady-state rows of every trace. Statistics are NaN when
    /// no run reached the steady-state window.
    pub fn from_traces<'a>(
        kp: f64,
        mode: Mode,
        traces: impl IntoIterator<Item = (&'a [TraceRow], bool)>,
    ) -> Self {
        let mut pos = Vec::new();
        let mut vel = Vec::new();
        let (mut runs, mut blown) = (0usize, 0usize);
        for (rows, blowup) in traces {
            runs += 1;
            blown += usize::from(blowup);
            for r in rows
                .iter()
                .filter(|r| r.t >= STEADY_STATE_START && !r.blowup)
            {
                pos.push(r.pos_err);
                vel.push(r.vel_err);
            }
        }
        let stats = |mut s: Vec<f64>, ps: &[f64]| -> Vec<f64> {
            match sort_checked(&mut s) {
                Ok(()) => ps
                    .iter()
                    .map(|&p| percentile_sorted(&s, p).expect("valid percentile"))
                    .collect(),
                Err(_) => vec![f64::NAN; ps.len()],
            }
        };
        let p = stats(pos, &[50.0, 5.0, 95.0]);
        let v = stats(vel, &[50.0, 5.0, 95.0, 9.0]);
        Self {
            kp,
            mode,
            seed_count: runs,
            pos_err_med: p[0],
            pos_err_p5: p[1],
            pos_err_p95: p[2],
            vel_err_med: v[0],
            vel_err_p5: v[1],
            vel_err_p95: v[2],
            vel_err_p9: v[3],
            blowup_frac: if runs == 0 {
                0.0
            } else {
                blown as f64 / runs as f64
            },
        }
    }

    /// `p95 − p5` of the velocity error.
    pub fn vel_spread(&self) -> f64 {
        self.vel_err_p95 - self.vel_err_p5
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.kp.to_string(),
            self.mode.to_string(),
            self.seed_count.to_string(),
            self.pos_err_med.to_string(),
            self.pos_err_p5.to_string(),
            self.pos_err_p95.to_string(),
            self.vel_err_med.to_string(),
            self.vel_err_p5.to_string(),
            self.vel_err_p95.to_string(),
            self.vel_err_p9.to_string(),
            self.blowup_frac.to_string(),
        ]
    }
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SummaryRow::HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn summary_csv_bytes(rows: &[SummaryRow]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_summary_csv(rows, &mut buf).expect("writing to memory");
    buf
}

/// One executed run of a sweep.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub kp: f64,
    pub mode: Mode,
    pub repetition: usize,
    pub seed: u64,
    pub trace: SimTrace,
    pub trace_file: Option<PathBuf>,
}

impl CellRun {
    pub fn file_name(kp: f64, mode: Mode, repetition: usize, seed: u64) -> String {
        format!("kp{kp}_{mode}_r{repetition}_s{seed}.csv")
    }

    /// Statistics of this run alone.
    pub fn summary(&self) -> SummaryRow {
        SummaryRow::from_traces(
            self.kp,
            self.mode,
            [(self.trace.rows.as_slice(), self.trace.blowup.is_some())],
        )
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SummaryRow>,
    /// In (gain, mode, repetition) order.
    pub runs: Vec<CellRun>,
}

impl SweepResult {
    pub fn row(&self, kp: f64, mode: Mode) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.kp == kp && r.mode == mode)
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>8} {:>13} {:>5} {:>11} {:>11} {:>11} {:>11} {:>7}",
            "kp", "mode", "runs", "pos_med[m]", "vel_med", "vel_p5", "vel_p95", "blowup"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>8} {:>13} {:>5} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e} {:>7.2}",
                r.kp,
                r.mode.as_str(),
                r.seed_count,
                r.pos_err_med,
                r.vel_err_med,
                r.vel_err_p5,
                r.vel_err_p95,
                r.blowup_frac
            );
        }
        s
    }
}

/// Runs every cell (in parallel), writing one trace per run and
/// `summary.csv` into `out_dir` when given.
pub fn run_sweep(spec: &SweepSpec, out_dir: Option<&Path>) -> Result<SweepResult, ExperimentError> {
    spec.validate()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let seeds = spec.seeds();
    let cells: Vec<(f64, Mode, usize, u64)> = spec
        .kp
        .iter()
        .flat_map(|&kp| {
            let seeds = &seeds;
            spec.modes.iter().flat_map(move |&mode| {
                seeds
                    .iter()
                    .enumerate()
                    .map(move |(r, &seed)| (kp, mode, r, seed))
            })
        })
        .collect();
    let runs: Vec<CellRun> = cells
        .par_iter()
        .map(|&(kp, mode, repetition, seed)| {
            let trace = run_experiment(&spec.cell_config(kp, mode, seed))?;
            let trace_file = match out_dir {
                Some(dir) => {
                    let path = dir.join(CellRun::file_name(kp, mode, repetition, seed));
                    trace.save_csv(&path)?;
                    Some(path)
                }
                None => None,
            };
            Ok(CellRun {
                kp,
                mode,
                repetition,
                seed,
                trace,
                trace_file,
            })
        })
        .collect::<Result<_, ExperimentError>>()?;

    let rows: Vec<SummaryRow> = runs
        .chunks(seeds.len())
        .map(|cell| {
            SummaryRow::from_traces(
                cell[0].kp,
                cell[0].mode,
                cell.iter()
                    .map(|r| (r.trace.rows.as_slice(), r.trace.blowup.is_some())),
            )
        })
        .collect();
    if let Some(dir) = out_dir {
        let file = std::fs::File::create(dir.join("summary.csv"))?;
        write_summary_csv(&rows, std::io::BufWriter::new(file))?;
    }
    Ok(SweepResult { rows, runs })
}

/// Recomputes a summary row from trace files written by [`run_sweep`].
pub fn summary_from_files(
    kp: f64,
    mode: Mode,
    files: &[PathBuf],
) -> Result<SummaryRow, ExperimentError> {
    let mut traces = Vec::new();
    for f in files {
        let (_, rows) = SimTrace::read_rows(std::fs::File::open(f)?)?;
        let blown = rows.last().is_some_and(|r| r.blowup);
        traces.push((rows, blown));
    }
    Ok(SummaryRow::from_traces(
        kp,
        mode,
        traces.iter().map(|(r, b)| (r.as_slice(), *b)),
    ))
}

/// Direct and interpolated runs of one configuration side by side.
#[derive(Debug, Clone)]
pub struct ModeComparison {
    pub kp: f64,
    pub direct: SummaryRow,
    pub interpolated: SummaryRow,
    pub direct_runs: Vec<SimTrace>,
    pub interpolated_runs: Vec<SimTrace>,
}

impl ModeComparison {
    /// Interpolated over direct velocity-error spread.
    pub fn spread_ratio(&self) -> f64 {
        spread_ratio(&self.interpolated, &self.direct)
    }

    /// `t`, then position error, velocity error and foot speed of each mode,
    /// for the first seed, on the rows both runs stored.
    pub fn write_series_csv<W: Write>(&self, out: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "t",
            "pos_err_direct",
            "vel_err_direct",
            "foot_speed_direct",
            "pos_err_interpolated",
            "vel_err_interpolated",
            "foot_speed_interpolated",
        ])?;
        let (a, b) = (&self.direct_runs[0].rows, &self.interpolated_runs[0].rows);
        for (x, y) in a.iter().zip(b) {
            w.write_record([
                x.t.to_string(),
                x.pos_err.to_string(),
                x.vel_err.to_string(),
                x.p_dot.norm().to_string(),
                y.pos_err.to_string(),
                y.vel_err.to_string(),
                y.p_dot.norm().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "kp = {} s^-2, {} seed(s)",
            self.kp, self.direct.seed_count
        );
        for r in [&self.direct, &self.interpolated] {
            let _ = writeln!(
                s,
                "{:>13}: vel err p5 {:.4e}  med {:.4e}  p95 {:.4e}  spread {:.4e} m/s  pos err med {:.4e} m  blowup {:.2}",
                r.mode.as_str(),
                r.vel_err_p5,
                r.vel_err_med,
                r.vel_err_p95,
                r.vel_spread(),
                r.pos_err_med,
                r.blowup_frac
            );
        }
        let _ = writeln!(
            s,
            "spread ratio interpolated/direct: {:.4}",
            self.spread_ratio()
        );
        s
    }
}

/// `spread(a) / spread(b)`.
pub fn spread_ratio(a: &SummaryRow, b: &SummaryRow) -> f64 {
    a.vel_spread() / b.vel_spread()
}

/// Runs `cfg` at gain `kp` in both modes with the same seeds.
pub fn compare_modes(
    cfg: &ExperimentConfig,
    kp: f64,
    seeds: &[u64],
) -> Result<ModeComparison, ExperimentError> {
    if seeds.is_empty() {
        return Err(ExperimentError::Spec("no seeds".into()));
    }
    let run_mode = |mode: Mode| -> Result<Vec<SimTrace>, ExperimentError> {
        seeds
            .par_iter()
            .map(|&seed| {
                let mut c = cfg.clone();
                c.gains.kp = kp;
                c.gains.kd = None;
                c.mode = mode;
                c.seed = seed;
                Ok(run_experiment(&c)?)
            })
            .collect()
    };
    let (direct_runs, interpolated_runs) =
        rayon::join(|| run_mode(Mode::Direct), || run_mode(Mode::Interpolated));
    let (direct_runs, interpolated_runs) = (direct_runs?, interpolated_runs?);
    let summarize = |mode, runs: &[SimTrace]| {
        SummaryRow::from_traces(
            kp,
            mode,
            runs.iter().map(|t| (t.rows.as_slice(), t.blowup.is_some())),
        )
    };
    Ok(ModeComparison {
        kp,
        direct: summarize(Mode::Direct, &direct_runs),
        interpolated: summarize(Mode::Interpolated, &interpolated_runs),
        direct_runs,
        interpolated_runs,
    })
}

/// Foot-speed spectra above a cutoff frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumCheck {
    pub band_start_hz: f64,
    /// Median PSD of the reference signal in the band.
    pub reference_floor: f64,
    /// Largest PSD of the candidate signal in the band.
    pub candidate_peak: f64,
    pub candidate_peak_hz: f64,
}

impl SpectrumCheck {
    pub fn peak_to_floor(&self) -> f64 {
        self.candidate_peak / self.reference_floor
    }
}

pub const SPECTRUM_SEGMENT: usize = 1024;

/// Foot speed `‖ṗ‖` of the steady-state rows.
pub fn foot_speed(trace: &SimTrace) -> Vec<f64> {
    trace
        .steady_rows(STEADY_STATE_START)
        .map(|r| r.p_dot.norm())
        .collect()
}

/// Compares the candidate's high-band spectral peak with the reference's
/// high-band floor; `sample_hz` is the trace row rate.
pub fn spectrum_check(
    reference: &SimTrace,
    candidate: &SimTrace,
    sample_hz: f64,
    band_start_hz: f64,
) -> Result<SpectrumCheck, ExperimentError> {
    let (f_ref, p_ref) = welch_psd(&foot_speed(reference), sample_hz, SPECTRUM_SEGMENT)?;
    let (f_can, p_can) = welch_psd(&foot_speed(candidate), sample_hz, SPECTRUM_SEGMENT)?;
    let mut floor_band: Vec<f64> = f_ref
        .iter()
        .zip(&p_ref)
        .filter(|(f, _)| **f >= band_start_hz)
        .map(|(_, p)| *p)
        .collect();
    sort_checked(&mut floor_band)?;
    let reference_floor = percentile_sorted(&floor_band, 50.0)?;
    let (candidate_peak_hz, candidate_peak) = f_can
        .iter()
        .zip(&p_can)
        .filter(|(f, _)| **f >= band_start_hz)
        .map(|(f, p)| (*f, *p))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(ExperimentError::EmptySamples)?;
    Ok(SpectrumCheck {
        band_start_hz,
        reference_floor,
        candidate_peak,
        candidate_peak_hz,
    })
}
