use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

use torque_interp::drivernet::{
    crc16, decode_packet, encode_packet, CodecError, JointSample, StatePacket,
};
use torque_interp::experiment::{compare_modes, run_sweep, CellRun, SummaryRow, SweepSpec};
use torque_interp::rbd::{forward_kinematics, gravity_torques, mass_matrix};
use torque_interp::sim::{run_experiment, ExperimentConfig, Mode};
use torque_interp::RobotModel;

#[derive(Parser, Debug)]
#[command(
    version,
    about = "Multirate torque-control experiments with linear controller interpolation"
)]
struct Cli {
    /// Seed for noise, drops and the stand-in policy.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for traces and reports.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// Override a field of the loaded file, e.g. `--set gains.kp=800`
    /// or `--set realism.velocity_noise_std=0`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment and write its trace.
    Run {
        config: PathBuf,
        #[arg(long)]
        kp: Option<f64>,
        #[arg(long)]
        mode: Option<Mode>,
        /// Seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Run a gain × mode × seed grid and write `summary.csv`.
    Sweep { spec: PathBuf },
    /// Run both modes at one gain with identical seeds.
    Compare {
        config: PathBuf,
        #[arg(long)]
        kp: f64,
        /// Seeds used: `seed`, `seed + 1`, ...
        #[arg(long, default_value_t = 1)]
        repetitions: u64,
    },
    /// Self-test of the wire codec.
    CodecCheck {
        #[arg(long, default_value_t = 1000)]
        packets: usize,
    },
    /// Print a summary of a robot model (the built-in biped if omitted).
    ModelInfo { model: Option<PathBuf> },
}

/// Failure before any simulation ran.
#[derive(Debug)]
struct ConfigError(anyhow::Error);

enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run {
            config,
            kp,
            mode,
            duration,
        } => {
            let mut cfg = load_config(config, cli)?;
            if let Some(kp) = kp {
                cfg.gains.kp = *kp;
            }
            if let Some(mode) = mode {
                cfg.mode = *mode;
            }
            if let Some(d) = duration {
                cfg.duration = *d;
            }
            cfg.validate().map_err(|e| ConfigError(e.into()))?;
            run(&cfg, &cli.out_dir)?;
        }
        Command::Sweep { spec } => {
            let mut spec: SweepSpec =
                load_with_overrides(spec, &cli.overrides, |p| SweepSpec::load(p))?;
            if let Some(seed) = cli.seed {
                spec.base.seed = seed;
            }
            spec.validate().map_err(|e| ConfigError(e.into()))?;
            sweep(&spec, &cli.out_dir)?;
        }
        Command::Compare {
            config,
            kp,
            repetitions,
        } => {
            let cfg = load_config(config, cli)?;
            if !(*kp > 0.0) || *repetitions == 0 {
                return Err(ConfigError(anyhow::anyhow!(
                    "need kp > 0 and at least one repetition"
                ))
                .into());
            }
            compare(&cfg, *kp, *repetitions, &cli.out_dir)?;
        }
        Command::CodecCheck { packets } => codec_check(*packets, cli.seed.unwrap_or(0))?,
        Command::ModelInfo { model } => {
            let model = match model {
                Some(path) => RobotModel::load(path)
                    .with_context(|| format!("loading {}", path.display()))
                    .map_err(ConfigError)?,
                None => RobotModel::bolt_lite(),
            };
            model_info(&model)?;
        }
    }
    Ok(())
}

fn load_config(path: &Path, cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg: ExperimentConfig =
        load_with_overrides(path, &cli.overrides, |p| ExperimentConfig::load(p))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| ConfigError(e.into()))?;
    Ok(cfg)
}

fn load_with_overrides<T, E>(
    path: &Path,
    overrides: &[String],
    load: impl FnOnce(&Path) -> Result<T, E>,
) -> Result<T, ConfigError>
where
    T: Serialize + DeserializeOwned,
    E: std::error::Error + Send + Sync + 'static,
{
    let loaded = load(path)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(ConfigError)?;
    apply_overrides(loaded, overrides).map_err(ConfigError)
}

/// Round-trips `value` through a TOML table with each `key=value` applied.
fn apply_overrides<T: Serialize + DeserializeOwned>(
    value: T,
    overrides: &[String],
) -> anyhow::Result<T> {
    if overrides.is_empty() {
        return Ok(value);
    }
    let mut root = toml::Value::try_from(value)?;
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .with_context(|| format!("override `{item}` is not KEY=VALUE"))?;
        let parsed = parse_value(raw.trim());
        let mut node = &mut root;
        let parts: Vec<&str> = key.trim().split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = node
                .as_table_mut()
                .with_context(|| format!("`{key}`: `{part}` is not inside a table"))?;
            if i + 1 == parts.len() {
                table.insert(part.to_string(), parsed.clone());
                break;
            }
            node = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        }
    }
    root.try_into()
        .map_err(|e: toml::de::Error| anyhow::anyhow!("after overrides: {e}"))
}

/// A TOML value, or the raw text as a string when it does not parse as one.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run(cfg: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<()> {
    create_dir(out_dir)?;
    let trace = run_experiment(cfg)?;
    let path = out_dir.join(CellRun::file_name(cfg.gains.kp, cfg.mode, 0, cfg.seed));
    trace.save_csv(&path)?;
    let row = SummaryRow::from_traces(
        cfg.gains.kp,
        cfg.mode,
        [(trace.rows.as_slice(), trace.blowup.is_some())],
    );
    println!(
        "{} at Kp {} ({} Hz controller), seed {}",
        cfg.mode,
        cfg.gains.kp,
        cfg.controller_hz(),
        cfg.seed
    );
    println!(
        "position error med {:.4e} m (p5 {:.4e}, p95 {:.4e})",
        row.pos_err_med, row.pos_err_p5, row.pos_err_p95
    );
    println!(
        "velocity error med {:.4e} m/s (p5 {:.4e}, p95 {:.4e})",
        row.vel_err_med, row.vel_err_p5, row.vel_err_p95
    );
    match trace.blowup {
        Some(t) => println!("diverged at t = {t:.4} s"),
        None => println!("completed {} s", cfg.duration),
    }
    let c = trace.counters;
    println!(
        "{} ticks, {} controller evaluations, {} laws staged",
        c.ticks, c.controller_evals, c.laws_staged
    );
    println!("trace: {}", path.display());
    Ok(())
}

fn sweep(spec: &SweepSpec, out_dir: &Path) -> anyhow::Result<()> {
    create_dir(out_dir)?;
    let result = run_sweep(spec, Some(out_dir))?;
    let report = result.report();
    fs::write(out_dir.join("report.txt"), &report)?;
    print!("{report}");
    println!("summary: {}", out_dir.join("summary.csv").display());
    Ok(())
}

fn compare(
    cfg: &ExperimentConfig,
    kp: f64,
    repetitions: u64,
    out_dir: &Path,
) -> anyhow::Result<()> {
    create_dir(out_dir)?;
    let seeds: Vec<u64> = (0..repetitions).map(|r| cfg.seed + r).collect();
    let c = compare_modes(cfg, kp, &seeds)?;
    let series = out_dir.join(format!("compare_kp{kp}.csv"));
    c.write_series_csv(std::io::BufWriter::new(fs::File::create(&series)?))?;
    let report = c.report();
    fs::write(out_dir.join(format!("compare_kp{kp}.txt")), &report)?;
    print!("{report}");
    println!("series: {}", series.display());
    Ok(())
}

fn codec_check(packets: usize, seed: u64) -> anyhow::Result<()> {
    let check = crc16(b"123456789");
    println!("crc16(\"123456789\") = {check:#06x}");
    if check != 0x29B1 {
        bail!("CRC check value mismatch");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..packets {
        let joints = (0..rng.random_range(0..=12u8))
            .map(|id| JointSample {
                id,
                q: rng.random_range(-10.0f32..10.0),
                v: rng.random_range(-100.0f32..100.0),
            })
            .collect();
        let packet = StatePacket {
            board_id: rng.random(),
            cycle: rng.random(),
            joints,
        };
        if decode_packet(&encode_packet(&packet)?)? != packet {
            bail!("packet {i} did not survive a roundtrip");
        }
    }
    println!("{packets} random packets roundtrip");

    let frame = encode_packet(&StatePacket {
        board_id: 0,
        cycle: 1,
        joints: vec![
            JointSample {
                id: 0,
                q: 0.5,
                v: -0.25,
            },
            JointSample {
                id: 1,
                q: -1.0,
                v: 2.0,
            },
        ],
    })?;
    let hex: Vec<String> = frame.iter().map(|b| format!("{b:02x}")).collect();
    println!("reference frame: {}", hex.join(" "));
    let bits = frame.len() * 8;
    let mut missed = 0;
    for bit in 0..bits {
        let mut f = frame.clone();
        f[bit / 8] ^= 1 << (bit % 8);
        if !matches!(decode_packet(&f), Err(CodecError::BadCrc { .. })) {
            missed += 1;
        }
    }
    println!("single-bit flips caught: {}/{bits}", bits - missed);
    if missed > 0 {
        bail!("{missed} bit flips went undetected");
    }
    Ok(())
}

fn model_info(model: &RobotModel) -> anyhow::Result<()> {
    println!("{}: {} joints", model.name(), model.dof());
    let total: f64 = model.joints().iter().map(|j| j.mass).sum();
    println!(
        "total mass {total:.4} kg, gravity {:?}",
        model.gravity().as_slice()
    );
    println!(
        "{:<4} {:<16} {:>6} {:>9} {:>9} {:>9}",
        "idx", "joint", "parent", "mass kg", "tau_max", "damping"
    );
    for (i, j) in model.joints().iter().enumerate() {
        let parent = j.parent.map_or("base".to_string(), |p| p.to_string());
        println!(
            "{i:<4} {:<16} {parent:>6} {:>9.4} {:>9.3} {:>9.4}",
            j.name, j.mass, j.torque_limit, j.damping
        );
    }
    let home = model.home();
    println!("home q: {:?}", home.as_slice());
    for f in model.frames() {
        let p = forward_kinematics(model, home, &f.name)?.position;
        println!(
            "frame {} on link {}: home position [{:.4}, {:.4}, {:.4}] m",
            f.name, f.link, p.x, p.y, p.z
        );
    }
    let g = gravity_torques(model, home)?;
    println!(
        "gravity torques at home: {:?}",
        g.iter().map(|t| format!("{t:.4}")).collect::<Vec<_>>()
    );
    let m = mass_matrix(model, home)?;
    println!(
        "mass matrix diagonal at home: {:?}",
        m.diagonal()
            .iter()
            .map(|v| format!("{v:.3e}"))
            .collect::<Vec<_>>()
    );
    Ok(())
}
