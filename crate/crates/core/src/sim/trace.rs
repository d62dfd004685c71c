use std::io::{Read, Write};

use nalgebra::{DVector, Vector3};

use super::SimError;

/// One stored sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// s.
    pub t: f64,
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    /// Torque applied to the plant over the following step.
    pub tau: DVector<f64>,
    pub p: Vector3<f64>,
    pub p_dot: Vector3<f64>,
    pub p_ref: Vector3<f64>,
    pub p_dot_ref: Vector3<f64>,
    /// `‖p* − p‖`, m.
    pub pos_err: f64,
    /// `‖ṗ* − ṗ‖`, m/s.
    pub vel_err: f64,
    pub blowup: bool,
}

/// Bookkeeping counters of one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunCounters {
    pub ticks: u64,
    pub controller_evals: u64,
    pub laws_staged: u64,
    pub torque_updates: u64,
}

/// Output of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub dof: usize,
    pub rows: Vec<TraceRow>,
    /// Time at which the run diverged.
    pub blowup: Option<f64>,
    pub counters: RunCounters,
    /// `max ‖τ_fast − τ_controller(x̂(t))‖` when requested.
    pub fidelity: Option<f64>,
    /// Clamped torque command of every fast tick when requested.
    pub commands: Option<Vec<DVector<f64>>>,
}

impl SimTrace {
    pub fn header(dof: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for prefix in ["q", "v", "tau"] {
            h.extend((0..dof).map(|j| format!("{prefix}{j}")));
        }
        for prefix in ["p", "pdot", "pref", "pdotref"] {
            h.extend(["x", "y", "z"].map(|a| format!("{prefix}_{a}")));
        }
        h.extend(["pos_err", "vel_err", "blowup"].map(String::from));
        h
    }

    /// Fixed column order: `t`, `q0..`, `v0..`, `tau0..`, `p_x,p_y,p_z`,
    /// `pdot_*`, `pref_*`, `pdotref_*`, `pos_err`, `vel_err`, `blowup` (0/1).
    /// Reals use the shortest representation that parses back exactly.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::header(self.dof))?;
        let mut record = Vec::with_capacity(4 * self.dof + 16);
        for r in &self.rows {
            record.clear();
            record.push(r.t.to_string());
            for v in r.q.iter().chain(r.v.iter()).chain(r.tau.iter()) {
                record.push(v.to_string());
            }
            for v in [r.p, r.p_dot, r.p_ref, r.p_dot_ref]
                .iter()
                .flat_map(|v| v.iter())
            {
                record.push(v.to_string());
            }
            record.push(r.pos_err.to_string());
            record.push(r.vel_err.to_string());
            record.push(u8::from(r.blowup).to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        buf
    }

    pub fn save_csv(&self, path: impl AsRef<std::path::Path>) -> Result<(), SimError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Parses rows written by [`SimTrace::write_csv`].
    pub fn read_rows<R: Read>(input: R) -> Result<(usize, Vec<TraceRow>), SimError> {
        let mut r = csv::Reader::from_reader(input);
        let cols = r.headers()?.len();
        if cols < 16 || (cols - 16) % 3 != 0 {
            return Err(SimError::Config(format!("unexpected trace width {cols}")));
        }
        let dof = (cols - 16) / 3;
        if r.headers()?
            .iter()
            .ne(Self::header(dof).iter().map(String::as_str))
        {
            return Err(SimError::Config("unexpected trace header".into()));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| SimError::Config(format!("bad number in trace: {e}")))?;
            let vec3 = |at: usize| Vector3::new(vals[at], vals[at + 1], vals[at + 2]);
            let base = 1 + 3 * dof;
            rows.push(TraceRow {
                t: vals[0],
                q: DVector::from_column_slice(&vals[1..1 + dof]),
                v: DVector::from_column_slice(&vals[1 + dof..1 + 2 * dof]),
                tau: DVector::from_column_slice(&vals[1 + 2 * dof..base]),
                p: vec3(base),
                p_dot: vec3(base + 3),
                p_ref: vec3(base + 6),
                p_dot_ref: vec3(base + 9),
                pos_err: vals[base + 12],
                vel_err: vals[base + 13],
                blowup: vals[base + 14] != 0.0,
            });
        }
        Ok((dof, rows))
    }

    /// Rows at or after `t0` that are not a divergence marker.
    pub fn steady_rows(&self, t0: f64) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(move |r| r.t >= t0 && !r.blowup)
    }
}
