use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::codec::{decode_packet, encode_packet, CodecError, JointSample, LawRecord, StatePacket};
use crate::affine::affine_row;
use crate::linearize::LinearFeedbackLaw;
use crate::rbd::JointState;
use crate::Real;

pub const JOINTS_PER_BOARD: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("no boards")]
    Empty,
    #[error("joint {0} is owned by more than one board")]
    SharedJoint(usize),
    #[error("joint {0} is not owned by any board")]
    UnownedJoint(usize),
    #[error("ring positions are not a permutation of 0..{0}")]
    RingPositions(usize),
    #[error("decimation must be at least 1")]
    Decimation,
    #[error("drop probability must lie in [0, 1)")]
    DropProbability,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("board {0} supplied no state this tick")]
    MissingContribution(usize),
    #[error("board {board} received a corrupt frame: {source}")]
    Corrupt { board: usize, source: CodecError },
}

/// How values cross the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireFormat {
    /// Encoded state packets and law records with `f32` payloads.
    #[default]
    Float32,
    /// Values pass through untouched.
    Ideal,
}

impl WireFormat {
    pub fn quantize<T: Real>(self, v: T) -> T {
        match self {
            WireFormat::Float32 => T::lit(v.as_f64() as f32 as f64),
            WireFormat::Ideal => v,
        }
    }

    pub fn quantize_vec<T: Real>(self, v: &DVector<T>) -> DVector<T> {
        v.map(|x| self.quantize(x))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoardConfig {
    pub board_id: u8,
    pub joints: [usize; JOINTS_PER_BOARD],
    pub ring_position: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Fast ticks per ring hop.
    pub hop_delay: usize,
    pub decimation: usize,
    /// Ticks between staging a law and the tick that first uses it, minus one.
    pub law_latency: usize,
    pub wire: WireFormat,
    pub drop_probability: f64,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hop_delay: 0,
            decimation: 1,
            law_latency: 0,
            wire: WireFormat::Float32,
            drop_probability: 0.0,
            seed: 0,
        }
    }
}

/// The rows of one law a board is responsible for.
#[derive(Debug, Clone, PartialEq)]
pub struct LawRows<T: Real> {
    pub sequence: u32,
    pub a: DMatrix<T>,
    pub b: DVector<T>,
}

#[derive(Debug, Clone)]
struct Board<T: Real> {
    config: BoardConfig,
    /// Assembled `(q, v)` as this board knows it.
    view: DVector<T>,
    /// Cycle stamp of each board's slice in `view`, by board index.
    stamps: Vec<u32>,
    active: Option<LawRows<T>>,
    torque: [T; JOINTS_PER_BOARD],
}

enum Payload<T> {
    Frame(Vec<u8>),
    Ideal { cycle: u32, values: Vec<T> },
}

struct InFlight<T> {
    deliver_at: u64,
    origin: usize,
    payload: Payload<T>,
}

struct Pending<T: Real> {
    commit_at: u64,
    rows: Vec<LawRows<T>>,
}

/// Cycle-level emulation of the board ring.
///
/// Every tick each board sends its own joints' state to its successor and
/// forwards what it received, so a slice from the board `k` positions
/// upstream arrives after `k` hops of `hop_delay` ticks each. Each board then
/// evaluates its rows of the active law on the state it has assembled.
pub struct DriverNetwork<T: Real> {
    boards: Vec<Board<T>>,
    /// Board index at each ring position.
    ring: Vec<usize>,
    config: NetworkConfig,
    dof: usize,
    /// Index of the next tick to run.
    tick: u64,
    links: Vec<VecDeque<InFlight<T>>>,
    pending: VecDeque<Pending<T>>,
    rng: ChaCha8Rng,
    primed: bool,
}

impl<T: Real> DriverNetwork<T> {
    pub fn new(boards: Vec<BoardConfig>, config: NetworkConfig) -> Result<Self, NetworkError> {
        if boards.is_empty() {
            return Err(NetworkError::Empty);
        }
        if config.decimation == 0 {
            return Err(NetworkError::Decimation);
        }
        if !(0.0..1.0).contains(&config.drop_probability) {
            return Err(NetworkError::DropProbability);
        }
        let m = boards.len();
        let dof = m * JOINTS_PER_BOARD;
        let mut owner = vec![None; dof];
        for (i, b) in boards.iter().enumerate() {
            for &j in &b.joints {
                if j >= dof {
                    return Err(NetworkError::UnownedJoint(j));
                }
                if owner[j].replace(i).is_some() {
                    return Err(NetworkError::SharedJoint(j));
                }
            }
        }
        let mut ring = vec![usize::MAX; m];
        for (i, b) in boards.iter().enumerate() {
            if b.ring_position >= m || ring[b.ring_position] != usize::MAX {
                return Err(NetworkError::RingPositions(m));
            }
            ring[b.ring_position] = i;
        }
        let boards = boards
            .into_iter()
            .map(|config| Board {
                config,
                view: DVector::zeros(2 * dof),
                stamps: vec![0; m],
                active: None,
                torque: [T::zero(); JOINTS_PER_BOARD],
            })
            .collect();
        Ok(Self {
            boards,
            ring,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            dof,
            tick: 0,
            links: (0..m).map(|_| VecDeque::new()).collect(),
            pending: VecDeque::new(),
            primed: false,
        })
    }

    /// `boards` boards in id order, board `i` owning joints `2i, 2i + 1`.
    pub fn chain(boards: usize, config: NetworkConfig) -> Result<Self, NetworkError> {
        Self::new(
            (0..boards)
                .map(|i| BoardConfig {
                    board_id: i as u8,
                    joints: [2 * i, 2 * i + 1],
                    ring_position: i,
                })
                .collect(),
            config,
        )
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn board_count(&self) -> usize {
        self.boards.len()
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn boards(&self) -> impl Iterator<Item = &BoardConfig> {
        self.boards.iter().map(|b| &b.config)
    }

    /// Index of the next tick [`DriverNetwork::tick`] will run.
    pub fn next_tick(&self) -> u64 {
        self.tick
    }

    /// Splits a full state into the per-board slices `ring_exchange` expects.
    pub fn split_state(&self, x: &JointState<T>) -> Vec<JointState<T>> {
        self.boards
            .iter()
            .map(|b| JointState {
                q: DVector::from_iterator(
                    JOINTS_PER_BOARD,
                    b.config.joints.iter().map(|&j| x.q[j]),
                ),
                v: DVector::from_iterator(
                    JOINTS_PER_BOARD,
                    b.config.joints.iter().map(|&j| x.v[j]),
                ),
            })
            .collect()
    }

    /// Board `board`'s assembled `(q, v)`.
    pub fn view(&self, board: usize) -> &DVector<T> {
        &self.boards[board].view
    }

    /// Ages in ticks of every slice board `board` holds, as of the last tick.
    pub fn slice_ages(&self, board: usize) -> Vec<u64> {
        let now = self.tick.saturating_sub(1);
        self.boards[board]
            .stamps
            .iter()
            .map(|&s| now - u64::from(s).min(now))
            .collect()
    }

    pub fn active_sequence(&self, board: usize) -> Option<u32> {
        self.boards[board].active.as_ref().map(|l| l.sequence)
    }

    pub fn active_rows(&self, board: usize) -> Option<&LawRows<T>> {
        self.boards[board].active.as_ref()
    }

    /// Queues `law` for the tick after the current one (plus any configured
    /// latency). Staging twice for the same tick keeps the later law.
    pub fn stage_law(&mut self, law: &LinearFeedbackLaw<T>) -> Result<(), NetworkError> {
        if law.dof() != self.dof {
            return Err(NetworkError::DimensionMismatch {
                expected: self.dof,
                got: law.dof(),
            });
        }
        let (sequence, a, b) = match self.config.wire {
            WireFormat::Float32 => {
                let bytes = LawRecord::from_law(law).encode();
                let rec = LawRecord::decode(&bytes, self.dof).expect("record of known length");
                let widen = |v: f32| T::lit(f64::from(v));
                (rec.sequence, rec.a.map(widen), rec.b.map(widen))
            }
            WireFormat::Ideal => (law.sequence(), law.a().clone(), law.b().clone()),
        };
        let rows = self
            .boards
            .iter()
            .map(|board| {
                let js = board.config.joints;
                LawRows {
                    sequence,
                    a: DMatrix::from_fn(JOINTS_PER_BOARD, 2 * self.dof, |r, c| a[(js[r], c)]),
                    b: DVector::from_fn(JOINTS_PER_BOARD, |r, _| b[js[r]]),
                }
            })
            .collect();
        let commit_at = self.tick + self.config.law_latency as u64;
        if let Some(last) = self.pending.back_mut() {
            if last.commit_at == commit_at {
                last.rows = rows;
                return Ok(());
            }
        }
        self.pending.push_back(Pending { commit_at, rows });
        Ok(())
    }

    /// Shares every board's local slice around the ring for the current tick.
    /// `locals[i]` holds board `i`'s owned joints in the order of its config.
    pub fn ring_exchange(&mut self, locals: &[JointState<T>]) -> Result<(), NetworkError> {
        let m = self.boards.len();
        if locals.len() < m {
            return Err(NetworkError::MissingContribution(locals.len()));
        }
        for l in locals.iter().take(m) {
            if l.q.len() != JOINTS_PER_BOARD || l.v.len() != JOINTS_PER_BOARD {
                return Err(NetworkError::DimensionMismatch {
                    expected: JOINTS_PER_BOARD,
                    got: l.q.len().min(l.v.len()),
                });
            }
        }
        let now = self.tick;
        let cycle = now as u32;
        let wire = self.config.wire;
        let slices: Vec<Vec<T>> = locals
            .iter()
            .take(m)
            .map(|l| {
                l.q.iter()
                    .chain(l.v.iter())
                    .map(|&x| wire.quantize(x))
                    .collect()
            })
            .collect();

        if !self.primed {
            for board in 0..m {
                for origin in 0..m {
                    self.store(board, origin, cycle, &slices[origin]);
                }
            }
            self.primed = true;
        }

        for origin in 0..m {
            self.store(origin, origin, cycle, &slices[origin]);
            let payload = self.payload(origin, cycle, &slices[origin])?;
            let pos = self.boards[origin].config.ring_position;
            self.send(pos, origin, payload);
        }

        // d = 0 forwards within the same tick, one hop per round
        loop {
            let mut delivered = false;
            for pos in 0..m {
                while self.links[pos].front().is_some_and(|f| f.deliver_at <= now) {
                    let frame = self.links[pos].pop_front().expect("front exists");
                    delivered = true;
                    let receiver_pos = (pos + 1) % m;
                    let receiver = self.ring[receiver_pos];
                    if frame.origin == receiver {
                        continue;
                    }
                    let (cycle, values) = match &frame.payload {
                        Payload::Frame(bytes) => {
                            let p =
                                decode_packet(bytes).map_err(|source| NetworkError::Corrupt {
                                    board: receiver,
                                    source,
                                })?;
                            let vals = p
                                .joints
                                .iter()
                                .map(|s| T::lit(f64::from(s.q)))
                                .chain(p.joints.iter().map(|s| T::lit(f64::from(s.v))))
                                .collect::<Vec<_>>();
                            (p.cycle, vals)
                        }
                        Payload::Ideal { cycle, values } => (*cycle, values.clone()),
                    };
                    if cycle >= self.boards[receiver].stamps[frame.origin] {
                        self.store(receiver, frame.origin, cycle, &values);
                    }
                    if (receiver_pos + 1) % m != self.boards[frame.origin].config.ring_position {
                        self.send(receiver_pos, frame.origin, frame.payload);
                    }
                }
            }
            if !delivered {
                break;
            }
        }
        Ok(())
    }

    /// Runs one fast tick: exchange, law commit, then every board's torque
    /// (recomputed on decimation ticks, held otherwise). Returns the joint
    /// torque vector in joint order.
    pub fn tick(&mut self, locals: &[JointState<T>]) -> Result<DVector<T>, NetworkError> {
        self.ring_exchange(locals)?;
        self.commit_due();
        let recompute = self.tick.is_multiple_of(self.config.decimation as u64);
        let n = self.dof;
        let mut tau = DVector::zeros(n);
        for board in &mut self.boards {
            if recompute {
                board.torque = board_torque(board, n);
            }
            for (r, &j) in board.config.joints.iter().enumerate() {
                tau[j] = board.torque[r];
            }
        }
        self.tick += 1;
        Ok(tau)
    }

    /// Convenience wrapper splitting a full state first.
    pub fn tick_full(&mut self, x: &JointState<T>) -> Result<DVector<T>, NetworkError> {
        let locals = self.split_state(x);
        self.tick(&locals)
    }

    fn commit_due(&mut self) {
        while self
            .pending
            .front()
            .is_some_and(|p| p.commit_at <= self.tick)
        {
            let p = self.pending.pop_front().expect("front exists");
            for (board, rows) in self.boards.iter_mut().zip(p.rows) {
                board.active = Some(rows);
            }
        }
    }

    fn store(&mut self, board: usize, origin: usize, cycle: u32, values: &[T]) {
        let n = self.dof;
        let joints = self.boards[origin].config.joints;
        let b = &mut self.boards[board];
        for (r, &j) in joints.iter().enumerate() {
            b.view[j] = values[r];
            b.view[n + j] = values[JOINTS_PER_BOARD + r];
        }
        b.stamps[origin] = cycle;
    }

    fn payload(&self, origin: usize, cycle: u32, values: &[T]) -> Result<Payload<T>, NetworkError> {
        Ok(match self.config.wire {
            WireFormat::Float32 => {
                let cfg = &self.boards[origin].config;
                let packet = StatePacket {
                    board_id: cfg.board_id,
                    cycle,
                    joints: (0..JOINTS_PER_BOARD)
                        .map(|r| JointSample {
                            id: cfg.joints[r] as u8,
                            q: values[r].as_f64() as f32,
                            v: values[JOINTS_PER_BOARD + r].as_f64() as f32,
                        })
                        .collect(),
                };
                Payload::Frame(encode_packet(&packet).expect("two joints fit"))
            }
            WireFormat::Ideal => Payload::Ideal {
                cycle,
                values: values.to_vec(),
            },
        })
    }

    fn send(&mut self, from_pos: usize, origin: usize, payload: Payload<T>) {
        if self.config.drop_probability > 0.0
            && self.rng.random::<f64>() < self.config.drop_probability
        {
            return;
        }
        self.links[from_pos].push_back(InFlight {
            deliver_at: self.tick + self.config.hop_delay as u64,
            origin,
            payload,
        });
    }
}

fn board_torque<T: Real>(board: &Board<T>, n: usize) -> [T; JOINTS_PER_BOARD] {
    let mut out = [T::zero(); JOINTS_PER_BOARD];
    if let Some(law) = &board.active {
        let x = board.view.as_slice();
        debug_assert_eq!(x.len(), 2 * n);
        for (r, o) in out.iter_mut().enumerate() {
            *o = affine_row(&law.a, r, x, law.b[r]);
        }
    }
    out
}
