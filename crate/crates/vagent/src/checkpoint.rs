//! Binary checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "VAGC"  u32 version
//! u64 H, u64 A, u64 d, u64 embed_dim, u64 n_hidden, u64 width * n_hidden
//! block env        alphas (H), sigma2, x1 (d)
//! block theta      proposal MLP
//! block embedding  proposal (step, selection) table
//! block phi        selection network
//! block psi        Q-network
//! block psi_target lagged Q-network
//! 3 x Adam state   (proposal, selection, Q): block [lr, beta1, beta2, eps],
//!                  u64 step, block first moments, block second moments
//! "TRNR"  trainer state: run configuration, trajectory counter, selection
//!         usage, generator state and the three replay buffers
//! ```
//!
//! A block is a `u64` count followed by that many `f64`. The trainer section
//! makes a resumed run continue exactly where the saved one stopped.

use std::fs;
use std::io;
use std::path::Path;

use vagent_core::agents::{Agents, NetConfig};
use vagent_core::env::EnvConfig;
use vagent_core::grad::{AdamConfig, AdamState, ParamSet, Tensor};
use vagent_core::replay::{
    ReplayBuffers, ReplayCapacities, RingBuffer, SelectionRecord, SequenceRecord, TransitionRecord,
};
use vagent_core::rng::{self, RngState};
use vagent_core::training::{TrainConfig, Trainer};

pub const MAGIC: &[u8; 4] = b"VAGC";
pub const TRAINER_MAGIC: &[u8; 4] = b"TRNR";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint: bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("checkpoint format version {found}, this build reads version {expected}")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("checkpoint byte {offset}: {message}")]
    Invalid { offset: usize, message: String },
}

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn block(&mut self, values: &[f64]) {
        self.usize(values.len());
        values.iter().for_each(|&v| self.f64(v));
    }

    fn tensors(&mut self, tensors: &[Tensor]) {
        let flat: Vec<f64> = tensors.iter().flat_map(|t| t.data().iter().copied()).collect();
        self.block(&flat);
    }

    fn adam(&mut self, state: &AdamState) {
        let c = state.config;
        self.block(&[c.lr, c.beta1, c.beta2, c.epsilon]);
        self.u64(state.step_count);
        self.tensors(&state.first_moment);
        self.tensors(&state.second_moment);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated(self.bytes.len()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize, CheckpointError> {
        let at = self.pos;
        usize::try_from(self.u64()?).map_err(|_| self.invalid(at, "count does not fit in memory"))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn invalid(&self, offset: usize, message: impl Into<String>) -> CheckpointError {
        CheckpointError::Invalid {
            offset,
            message: message.into(),
        }
    }

    fn block(&mut self, expected: Option<usize>, what: &str) -> Result<Vec<f64>, CheckpointError> {
        let at = self.pos;
        let n = self.usize()?;
        if let Some(e) = expected {
            if n != e {
                return Err(self.invalid(at, format!("{what}: {n} values, expected {e}")));
            }
        }
        if n > (self.bytes.len() - self.pos) / 8 {
            return Err(CheckpointError::Truncated(self.bytes.len()));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    fn fill(&mut self, tensors: &mut [Tensor], what: &str) -> Result<(), CheckpointError> {
        let total = tensors.iter().map(Tensor::len).sum();
        let flat = self.block(Some(total), what)?;
        let mut rest = flat.as_slice();
        for t in tensors {
            let (head, tail) = rest.split_at(t.len());
            t.data_mut().copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    fn params(&mut self, params: &mut ParamSet, range: std::ops::Range<usize>, what: &str) -> Result<(), CheckpointError> {
        self.fill(&mut params.tensors_mut()[range], what)
    }

    fn adam(&mut self, params: &ParamSet, what: &str) -> Result<AdamState, CheckpointError> {
        let c = self.block(Some(4), what)?;
        let config = AdamConfig {
            lr: c[0],
            beta1: c[1],
            beta2: c[2],
            epsilon: c[3],
        };
        let mut state = AdamState::new(params, config);
        state.step_count = self.u64()?;
        self.fill(&mut state.first_moment, what)?;
        self.fill(&mut state.second_moment, what)?;
        Ok(state)
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<(), CheckpointError> {
        let m: [u8; 4] = self.take(4)?.try_into().unwrap();
        if &m != expected {
            return Err(CheckpointError::BadMagic(m));
        }
        Ok(())
    }

    fn vector(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn index(&mut self, bound: usize, what: &str) -> Result<usize, CheckpointError> {
        let at = self.pos;
        let v = self.usize()?;
        if v >= bound {
            return Err(self.invalid(at, format!("{what} {v} out of range 0..{bound}")));
        }
        Ok(v)
    }
}

fn write_ring<R>(w: &mut Writer, buf: &RingBuffer<R>, mut record: impl FnMut(&mut Writer, &R)) {
    let (records, cursor) = buf.slots();
    w.usize(records.len());
    w.usize(cursor);
    for r in records {
        record(w, r);
    }
}

fn read_ring<R>(
    r: &mut Reader<'_>,
    capacity: usize,
    mut record: impl FnMut(&mut Reader<'_>) -> Result<R, CheckpointError>,
) -> Result<RingBuffer<R>, CheckpointError> {
    let at = r.pos;
    let len = r.usize()?;
    let cursor = r.usize()?;
    if len > capacity {
        return Err(r.invalid(at, format!("{len} records exceed capacity {capacity}")));
    }
    let records = (0..len).map(|_| record(r)).collect::<Result<Vec<_>, _>>()?;
    RingBuffer::from_slots(capacity, records, cursor).map_err(|e| r.invalid(at, e.to_string()))
}

pub fn encode(trainer: &Trainer) -> Vec<u8> {
    let env = &trainer.env;
    let agents = &trainer.agents;
    let net = agents.net_config();
    let mut w = Writer(MAGIC.to_vec());
    w.0.extend_from_slice(&VERSION.to_le_bytes());
    for v in [env.horizon, env.selections, env.dim, net.embed_dim, net.hidden.len()] {
        w.usize(v);
    }
    net.hidden.iter().for_each(|&h| w.usize(h));

    let mut env_block = env.alphas.clone();
    env_block.push(env.sigma2);
    env_block.extend_from_slice(&env.x1);
    w.block(&env_block);
    let table = agents.proposal.table_index();
    w.tensors(&agents.proposal.params.tensors()[..table]);
    w.tensors(&agents.proposal.params.tensors()[table..]);
    w.tensors(agents.selection.params.tensors());
    w.tensors(agents.q.params.tensors());
    w.tensors(agents.q.target.tensors());
    w.adam(&trainer.opt_proposal);
    w.adam(&trainer.opt_selection);
    w.adam(&trainer.opt_q);

    w.0.extend_from_slice(TRAINER_MAGIC);
    let c = &trainer.config;
    w.block(&[c.kappa, c.rho, c.lr]);
    for v in [
        c.batch_proposal,
        c.batch_selection,
        c.batch_q,
        c.period_proposal,
        c.period_selection,
        c.period_q,
        c.period_target,
        c.warmup,
        c.trajectories,
        c.double_dqn as usize,
        c.capacities.transitions,
        c.capacities.selections,
        c.capacities.sequences,
    ] {
        w.usize(v);
    }
    w.u64(c.seed);
    w.u64(trainer.completed);
    trainer.usage.iter().for_each(|&u| w.u64(u));
    let state = rng::capture(&trainer.rng);
    w.0.extend_from_slice(&state.seed);
    w.u64(state.stream);
    w.u64(state.word_pos as u64);
    w.u64((state.word_pos >> 64) as u64);

    let b = &trainer.buffers;
    write_ring(&mut w, &b.transitions, |w, t| {
        w.usize(t.step);
        w.usize(t.selection);
        w.f64(t.loss);
        t.x.iter().chain(&t.x_next).chain(&t.goal).for_each(|&v| w.f64(v));
    });
    write_ring(&mut w, &b.selections, |w, s| {
        w.usize(s.step);
        w.usize(s.selection);
        s.x.iter().for_each(|&v| w.f64(v));
    });
    write_ring(&mut w, &b.sequences, |w, s| {
        s.selections.iter().for_each(|&a| w.usize(a));
        s.goal.iter().for_each(|&v| w.f64(v));
    });
    w.0
}

pub fn decode(bytes: &[u8]) -> Result<Trainer, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: VERSION,
        });
    }
    let at = r.pos;
    let (h, a, d, embed_dim, n_hidden) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?, r.usize()?);
    if n_hidden > 64 {
        return Err(r.invalid(at, format!("{n_hidden} hidden layers")));
    }
    let hidden = (0..n_hidden).map(|_| r.usize()).collect::<Result<Vec<_>, _>>()?;
    let env_at = r.pos;
    let env_block = r.block(Some(h + 1 + d), "env")?;
    let mut env = EnvConfig::new(h, a, d).map_err(|e| r.invalid(at, e.to_string()))?;
    env.alphas = env_block[..h].to_vec();
    env.sigma2 = env_block[h];
    env.x1 = env_block[h + 1..].to_vec();
    env.validate().map_err(|e| r.invalid(env_at, e.to_string()))?;

    let net = NetConfig { hidden, embed_dim };
    let mut agents =
        Agents::new(&env, &net, &mut rng::seeded(0, 0)).map_err(|e| r.invalid(at, e.to_string()))?;
    let table = agents.proposal.table_index();
    let n_prop = agents.proposal.params.len();
    r.params(&mut agents.proposal.params, 0..table, "theta")?;
    r.params(&mut agents.proposal.params, table..n_prop, "embedding")?;
    let n_sel = agents.selection.params.len();
    r.params(&mut agents.selection.params, 0..n_sel, "phi")?;
    let n_q = agents.q.params.len();
    r.params(&mut agents.q.params, 0..n_q, "psi")?;
    r.params(&mut agents.q.target, 0..n_q, "psi_target")?;
    let opt_proposal = r.adam(&agents.proposal.params, "proposal Adam state")?;
    let opt_selection = r.adam(&agents.selection.params, "selection Adam state")?;
    let opt_q = r.adam(&agents.q.params, "Q Adam state")?;

    r.magic(TRAINER_MAGIC)?;
    let cfg_at = r.pos;
    let rates = r.block(Some(3), "train rates")?;
    let mut ints = [0usize; 13];
    for v in ints.iter_mut() {
        *v = r.usize()?;
    }
    let config = TrainConfig {
        kappa: rates[0],
        rho: rates[1],
        lr: rates[2],
        batch_proposal: ints[0],
        batch_selection: ints[1],
        batch_q: ints[2],
        period_proposal: ints[3],
        period_selection: ints[4],
        period_q: ints[5],
        period_target: ints[6],
        warmup: ints[7],
        trajectories: ints[8],
        double_dqn: ints[9] != 0,
        capacities: ReplayCapacities {
            transitions: ints[10],
            selections: ints[11],
            sequences: ints[12],
        },
        seed: r.u64()?,
    };
    config.validate().map_err(|e| r.invalid(cfg_at, e.to_string()))?;
    let completed = r.u64()?;
    let usage = (0..a).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
    let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
    let stream = r.u64()?;
    let word_pos = r.u64()? as u128 | (r.u64()? as u128) << 64;
    let rng_state = RngState { seed, stream, word_pos };

    let caps = config.capacities;
    let transitions = read_ring(&mut r, caps.transitions, |r| {
        let step = r.index(h + 1, "step")?;
        let selection = r.index(a, "selection")?;
        Ok(TransitionRecord {
            step,
            selection,
            loss: r.f64()?,
            x: r.vector(d)?,
            x_next: r.vector(d)?,
            goal: r.vector(d)?,
        })
    })?;
    let selections = read_ring(&mut r, caps.selections, |r| {
        Ok(SelectionRecord {
            step: r.index(h + 1, "step")?,
            selection: r.index(a, "selection")?,
            x: r.vector(d)?,
        })
    })?;
    let sequences = read_ring(&mut r, caps.sequences, |r| {
        Ok(SequenceRecord {
            selections: (0..h).map(|_| r.index(a, "selection")).collect::<Result<_, _>>()?,
            goal: r.vector(d)?,
        })
    })?;
    if r.pos != bytes.len() {
        return Err(r.invalid(r.pos, "trailing bytes"));
    }

    let mut trainer = Trainer::with_agents(env, agents, config).map_err(|e| r.invalid(cfg_at, e.to_string()))?;
    trainer.opt_proposal = opt_proposal;
    trainer.opt_selection = opt_selection;
    trainer.opt_q = opt_q;
    trainer.buffers = ReplayBuffers {
        transitions,
        selections,
        sequences,
    };
    trainer.rng = rng::restore(&rng_state);
    trainer.completed = completed;
    trainer.usage = usage;
    Ok(trainer)
}

pub fn save(path: &Path, trainer: &Trainer) -> Result<(), CheckpointError> {
    fs::write(path, encode(trainer))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Trainer, CheckpointError> {
    decode(&fs::read(path)?)
}
