//! Trajectory generation with the GC-agent and the three network updates.
//!
//! One training iteration samples a goal, rolls the GC-agent out for `H`
//! steps (recording one transition and one selection per step and the whole
//! selection sequence at the end), then, once past warmup, runs whichever
//! updates are due:
//!
//! - proposal: one Adam step on `mean ||unfold(a_1..a_H) - goal||^2`,
//!   backpropagated through the whole unroll;
//! - selection: one Adam step on the cross-entropy `-log sigma_phi,a(x, h)`;
//! - Q: one Adam step on `mean (Q_a(x, h, goal) - target)^2` with
//!   `target = loss + min_b Q_target,b(x', h + 1, goal)` and `Q_{H+1} = 0`,
//!   followed by the EMA of the target weights when that is due.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::agents::{ema_update, gc_select, Agents, NetConfig, ProposalNet, QNet, SelectionNet};
use crate::data::Dataset;
use crate::env::{step_loss, transition, EnvConfig, Goal};
use crate::grad::{forward, AdamConfig, AdamState, Tensor};
use crate::replay::{
    ReplayBuffers, ReplayCapacities, RingBuffer, SelectionRecord, SequenceRecord, TransitionRecord,
};
use crate::rng::{self, Rng, STREAM_INIT, STREAM_TRAIN};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Weight of the `log sigma_phi` exploration penalty.
    pub kappa: f64,
    /// EMA rate of the target Q weights.
    pub rho: f64,
    /// Adam learning rate shared by the three networks.
    pub lr: f64,
    pub batch_proposal: usize,
    pub batch_selection: usize,
    pub batch_q: usize,
    /// Update periods, in trajectories.
    pub period_proposal: usize,
    pub period_selection: usize,
    pub period_q: usize,
    pub period_target: usize,
    /// Trajectories collected before the first update.
    pub warmup: usize,
    /// Trajectories per run.
    pub trajectories: usize,
    /// Evaluate the bootstrap at the online network's argmin.
    pub double_dqn: bool,
    pub seed: u64,
    pub capacities: ReplayCapacities,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kappa: 0.05,
            rho: 0.06,
            lr: 1e-4,
            batch_proposal: 128,
            batch_selection: 128,
            batch_q: 128,
            period_proposal: 1,
            period_selection: 1,
            period_q: 1,
            period_target: 1,
            warmup: 200,
            trajectories: 10_000,
            double_dqn: false,
            seed: 0,
            capacities: ReplayCapacities::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::config("kappa must be nonnegative"));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::config("rho must lie in (0, 1)"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr must be positive"));
        }
        if self.warmup == 0 {
            return Err(Error::config("warmup must be at least 1"));
        }
        let sizes = [
            self.batch_proposal,
            self.batch_selection,
            self.batch_q,
            self.period_proposal,
            self.period_selection,
            self.period_q,
            self.period_target,
            self.capacities.transitions,
            self.capacities.selections,
            self.capacities.sequences,
        ];
        if sizes.contains(&0) {
            return Err(Error::config("batch sizes, periods and capacities must be positive"));
        }
        Ok(())
    }
}

/// Full record of one GC-agent rollout. `states` has `H + 1` entries; the
/// other per-step vectors have `H`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub selections: Vec<usize>,
    pub actions: Vec<Vec<f64>>,
    pub losses: Vec<f64>,
    pub goal: Vec<f64>,
}

impl Trajectory {
    pub fn terminal_loss(&self) -> f64 {
        *self.losses.last().unwrap()
    }
}

/// Roll out the GC-agent toward a uniformly drawn goal and record the
/// trajectory in `buffers`.
pub fn sample_trajectory(
    agents: &Agents,
    env: &EnvConfig,
    dataset: &Dataset,
    buffers: &mut ReplayBuffers,
    kappa: f64,
    rng: &mut Rng,
) -> Result<Trajectory> {
    if dataset.dim() != env.dim {
        return Err(Error::config(format!(
            "dataset dimension {} does not match d = {}",
            dataset.dim(),
            env.dim
        )));
    }
    let goal = Goal::new(dataset.point(rng::index(rng, dataset.len())).to_vec())?;
    let h_max = env.horizon;
    let mut traj = Trajectory {
        states: Vec::with_capacity(h_max + 1),
        selections: Vec::with_capacity(h_max),
        actions: Vec::with_capacity(h_max),
        losses: Vec::with_capacity(h_max),
        goal: goal.0.clone(),
    };
    let mut x = env.x1.clone();
    for step in 1..=h_max {
        let a = gc_select(&agents.q, &agents.selection, &x, goal.as_slice(), step, kappa)?;
        let y = agents.proposal.propose(&x, step, a)?;
        let x_next = transition(&x, &y, step, env)?;
        let loss = step_loss(&x, &y, step, &goal, env)?;
        buffers.transitions.push(TransitionRecord {
            x: x.clone(),
            step,
            selection: a,
            x_next: x_next.clone(),
            loss,
            goal: goal.0.clone(),
        });
        buffers.selections.push(SelectionRecord {
            x: x.clone(),
            step,
            selection: a,
        });
        traj.states.push(x);
        traj.selections.push(a);
        traj.actions.push(y);
        traj.losses.push(loss);
        x = x_next;
    }
    traj.states.push(x);
    buffers.sequences.push(SequenceRecord {
        selections: traj.selections.clone(),
        goal: goal.0,
    });
    Ok(traj)
}

/// One Adam step of the unfolded proposal regression. Returns the batch
/// loss before the step, or `None` when the buffer is empty.
pub fn update_proposal(
    net: &mut ProposalNet,
    buffer: &RingBuffer<SequenceRecord>,
    env: &EnvConfig,
    opt: &mut AdamState,
    batch: usize,
    rng: &mut Rng,
) -> Result<Option<f64>> {
    let Some(records) = buffer.sample_batch(batch, rng) else {
        return Ok(None);
    };
    let pairs: Vec<(&[usize], &[f64])> = records
        .iter()
        .map(|r| (r.selections.as_slice(), r.goal.as_slice()))
        .collect();
    let (loss, grads) = net.unfolded_loss(env, &pairs)?;
    opt.apply(&mut net.params, &grads)?;
    Ok(Some(loss))
}

/// One Adam step of the selection cross-entropy. Returns the batch loss
/// before the step, or `None` when the buffer is empty.
pub fn update_selection(
    net: &mut SelectionNet,
    buffer: &RingBuffer<SelectionRecord>,
    opt: &mut AdamState,
    batch: usize,
    rng: &mut Rng,
) -> Result<Option<f64>> {
    let Some(records) = buffer.sample_batch(batch, rng) else {
        return Ok(None);
    };
    let triples: Vec<(&[f64], usize, usize)> = records
        .iter()
        .map(|r| (r.x.as_slice(), r.step, r.selection))
        .collect();
    let (loss, grads) = net.cross_entropy(&triples)?;
    opt.apply(&mut net.params, &grads)?;
    Ok(Some(loss))
}

/// Bellman targets for a batch: the recorded loss, plus the bootstrapped
/// minimum of the target network at `(x', h + 1)` for non-terminal steps.
/// The exploration penalty never enters here.
pub fn q_targets(net: &QNet, batch: &[&TransitionRecord], env: &EnvConfig, double_dqn: bool) -> Result<Vec<f64>> {
    let mut targets: Vec<f64> = batch.iter().map(|r| r.loss).collect();
    let open: Vec<usize> = (0..batch.len()).filter(|&i| batch[i].step < env.horizon).collect();
    if open.is_empty() {
        return Ok(targets);
    }
    let xs: Vec<&[f64]> = open.iter().map(|&i| batch[i].x_next.as_slice()).collect();
    let goals: Vec<&[f64]> = open.iter().map(|&i| batch[i].goal.as_slice()).collect();
    // 1-based h + 1 is 0-based h.
    let steps: Vec<usize> = open.iter().map(|&i| batch[i].step).collect();
    let lagged = net.eval_batch(&xs, &goals, &steps, true)?.q;
    let chooser = if double_dqn {
        Some(net.eval_batch(&xs, &goals, &steps, false)?.q)
    } else {
        None
    };
    for (row, &i) in open.iter().enumerate() {
        let q_next = lagged.row(row);
        let bootstrap = match &chooser {
            Some(online) => q_next[crate::agents::penalized_argmin(online.row(row), &[], 0.0)],
            None => q_next.iter().copied().fold(f64::INFINITY, f64::min),
        };
        targets[i] += bootstrap;
    }
    Ok(targets)
}

/// Mean squared Bellman error of the online network on `batch` and its
/// gradient.
pub fn q_regression(
    net: &QNet,
    batch: &[&TransitionRecord],
    env: &EnvConfig,
    double_dqn: bool,
) -> Result<(f64, Vec<Tensor>)> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::config("empty batch"));
    }
    let targets = q_targets(net, batch, env, double_dqn)?;
    let xs: Vec<&[f64]> = batch.iter().map(|r| r.x.as_slice()).collect();
    let goals: Vec<&[f64]> = batch.iter().map(|r| r.goal.as_slice()).collect();
    let mut steps = Vec::with_capacity(n);
    for r in batch {
        if r.step == 0 || r.step > env.horizon {
            return Err(Error::Index {
                what: "step",
                index: r.step,
                bound: env.horizon,
            });
        }
        if r.selection >= env.selections {
            return Err(Error::Index {
                what: "selection",
                index: r.selection,
                bound: env.selections,
            });
        }
        steps.push(r.step - 1);
    }
    let graph = net.graph(n)?;
    let (out, tape) = forward(&graph, &net.params, &net.inputs(&xs, &goals, &steps)?)?;
    let a_count = env.selections;
    let mut seed = Tensor::zeros(&[n, a_count]);
    let mut loss = 0.0;
    for (i, r) in batch.iter().enumerate() {
        let err = out[0].row(i)[r.selection] - targets[i];
        loss += err * err;
        seed.data_mut()[i * a_count + r.selection] = 2.0 * err / n as f64;
    }
    let head_seed = Tensor::zeros(out[1].shape());
    let grads = tape.backward(&net.params, &[seed, head_seed])?;
    Ok((loss / n as f64, grads))
}

/// One Adam step of the Q regression. Returns the batch loss before the
/// step, or `None` when the buffer is empty. The EMA of the target weights
/// is left to the caller.
pub fn update_q(
    net: &mut QNet,
    buffer: &RingBuffer<TransitionRecord>,
    env: &EnvConfig,
    opt: &mut AdamState,
    batch: usize,
    double_dqn: bool,
    rng: &mut Rng,
) -> Result<Option<f64>> {
    let Some(records) = buffer.sample_batch(batch, rng) else {
        return Ok(None);
    };
    let (loss, grads) = q_regression(net, &records, env, double_dqn)?;
    opt.apply(&mut net.params, &grads)?;
    Ok(Some(loss))
}

/// Per-trajectory metrics; update losses are `None` when the update did not
/// run.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    /// 1-based trajectory count.
    pub traj: u64,
    pub term_loss: f64,
    pub prop_loss: Option<f64>,
    pub sel_loss: Option<f64>,
    pub q_loss: Option<f64>,
}

/// Everything needed to continue a training run exactly where it stopped.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub env: EnvConfig,
    pub config: TrainConfig,
    pub agents: Agents,
    pub opt_proposal: AdamState,
    pub opt_selection: AdamState,
    pub opt_q: AdamState,
    pub buffers: ReplayBuffers,
    pub rng: Rng,
    /// Trajectories sampled so far.
    pub completed: u64,
    /// How often each selection index has been taken.
    pub usage: Vec<u64>,
}

impl Trainer {
    /// Fresh agents initialised from `config.seed`.
    pub fn new(env: EnvConfig, net: &NetConfig, config: TrainConfig) -> Result<Self> {
        let mut init = rng::seeded(config.seed, STREAM_INIT);
        let agents = Agents::new(&env, net, &mut init)?;
        Self::with_agents(env, agents, config)
    }

    pub fn with_agents(env: EnvConfig, agents: Agents, config: TrainConfig) -> Result<Self> {
        env.validate()?;
        config.validate()?;
        let adam = AdamConfig::with_lr(config.lr);
        Ok(Trainer {
            opt_proposal: AdamState::new(&agents.proposal.params, adam),
            opt_selection: AdamState::new(&agents.selection.params, adam),
            opt_q: AdamState::new(&agents.q.params, adam),
            buffers: ReplayBuffers::new(config.capacities)?,
            rng: rng::seeded(config.seed, STREAM_TRAIN),
            completed: 0,
            usage: vec![0; env.selections],
            env,
            config,
            agents,
        })
    }

    /// Sample one trajectory and run the updates that are due.
    pub fn step(&mut self, dataset: &Dataset) -> Result<MetricsRow> {
        let traj = sample_trajectory(
            &self.agents,
            &self.env,
            dataset,
            &mut self.buffers,
            self.config.kappa,
            &mut self.rng,
        )?;
        for &a in &traj.selections {
            self.usage[a] += 1;
        }
        self.completed += 1;
        let t = self.completed;
        let cfg = &self.config;
        let due = |period: usize| t >= cfg.warmup as u64 && t % period as u64 == 0;

        let mut row = MetricsRow {
            traj: t,
            term_loss: traj.terminal_loss(),
            prop_loss: None,
            sel_loss: None,
            q_loss: None,
        };
        if due(cfg.period_proposal) {
            row.prop_loss = update_proposal(
                &mut self.agents.proposal,
                &self.buffers.sequences,
                &self.env,
                &mut self.opt_proposal,
                cfg.batch_proposal,
                &mut self.rng,
            )?;
        }
        if due(cfg.period_selection) {
            row.sel_loss = update_selection(
                &mut self.agents.selection,
                &self.buffers.selections,
                &mut self.opt_selection,
                cfg.batch_selection,
                &mut self.rng,
            )?;
        }
        if due(cfg.period_q) {
            row.q_loss = update_q(
                &mut self.agents.q,
                &self.buffers.transitions,
                &self.env,
                &mut self.opt_q,
                cfg.batch_q,
                cfg.double_dqn,
                &mut self.rng,
            )?;
            if row.q_loss.is_some() && t % cfg.period_target as u64 == 0 {
                let q = &mut self.agents.q;
                ema_update(&q.params, &mut q.target, cfg.rho)?;
            }
        }
        Ok(row)
    }

    /// Run `n` more trajectories.
    pub fn run(&mut self, dataset: &Dataset, n: usize) -> Result<Vec<MetricsRow>> {
        (0..n).map(|_| self.step(dataset)).collect()
    }
}

/// Train fresh agents for `config.trajectories` trajectories.
pub fn train(env: &EnvConfig, net: &NetConfig, dataset: &Dataset, config: &TrainConfig) -> Result<(Trainer, Vec<MetricsRow>)> {
    let mut trainer = Trainer::new(env.clone(), net, config.clone())?;
    let metrics = trainer.run(dataset, config.trajectories)?;
    Ok((trainer, metrics))
}
