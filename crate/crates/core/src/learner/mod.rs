//! Experience replay, Double-DQN targets and policy-group training.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explore::greedy_action;
use crate::game::{AgentState, BASE_DIM};
use crate::net::{
    clip_global_norm, loss_and_grad, LossConfig, OptimizerConfig, OptimizerState, QNetworkParams,
    Sample,
};

mod replay;

pub use replay::{sample_batch, ReplayBuffer, Transition};

/// Largest network input: five base bits plus two augmentation scalars.
const MAX_INPUT: usize = BASE_DIM + 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TdConfig {
    pub gamma: f64,
    pub n_step: usize,
    pub batch_size: usize,
    pub target_sync_interval: u64,
    pub max_grad_norm: f64,
}

impl Default for TdConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            n_step: 5,
            batch_size: 256,
            target_sync_interval: 2000,
            max_grad_norm: 0.5,
        }
    }
}

impl TdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.n_step == 0 || self.batch_size == 0 || self.target_sync_interval == 0 {
            return Err(Error::config(
                "n_step, batch_size and target_sync_interval must be >= 1",
            ));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(Error::config("max_grad_norm must be positive"));
        }
        Ok(())
    }
}

#[inline]
fn input_of(s: &AgentState, buf: &mut [f64; MAX_INPUT]) -> usize {
    let d = s.dim();
    s.write_input(&mut buf[..d]);
    d
}

/// `Q_target(s, argmax_a Q_online(s, a))`, ties resolved toward Cooperate.
pub fn bootstrap_value(s: &AgentState, online: &QNetworkParams, target: &QNetworkParams) -> f64 {
    let mut x = [0.0; MAX_INPUT];
    let d = input_of(s, &mut x);
    let mut hidden = vec![0.0; online.hidden_dim()];
    let q_online = online.forward_into(&x[..d], &mut hidden);
    let a = greedy_action(q_online);
    target.forward_into(&x[..d], &mut hidden)[a.index()]
}

/// One-step Double-DQN target. The task never terminates, so it always bootstraps.
pub fn double_dqn_target_1step(
    tr: &Transition,
    online: &QNetworkParams,
    target: &QNetworkParams,
    gamma: f64,
) -> f64 {
    tr.r + gamma * bootstrap_value(&tr.s_next, online, target)
}

fn nstep_from_chain(chain: &[&Transition], gamma: f64, bootstrap: f64) -> f64 {
    let mut ret = 0.0;
    let mut discount = 1.0;
    for tr in chain {
        ret += discount * tr.r;
        discount *= gamma;
    }
    ret + discount * bootstrap
}

/// n-step Double-DQN target for the transition at `pos`, or `None` when the
/// agent has fewer than `n` consecutive live transitions from there.
pub fn nstep_target(
    buf: &ReplayBuffer,
    pos: usize,
    n: usize,
    online: &QNetworkParams,
    target: &QNetworkParams,
    gamma: f64,
) -> Option<f64> {
    let chain = buf.chain(pos, n)?;
    let last = chain.last()?;
    let boot = bootstrap_value(&last.s_next, online, target);
    Some(nstep_from_chain(&chain, gamma, boot))
}

/// Memo of bootstrap values for unaugmented states, keyed by the base code.
/// Valid only while both networks are unchanged.
struct BootstrapMemo<'a> {
    online: &'a QNetworkParams,
    target: &'a QNetworkParams,
    plain: [Option<f64>; 1 << BASE_DIM],
}

impl<'a> BootstrapMemo<'a> {
    fn new(online: &'a QNetworkParams, target: &'a QNetworkParams) -> Self {
        Self {
            online,
            target,
            plain: [None; 1 << BASE_DIM],
        }
    }

    fn value(&mut self, s: &AgentState) -> f64 {
        if !s.aug().is_empty() {
            return bootstrap_value(s, self.online, self.target);
        }
        let code = s.base_code();
        *self.plain[code].get_or_insert_with(|| bootstrap_value(s, self.online, self.target))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TrainOutcome {
    /// Not enough data yet; nothing changed.
    Skipped,
    Updated {
        loss: f64,
        grad_norm: f64,
        /// Share of the batch that used an n-step target.
        nstep_fraction: f64,
    },
}

/// Parameters, optimizer and replay of one set of agents sharing a network.
#[derive(Clone, Debug)]
pub struct PolicyGroup {
    pub id: usize,
    pub members: Vec<usize>,
    pub online: QNetworkParams,
    pub target: QNetworkParams,
    pub optimizer: OptimizerState,
    pub buffer: ReplayBuffer,
}

impl PolicyGroup {
    pub fn new(
        id: usize,
        members: Vec<usize>,
        online: QNetworkParams,
        optimizer: OptimizerConfig,
        buffer_capacity: usize,
    ) -> Self {
        let target = online.clone();
        let optimizer = OptimizerState::new(optimizer, &online);
        Self {
            id,
            members,
            online,
            target,
            optimizer,
            buffer: ReplayBuffer::new(buffer_capacity),
        }
    }

    /// One mini-batch update from the group's own buffer.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        td: &TdConfig,
        loss: &LossConfig,
        rng: &mut R,
    ) -> Result<TrainOutcome> {
        train_on(
            &mut self.online,
            &self.target,
            &mut self.optimizer,
            &self.buffer,
            td,
            loss,
            rng,
        )
    }

    /// One mini-batch update drawn from an external buffer.
    pub fn train_step_from<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        td: &TdConfig,
        loss: &LossConfig,
        rng: &mut R,
    ) -> Result<TrainOutcome> {
        train_on(
            &mut self.online,
            &self.target,
            &mut self.optimizer,
            buffer,
            td,
            loss,
            rng,
        )
    }

    /// Copies online into target when `t` is a multiple of `interval`.
    pub fn maybe_sync_target(&mut self, t: u64, interval: u64) -> bool {
        if interval > 0 && t > 0 && t.is_multiple_of(interval) {
            self.target = self.online.clone();
            true
        } else {
            false
        }
    }
}

fn train_on<R: Rng + ?Sized>(
    online: &mut QNetworkParams,
    target: &QNetworkParams,
    optimizer: &mut OptimizerState,
    buffer: &ReplayBuffer,
    td: &TdConfig,
    loss_cfg: &LossConfig,
    rng: &mut R,
) -> Result<TrainOutcome> {
    if buffer.len() < td.batch_size.max(1) {
        return Ok(TrainOutcome::Skipped);
    }
    let Some(positions) = sample_batch(buffer, td.batch_size, rng) else {
        return Ok(TrainOutcome::Skipped);
    };

    let mut inputs = Vec::with_capacity(positions.len());
    let mut targets = Vec::with_capacity(positions.len());
    let mut actions = Vec::with_capacity(positions.len());
    let mut used_nstep = 0usize;
    {
        let mut memo = BootstrapMemo::new(online, target);
        for &pos in &positions {
            let tr = buffer.get(pos).expect("sampled position is live");
            let y = match (td.n_step > 1)
                .then(|| buffer.chain(pos, td.n_step))
                .flatten()
            {
                Some(chain) => {
                    used_nstep += 1;
                    let boot = memo.value(&chain[chain.len() - 1].s_next);
                    nstep_from_chain(&chain, td.gamma, boot)
                }
                None => nstep_from_chain(&[tr], td.gamma, memo.value(&tr.s_next)),
            };
            inputs.push(tr.s.to_input());
            targets.push(y);
            actions.push(tr.a);
        }
    }
    let batch: Vec<Sample<'_>> = inputs
        .iter()
        .zip(&actions)
        .zip(&targets)
        .map(|((x, &a), &y)| Sample {
            input: x,
            action: a,
            target: y,
        })
        .collect();
    let (loss, mut grads) = loss_and_grad(online, &batch, loss_cfg)?;
    let grad_norm = clip_global_norm(&mut grads, td.max_grad_norm);
    optimizer.step(online, &grads)?;
    if !online.is_finite() {
        return Err(Error::NonFinite("network parameters diverged".into()));
    }
    Ok(TrainOutcome::Updated {
        loss,
        grad_norm,
        nstep_fraction: used_nstep as f64 / positions.len() as f64,
    })
}

/// Random partition of `0..n_agents` into `n_groups` sets whose sizes differ
/// by at most one. Members of each set are sorted.
pub fn assign_groups(n_agents: usize, n_groups: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n_groups == 0 || n_groups > n_agents {
        return Err(Error::config(format!(
            "cannot split {n_agents} agents into {n_groups} nonempty groups"
        )));
    }
    let mut order: Vec<usize> = (0..n_agents).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n_agents / n_groups, n_agents % n_groups);
    let mut groups = Vec::with_capacity(n_groups);
    let mut rest = order.as_slice();
    for g in 0..n_groups {
        let (head, tail) = rest.split_at(base + usize::from(g < extra));
        let mut members = head.to_vec();
        members.sort_unstable();
        groups.push(members);
        rest = tail;
    }
    Ok(groups)
}
