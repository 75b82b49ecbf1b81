//! The dynamic Prisoner's Dilemma: actions, dilemma-strength payoffs, local
//! observations and the instantaneous cooperation metric.
//!
//! Interaction graphs live in [`topology`].

use arrayvec::ArrayVec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod topology;

pub use topology::{Topology, TopologyKind, DEGREE};

/// Number of binary slots in the base observation: four neighbours then self.
pub const BASE_DIM: usize = DEGREE + 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Cooperate,
    Defect,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Cooperate, Action::Defect];

    /// Binary encoding used in observations and output files: C = 0, D = 1.
    #[inline]
    pub fn bit(self) -> u8 {
        match self {
            Action::Cooperate => 0,
            Action::Defect => 1,
        }
    }

    /// Position of this action's value in a network output pair.
    #[inline]
    pub fn index(self) -> usize {
        self.bit() as usize
    }

    pub fn from_bit(bit: u8) -> Result<Self> {
        match bit {
            0 => Ok(Action::Cooperate),
            1 => Ok(Action::Defect),
            other => Err(Error::Format(format!(
                "action encoding must be 0 or 1, got {other}"
            ))),
        }
    }
}

/// Dilemma strengths: `d_r` is the loss from being exploited, `d_g` the
/// temptation gain of unilateral defection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayoffParams {
    d_r: f64,
    d_g: f64,
}

impl PayoffParams {
    pub fn new(d_r: f64, d_g: f64) -> Result<Self> {
        for (name, v) in [("d_r", d_r), ("d_g", d_g)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(Self { d_r, d_g })
    }

    /// The `d_g = d_r` constraint used for most experiments.
    pub fn diagonal(d: f64) -> Result<Self> {
        Self::new(d, d)
    }

    pub fn d_r(&self) -> f64 {
        self.d_r
    }

    pub fn d_g(&self) -> f64 {
        self.d_g
    }

    /// Payoff to the focal player choosing `own` against `other`.
    ///
    /// R = 1, S = -d_r, T = 1 + d_g, P = 0.
    #[inline]
    pub fn payoff(&self, own: Action, other: Action) -> f64 {
        match (own, other) {
            (Action::Cooperate, Action::Cooperate) => 1.0,
            (Action::Cooperate, Action::Defect) => -self.d_r,
            (Action::Defect, Action::Cooperate) => 1.0 + self.d_g,
            (Action::Defect, Action::Defect) => 0.0,
        }
    }
}

/// Free-function form of [`PayoffParams::payoff`].
pub fn payoff(own: Action, other: Action, params: &PayoffParams) -> f64 {
    params.payoff(own, other)
}

/// Mean payoff of each agent over its four pairwise games.
pub fn step_rewards(
    actions: &[Action],
    topo: &Topology,
    params: &PayoffParams,
) -> Result<Vec<f64>> {
    if actions.len() != topo.n_agents() {
        return Err(Error::config(format!(
            "action profile has {} entries but the topology has {} agents",
            actions.len(),
            topo.n_agents()
        )));
    }
    Ok(actions
        .iter()
        .zip(topo.all_neighbors())
        .map(|(&own, nbrs)| {
            let total: f64 = nbrs.iter().map(|&j| params.payoff(own, actions[j])).sum();
            total / DEGREE as f64
        })
        .collect())
}

/// Fraction of agents that cooperate.
pub fn cooperation_rate(actions: &[Action]) -> Result<f64> {
    if actions.is_empty() {
        return Err(Error::Empty("cooperation_rate needs at least one action"));
    }
    let coop = actions.iter().filter(|&&a| a == Action::Cooperate).count();
    Ok(coop as f64 / actions.len() as f64)
}

/// Scalars optionally appended to the binary observation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMode {
    #[default]
    None,
    /// Normalised exploration temperature.
    Tau,
    /// Normalised training progress.
    Progress,
    /// Temperature then progress.
    Joint,
}

impl AugmentMode {
    pub fn extra_dims(self) -> usize {
        match self {
            AugmentMode::None => 0,
            AugmentMode::Tau | AugmentMode::Progress => 1,
            AugmentMode::Joint => 2,
        }
    }

    pub fn input_dim(self) -> usize {
        BASE_DIM + self.extra_dims()
    }

    pub fn name(self) -> &'static str {
        match self {
            AugmentMode::None => "none",
            AugmentMode::Tau => "tau",
            AugmentMode::Progress => "progress",
            AugmentMode::Joint => "joint",
        }
    }
}

/// Population-wide learning-phase signals, already normalised to [0, 1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugSignals {
    pub tau: f64,
    pub progress: f64,
}

impl AugSignals {
    /// `tau / tau_init` and `step / t_anneal`, each clipped to [0, 1].
    pub fn normalized(tau: f64, tau_init: f64, step: u64, t_anneal: u64) -> Self {
        let progress = if t_anneal == 0 {
            1.0
        } else {
            (step as f64 / t_anneal as f64).min(1.0)
        };
        Self {
            tau: (tau / tau_init).clamp(0.0, 1.0),
            progress: progress.clamp(0.0, 1.0),
        }
    }
}

/// One agent's observation of the previous step.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    base: [u8; BASE_DIM],
    aug: ArrayVec<f64, 2>,
}

impl AgentState {
    pub fn new(base: [u8; BASE_DIM], aug: &[f64]) -> Result<Self> {
        if let Some(bad) = base.iter().find(|&&b| b > 1) {
            return Err(Error::Format(format!(
                "state entries must be binary, got {bad}"
            )));
        }
        let aug = ArrayVec::try_from(aug).map_err(|_| {
            Error::Format(format!("at most 2 augmentation values, got {}", aug.len()))
        })?;
        Ok(Self { base, aug })
    }

    pub fn base(&self) -> &[u8; BASE_DIM] {
        &self.base
    }

    pub fn aug(&self) -> &[f64] {
        &self.aug
    }

    pub fn dim(&self) -> usize {
        BASE_DIM + self.aug.len()
    }

    /// The five base bits packed little-endian; unique per base observation.
    #[inline]
    pub fn base_code(&self) -> usize {
        self.base
            .iter()
            .enumerate()
            .fold(0, |acc, (k, &b)| acc | ((b as usize) << k))
    }

    /// Writes the network input into `out`, which must hold `self.dim()` values.
    #[inline]
    pub fn write_input(&self, out: &mut [f64]) {
        for (o, &b) in out.iter_mut().zip(&self.base) {
            *o = b as f64;
        }
        out[BASE_DIM..self.dim()].copy_from_slice(&self.aug);
    }

    pub fn to_input(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.write_input(&mut v);
        v
    }
}

/// Builds agent `agent`'s observation from the previous action profile.
///
/// `signals` must be given exactly when `mode` appends values.
pub fn build_state(
    agent: usize,
    prev_actions: &[Action],
    topo: &Topology,
    mode: AugmentMode,
    signals: Option<AugSignals>,
) -> Result<AgentState> {
    if prev_actions.len() != topo.n_agents() {
        return Err(Error::config(format!(
            "previous profile has {} entries but the topology has {} agents",
            prev_actions.len(),
            topo.n_agents()
        )));
    }
    let nbrs = topo.neighbors(agent)?;
    let mut base = [0u8; BASE_DIM];
    for (slot, &j) in base.iter_mut().zip(nbrs) {
        *slot = prev_actions[j].bit();
    }
    base[DEGREE] = prev_actions[agent].bit();

    let mut aug = ArrayVec::new();
    match (mode, signals) {
        (AugmentMode::None, None) => {}
        (AugmentMode::None, Some(_)) => {
            return Err(Error::config(
                "augmentation values supplied without an augmentation mode",
            ))
        }
        (_, None) => {
            return Err(Error::config(format!(
                "augmentation mode '{}' requires signal values",
                mode.name()
            )))
        }
        (AugmentMode::Tau, Some(s)) => aug.push(s.tau),
        (AugmentMode::Progress, Some(s)) => aug.push(s.progress),
        (AugmentMode::Joint, Some(s)) => {
            aug.push(s.tau);
            aug.push(s.progress);
        }
    }
    Ok(AgentState { base, aug })
}
