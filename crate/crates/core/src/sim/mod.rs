//! The two-phase interaction protocol for one seeded configuration.
//!
//! Each step runs observe, select, act and reward, store, learn, sync and
//! anneal, in that order. Learning happens only during the first `t_train`
//! steps; the remaining `t_eval` steps leave every parameter, optimizer
//! moment and replay buffer untouched.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, ClusterDiagnostic};
use crate::error::{Error, Result};
use crate::explore::{softmax_policy, AnnealSchedule, EvalPolicy};
use crate::game::{
    build_state, cooperation_rate, step_rewards, Action, AgentState, AugSignals, AugmentMode,
    PayoffParams, Topology, BASE_DIM,
};
use crate::learner::{assign_groups, PolicyGroup, ReplayBuffer, TdConfig, Transition};
use crate::net::{hash_snapshots, LossConfig, OptimizerConfig, QNetworkParams};

mod sweep;

pub use sweep::{execute, plan_runs, sweep, PlannedRun, RunReport, SweepAxes};

/// splitmix64 output function: a bijective 64-bit mix.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one run of a sweep.
///
/// The base seed is mixed once, then each axis index is folded in with
/// `h = splitmix64(h ^ splitmix64(index + 1))`, then the number of axes,
/// then the seed index the same way.
pub fn derive_seed(base_seed: u64, axis_indices: &[usize], seed_index: u64) -> u64 {
    let fold = |h: u64, v: u64| splitmix64(h ^ splitmix64(v.wrapping_add(1)));
    let mut h = splitmix64(base_seed);
    for &i in axis_indices {
        h = fold(h, i as u64);
    }
    h = fold(h, axis_indices.len() as u64);
    fold(h, seed_index)
}

/// Independent random streams of one run.
#[derive(Clone, Copy)]
enum Stream {
    Topology = 1,
    Groups = 2,
    Network = 3,
    InitialActions = 4,
    Actions = 5,
    Replay = 6,
    Activations = 7,
    Clusters = 8,
}

fn stream_seed(seed: u64, stream: Stream, sub: u64) -> u64 {
    derive_seed(seed, &[stream as usize], sub)
}

/// Step-0 profile: each agent cooperates with probability 1/2.
pub fn initial_actions(n_agents: usize, seed: u64) -> Vec<Action> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_agents)
        .map(|_| {
            if rng.gen_bool(0.5) {
                Action::Cooperate
            } else {
                Action::Defect
            }
        })
        .collect()
}

/// Interaction graph family. The population is always `grid_side^2` agents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    Grid,
    RandomRegular,
    Modular {
        #[serde(default = "default_modules")]
        modules: usize,
        #[serde(default = "default_cross")]
        cross: usize,
    },
    SmallWorld {
        #[serde(default = "default_rewire_p")]
        rewire_p: f64,
    },
}

fn default_modules() -> usize {
    9
}
fn default_cross() -> usize {
    20
}
fn default_rewire_p() -> f64 {
    0.1
}

impl TopologySpec {
    pub fn name(&self) -> &'static str {
        match self {
            TopologySpec::Grid => "grid",
            TopologySpec::RandomRegular => "random_regular",
            TopologySpec::Modular { .. } => "modular",
            TopologySpec::SmallWorld { .. } => "small_world",
        }
    }

    pub fn build(&self, grid_side: usize, seed: u64) -> Result<Topology> {
        let n = grid_side * grid_side;
        match *self {
            TopologySpec::Grid => Topology::grid(grid_side),
            TopologySpec::RandomRegular => Topology::random_regular(n, seed),
            TopologySpec::Modular { modules, cross } => Topology::modular(n, modules, cross, seed),
            TopologySpec::SmallWorld { rewire_p } => Topology::small_world(n, rewire_p, seed),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Architecture {
    /// One network for the whole population.
    Shared,
    /// Random partition into `n_groups` populations with separate networks.
    Grouped { n_groups: usize },
}

impl Architecture {
    pub fn n_groups(&self) -> usize {
        match *self {
            Architecture::Shared => 1,
            Architecture::Grouped { n_groups } => n_groups,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Shared => "shared",
            Architecture::Grouped { .. } => "grouped",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid_side: usize,
    pub topology: TopologySpec,
    pub d_r: f64,
    pub d_g: f64,
    pub schedule: AnnealSchedule,
    pub eval_policy: EvalPolicy,
    pub t_train: u64,
    pub t_eval: u64,
    pub td: TdConfig,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    pub hidden_dim: usize,
    pub buffer_capacity: usize,
    pub architecture: Architecture,
    /// Grouped mode only: all groups sample from one population-wide buffer.
    pub shared_replay: bool,
    pub augmentation: AugmentMode,
    /// Evaluation-phase (state, hidden, action) triples kept for analysis.
    pub activation_samples: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid_side: 30,
            topology: TopologySpec::Grid,
            d_r: 0.25,
            d_g: 0.25,
            schedule: AnnealSchedule::default(),
            eval_policy: EvalPolicy::default(),
            t_train: 95_000,
            t_eval: 5_000,
            td: TdConfig::default(),
            loss: LossConfig::default(),
            optimizer: OptimizerConfig::default(),
            hidden_dim: 96,
            buffer_capacity: 90_000,
            architecture: Architecture::Shared,
            shared_replay: false,
            augmentation: AugmentMode::None,
            activation_samples: 2_000,
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Parses a TOML table of run fields and validates the result.
    /// Omitted fields take their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn n_agents(&self) -> usize {
        self.grid_side * self.grid_side
    }

    pub fn total_steps(&self) -> u64 {
        self.t_train + self.t_eval
    }

    pub fn payoff(&self) -> Result<PayoffParams> {
        PayoffParams::new(self.d_r, self.d_g)
    }

    pub fn exploration_strength(&self) -> Result<f64> {
        self.schedule.exploration_strength()
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_side < 3 {
            return Err(Error::config(format!(
                "grid_side must be at least 3, got {}",
                self.grid_side
            )));
        }
        self.payoff()?;
        self.schedule.validate()?;
        if !(self.schedule.tau_final > 0.0) {
            return Err(Error::config("schedule.tau_final must be positive"));
        }
        if self.schedule.t_anneal < 2 {
            return Err(Error::config("schedule.t_anneal must be at least 2"));
        }
        self.eval_policy.validate()?;
        if self.t_train == 0 || self.t_eval == 0 {
            return Err(Error::config("t_train and t_eval must both be at least 1"));
        }
        self.td.validate()?;
        self.loss.validate()?;
        self.optimizer.validate()?;
        if self.hidden_dim == 0 || self.buffer_capacity == 0 {
            return Err(Error::config(
                "hidden_dim and buffer_capacity must be positive",
            ));
        }
        let groups = self.architecture.n_groups();
        if groups == 0 || groups > self.n_agents() {
            return Err(Error::config(format!(
                "architecture.n_groups must lie in [1, {}], got {groups}",
                self.n_agents()
            )));
        }
        if let TopologySpec::SmallWorld { rewire_p } = self.topology {
            if !(0.0..=1.0).contains(&rewire_p) {
                return Err(Error::config(format!(
                    "topology.rewire_p must lie in [0, 1], got {rewire_p}"
                )));
            }
        }
        if let TopologySpec::Modular { modules, .. } = self.topology {
            if modules == 0 || !self.n_agents().is_multiple_of(modules) {
                return Err(Error::config(format!(
                    "topology.modules = {modules} does not divide {} agents",
                    self.n_agents()
                )));
            }
        }
        Ok(())
    }
}

/// Network state at one instant, for checking that evaluation is frozen.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FreezeProbe {
    pub t: u64,
    /// SHA-256 over every group's online then target parameters.
    pub param_hash: String,
    pub optimizer_steps: Vec<u64>,
    pub buffer_lens: Vec<usize>,
}

/// One sampled evaluation-phase observation.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationRecord {
    pub step: u64,
    pub agent: usize,
    pub group: usize,
    pub state: AgentState,
    pub hidden: Vec<f64>,
    pub q: [f64; 2],
    pub action: Action,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    /// `c(t)` for every step, training included.
    pub coop_trace: Vec<f64>,
    /// Temperature used at every step; evaluation records the evaluation
    /// temperature, or zero for greedy evaluation.
    pub tau_trace: Vec<f64>,
    pub coop_mean: f64,
    pub q_mean: f64,
    pub q_gap: f64,
    pub activations: Vec<ActivationRecord>,
    pub clusters: Option<ClusterDiagnostic>,
    pub exploration_strength: f64,
    pub train_probe: FreezeProbe,
    pub final_probe: FreezeProbe,
    pub final_params: Vec<QNetworkParams>,
    pub wall_time: f64,
}

impl RunResult {
    pub fn silhouette(&self) -> Option<f64> {
        self.clusters.as_ref().and_then(|c| c.silhouette)
    }
}

/// A run in progress, advanced one step at a time.
pub struct Simulation {
    cfg: RunConfig,
    topo: Topology,
    payoff: PayoffParams,
    groups: Vec<PolicyGroup>,
    agent_group: Vec<usize>,
    shared_buffer: Option<ReplayBuffer>,
    actions: Vec<Action>,
    states: Vec<AgentState>,
    t: u64,
    action_rng: ChaCha8Rng,
    learn_rngs: Vec<ChaCha8Rng>,
    coop_trace: Vec<f64>,
    tau_trace: Vec<f64>,
    sample_plan: Vec<(u64, usize)>,
    plan_cursor: usize,
    activations: Vec<ActivationRecord>,
    train_probe: Option<FreezeProbe>,
}

impl Simulation {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.seed;
        let topo = cfg
            .topology
            .build(cfg.grid_side, stream_seed(seed, Stream::Topology, 0))?;
        let n = topo.n_agents();
        let members = assign_groups(
            n,
            cfg.architecture.n_groups(),
            stream_seed(seed, Stream::Groups, 0),
        )?;
        let mut agent_group = vec![0; n];
        let input_dim = cfg.augmentation.input_dim();
        let mut groups = Vec::with_capacity(members.len());
        for (g, m) in members.into_iter().enumerate() {
            m.iter().for_each(|&i| agent_group[i] = g);
            let net = QNetworkParams::init(
                input_dim,
                cfg.hidden_dim,
                stream_seed(seed, Stream::Network, g as u64),
            )?;
            groups.push(PolicyGroup::new(
                g,
                m,
                net,
                cfg.optimizer,
                cfg.buffer_capacity,
            ));
        }
        let learn_rngs = (0..groups.len())
            .map(|g| ChaCha8Rng::seed_from_u64(stream_seed(seed, Stream::Replay, g as u64)))
            .collect();
        let shared_buffer =
            (cfg.shared_replay && groups.len() > 1).then(|| ReplayBuffer::new(cfg.buffer_capacity));

        let mut plan_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, Stream::Activations, 0));
        let mut sample_plan: Vec<(u64, usize)> = (0..cfg.activation_samples)
            .map(|_| {
                let step = cfg.t_train + 1 + plan_rng.gen_range(0..cfg.t_eval);
                (step, plan_rng.gen_range(0..n))
            })
            .collect();
        sample_plan.sort_unstable();

        let actions = initial_actions(n, stream_seed(seed, Stream::InitialActions, 0));
        let mut sim = Self {
            payoff: cfg.payoff()?,
            topo,
            groups,
            agent_group,
            shared_buffer,
            states: Vec::new(),
            actions,
            t: 0,
            action_rng: ChaCha8Rng::seed_from_u64(stream_seed(seed, Stream::Actions, 0)),
            learn_rngs,
            coop_trace: Vec::with_capacity(cfg.total_steps() as usize),
            tau_trace: Vec::with_capacity(cfg.total_steps() as usize),
            sample_plan,
            plan_cursor: 0,
            activations: Vec::new(),
            train_probe: None,
            cfg,
        };
        sim.states = sim.observe(&sim.actions, sim.signals_for(1))?;
        Ok(sim)
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn groups(&self) -> &[PolicyGroup] {
        &self.groups
    }

    pub fn agent_group(&self) -> &[usize] {
        &self.agent_group
    }

    /// Steps completed so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.cfg.total_steps()
    }

    pub fn in_training(&self) -> bool {
        self.t < self.cfg.t_train
    }

    /// Most recent action profile (the step-0 profile before any step).
    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    /// Observations the agents will act on in the next step.
    pub fn observations(&self) -> &[AgentState] {
        &self.states
    }

    pub fn coop_trace(&self) -> &[f64] {
        &self.coop_trace
    }

    pub fn tau_trace(&self) -> &[f64] {
        &self.tau_trace
    }

    pub fn probe(&self) -> FreezeProbe {
        FreezeProbe {
            t: self.t,
            param_hash: hash_snapshots(self.groups.iter().flat_map(|g| [&g.online, &g.target])),
            optimizer_steps: self.groups.iter().map(|g| g.optimizer.step_count).collect(),
            buffer_lens: self
                .groups
                .iter()
                .map(|g| g.buffer.len())
                .chain(self.shared_buffer.as_ref().map(ReplayBuffer::len))
                .collect(),
        }
    }

    fn eval_tau(&self) -> f64 {
        match self.cfg.eval_policy {
            EvalPolicy::Softmax { tau_eval } => tau_eval,
            EvalPolicy::Greedy => 0.0,
        }
    }

    fn train_signals(&self, t: u64) -> Option<AugSignals> {
        let s = &self.cfg.schedule;
        (self.cfg.augmentation != AugmentMode::None)
            .then(|| AugSignals::normalized(s.temperature(t), s.tau_init, t, s.t_anneal))
    }

    /// Augmentation inputs for observations acted on at step `t`.
    fn signals_for(&self, t: u64) -> Option<AugSignals> {
        if t <= self.cfg.t_train {
            return self.train_signals(t);
        }
        (self.cfg.augmentation != AugmentMode::None).then(|| AugSignals {
            tau: (self.eval_tau() / self.cfg.schedule.tau_init).clamp(0.0, 1.0),
            progress: 1.0,
        })
    }

    fn observe(&self, profile: &[Action], signals: Option<AugSignals>) -> Result<Vec<AgentState>> {
        (0..profile.len())
            .map(|i| build_state(i, profile, &self.topo, self.cfg.augmentation, signals))
            .collect()
    }

    /// Runs one synchronous step and returns its cooperation rate.
    pub fn step(&mut self) -> Result<f64> {
        if self.is_done() {
            return Err(Error::config("the run has already finished"));
        }
        let t = self.t + 1;
        let training = t <= self.cfg.t_train;
        let tau = if training {
            self.cfg.schedule.temperature(t)
        } else {
            self.eval_tau()
        };

        // Every agent acts on the step t-1 profile; no one sees step-t choices.
        // All agents of a group share the step's augmentation values, so
        // action values depend only on the group and the five base bits.
        let n = self.actions.len();
        let mut memo = vec![[None::<[f64; 2]>; 1 << BASE_DIM]; self.groups.len()];
        let mut hidden = vec![0.0; self.cfg.hidden_dim];
        let mut x = [0.0; BASE_DIM + 2];
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let g = self.agent_group[i];
            let s = &self.states[i];
            let q = *memo[g][s.base_code()].get_or_insert_with(|| {
                let d = s.dim();
                s.write_input(&mut x[..d]);
                self.groups[g].online.forward_into(&x[..d], &mut hidden)
            });
            let a = if training {
                softmax_policy(q, tau, &mut self.action_rng)?.0
            } else {
                self.cfg.eval_policy.select(q, &mut self.action_rng)?
            };
            next.push(a);
        }
        if !training {
            self.record_activations(t, &next)?;
        }

        let rewards = step_rewards(&next, &self.topo, &self.payoff)?;
        let c = cooperation_rate(&next)?;
        self.coop_trace.push(c);
        self.tau_trace.push(tau);

        let next_states = if training {
            // Bootstrap states continue the training schedule, including
            // after the final training step.
            let s_next = self.observe(&next, self.train_signals(t + 1))?;
            for i in 0..n {
                let tr = Transition {
                    agent: i,
                    t,
                    s: self.states[i].clone(),
                    a: next[i],
                    r: rewards[i],
                    s_next: s_next[i].clone(),
                };
                match self.shared_buffer.as_mut() {
                    Some(buf) => buf.push(tr),
                    None => self.groups[self.agent_group[i]].buffer.push(tr),
                }
            }
            for g in 0..self.groups.len() {
                self.train_group(g)?;
            }
            for g in &mut self.groups {
                g.maybe_sync_target(t, self.cfg.td.target_sync_interval);
            }
            if t < self.cfg.t_train || self.cfg.augmentation == AugmentMode::None {
                s_next
            } else {
                self.observe(&next, self.signals_for(t + 1))?
            }
        } else {
            self.observe(&next, self.signals_for(t + 1))?
        };

        self.actions = next;
        self.states = next_states;
        self.t = t;
        if t == self.cfg.t_train {
            self.train_probe = Some(self.probe());
        }
        Ok(c)
    }

    /// One mini-batch update of group `g` from its replay data.
    pub fn train_group(&mut self, g: usize) -> Result<crate::learner::TrainOutcome> {
        let group = self
            .groups
            .get_mut(g)
            .ok_or_else(|| Error::config(format!("no group {g}")))?;
        let rng = &mut self.learn_rngs[g];
        match &self.shared_buffer {
            Some(buf) => group.train_step_from(buf, &self.cfg.td, &self.cfg.loss, rng),
            None => group.train_step(&self.cfg.td, &self.cfg.loss, rng),
        }
    }

    fn record_activations(&mut self, t: u64, chosen: &[Action]) -> Result<()> {
        while let Some(&(step, agent)) = self.sample_plan.get(self.plan_cursor) {
            if step != t {
                break;
            }
            let g = self.agent_group[agent];
            let state = self.states[agent].clone();
            let fwd = self.groups[g].online.forward(&state.to_input())?;
            self.activations.push(ActivationRecord {
                step: t,
                agent,
                group: g,
                state,
                hidden: fwd.hidden,
                q: fwd.q,
                action: chosen[agent],
            });
            self.plan_cursor += 1;
        }
        Ok(())
    }

    /// Runs the remaining steps and summarises the evaluation phase.
    pub fn run_to_end(mut self) -> Result<RunResult> {
        let start = Instant::now();
        while !self.is_done() {
            self.step()?;
        }
        let final_probe = self.probe();
        let train_probe = self.train_probe.clone().expect("training finished");
        let coop_mean = analysis::mean_cooperation(&self.coop_trace, self.cfg.t_eval as usize)?;
        let (q_mean, q_gap) = if self.activations.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            analysis::q_stats(&self.activations.iter().map(|a| a.q).collect::<Vec<_>>())?
        };
        let points: Vec<Vec<f64>> = self.activations.iter().map(|a| a.hidden.clone()).collect();
        let distinct = points.iter().any(|p| p != &points[0]);
        let clusters = if distinct {
            Some(analysis::kmeans2(
                &points,
                stream_seed(self.cfg.seed, Stream::Clusters, 0),
                analysis::DEFAULT_MAX_ITER,
            )?)
        } else {
            None
        };
        Ok(RunResult {
            exploration_strength: self.cfg.exploration_strength()?,
            coop_mean,
            q_mean,
            q_gap,
            clusters,
            train_probe,
            final_probe,
            final_params: self.groups.iter().map(|g| g.online.clone()).collect(),
            activations: self.activations,
            coop_trace: self.coop_trace,
            tau_trace: self.tau_trace,
            wall_time: start.elapsed().as_secs_f64(),
        })
    }
}

/// Executes a full run.
pub fn run(cfg: &RunConfig) -> Result<RunResult> {
    let start = Instant::now();
    let mut result = Simulation::new(cfg.clone())?.run_to_end()?;
    result.wall_time = start.elapsed().as_secs_f64();
    Ok(result)
}
