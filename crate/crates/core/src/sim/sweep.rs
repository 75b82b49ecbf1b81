use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use super::{derive_seed, run, Architecture, RunConfig, RunResult, TopologySpec};
use crate::analysis::RunRow;
use crate::error::{Error, Result};
use crate::explore::EvalPolicy;
use crate::game::AugmentMode;
use crate::net::{LossKind, OptimizerConfig, OptimizerKind};

/// Values to sweep. An empty list keeps the base configuration's value.
///
/// When `d_r` is swept and `d_g` is not, `d_g` follows `d_r`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub tau_init: Vec<f64>,
    pub d_r: Vec<f64>,
    pub d_g: Vec<f64>,
    pub topology: Vec<TopologySpec>,
    pub architecture: Vec<Architecture>,
    pub augmentation: Vec<AugmentMode>,
    pub grid_side: Vec<usize>,
    pub hidden_dim: Vec<usize>,
    pub buffer_capacity: Vec<usize>,
    pub gamma: Vec<f64>,
    pub loss: Vec<LossKind>,
    /// Each kind gets its own default weight decay.
    pub optimizer: Vec<OptimizerKind>,
    pub eval_policy: Vec<EvalPolicy>,
}

impl SweepAxes {
    fn lens(&self) -> [usize; 13] {
        [
            self.tau_init.len(),
            self.d_r.len(),
            self.d_g.len(),
            self.topology.len(),
            self.architecture.len(),
            self.augmentation.len(),
            self.grid_side.len(),
            self.hidden_dim.len(),
            self.buffer_capacity.len(),
            self.gamma.len(),
            self.loss.len(),
            self.optimizer.len(),
            self.eval_policy.len(),
        ]
    }

    /// Number of parameter points in the Cartesian product.
    pub fn n_points(&self) -> usize {
        self.lens().iter().map(|&l| l.max(1)).product()
    }

    fn apply(&self, base: &RunConfig, idx: &[usize; 13]) -> RunConfig {
        let mut c = base.clone();
        if let Some(&v) = self.tau_init.get(idx[0]) {
            c.schedule.tau_init = v;
        }
        if let Some(&v) = self.d_r.get(idx[1]) {
            c.d_r = v;
            c.d_g = v;
        }
        if let Some(&v) = self.d_g.get(idx[2]) {
            c.d_g = v;
        }
        if let Some(&v) = self.topology.get(idx[3]) {
            c.topology = v;
        }
        if let Some(&v) = self.architecture.get(idx[4]) {
            c.architecture = v;
        }
        if let Some(&v) = self.augmentation.get(idx[5]) {
            c.augmentation = v;
        }
        if let Some(&v) = self.grid_side.get(idx[6]) {
            c.grid_side = v;
        }
        if let Some(&v) = self.hidden_dim.get(idx[7]) {
            c.hidden_dim = v;
        }
        if let Some(&v) = self.buffer_capacity.get(idx[8]) {
            c.buffer_capacity = v;
        }
        if let Some(&v) = self.gamma.get(idx[9]) {
            c.td.gamma = v;
        }
        if let Some(&v) = self.loss.get(idx[10]) {
            c.loss.kind = v;
        }
        if let Some(&v) = self.optimizer.get(idx[11]) {
            c.optimizer = OptimizerConfig {
                kind: v,
                weight_decay: OptimizerConfig::for_kind(v).weight_decay,
                ..c.optimizer
            };
        }
        if let Some(&v) = self.eval_policy.get(idx[12]) {
            c.eval_policy = v;
        }
        c
    }
}

/// One run of a sweep, fully configured.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannedRun {
    pub run_id: String,
    /// Position of the parameter point in the product, row-major in axis order.
    pub point: usize,
    pub axis_indices: Vec<usize>,
    /// The user-facing seed; `cfg.seed` is derived from it.
    pub seed: u64,
    pub cfg: RunConfig,
}

/// Expands the product of `axes` with `seeds`. Every configuration is
/// validated here, before any run starts.
pub fn plan_runs(
    base: &RunConfig,
    axes: &SweepAxes,
    seeds: &[u64],
    base_seed: u64,
) -> Result<Vec<PlannedRun>> {
    if seeds.is_empty() {
        return Err(Error::config("seeds must not be empty"));
    }
    let lens = axes.lens().map(|l| l.max(1));
    let mut plan = Vec::with_capacity(axes.n_points() * seeds.len());
    for point in 0..axes.n_points() {
        let mut idx = [0usize; 13];
        let mut rest = point;
        for k in (0..13).rev() {
            idx[k] = rest % lens[k];
            rest /= lens[k];
        }
        let cfg = axes.apply(base, &idx);
        cfg.validate()
            .map_err(|e| Error::config(format!("sweep point {point}: {e}")))?;
        for &seed in seeds {
            plan.push(PlannedRun {
                run_id: format!("p{point:04}-s{seed}"),
                point,
                axis_indices: idx.to_vec(),
                seed,
                cfg: RunConfig {
                    seed: derive_seed(base_seed, &idx, seed),
                    ..cfg.clone()
                },
            });
        }
    }
    Ok(plan)
}

#[derive(Debug)]
pub struct RunReport {
    pub run: PlannedRun,
    pub outcome: std::result::Result<RunResult, String>,
}

impl RunReport {
    pub fn row(&self) -> RunRow {
        let c = &self.run.cfg;
        let (status, error) = match &self.outcome {
            Ok(_) => ("ok".to_string(), String::new()),
            Err(e) => ("error".to_string(), e.clone()),
        };
        let ok = self.outcome.as_ref().ok();
        let metric = |f: fn(&RunResult) -> f64| ok.map_or(f64::NAN, f);
        RunRow {
            b: c.exploration_strength().unwrap_or(f64::NAN),
            tau_init: c.schedule.tau_init,
            d_r: c.d_r,
            d_g: c.d_g,
            topology: c.topology.name().to_string(),
            architecture: c.architecture.name().to_string(),
            augmentation: c.augmentation.name().to_string(),
            l: c.grid_side,
            seed: self.run.seed,
            coop_mean: metric(|r| r.coop_mean),
            q_mean: metric(|r| r.q_mean),
            q_gap: metric(|r| r.q_gap),
            silhouette: metric(|r| r.silhouette().unwrap_or(f64::NAN)),
            wall_time: metric(|r| r.wall_time),
            run_id: self.run.run_id.clone(),
            run_seed: c.seed,
            n_groups: c.architecture.n_groups(),
            tau_final: c.schedule.tau_final,
            hidden_dim: c.hidden_dim,
            buffer_capacity: c.buffer_capacity,
            gamma: c.td.gamma,
            loss: match c.loss.kind {
                LossKind::Huber => "huber".into(),
                LossKind::Mse => "mse".into(),
            },
            optimizer: c.optimizer.kind.name().to_string(),
            eval_policy: c.eval_policy.name(),
            status,
            error,
        }
    }
}

fn run_guarded(cfg: &RunConfig) -> std::result::Result<RunResult, String> {
    match catch_unwind(AssertUnwindSafe(|| run(cfg))) {
        Ok(Ok(r)) => Ok(r),
        Ok(Err(e)) => Err(e.to_string()),
        Err(panic) => Err(panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "run panicked".into())),
    }
}

/// Runs `runs` on up to `workers` threads. Each run is sequential and owns
/// its state; `on_done` is called on the calling thread, in completion order.
pub fn execute(runs: Vec<PlannedRun>, workers: usize, mut on_done: impl FnMut(RunReport)) {
    let workers = workers.clamp(1, runs.len().max(1));
    if workers == 1 {
        for run in runs {
            let outcome = run_guarded(&run.cfg);
            on_done(RunReport { run, outcome });
        }
        return;
    }
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, runs) = (&next, &runs);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(run) = runs.get(i) else { break };
                let outcome = run_guarded(&run.cfg);
                if tx.send((i, outcome)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, outcome) in rx {
            on_done(RunReport {
                run: runs[i].clone(),
                outcome,
            });
        }
    });
}

/// Plans and executes a sweep; rows come back in plan order.
pub fn sweep(
    base: &RunConfig,
    axes: &SweepAxes,
    seeds: &[u64],
    base_seed: u64,
    workers: usize,
) -> Result<Vec<RunRow>> {
    let plan = plan_runs(base, axes, seeds, base_seed)?;
    let mut rows: Vec<Option<RunRow>> = vec![None; plan.len()];
    let order: std::collections::HashMap<String, usize> = plan
        .iter()
        .enumerate()
        .map(|(i, p)| (p.run_id.clone(), i))
        .collect();
    execute(plan, workers, |report| {
        rows[order[&report.run.run_id]] = Some(report.row())
    });
    Ok(rows
        .into_iter()
        .map(|r| r.expect("every run reports"))
        .collect())
}
