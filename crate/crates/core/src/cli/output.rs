//! Output bundle: `runs.csv`, `trace-<run>.csv`, `activations-<run>.csv`,
//! `thresholds.csv`, `manifest.json` and optional parameter checkpoints.
//!
//! Floats are written in shortest round-trip decimal form; missing values
//! are written as `NaN`.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{resolve_workers, ExperimentSpec, RunOptions};
use crate::analysis::{aggregate_seeds, thresholds, RunRow, Threshold, ThresholdRow};
use crate::error::{Error, Result};
use crate::game::Action;
use crate::sim::{execute, ActivationRecord, RunReport, RunResult};

/// Column order of `runs.csv`.
pub const RUN_COLUMNS: [&str; 26] = [
    "B",
    "tau_init",
    "d_r",
    "d_g",
    "topology",
    "architecture",
    "augmentation",
    "L",
    "seed",
    "coop_mean",
    "q_mean",
    "q_gap",
    "silhouette",
    "wall_time",
    "run_id",
    "run_seed",
    "n_groups",
    "tau_final",
    "hidden_dim",
    "buffer_capacity",
    "gamma",
    "loss",
    "optimizer",
    "eval_policy",
    "status",
    "error",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub run_id: String,
    pub point: usize,
    pub axis_indices: Vec<usize>,
    pub seed: u64,
    pub run_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// The experiment as TOML; parsing it yields the experiment that produced the bundle.
    pub spec_toml: String,
    pub spec: ExperimentSpec,
    pub runs: Vec<ManifestRun>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub total: usize,
    pub skipped: usize,
    pub ok: usize,
    pub failed: usize,
}

#[derive(Serialize)]
struct ThresholdCsvRow<'a> {
    #[serde(rename = "B")]
    b: f64,
    tau_init: f64,
    tau_final: f64,
    topology: &'a str,
    architecture: &'a str,
    n_groups: usize,
    augmentation: &'a str,
    #[serde(rename = "L")]
    l: usize,
    hidden_dim: usize,
    buffer_capacity: usize,
    gamma: f64,
    loss: &'a str,
    optimizer: &'a str,
    eval_policy: &'a str,
    criterion: f64,
    /// The threshold, or the nearest range edge for out-of-range markers.
    d_r_star: f64,
    marker: &'static str,
    d_r_min: f64,
    d_r_max: f64,
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let rows = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<RunRow>, _>>()?;
    Ok(rows)
}

fn runs_writer(path: &Path, append: bool) -> Result<csv::Writer<File>> {
    let file = OpenOptions::new()
        .create(true)
        .append(append)
        .write(true)
        .truncate(!append)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    if !append {
        w.write_record(RUN_COLUMNS)?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    Ok(w)
}

pub fn write_trace_csv(path: &Path, coop: &[f64], tau: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "c_t", "tau_t"])?;
    for (k, (c, t)) in coop.iter().zip(tau).enumerate() {
        w.serialize((k + 1, c, t))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_activations_csv(path: &Path, records: &[ActivationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let hidden = records.first().map_or(0, |r| r.hidden.len());
    let mut header: Vec<String> = (0..hidden).map(|j| format!("h{j}")).collect();
    header.extend(["action".to_string(), "step".to_string()]);
    w.write_record(&header)?;
    for r in records {
        let mut rec: Vec<String> = r.hidden.iter().map(|v| v.to_string()).collect();
        rec.push(match r.action {
            Action::Cooperate => "C".into(),
            Action::Defect => "D".into(),
        });
        rec.push(r.step.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_thresholds_csv(path: &Path, rows: &[ThresholdRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for t in rows {
        let k = &t.key;
        let d_r_star = match t.result.d_r_star {
            Threshold::Value(v) => v,
            Threshold::AboveRange => t.d_r_max,
            Threshold::BelowRange => t.d_r_min,
        };
        w.serialize(ThresholdCsvRow {
            b: k.b,
            tau_init: k.tau_init,
            tau_final: k.tau_final,
            topology: &k.topology,
            architecture: &k.architecture,
            n_groups: k.n_groups,
            augmentation: &k.augmentation,
            l: k.l,
            hidden_dim: k.hidden_dim,
            buffer_capacity: k.buffer_capacity,
            gamma: k.gamma,
            loss: &k.loss,
            optimizer: &k.optimizer,
            eval_policy: &k.eval_policy,
            criterion: t.result.criterion,
            d_r_star,
            marker: t.result.d_r_star.marker(),
            d_r_min: t.d_r_min,
            d_r_max: t.d_r_max,
        })?;
    }
    if rows.is_empty() {
        w.write_record([
            "B",
            "tau_init",
            "tau_final",
            "topology",
            "architecture",
            "n_groups",
            "augmentation",
            "L",
            "hidden_dim",
            "buffer_capacity",
            "gamma",
            "loss",
            "optimizer",
            "eval_policy",
            "criterion",
            "d_r_star",
            "marker",
            "d_r_min",
            "d_r_max",
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn dump_run(
    dir: &Path,
    id: &str,
    result: &RunResult,
    opts: &RunOptions,
    spec: &ExperimentSpec,
) -> Result<()> {
    if opts.dump_trace || spec.dump.trace {
        write_trace_csv(
            &dir.join(format!("trace-{id}.csv")),
            &result.coop_trace,
            &result.tau_trace,
        )?;
    }
    if opts.dump_activations || spec.dump.activations {
        write_activations_csv(
            &dir.join(format!("activations-{id}.csv")),
            &result.activations,
        )?;
    }
    if opts.dump_checkpoints || spec.dump.checkpoints {
        for (g, p) in result.final_params.iter().enumerate() {
            let path = dir.join(format!("checkpoint-{id}-g{g}.qnet"));
            fs::write(&path, p.to_bytes()).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

/// Executes every run of `spec`, writing the bundle as runs finish.
///
/// With `resume_skip_existing`, successful rows already in `runs.csv` are
/// kept and their runs skipped; failed rows are run again.
pub fn run_experiment(spec: &ExperimentSpec, opts: &RunOptions) -> Result<RunSummary> {
    let plan = spec.plan()?;
    let workers = resolve_workers(opts.workers, spec)?;
    let dir = opts.out_dir.clone().unwrap_or_else(|| spec.out_dir.clone());
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let runs_path = dir.join("runs.csv");

    let planned: HashSet<&str> = plan.iter().map(|p| p.run_id.as_str()).collect();
    let kept: Vec<RunRow> = if opts.resume_skip_existing && runs_path.exists() {
        read_runs_csv(&runs_path)?
            .into_iter()
            .filter(|r| r.is_ok() && planned.contains(r.run_id.as_str()))
            .collect()
    } else {
        Vec::new()
    };
    let done: HashSet<String> = kept.iter().map(|r| r.run_id.clone()).collect();

    let manifest = Manifest {
        tool: "sdqn".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        spec_toml: spec.to_toml()?,
        spec: spec.clone(),
        runs: plan
            .iter()
            .map(|p| ManifestRun {
                run_id: p.run_id.clone(),
                point: p.point,
                axis_indices: p.axis_indices.clone(),
                seed: p.seed,
                run_seed: p.cfg.seed,
            })
            .collect(),
    };
    let manifest_path = dir.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .map_err(|e| Error::io(&manifest_path, e))?;

    let mut writer = runs_writer(&runs_path, false)?;
    for r in &kept {
        writer.serialize(r)?;
    }
    writer.flush().map_err(|e| Error::io(&runs_path, e))?;

    let todo: Vec<_> = plan
        .into_iter()
        .filter(|p| !done.contains(&p.run_id))
        .collect();
    let mut summary = RunSummary {
        total: todo.len() + kept.len(),
        skipped: kept.len(),
        ..Default::default()
    };
    let mut rows = kept;
    let mut write_error: Option<Error> = None;
    let todo_len = todo.len();
    let mut finished = 0;
    execute(todo, workers, |report: RunReport| {
        finished += 1;
        let row = report.row();
        let mut io = || -> Result<()> {
            writer.serialize(&row)?;
            writer.flush().map_err(|e| Error::io(&runs_path, e))?;
            if let Ok(result) = &report.outcome {
                dump_run(&dir, &row.run_id, result, opts, spec)?;
            }
            Ok(())
        };
        if let Err(e) = io() {
            write_error.get_or_insert(e);
        }
        if row.is_ok() {
            summary.ok += 1;
        } else {
            summary.failed += 1;
        }
        if !opts.quiet {
            let mut err = std::io::stderr().lock();
            let _ = writeln!(
                err,
                "[{finished}/{todo_len}] {} {} coop_mean={}{}",
                row.run_id,
                row.status,
                row.coop_mean,
                if row.error.is_empty() {
                    String::new()
                } else {
                    format!(" ({})", row.error)
                }
            );
        }
        rows.push(row);
    });
    if let Some(e) = write_error {
        return Err(e);
    }

    let cells = aggregate_seeds(&rows);
    write_thresholds_csv(
        &dir.join("thresholds.csv"),
        &thresholds(&cells, spec.strict_threshold)?,
    )?;
    Ok(summary)
}
