//! Experiment specs, sweep execution and the on-disk output bundle.
//!
//! An experiment is a TOML document:
//!
//! ```toml
//! seeds = [0, 1, 2]
//! base_seed = 0
//! out_dir = "out"
//!
//! [run]            # any RunConfig field; omitted fields take defaults
//! grid_side = 15
//! t_train = 30000
//!
//! [run.schedule]
//! tau_init = 0.6
//! tau_final = 0.1
//! t_anneal = 30000
//!
//! [axes]           # any SweepAxes list; empty lists keep the base value
//! tau_init = [0.2, 0.6, 1.2]
//! ```
//!
//! Unknown keys are rejected. `run.seed` is ignored: every run's seed is
//! derived from `base_seed`, its axis indices and its entry in `seeds`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{plan_runs, PlannedRun, RunConfig, SweepAxes};

mod output;

pub use output::{
    read_runs_csv, run_experiment, write_activations_csv, write_thresholds_csv, write_trace_csv,
    Manifest, ManifestRun, RunSummary, RUN_COLUMNS,
};

/// Environment variable read for the worker count when no flag is given.
pub const WORKERS_ENV: &str = "SDQN_WORKERS";

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_PARTIAL: u8 = 2;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DumpFlags {
    pub trace: bool,
    pub activations: bool,
    /// Final online parameters of every group, one binary file per group.
    pub checkpoints: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub seeds: Vec<u64>,
    pub base_seed: u64,
    pub out_dir: PathBuf,
    /// Overridden by `--workers` and by the environment variable.
    pub workers: Option<usize>,
    /// Thresholds use `>` when true and `>=` otherwise.
    pub strict_threshold: bool,
    pub dump: DumpFlags,
    pub run: RunConfig,
    pub axes: SweepAxes,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            base_seed: 0,
            out_dir: PathBuf::from("out"),
            workers: None,
            strict_threshold: true,
            dump: DumpFlags::default(),
            run: RunConfig::default(),
            axes: SweepAxes::default(),
        }
    }
}

impl ExperimentSpec {
    /// Every run the experiment describes, validated.
    pub fn plan(&self) -> Result<Vec<PlannedRun>> {
        if self.workers == Some(0) {
            return Err(Error::config("workers must be at least 1"));
        }
        plan_runs(&self.run, &self.axes, &self.seeds, self.base_seed)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Parses and validates a spec held in memory.
pub fn parse_spec_str(text: &str) -> Result<ExperimentSpec> {
    let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
    spec.plan()?;
    Ok(spec)
}

pub fn parse_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_spec_str(&text)
}

/// Flags that override or extend the experiment file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub dump_trace: bool,
    pub dump_activations: bool,
    pub dump_checkpoints: bool,
    pub resume_skip_existing: bool,
    /// Suppresses progress lines on standard error.
    pub quiet: bool,
}

/// Worker count: flag, then environment, then spec, then available cores.
pub fn resolve_workers(flag: Option<usize>, spec: &ExperimentSpec) -> Result<usize> {
    if let Some(w) = flag {
        return (w > 0)
            .then_some(w)
            .ok_or_else(|| Error::config("--workers must be at least 1"));
    }
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(w) if w > 0 => Ok(w),
            _ => Err(Error::config(format!(
                "{WORKERS_ENV} must be a positive integer, got '{v}'"
            ))),
        };
    }
    if let Some(w) = spec.workers {
        return Ok(w);
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs a spec file end to end and maps the outcome to an exit code.
pub fn main_with(spec_path: &Path, opts: &RunOptions) -> u8 {
    let spec = match parse_spec(spec_path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match run_experiment(&spec, opts) {
        Ok(summary) if summary.failed == 0 => EXIT_OK,
        Ok(summary) => {
            eprintln!("{} of {} runs failed", summary.failed, summary.total);
            EXIT_PARTIAL
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
