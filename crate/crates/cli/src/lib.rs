//! `dicgan` command line: single runs, suites and the preference server.

pub mod server;

use std::path::{Path, PathBuf};

use dicgan_core::experiment::{load_suite_dir, run_experiment, run_suite, ExperimentConfig, ExperimentReport, SuiteSummary};
use dicgan_core::Result;

/// Loads a config and applies, in increasing precedence, the environment
/// override and the command-line flags.
pub fn resolve_config(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply_env();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    Ok(cfg)
}

pub fn run_command(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExperimentReport> {
    let cfg = resolve_config(path, seed, out)?;
    run_experiment(&cfg)
}

/// Runs every config in `dir`; results go under `out` (or the environment
/// override, or `runs/suite`).
pub fn suite_command(dir: &Path, out: Option<PathBuf>) -> Result<(PathBuf, SuiteSummary)> {
    let out = out
        .or_else(|| std::env::var_os(dicgan_core::experiment::OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs/suite"));
    let configs = load_suite_dir(dir, &out)?;
    let summary = run_suite(&configs)?;
    summary.write(&out)?;
    Ok((out, summary))
}
