use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{run_experiment, ExperimentConfig};
use crate::corrections::Method;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub name: String,
    pub method: Method,
    pub seed: u64,
    pub budget: Option<u64>,
    pub final_pdd: Option<f64>,
    pub validity_rate: Option<f64>,
    pub queries_used: Option<u64>,
    pub report: Option<PathBuf>,
    pub error: Option<String>,
}

/// Mean final PDD of one method at one budget, over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub method: Method,
    pub budget: Option<u64>,
    pub runs: usize,
    pub mean_pdd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub entries: Vec<SuiteEntry>,
    /// Sorted by method, then budget (unlimited last).
    pub table: Vec<SuiteRow>,
}

impl SuiteSummary {
    pub fn pdd(&self, method: Method, budget: Option<u64>) -> Option<f64> {
        self.table
            .iter()
            .find(|r| r.method == method && r.budget == budget)
            .map(|r| r.mean_pdd)
    }

    /// Budget-vs-PDD series of one method.
    pub fn series(&self, method: Method) -> Vec<(Option<u64>, f64)> {
        self.table
            .iter()
            .filter(|r| r.method == method)
            .map(|r| (r.budget, r.mean_pdd))
            .collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("suite.json"), serde_json::to_string_pretty(self)?)?;
        let mut w = csv::Writer::from_path(dir.join("suite.csv"))?;
        w.write_record(["method", "budget", "runs", "mean_pdd"])?;
        for r in &self.table {
            w.write_record([
                r.method.name().to_string(),
                r.budget.map_or("unlimited".into(), |b| b.to_string()),
                r.runs.to_string(),
                r.mean_pdd.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs every configuration; a failing run is recorded and the suite goes on.
pub fn run_suite(configs: &[(String, ExperimentConfig)]) -> Result<SuiteSummary> {
    if configs.is_empty() {
        return Err(Error::InvalidArgument("a suite needs at least one config".into()));
    }
    let mut entries = Vec::with_capacity(configs.len());
    for (name, cfg) in configs {
        let budget = cfg.oracle.as_ref().and_then(|o| o.budget);
        let base = SuiteEntry {
            name: name.clone(),
            method: cfg.method,
            seed: cfg.seed,
            budget,
            final_pdd: None,
            validity_rate: None,
            queries_used: None,
            report: None,
            error: None,
        };
        entries.push(match run_experiment(cfg) {
            Ok(report) => SuiteEntry {
                final_pdd: Some(report.final_metrics.pdd),
                validity_rate: report.final_metrics.validity_rate.value().copied(),
                queries_used: Some(report.supervision.queries_used),
                report: Some(report.artifacts.report.clone()),
                ..base
            },
            Err(e) => {
                log::warn!("suite run {name} failed: {e}");
                SuiteEntry {
                    error: Some(e.to_string()),
                    ..base
                }
            }
        });
    }

    let mut groups: BTreeMap<(Method, u64), Vec<f64>> = BTreeMap::new();
    let mut budgets: BTreeMap<(Method, u64), Option<u64>> = BTreeMap::new();
    for e in &entries {
        if let Some(p) = e.final_pdd {
            let key = (e.method, e.budget.unwrap_or(u64::MAX));
            groups.entry(key).or_default().push(p);
            budgets.insert(key, e.budget);
        }
    }
    let table = groups
        .into_iter()
        .map(|(key, pdds)| SuiteRow {
            method: key.0,
            budget: budgets[&key],
            runs: pdds.len(),
            mean_pdd: pdds.iter().sum::<f64>() / pdds.len() as f64,
        })
        .collect();
    Ok(SuiteSummary { entries, table })
}

/// Loads every `*.toml` in `dir`, sorted by file name. Each run writes to
/// `<out_dir>/<file stem>` unless the file sets its own `out_dir`.
pub fn load_suite_dir(dir: &Path, out_dir: &Path) -> Result<Vec<(String, ExperimentConfig)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!("no .toml configs in {}", dir.display())));
    }
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let text = fs::read_to_string(&p)?;
        let mut cfg = ExperimentConfig::from_toml_str(&text).map_err(|e| match e {
            Error::Config { field, message } => Error::Config {
                field: format!("{}: {field}", p.display()),
                message,
            },
            other => other,
        })?;
        let name = p.file_stem().expect("file name").to_string_lossy().into_owned();
        let sets_out_dir = toml::from_str::<toml::Table>(&text).is_ok_and(|t| t.contains_key("out_dir"));
        if !sets_out_dir {
            cfg.out_dir = out_dir.join(&name);
        }
        out.push((name, cfg));
    }
    Ok(out)
}
