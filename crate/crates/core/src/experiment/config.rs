use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corrections::{Method, TrainingConfig};
use crate::datasets::{load_dataset, LabeledDataset, TwoCircles};
use crate::error::{Error, Result};

/// Environment variable that overrides `out_dir`.
pub const OUT_DIR_ENV: &str = "DICGAN_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Generated on the fly; `seed` defaults to the experiment seed.
    TwoCircles {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_r_inner")]
        r_inner: f64,
        #[serde(default = "default_r_outer")]
        r_outer: f64,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default = "default_fraction")]
        desired_fraction: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// CSV written by `save_dataset`.
    File { path: PathBuf },
}

fn default_n() -> usize {
    TwoCircles::default().n
}
fn default_r_inner() -> f64 {
    TwoCircles::default().r_inner
}
fn default_r_outer() -> f64 {
    TwoCircles::default().r_outer
}
fn default_sigma() -> f64 {
    TwoCircles::default().sigma
}
fn default_fraction() -> f64 {
    TwoCircles::default().desired_fraction
}

impl Default for DatasetSpec {
    fn default() -> Self {
        let d = TwoCircles::default();
        DatasetSpec::TwoCircles {
            n: d.n,
            r_inner: d.r_inner,
            r_outer: d.r_outer,
            sigma: d.sigma,
            desired_fraction: d.desired_fraction,
            seed: None,
        }
    }
}

impl DatasetSpec {
    /// Generator parameters, if the data is (or records being) two-circles.
    pub fn two_circles(&self, experiment_seed: u64) -> Option<TwoCircles> {
        match *self {
            DatasetSpec::TwoCircles {
                n,
                r_inner,
                r_outer,
                sigma,
                desired_fraction,
                seed,
            } => Some(TwoCircles {
                n,
                r_inner,
                r_outer,
                sigma,
                desired_fraction,
                seed: seed.unwrap_or(experiment_seed),
            }),
            DatasetSpec::File { .. } => None,
        }
    }

    pub fn load(&self, experiment_seed: u64) -> Result<LabeledDataset> {
        match self {
            DatasetSpec::File { path } => load_dataset(path),
            _ => self.two_circles(experiment_seed).expect("two-circles spec").generate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKindSpec {
    /// Radial score `-‖x‖`; desired iff the score exceeds `threshold`.
    Score,
    /// Radius-midpoint labels.
    Labels,
    /// Verdicts from the preference server.
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub kind: OracleKindSpec,
    /// Maximum number of queries; absent means unlimited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    /// Score threshold; defaults to minus the radius midpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSpec {
    pub histogram_bins: usize,
    pub histogram_range: (f64, f64),
    /// Size of the held-out real set used for critic statistics.
    pub heldout_n: usize,
    /// Generated rows in `final_samples.csv`.
    pub final_samples: usize,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            histogram_bins: 30,
            histogram_range: (0.0, 3.0),
            heldout_n: 1000,
            final_samples: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds the dataset (unless it sets its own) and every training stream.
    pub seed: u64,
    pub method: Method,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSpec>,
    #[serde(default)]
    pub eval: EvalSpec,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

impl ExperimentConfig {
    pub fn new(method: Method, seed: u64) -> Self {
        Self {
            seed,
            method,
            out_dir: default_out_dir(),
            dataset: DatasetSpec::default(),
            training: TrainingConfig::default(),
            oracle: method.needs_oracle().then_some(OracleSpec {
                kind: OracleKindSpec::Labels,
                budget: None,
                threshold: None,
            }),
            eval: EvalSpec::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "<document>".into() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `DICGAN_OUT_DIR` if set.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUT_DIR_ENV) {
            if !dir.is_empty() {
                self.out_dir = PathBuf::from(dir);
            }
        }
    }

    /// Seed actually used by training, which follows the experiment seed.
    pub fn effective_training(&self) -> TrainingConfig {
        TrainingConfig {
            seed: self.seed,
            ..self.training.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        if let Some(tc) = self.dataset.two_circles(self.seed) {
            tc.validate()?;
        }
        let human = matches!(&self.oracle, Some(o) if o.kind == OracleKindSpec::Human);
        if self.method.needs_oracle() && self.oracle.is_none() {
            return Err(Error::config(
                "oracle",
                format!("method {} requires an oracle", self.method),
            ));
        }
        if human && self.method.needs_classification() {
            return Err(Error::config(
                "oracle.kind",
                format!("method {} needs per-sample verdicts, which a human oracle does not give", self.method),
            ));
        }
        if let Some(OracleSpec { threshold: Some(t), .. }) = &self.oracle {
            if !t.is_finite() {
                return Err(Error::config("oracle.threshold", "must be finite"));
            }
        }
        let e = &self.eval;
        if e.histogram_bins == 0 {
            return Err(Error::config("eval.histogram_bins", "must be positive"));
        }
        if !(e.histogram_range.0 < e.histogram_range.1) {
            return Err(Error::config("eval.histogram_range", "lower bound must be below upper bound"));
        }
        if e.heldout_n < 4 {
            return Err(Error::config("eval.heldout_n", "need at least 4 samples"));
        }
        if e.final_samples == 0 {
            return Err(Error::config("eval.final_samples", "must be positive"));
        }
        Ok(())
    }
}
