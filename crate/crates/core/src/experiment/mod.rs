//! Configuration, orchestration and report emission.

mod config;
mod suite;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

pub use config::{DatasetSpec, EvalSpec, ExperimentConfig, OracleKindSpec, OracleSpec, OUT_DIR_ENV};
pub use suite::{load_suite_dir, run_suite, SuiteEntry, SuiteRow, SuiteSummary};

use crate::corrections::{
    generate_batch, train, ConvergenceRecord, NoopObserver, StopReason, TrainedModel, TrainingObserver,
};
use crate::datasets::{radial_score, LabeledDataset, TwoCircles};
use crate::error::{Error, Result};
use crate::metrics::{
    pca_project_1d, pdd, pdf_vs_distance, radius_midpoint_classifier, validity_rate, welch_one_sided,
    CriticStats, Histogram, RadiusMidpoint, RingManifold,
};
use crate::preferences::{HumanBridge, PreferenceOracle};

/// Seed offsets for evaluation data, kept apart from training streams.
const HELDOUT_SEED_OFFSET: u64 = 0x5eed_0001;
const FINAL_SAMPLES_SEED_OFFSET: u64 = 0x5eed_0002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// Stopped by the observer (e.g. server shutdown); metrics reflect the
    /// last finished correction.
    Interrupted,
    /// A numeric failure ended training; the report holds the last state.
    Aborted,
}

/// A metric that may not apply to a method or dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Metric<T> {
    Value(T),
    NotApplicable { not_applicable: String },
}

impl<T> Metric<T> {
    pub fn na(reason: impl Into<String>) -> Self {
        Metric::NotApplicable {
            not_applicable: reason.into(),
        }
    }

    pub fn value(&self) -> Option<&T> {
        match self {
            Metric::Value(v) => Some(v),
            Metric::NotApplicable { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub pdd: f64,
    pub validity_rate: Metric<f64>,
    /// Welch test on critic values of held-out real desired vs undesired data.
    pub critic_stats: Metric<CriticStats>,
    pub histogram: Histogram,
    pub training_histogram: Histogram,
    pub projection_explained_variance: Metric<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Supervision {
    pub queries_used: u64,
    pub query_budget: Option<u64>,
    pub effective_pairs: u64,
    pub effective_pairs_per_correction: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub report: PathBuf,
    pub final_samples: PathBuf,
    pub histogram: PathBuf,
    pub projection: PathBuf,
    pub record: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abort: Option<String>,
    pub record: ConvergenceRecord,
    pub final_metrics: FinalMetrics,
    pub supervision: Supervision,
    pub artifacts: Artifacts,
    pub wall_clock_secs: f64,
}

impl ExperimentReport {
    /// Report as JSON with the wall-clock field dropped; equal for
    /// identical configurations.
    pub fn body_without_timing(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v.as_object_mut().expect("object").remove("wall_clock_secs");
        v
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Ground truth derived from the dataset: PDD classifier and ring manifold.
struct Geometry {
    classifier: RadiusMidpoint,
    manifold: Option<RingManifold>,
    circles: Option<TwoCircles>,
}

fn geometry(cfg: &ExperimentConfig, data: &LabeledDataset) -> Result<Geometry> {
    let circles = cfg.dataset.two_circles(cfg.seed).or(data.provenance);
    let (r_in, r_out) = circles.map_or((1.0, 2.0), |c| (c.r_inner, c.r_outer));
    Ok(Geometry {
        classifier: radius_midpoint_classifier(r_in, r_out)?,
        manifold: circles.map(|c| RingManifold::two_circles(c.r_inner, c.r_outer, c.sigma)),
        circles,
    })
}

fn build_oracle(spec: &OracleSpec, classifier: RadiusMidpoint, bridge: Option<HumanBridge>, timeout: Duration) -> Result<PreferenceOracle> {
    let oracle = match spec.kind {
        OracleKindSpec::Score => PreferenceOracle::score(
            Arc::new(radial_score),
            spec.threshold.unwrap_or(-classifier.midpoint),
        ),
        OracleKindSpec::Labels => PreferenceOracle::labels(Arc::new(move |x| classifier.is_desired(x))),
        OracleKindSpec::Human => PreferenceOracle::human(
            bridge.ok_or_else(|| Error::config("oracle.kind", "a human oracle needs the preference server"))?,
            timeout,
        ),
    };
    Ok(oracle.with_budget(spec.budget))
}

/// Runs one experiment and writes its report and artifacts to `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment_with(cfg, None, &mut NoopObserver)
}

/// As [`run_experiment`], with a human verdict bridge and an observer.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    bridge: Option<HumanBridge>,
    observer: &mut dyn TrainingObserver,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let data = cfg.dataset.load(cfg.seed)?;
    let geo = geometry(cfg, &data)?;
    let training = cfg.effective_training();
    let mut oracle = match &cfg.oracle {
        Some(spec) => Some(build_oracle(
            spec,
            geo.classifier,
            bridge,
            crate::corrections::human_timeout(&training),
        )?),
        None => None,
    };
    let classifier = geo.classifier;
    let run = train(
        cfg.method,
        &data,
        oracle.as_mut(),
        &training,
        &|x| classifier.is_desired(x),
        observer,
    )?;
    let status = match (run.abort.is_some(), run.record.stop_reason) {
        (true, _) => RunStatus::Aborted,
        (false, StopReason::Interrupted) => RunStatus::Interrupted,
        _ => RunStatus::Completed,
    };
    fs::create_dir_all(&cfg.out_dir)?;
    let artifacts = Artifacts {
        report: cfg.out_dir.join("report.json"),
        final_samples: cfg.out_dir.join("final_samples.csv"),
        histogram: cfg.out_dir.join("histogram.csv"),
        projection: cfg.out_dir.join("projection.csv"),
        record: cfg.out_dir.join("record.csv"),
    };
    let final_metrics = evaluate(cfg, &geo, &data, &run.model, &artifacts)?;
    write_record_csv(&run.record, &artifacts.record)?;
    let supervision = Supervision {
        queries_used: oracle.as_ref().map_or(0, |o| o.queries_used()),
        query_budget: oracle.as_ref().and_then(|o| o.budget()),
        effective_pairs: run.record.ledger.total,
        effective_pairs_per_correction: run.record.ledger.per_epoch.clone(),
    };
    let report = ExperimentReport {
        config: ExperimentConfig {
            training,
            ..cfg.clone()
        },
        status,
        abort: run.abort,
        record: run.record,
        final_metrics,
        supervision,
        artifacts,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    fs::write(&report.artifacts.report, serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

fn evaluate(
    cfg: &ExperimentConfig,
    geo: &Geometry,
    data: &LabeledDataset,
    model: &TrainedModel,
    artifacts: &Artifacts,
) -> Result<FinalMetrics> {
    let seed = cfg.seed;
    let samples = generate_batch(&model.generator, cfg.eval.final_samples, seed.wrapping_add(FINAL_SAMPLES_SEED_OFFSET))?;
    let final_pdd = pdd(samples.view(), |x| geo.classifier.is_desired(x))?;
    let validity = match &geo.manifold {
        Some(m) => Metric::Value(validity_rate(samples.view(), m)?),
        None => Metric::na("dataset has no ring geometry"),
    };
    let (bins, range) = (cfg.eval.histogram_bins, cfg.eval.histogram_range);
    let histogram = pdf_vs_distance(samples.view(), bins, range)?;
    let training_histogram = pdf_vs_distance(data.samples.view(), bins, range)?;

    // held-out real data: a fresh draw from the same generator, or the
    // training file itself when no generator is known
    let heldout = match geo.circles {
        Some(c) => TwoCircles {
            n: cfg.eval.heldout_n,
            seed: c.seed.wrapping_add(HELDOUT_SEED_OFFSET),
            ..c
        }
        .generate()?,
        None => data.clone(),
    };
    let scores = model.critic_scores(heldout.samples.view())?;
    let desired: Vec<f64> = scores.iter().zip(&heldout.labels).filter(|(_, &l)| l).map(|(s, _)| *s).collect();
    let undesired: Vec<f64> = scores.iter().zip(&heldout.labels).filter(|(_, &l)| !l).map(|(s, _)| *s).collect();
    let critic_stats = if desired.len() >= 2 && undesired.len() >= 2 {
        Metric::Value(welch_one_sided(&desired, &undesired)?)
    } else {
        Metric::na("held-out set lacks two samples per class")
    };

    write_samples_csv(&samples, &artifacts.final_samples)?;
    write_histogram_csv(&histogram, &training_histogram, &artifacts.histogram)?;

    // penultimate critic features of held-out real and generated samples
    let combined = concatenate(Axis(0), &[heldout.samples.view(), samples.view()]).expect("same width");
    let projection_ev = if model.critic.layers().len() >= 2 {
        let features = model.critic.penultimate_features(combined.view())?;
        let p = pca_project_1d(features.view())?;
        let mut w = csv::Writer::from_path(&artifacts.projection)?;
        w.write_record(["source", "value"])?;
        for (i, v) in p.values.iter().enumerate() {
            let source = match heldout.labels.get(i) {
                Some(true) => "real_desired",
                Some(false) => "real_undesired",
                None => "generated",
            };
            w.write_record([source, &v.to_string()])?;
        }
        w.flush()?;
        if p.degenerate {
            Metric::na("critic features have zero variance")
        } else {
            Metric::Value(p.explained_variance_ratio)
        }
    } else {
        let mut w = csv::Writer::from_path(&artifacts.projection)?;
        w.write_record(["source", "value"])?;
        w.flush()?;
        Metric::na("critic has no hidden layer")
    };

    Ok(FinalMetrics {
        pdd: final_pdd,
        validity_rate: validity,
        critic_stats,
        histogram,
        training_histogram,
        projection_explained_variance: projection_ev,
    })
}

fn write_samples_csv(samples: &Array2<f64>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = (0..samples.ncols()).map(|j| format!("x{j}")).collect();
    w.write_record(&header)?;
    for row in samples.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn write_histogram_csv(generated: &Histogram, training: &Histogram, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["center", "generated_density", "training_density"])?;
    for ((c, g), t) in generated.centers.iter().zip(&generated.densities).zip(&training.densities) {
        w.write_record([c.to_string(), g.to_string(), t.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_record_csv(record: &ConvergenceRecord, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in &record.rows {
        w.serialize(row)?;
    }
    if record.rows.is_empty() {
        w.write_record(["index", "pdd"])?;
    }
    w.flush()?;
    Ok(())
}
