//! Python module `dicgan`. Arrays cross the boundary as lists of rows;
//! structured results (reports, records, statistics) as dicts.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use dicgan_core::corrections::{self, Method, ReplacementBuffer as CoreBuffer, TrainedModel};
use dicgan_core::datasets::{self, LabeledDataset, TwoCircles};
use dicgan_core::experiment::{self, ExperimentConfig};
use dicgan_core::losses::{self, PairScore};
use dicgan_core::metrics;
use dicgan_core::neural::{Activation, Mlp as CoreMlp};
use dicgan_core::preferences;

fn err(e: dicgan_core::Error) -> PyErr {
    match e {
        dicgan_core::Error::TrainingAborted(_) | dicgan_core::Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_array(rows: Vec<Vec<f64>>, what: &str) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err(format!("{what}: rows have unequal lengths")));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_method(name: &str) -> PyResult<Method> {
    Method::ALL
        .into_iter()
        .find(|m| m.name() == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown method `{name}`")))
}

fn parse_activation(name: &str) -> PyResult<Activation> {
    Ok(match name {
        "relu" => Activation::Relu,
        "leaky_relu" => Activation::LeakyRelu(0.2),
        "tanh" => Activation::Tanh,
        "sigmoid" => Activation::Sigmoid,
        "identity" => Activation::Identity,
        other => return Err(PyValueError::new_err(format!("unknown activation `{other}`"))),
    })
}

/// Labeled point set.
#[pyclass(module = "dicgan", frozen)]
struct Dataset {
    inner: LabeledDataset,
}

#[pymethods]
impl Dataset {
    #[getter]
    fn samples(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.samples)
    }

    #[getter]
    fn labels(&self) -> Vec<bool> {
        self.inner.labels.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        datasets::save_dataset(&self.inner, &path).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: datasets::load_dataset(&path).map_err(err)?,
        })
    }
}

#[pyfunction]
#[pyo3(signature = (n=1000, r_inner=1.0, r_outer=2.0, sigma=0.05, desired_fraction=0.5, seed=0))]
fn two_circles(n: usize, r_inner: f64, r_outer: f64, sigma: f64, desired_fraction: f64, seed: u64) -> PyResult<Dataset> {
    let params = TwoCircles {
        n,
        r_inner,
        r_outer,
        sigma,
        desired_fraction,
        seed,
    };
    Ok(Dataset {
        inner: datasets::two_circles(&params).map_err(err)?,
    })
}

/// Dense network with manual backpropagation.
#[pyclass(module = "dicgan")]
struct Mlp {
    inner: CoreMlp,
}

#[pymethods]
impl Mlp {
    #[new]
    #[pyo3(signature = (sizes, activations, seed=0))]
    fn new(sizes: Vec<usize>, activations: Vec<String>, seed: u64) -> PyResult<Self> {
        let acts = activations.iter().map(|a| parse_activation(a)).collect::<PyResult<Vec<_>>>()?;
        Ok(Self {
            inner: CoreMlp::new(&sizes, &acts, seed).map_err(err)?,
        })
    }

    fn forward(&self, batch: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = to_array(batch, "batch")?;
        Ok(to_rows(&self.inner.predict(x.view()).map_err(err)?))
    }

    /// Parameter and input gradients of `sum(output * output_grad)`.
    fn backward<'py>(&self, py: Python<'py>, batch: Vec<Vec<f64>>, output_grad: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
        let x = to_array(batch, "batch")?;
        let g = to_array(output_grad, "output_grad")?;
        let trace = self.inner.forward(x.view()).map_err(err)?;
        let grads = self.inner.backward(&trace, g.view()).map_err(err)?;
        let d = PyDict::new(py);
        let weights: Vec<Vec<Vec<f64>>> = grads.layers.iter().map(|l| to_rows(&l.weights)).collect();
        let biases: Vec<Vec<f64>> = grads.layers.iter().map(|l| l.bias.to_vec()).collect();
        d.set_item("weights", weights)?;
        d.set_item("biases", biases)?;
        d.set_item("input", to_rows(&grads.input))?;
        Ok(d)
    }

    fn clip_weights(&mut self, c: f64) -> PyResult<()> {
        self.inner.clip_weights(c).map_err(err)
    }

    fn max_abs_parameter(&self) -> f64 {
        self.inner.max_abs_parameter()
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }
}

/// Fixed-size training set with oldest-first replacement.
#[pyclass(module = "dicgan")]
struct ReplacementBuffer {
    inner: CoreBuffer,
}

#[pymethods]
impl ReplacementBuffer {
    #[new]
    fn new(samples: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: CoreBuffer::new(to_array(samples, "samples")?, None).map_err(err)?,
        })
    }

    fn replace_oldest(&mut self, samples: Vec<Vec<f64>>) -> PyResult<()> {
        let x = if samples.is_empty() {
            Array2::zeros((0, self.inner.dim()))
        } else {
            to_array(samples, "samples")?
        };
        self.inner.replace_oldest(x.view()).map_err(err)
    }

    fn samples_by_age(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.samples_by_age())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Networks and buffer after training.
#[pyclass(module = "dicgan", frozen)]
struct Model {
    inner: TrainedModel,
}

#[pymethods]
impl Model {
    fn generate(&self, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(&corrections::generate_batch(&self.inner.generator, n, seed).map_err(err)?))
    }

    fn critic_scores(&self, samples: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let x = to_array(samples, "samples")?;
        self.inner.critic_scores(x.view()).map_err(err)
    }

    #[getter]
    fn generator(&self) -> Mlp {
        Mlp {
            inner: self.inner.generator.clone(),
        }
    }

    #[getter]
    fn critic(&self) -> Mlp {
        Mlp {
            inner: self.inner.critic.clone(),
        }
    }

    #[getter]
    fn buffer(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.buffer.samples_by_age())
    }
}

/// Trains `method` on `dataset` with a radius-midpoint label oracle.
/// `config` is a TOML fragment of training settings; returns
/// `(model, record)`.
#[pyfunction]
#[pyo3(signature = (method, dataset, config="", budget=None))]
fn train<'py>(py: Python<'py>, method: &str, dataset: &Dataset, config: &str, budget: Option<u64>) -> PyResult<(Model, Bound<'py, PyAny>)> {
    let method = parse_method(method)?;
    let cfg = corrections::TrainingConfig::from_toml_str(config).map_err(err)?;
    let (r_in, r_out) = dataset.inner.provenance.map_or((1.0, 2.0), |p| (p.r_inner, p.r_outer));
    let c = metrics::radius_midpoint_classifier(r_in, r_out).map_err(err)?;
    let mut oracle = preferences::PreferenceOracle::labels(std::sync::Arc::new(move |x| c.is_desired(x))).with_budget(budget);
    let data = dataset.inner.clone();
    let run = py
        .detach(|| corrections::train(method, &data, Some(&mut oracle), &cfg, &|x| c.is_desired(x), &mut corrections::NoopObserver))
        .map_err(err)?;
    if let Some(reason) = run.abort {
        return Err(PyRuntimeError::new_err(reason));
    }
    let record = to_py(py, &run.record)?;
    Ok((Model { inner: run.model }, record))
}

/// Runs an experiment from a TOML config file or string and returns the
/// report as a dict.
#[pyfunction]
#[pyo3(signature = (config, out_dir=None))]
fn run_experiment<'py>(py: Python<'py>, config: &str, out_dir: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let path = PathBuf::from(config);
    let mut cfg = if !config.contains('\n') && path.is_file() {
        ExperimentConfig::load(&path)
    } else {
        ExperimentConfig::from_toml_str(config)
    }
    .map_err(err)?;
    cfg.apply_env();
    if let Some(dir) = out_dir {
        cfg.out_dir = dir;
    }
    let report = py.detach(|| experiment::run_experiment(&cfg)).map_err(err)?;
    to_py(py, &report)
}

#[pyfunction]
fn margin_ranking_loss(score_preferred: f64, score_other: f64, m: f64) -> f64 {
    losses::margin_ranking_loss(score_preferred, score_other, m)
}

#[pyfunction]
#[pyo3(signature = (real_scores, fake_scores, pairs, lam=1.0, m=1.0))]
fn dicgan_critic_objective<'py>(
    py: Python<'py>,
    real_scores: Vec<f64>,
    fake_scores: Vec<f64>,
    pairs: Vec<(f64, f64)>,
    lam: f64,
    m: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let pairs: Vec<PairScore> = pairs.into_iter().map(PairScore::from).collect();
    let b = losses::dicgan_critic_objective(&real_scores, &fake_scores, &pairs, lam, m).map_err(err)?;
    to_py(py, &b)
}

#[pyfunction]
fn pdd(samples: Vec<Vec<f64>>, r_inner: f64, r_outer: f64) -> PyResult<f64> {
    let x = to_array(samples, "samples")?;
    let c = metrics::radius_midpoint_classifier(r_inner, r_outer).map_err(err)?;
    metrics::pdd(x.view(), |r| c.is_desired(r)).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (samples, r_inner=1.0, r_outer=2.0, sigma=0.05))]
fn validity_rate(samples: Vec<Vec<f64>>, r_inner: f64, r_outer: f64, sigma: f64) -> PyResult<f64> {
    let x = to_array(samples, "samples")?;
    metrics::validity_rate(x.view(), &metrics::RingManifold::two_circles(r_inner, r_outer, sigma)).map_err(err)
}

#[pyfunction]
fn welch_one_sided<'py>(py: Python<'py>, desired: Vec<f64>, undesired: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &metrics::welch_one_sided(&desired, &undesired).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (samples, bins=30, lo=0.0, hi=3.0))]
fn pdf_vs_distance<'py>(py: Python<'py>, samples: Vec<Vec<f64>>, bins: usize, lo: f64, hi: f64) -> PyResult<Bound<'py, PyAny>> {
    let x = to_array(samples, "samples")?;
    to_py(py, &metrics::pdf_vs_distance(x.view(), bins, (lo, hi)).map_err(err)?)
}

#[pyfunction]
fn ep_dicgan(n_e: u64, n_i: u64, n_s: u64) -> u64 {
    preferences::ep_dicgan(n_e, n_i, n_s)
}

#[pyfunction]
fn ep_fbgan(per_epoch: Vec<(u64, u64)>) -> u64 {
    preferences::ep_fbgan(&per_epoch)
}

#[pymodule]
fn dicgan(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Mlp>()?;
    m.add_class::<ReplacementBuffer>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(two_circles, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(margin_ranking_loss, m)?)?;
    m.add_function(wrap_pyfunction!(dicgan_critic_objective, m)?)?;
    m.add_function(wrap_pyfunction!(pdd, m)?)?;
    m.add_function(wrap_pyfunction!(validity_rate, m)?)?;
    m.add_function(wrap_pyfunction!(welch_one_sided, m)?)?;
    m.add_function(wrap_pyfunction!(pdf_vs_distance, m)?)?;
    m.add_function(wrap_pyfunction!(ep_dicgan, m)?)?;
    m.add_function(wrap_pyfunction!(ep_fbgan, m)?)?;
    m.add("METHODS", Method::ALL.iter().map(|m| m.name()).collect::<Vec<_>>())?;
    Ok(())
}
