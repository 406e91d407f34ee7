//! Two-concentric-circles data and its ground-truth preference score.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generator parameters of a two-circles dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoCircles {
    pub n: usize,
    pub r_inner: f64,
    pub r_outer: f64,
    pub sigma: f64,
    pub desired_fraction: f64,
    pub seed: u64,
}

impl Default for TwoCircles {
    fn default() -> Self {
        Self {
            n: 1000,
            r_inner: 1.0,
            r_outer: 2.0,
            sigma: 0.05,
            desired_fraction: 0.5,
            seed: 0,
        }
    }
}

impl TwoCircles {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("dataset.n", "must be positive"));
        }
        if !(self.r_inner > 0.0 && self.r_inner < self.r_outer && self.r_outer.is_finite()) {
            return Err(Error::config(
                "dataset.r_inner",
                format!(
                    "need 0 < r_inner < r_outer, got {} and {}",
                    self.r_inner, self.r_outer
                ),
            ));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("dataset.sigma", "must be a finite value >= 0"));
        }
        if !(self.desired_fraction > 0.0 && self.desired_fraction < 1.0) {
            return Err(Error::config(
                "dataset.desired_fraction",
                format!("must lie in (0, 1), got {}", self.desired_fraction),
            ));
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<LabeledDataset> {
        two_circles(self)
    }
}

/// Points in the plane with desired (`true`) / undesired labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub samples: Array2<f64>,
    pub labels: Vec<bool>,
    pub provenance: Option<TwoCircles>,
}

impl LabeledDataset {
    pub fn new(samples: Array2<f64>, labels: Vec<bool>, provenance: Option<TwoCircles>) -> Result<Self> {
        if samples.nrows() == 0 {
            return Err(Error::InvalidArgument("dataset must not be empty".into()));
        }
        if samples.nrows() != labels.len() {
            return Err(Error::shape(
                format!("{} labels", samples.nrows()),
                format!("{} labels", labels.len()),
            ));
        }
        if let Some((i, _)) = samples
            .rows()
            .into_iter()
            .enumerate()
            .find(|(_, r)| !r.iter().all(|v| v.is_finite()))
        {
            return Err(Error::NonFinite(format!("dataset row {i}")));
        }
        Ok(Self {
            samples,
            labels,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn desired_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// Rows whose label matches `desired`.
    pub fn subset(&self, desired: bool) -> Array2<f64> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == desired).collect();
        self.samples.select(ndarray::Axis(0), &idx)
    }
}

/// Two noisy concentric rings. `floor(n * desired_fraction)` points lie on
/// the inner ring (label desired), the rest on the outer ring; the radial
/// offset is `N(0, sigma)` and angles are uniform. Row order is shuffled so
/// insertion age carries no label information.
pub fn two_circles(params: &TwoCircles) -> Result<LabeledDataset> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n_desired = (params.n as f64 * params.desired_fraction).floor() as usize;
    let mut labels: Vec<bool> = (0..params.n).map(|i| i < n_desired).collect();
    labels.shuffle(&mut rng);

    let noise = Normal::new(0.0, params.sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut samples = Array2::zeros((params.n, 2));
    for (i, &desired) in labels.iter().enumerate() {
        let base = if desired { params.r_inner } else { params.r_outer };
        let r = if params.sigma > 0.0 {
            base + noise.sample(&mut rng)
        } else {
            base
        };
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        samples[[i, 0]] = r * theta.cos();
        samples[[i, 1]] = r * theta.sin();
    }
    LabeledDataset::new(samples, labels, Some(*params))
}

/// Ground-truth preference score: smaller radius is better.
pub fn radial_score(x: ArrayView1<'_, f64>) -> f64 {
    -x.dot(&x).sqrt()
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    rows: usize,
    dim: usize,
    provenance: Option<TwoCircles>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Writes `x0,x1,...,label` CSV plus a `<path>.meta.json` sidecar.
pub fn save_dataset(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..ds.dim()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    writer.write_record(&header)?;
    for (row, &label) in ds.samples.rows().into_iter().zip(&ds.labels) {
        let mut record: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        record.push(if label { "1" } else { "0" }.into());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    let meta = Sidecar {
        rows: ds.len(),
        dim: ds.dim(),
        provenance: ds.provenance,
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = reader.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(parse_err(0, "empty file: missing header".into()));
    }
    let dim = header.len() - 1;
    let expected: Vec<String> = (0..dim).map(|j| format!("x{j}")).chain(["label".into()]).collect();
    if dim == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(parse_err(
            1,
            format!("expected header `{}`", expected.join(",")),
        ));
    }

    let mut coords = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if record.len() != dim + 1 {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", dim + 1, record.len()),
            ));
        }
        for field in record.iter().take(dim) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("invalid coordinate `{field}`")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite coordinate `{field}`")));
            }
            coords.push(v);
        }
        labels.push(match record[dim].trim() {
            "1" => true,
            "0" => false,
            other => return Err(parse_err(line, format!("invalid label `{other}`"))),
        });
    }
    if labels.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }

    let meta_path = sidecar_path(path);
    let provenance = if meta_path.exists() {
        let meta: Sidecar = serde_json::from_str(&fs::read_to_string(&meta_path)?)?;
        if meta.rows != labels.len() || meta.dim != dim {
            return Err(parse_err(
                0,
                format!(
                    "sidecar says {}x{}, file holds {}x{}",
                    meta.rows,
                    meta.dim,
                    labels.len(),
                    dim
                ),
            ));
        }
        meta.provenance
    } else {
        None
    };
    let samples = Array2::from_shape_vec((labels.len(), dim), coords)
        .map_err(|e| parse_err(0, e.to_string()))?;
    LabeledDataset::new(samples, labels, provenance)
}
