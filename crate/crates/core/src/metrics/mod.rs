//! Evaluation: desired-data percentage, critic statistics, radial
//! histograms, 1-D feature projection and on-manifold rate.

mod pca;
mod stats;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

pub use pca::{pca_project_1d, Projection};
pub use stats::{
    ln_gamma, regularized_incomplete_beta, student_t_isf, student_t_sf, welch_one_sided, CriticStats,
};

use crate::error::{Error, Result};

fn norm(x: ArrayView1<'_, f64>) -> f64 {
    x.dot(&x).sqrt()
}

/// Desired iff `‖x‖ < (r_inner + r_outer) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusMidpoint {
    pub midpoint: f64,
}

impl RadiusMidpoint {
    pub fn is_desired(&self, x: ArrayView1<'_, f64>) -> bool {
        norm(x) < self.midpoint
    }
}

pub fn radius_midpoint_classifier(r_inner: f64, r_outer: f64) -> Result<RadiusMidpoint> {
    if !(r_inner < r_outer) {
        return Err(Error::InvalidArgument(format!(
            "need r_inner < r_outer, got {r_inner} and {r_outer}"
        )));
    }
    Ok(RadiusMidpoint {
        midpoint: 0.5 * (r_inner + r_outer),
    })
}

/// Percentage of rows the classifier calls desired.
pub fn pdd(samples: ArrayView2<'_, f64>, is_desired: impl Fn(ArrayView1<'_, f64>) -> bool) -> Result<f64> {
    if samples.nrows() == 0 {
        return Err(Error::InvalidArgument("PDD of an empty sample set".into()));
    }
    let hits = samples.rows().into_iter().filter(|r| is_desired(*r)).count();
    Ok(100.0 * hits as f64 / samples.nrows() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub centers: Vec<f64>,
    pub densities: Vec<f64>,
    pub bin_width: f64,
    /// Samples falling outside the range, excluded from normalization.
    pub outside: usize,
}

impl Histogram {
    /// Probability mass of bins whose centre lies in `[lo, hi)`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        self.centers
            .iter()
            .zip(&self.densities)
            .filter(|(c, _)| **c >= lo && **c < hi)
            .map(|(_, d)| d * self.bin_width)
            .sum()
    }
}

/// Normalized histogram of distances to the origin over `range`; the last
/// bin is closed on the right.
pub fn pdf_vs_distance(samples: ArrayView2<'_, f64>, bins: usize, range: (f64, f64)) -> Result<Histogram> {
    if samples.nrows() == 0 {
        return Err(Error::InvalidArgument("histogram of an empty sample set".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("need at least one bin".into()));
    }
    let (lo, hi) = range;
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid range ({lo}, {hi})")));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut outside = 0;
    for row in samples.rows() {
        let r = norm(row);
        if r < lo || r > hi {
            outside += 1;
            continue;
        }
        let k = (((r - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let inside = samples.nrows() - outside;
    let densities = counts
        .iter()
        .map(|&c| {
            if inside == 0 {
                0.0
            } else {
                c as f64 / (inside as f64 * width)
            }
        })
        .collect();
    let centers = (0..bins).map(|k| lo + (k as f64 + 0.5) * width).collect();
    Ok(Histogram {
        centers,
        densities,
        bin_width: width,
        outside,
    })
}

/// Union of noisy rings; a point is valid within `band_sigmas * sigma` of
/// any ring radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingManifold {
    pub radii: Vec<f64>,
    pub sigma: f64,
    pub band_sigmas: f64,
}

impl RingManifold {
    pub fn two_circles(r_inner: f64, r_outer: f64, sigma: f64) -> Self {
        Self {
            radii: vec![r_inner, r_outer],
            sigma,
            band_sigmas: 3.0,
        }
    }

    pub fn contains(&self, x: ArrayView1<'_, f64>) -> bool {
        let r = norm(x);
        let band = self.band_sigmas * self.sigma;
        self.radii.iter().any(|&c| (r - c).abs() <= band)
    }
}

/// Percentage of samples on the ring manifold.
pub fn validity_rate(samples: ArrayView2<'_, f64>, manifold: &RingManifold) -> Result<f64> {
    pdd(samples, |x| manifold.contains(x))
}
