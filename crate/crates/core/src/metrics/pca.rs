use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub values: Vec<f64>,
    pub direction: Vec<f64>,
    pub explained_variance_ratio: f64,
    /// All features had zero variance; `values` are all zero.
    pub degenerate: bool,
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and eigenvectors (as columns).
fn symmetric_eigen(mut a: Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum();
        let scale: f64 = a.iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    (a.diag().to_owned(), v)
}

/// Projects centred rows on the leading principal direction. The direction's
/// sign makes its largest-magnitude loading positive.
pub fn pca_project_1d(features: ArrayView2<'_, f64>) -> Result<Projection> {
    let n = features.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 rows to project, got {n}"
        )));
    }
    if features.ncols() == 0 {
        return Err(Error::InvalidArgument("features have no columns".into()));
    }
    let mean = features.mean_axis(Axis(0)).expect("non-empty");
    let centred = &features - &mean;
    let cov = centred.t().dot(&centred) / (n - 1) as f64;
    let total: f64 = cov.diag().sum();
    if total <= 0.0 {
        return Ok(Projection {
            values: vec![0.0; n],
            direction: vec![0.0; features.ncols()],
            explained_variance_ratio: 0.0,
            degenerate: true,
        });
    }
    let (eigenvalues, vectors) = symmetric_eigen(cov);
    let top = eigenvalues
        .iter()
        .enumerate()
        .fold(0, |best, (k, &l)| if l > eigenvalues[best] { k } else { best });
    let mut direction = vectors.column(top).to_owned();
    let lead = direction
        .iter()
        .enumerate()
        .fold(0, |best, (k, &x)| if x.abs() > direction[best].abs() { k } else { best });
    if direction[lead] < 0.0 {
        direction.mapv_inplace(|x| -x);
    }
    let values = centred.dot(&direction).to_vec();
    Ok(Projection {
        values,
        direction: direction.to_vec(),
        explained_variance_ratio: eigenvalues[top] / total,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn collinear_features_keep_order() {
        let t = [0.3, -1.0, 2.5, 0.0, 1.1, -0.4];
        let f = Array2::from_shape_fn((6, 2), |(i, j)| if j == 0 { 2.0 * t[i] + 1.0 } else { -t[i] });
        let p = pca_project_1d(f.view()).unwrap();
        assert!((p.explained_variance_ratio - 1.0).abs() < 1e-12);
        // direction ~ (2, -1)/sqrt 5, largest loading positive, so order follows t
        for i in 0..6 {
            for j in 0..6 {
                if t[i] < t[j] {
                    assert!(p.values[i] < p.values[j]);
                }
            }
        }
    }

    #[test]
    fn isotropic_noise_spreads_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 8;
        let f = Array2::from_shape_simple_fn((20_000, h), || StandardNormal.sample(&mut rng));
        let p = pca_project_1d(f.view()).unwrap();
        // top eigenvalue of a sample covariance exceeds 1/h by roughly sqrt(h/n) relative
        assert!((p.explained_variance_ratio - 1.0 / h as f64).abs() < 0.03, "{}", p.explained_variance_ratio);
    }

    #[test]
    fn sign_convention_and_translation_invariance() {
        let f = array![[1.0, 0.1, 0.0], [2.0, 0.3, 0.1], [0.5, -0.2, 0.0], [3.0, 0.2, 0.4]];
        let a = pca_project_1d(f.view()).unwrap();
        let b = pca_project_1d(f.view()).unwrap();
        assert_eq!(a, b);
        let lead = a
            .direction
            .iter()
            .cloned()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        assert!(lead > 0.0);
        let shifted = &f + &array![10.0, -4.0, 2.5];
        let c = pca_project_1d(shifted.view()).unwrap();
        for (x, y) in a.values.iter().zip(&c.values) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_variance_is_flagged() {
        let f = Array2::from_elem((5, 3), 2.0);
        let p = pca_project_1d(f.view()).unwrap();
        assert!(p.degenerate);
        assert!(p.values.iter().all(|&v| v == 0.0));
        assert!(pca_project_1d(array![[1.0, 2.0]].view()).is_err());
    }
}
