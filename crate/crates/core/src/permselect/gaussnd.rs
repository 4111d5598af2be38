//! Dense multivariate normal on flattened frames.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::gausscore::COV_FLOOR;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Symmetrize and lift the diagonal so the smallest eigenvalue is at least
/// [`COV_FLOOR`].
pub fn regularize_nd(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = (cov + cov.transpose()) * 0.5;
    let lo = SymmetricEigen::new(out.clone()).eigenvalues.min();
    if lo < COV_FLOOR {
        let lift = COV_FLOOR - lo;
        for i in 0..out.nrows() {
            out[(i, i)] += lift;
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct GaussianNd {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianNd {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::ContractViolation("mean and covariance sizes differ".into()));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite Gaussian parameters".into()));
        }
        let cov = regularize_nd(&cov);
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numeric("covariance is singular after regularization".into()))?
            .unpack();
        let log_det: f64 = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            mean,
            cov,
            chol,
            log_norm: -0.5 * (n as f64 * LN_2PI + log_det),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn logpdf(&self, x: &[f64]) -> f64 {
        let n = self.mean.len();
        debug_assert_eq!(x.len(), n);
        let mut y = [0.0f64; 64];
        let mut heap;
        let y: &mut [f64] = if n <= 64 {
            &mut y[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        let mut q = 0.0;
        for i in 0..n {
            let mut s = x[i] - self.mean[i];
            for j in 0..i {
                s -= self.chol[(i, j)] * y[j];
            }
            y[i] = s / self.chol[(i, i)];
            q += y[i] * y[i];
        }
        self.log_norm - 0.5 * q
    }

    /// Distribution of `Q̃ z` for `z` drawn from `self`, given `idx` with
    /// `(Q̃ z)[i] = z[idx[i]]`.
    pub fn permuted(&self, idx: &[usize]) -> Result<Self> {
        let n = self.dim();
        let mean = DVector::from_fn(n, |i, _| self.mean[idx[i]]);
        let cov = DMatrix::from_fn(n, n, |i, j| self.cov[(idx[i], idx[j])]);
        Self::new(mean, cov)
    }
}

/// Mean and population covariance of row vectors, optionally weighted.
pub fn moments(points: &[&[f64]], weights: Option<&[f64]>) -> (DVector<f64>, DMatrix<f64>, f64) {
    let n = points[0].len();
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let mut total = 0.0;
    let mut mean = DVector::zeros(n);
    for (i, p) in points.iter().enumerate() {
        let wi = w(i);
        total += wi;
        for j in 0..n {
            mean[j] += wi * p[j];
        }
    }
    mean /= total;
    let mut cov = DMatrix::zeros(n, n);
    let mut dx = vec![0.0; n];
    for (i, p) in points.iter().enumerate() {
        let wi = w(i);
        if wi == 0.0 {
            continue;
        }
        for j in 0..n {
            dx[j] = p[j] - mean[j];
        }
        for a in 0..n {
            let s = wi * dx[a];
            for b in 0..=a {
                cov[(a, b)] += s * dx[b];
            }
        }
    }
    for a in 0..n {
        for b in 0..=a {
            let v = cov[(a, b)] / total;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    (mean, cov, total)
}
