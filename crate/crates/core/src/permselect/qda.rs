//! Quadratic discriminant between observed frames and their permuted copies.

use super::gaussnd::{moments, GaussianNd};
use super::{split_error_rate, OverlapBound};
use crate::error::{Error, Result};
use crate::gausscore::Permutation;

/// Class 1 models observed flattened frames, class 2 their `Q̃`-permuted copies.
#[derive(Clone, Debug)]
pub struct QdaParams {
    pub class1: GaussianNd,
    pub class2: GaussianNd,
}

/// Pooled mean and covariance of flattened frames.
pub fn pooled_gaussian(frames_flat: &[Vec<f64>]) -> Result<GaussianNd> {
    if frames_flat.is_empty() {
        return Err(Error::EmptyInput);
    }
    let pts: Vec<&[f64]> = frames_flat.iter().map(|v| v.as_slice()).collect();
    let (mean, cov, _) = moments(&pts, None);
    GaussianNd::new(mean, cov)
}

/// Class 2 is `(Q̃μ, Q̃ΣQ̃ᵀ)`, obtained by re-indexing class 1.
pub fn qda_params(class1: &GaussianNd, q: &Permutation) -> Result<QdaParams> {
    if class1.dim() != 2 * q.len() {
        return Err(Error::ContractViolation(format!(
            "classifier has dimension {}, permutation acts on {} players",
            class1.dim(),
            q.len()
        )));
    }
    Ok(QdaParams {
        class1: class1.clone(),
        class2: class1.permuted(&q.coordinate_index())?,
    })
}

/// Empirical error of the plug-in discriminant `Φ(z) = log g₁(z) − log g₂(z)`,
/// class 1 the observed frames and class 2 permuted copies of other frames.
/// `eval` should be disjoint from the frames `params` were estimated on.
pub fn qda_error_rate(eval: &[Vec<f64>], q: &Permutation, params: &QdaParams, alpha: f64) -> Result<OverlapBound> {
    split_error_rate(eval, q, alpha, |z| params.class1.logpdf(z) >= params.class2.logpdf(z))
}
