//! Full-covariance Gaussian mixture classifier for the second selection pass.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::gaussnd::{moments, GaussianNd};
use super::{split_error_rate, OverlapBound};
use crate::error::{Error, Result};
use crate::formmetrics::{kmeans, KMeansOptions};
use crate::gausscore::Permutation;
use crate::stats::logsumexp;

#[derive(Clone, Debug)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub components: Vec<GaussianNd>,
}

#[derive(Clone, Debug)]
pub struct MixtureOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for MixtureOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

impl GaussianMixture {
    pub fn logpdf(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w.ln() + c.logpdf(x))
            .collect();
        logsumexp(&terms)
    }

    /// Mixture of `Q̃ z`: every component re-indexed, weights unchanged.
    pub fn permuted(&self, q: &Permutation) -> Result<Self> {
        let idx = q.coordinate_index();
        Ok(Self {
            weights: self.weights.clone(),
            components: self
                .components
                .iter()
                .map(|c| c.permuted(&idx))
                .collect::<Result<_>>()?,
        })
    }
}

fn mean_loglik_and_resp(points: &[Vec<f64>], m: &GaussianMixture, resp: &mut [f64]) -> f64 {
    let k = m.weights.len();
    let log_w: Vec<f64> = m.weights.iter().map(|w| w.ln()).collect();
    let per_point: Vec<f64> = points
        .par_iter()
        .zip(resp.par_chunks_mut(k))
        .map(|(x, r)| {
            for c in 0..k {
                r[c] = log_w[c] + m.components[c].logpdf(x);
            }
            let lse = logsumexp(r);
            r.iter_mut().for_each(|v| *v = (*v - lse).exp());
            lse
        })
        .collect();
    per_point.iter().sum::<f64>() / points.len() as f64
}

/// Maximum-likelihood EM for a `k`-component full-covariance mixture,
/// started from a k-means++/Lloyd partition.
pub fn fit_mixture(points: &[Vec<f64>], k: usize, seed: u64, opts: &MixtureOptions) -> Result<GaussianMixture> {
    if points.len() < k {
        return Err(Error::InsufficientSample {
            needed: k,
            got: points.len(),
        });
    }
    let n = points.len();
    let km = kmeans(
        points,
        k,
        &KMeansOptions {
            restarts: 1,
            max_iter: 100,
        },
        seed,
    )?;
    let rows: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
    let mut resp = vec![0.0; n * k];
    for (i, &c) in km.labels.iter().enumerate() {
        resp[i * k + c] = 1.0;
    }
    let mut mixture = m_step(&rows, &resp, k, None)?;
    let mut prev = mean_loglik_and_resp(points, &mixture, &mut resp);
    for _ in 0..opts.max_iter {
        mixture = m_step(&rows, &resp, k, Some(&mixture))?;
        let ll = mean_loglik_and_resp(points, &mixture, &mut resp);
        if (ll - prev).abs() < opts.tol {
            break;
        }
        prev = ll;
    }
    Ok(mixture)
}

fn m_step(rows: &[&[f64]], resp: &[f64], k: usize, previous: Option<&GaussianMixture>) -> Result<GaussianMixture> {
    let n = rows.len();
    let dim = rows[0].len();
    let comps: Vec<(f64, Option<GaussianNd>)> = (0..k)
        .into_par_iter()
        .map(|c| {
            let w: Vec<f64> = (0..n).map(|i| resp[i * k + c]).collect();
            let mass: f64 = w.iter().sum();
            if mass < 1e-10 {
                return Ok((mass, None));
            }
            let (mean, cov, _) = moments(rows, Some(&w));
            Ok((mass, Some(GaussianNd::new(mean, cov)?)))
        })
        .collect::<Result<_>>()?;
    let mut weights = Vec::with_capacity(k);
    let mut components = Vec::with_capacity(k);
    for (c, (mass, g)) in comps.into_iter().enumerate() {
        let g = match (g, previous) {
            (Some(g), _) => g,
            (None, Some(p)) => p.components[c].clone(),
            (None, None) => GaussianNd::new(nalgebra::DVector::zeros(dim), DMatrix::identity(dim, dim))?,
        };
        weights.push(mass / n as f64);
        components.push(g);
    }
    Ok(GaussianMixture { weights, components })
}

/// Mixture classifier trained on one set of frames and evaluated on another.
#[derive(Clone, Debug)]
pub struct MixtureClassifier {
    pub class1: GaussianMixture,
}

impl MixtureClassifier {
    /// Fit class 1 on `data[train_idx]`; `eval_idx` is only checked for
    /// disjointness so the evaluation never reuses training frames.
    pub fn fit(data: &[Vec<f64>], train_idx: &[usize], eval_idx: &[usize], k: usize, seed: u64) -> Result<Self> {
        let mut in_train = vec![false; data.len()];
        for &i in train_idx {
            in_train[i] = true;
        }
        if let Some(&i) = eval_idx.iter().find(|&&i| in_train[i]) {
            return Err(Error::ContractViolation(format!(
                "frame {i} is in both the training and the evaluation set"
            )));
        }
        let train: Vec<Vec<f64>> = train_idx.iter().map(|&i| data[i].clone()).collect();
        Ok(Self {
            class1: fit_mixture(&train, k, seed, &MixtureOptions::default())?,
        })
    }

    /// Error rate on disjoint class samples drawn from `eval`.
    pub fn error_rate(&self, eval: &[Vec<f64>], q: &Permutation, alpha: f64) -> Result<OverlapBound> {
        let class2 = self.class1.permuted(q)?;
        split_error_rate(eval, q, alpha, |z| self.class1.logpdf(z) >= class2.logpdf(z))
    }
}

/// Fit the mixture on `train_idx`, evaluate the classifier for `q` on `eval_idx`.
pub fn gmm_bayes_error_rate(
    data: &[Vec<f64>],
    train_idx: &[usize],
    eval_idx: &[usize],
    q: &Permutation,
    k_components: usize,
    alpha: f64,
    seed: u64,
) -> Result<OverlapBound> {
    let clf = MixtureClassifier::fit(data, train_idx, eval_idx, k_components, seed)?;
    let eval: Vec<Vec<f64>> = eval_idx.iter().map(|&i| data[i].clone()).collect();
    clf.error_rate(&eval, q, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn blob_data(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = rng::rng_from(seed, &[]);
        (0..n)
            .map(|i| {
                let c = (i % 3) as f64 * 4.0;
                (0..6)
                    .map(|j| c * (j as f64 - 2.5) / 3.0 + r.sample::<f64, _>(StandardNormal) * (1.0 + 0.1 * j as f64))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn permuted_fit_equals_fit_on_permuted_data() {
        let data = blob_data(600, 1);
        let q = crate::gausscore::Permutation::new(vec![2, 0, 1]).unwrap();
        let idx = q.coordinate_index();
        let permuted: Vec<Vec<f64>> = data.iter().map(|z| idx.iter().map(|&i| z[i]).collect()).collect();
        let a = fit_mixture(&data, 3, 5, &MixtureOptions::default())
            .unwrap()
            .permuted(&q)
            .unwrap();
        let b = fit_mixture(&permuted, 3, 5, &MixtureOptions::default()).unwrap();
        let mut r = rng::rng_from(2, &[]);
        for _ in 0..100 {
            let x: Vec<f64> = (0..6).map(|_| r.random_range(-6.0..6.0)).collect();
            let (la, lb) = (a.logpdf(&x), b.logpdf(&x));
            assert!((la - lb).abs() <= 1e-6 * la.abs().max(1.0), "{la} vs {lb}");
        }
    }

    #[test]
    fn em_increases_likelihood_over_single_gaussian() {
        let data = blob_data(600, 3);
        let one = fit_mixture(&data, 1, 0, &MixtureOptions::default()).unwrap();
        let three = fit_mixture(&data, 3, 0, &MixtureOptions::default()).unwrap();
        let ll = |m: &GaussianMixture| data.iter().map(|x| m.logpdf(x)).sum::<f64>();
        assert!(ll(&three) > ll(&one));
        assert!((three.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlapping_indices_are_rejected() {
        let data = blob_data(600, 4);
        let q = Permutation::identity(3);
        let train: Vec<usize> = (0..300).collect();
        let eval: Vec<usize> = (299..600).collect();
        assert!(matches!(
            gmm_bayes_error_rate(&data, &train, &eval, &q, 2, 0.05, 0),
            Err(Error::ContractViolation(_))
        ));
        let eval: Vec<usize> = (300..600).collect();
        let b = gmm_bayes_error_rate(&data, &train, &eval, &q, 2, 0.05, 0).unwrap();
        assert_eq!(b.error_rate, 0.5);
        assert!(b.bound >= 1.0);
    }
}
