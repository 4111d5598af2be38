use serde::{Deserialize, Serialize};

use crate::assign::Hungarian;
use crate::error::{Error, Result};
use crate::gausscore::{regularize_cov, sym2, Formation, Permutation, RoleGaussian};

/// Bhattacharyya coefficient `∫ sqrt(f₁ f₂)` of two bivariate normals.
pub fn bhattacharyya_gaussian(g1: &RoleGaussian, g2: &RoleGaussian) -> f64 {
    let s1 = regularize_cov(&g1.sigma);
    let s2 = regularize_cov(&g2.sigma);
    let avg = regularize_cov(&sym2::scale(&sym2::add(&s1, &s2), 0.5));
    let inv = sym2::inverse(&avg).expect("regularized covariance is invertible");
    let dm = [g1.mu[0] - g2.mu[0], g1.mu[1] - g2.mu[1]];
    let db = 0.125 * sym2::quad_form(&inv, &dm)
        + 0.5 * (sym2::det(&avg).ln() - 0.5 * (sym2::det(&s1).ln() + sym2::det(&s2).ln()));
    (-db).exp()
}

/// Mean Bhattacharyya coefficient over all unordered pairs of distinct roles.
/// Zero for formations with fewer than two roles.
pub fn formation_overlap_index(f: &Formation) -> f64 {
    let d = f.d();
    if d < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for a in 0..d {
        for b in a + 1..d {
            sum += bhattacharyya_gaussian(&f.roles[a], &f.roles[b]);
        }
    }
    sum / (d * (d - 1) / 2) as f64
}

/// Squared 2-Wasserstein distance between bivariate normals.
pub fn w2_gaussian_squared(g1: &RoleGaussian, g2: &RoleGaussian) -> f64 {
    let s1 = g1.sigma;
    let s2 = g2.sigma;
    let r2 = sym2::sqrt_psd(&s2);
    let inner = sym2::mul(&sym2::mul(&r2, &s1), &r2);
    let cross = (sym2::trace(&inner) + 2.0 * sym2::det(&inner).max(0.0).sqrt())
        .max(0.0)
        .sqrt();
    let dm = [g1.mu[0] - g2.mu[0], g1.mu[1] - g2.mu[1]];
    let w = dm[0] * dm[0] + dm[1] * dm[1] + sym2::trace(&s1) + sym2::trace(&s2) - 2.0 * cross;
    w.max(0.0)
}

pub fn w2_gaussian(g1: &RoleGaussian, g2: &RoleGaussian) -> f64 {
    w2_gaussian_squared(g1, g2).sqrt()
}

/// Mixture-Wasserstein distance together with the optimal role matching
/// (`map[k]` = role of `f2` matched to role `k` of `f1`).
pub fn mixture_wasserstein_matching(f1: &Formation, f2: &Formation) -> Result<(f64, Permutation)> {
    let d = f1.d();
    if f2.d() != d {
        return Err(Error::ContractViolation(format!(
            "formations have {d} and {} roles",
            f2.d()
        )));
    }
    if d == 0 {
        return Ok((0.0, Permutation::identity(0)));
    }
    let mut cost = Vec::with_capacity(d * d);
    for a in &f1.roles {
        for b in &f2.roles {
            cost.push(w2_gaussian_squared(a, b));
        }
    }
    let map = Hungarian::new().solve(&cost, d).to_vec();
    let total: f64 = map.iter().enumerate().map(|(k, &j)| cost[k * d + j]).sum();
    Ok((total.sqrt(), Permutation::new(map)?))
}

/// `sqrt(min_σ Σ_k W₂²(f1_k, f2_σ(k)))`.
pub fn mixture_wasserstein(f1: &Formation, f2: &Formation) -> Result<f64> {
    Ok(mixture_wasserstein_matching(f1, f2)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionRow {
    pub from_segment: usize,
    pub to_segment: usize,
    pub distance: f64,
    pub first_substitution: bool,
    pub last_substitution: bool,
}

/// Mixture-Wasserstein distance between each pair of consecutive segments.
pub fn substitution_distance_report(segments: &[Formation]) -> Result<Vec<SubstitutionRow>> {
    if segments.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: segments.len(),
        });
    }
    let last = segments.len() - 2;
    segments
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            Ok(SubstitutionRow {
                from_segment: i,
                to_segment: i + 1,
                distance: mixture_wasserstein(&w[0], &w[1])?,
                first_substitution: i == 0,
                last_substitution: i == last,
            })
        })
        .collect()
}
