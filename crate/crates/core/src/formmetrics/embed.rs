use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gausscore::Formation;

/// Projection directions used when none are given.
pub const DEFAULT_DIRECTIONS: usize = 12;

/// Sorted role-mean projections along `m` directions, stored column by column:
/// `values[j * d + i]` is the `i`-th smallest projection on direction `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub d: usize,
    pub m: usize,
    pub values: Vec<f64>,
}

impl Embedding {
    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j * self.d..(j + 1) * self.d]
    }
}

/// Project role means on `(cos θ_j, sin θ_j)`, `θ_j = jπ/m` for `j = 0..m`.
pub fn sliced_embedding(f: &Formation, m: usize) -> Result<Embedding> {
    if m == 0 {
        return Err(Error::Config("embedding needs at least one direction".into()));
    }
    let d = f.d();
    let mut values = Vec::with_capacity(d * m);
    let mut col = Vec::with_capacity(d);
    for j in 0..m {
        let theta = j as f64 * PI / m as f64;
        let (s, c) = theta.sin_cos();
        col.clear();
        col.extend(f.roles.iter().map(|r| c * r.mu[0] + s * r.mu[1]));
        col.sort_by(f64::total_cmp);
        values.extend_from_slice(&col);
    }
    Ok(Embedding { d, m, values })
}

/// `‖E₁ − E₂‖ / sqrt(d·m)`: a sliced 2-Wasserstein distance between the
/// uniform measures on the two sets of role means.
pub fn embedding_distance(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.d != b.d || a.m != b.m {
        return Err(Error::ContractViolation(format!(
            "embeddings have shapes {}x{} and {}x{}",
            a.d, a.m, b.d, b.m
        )));
    }
    let ss: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((ss / (a.d * a.m) as f64).sqrt())
}
