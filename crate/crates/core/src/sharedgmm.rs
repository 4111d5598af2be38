//! Shared-component Gaussian mixture on a decorrelated dataset.
//!
//! Each constructed frame takes player `l`'s location from a different
//! original frame, so within a constructed frame the players are independent.
//! Player `l`'s location is then a mixture over roles with weights
//! `pi[l][k]`, and all players share the same role components.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gausscore::{empirical_moments, regularize_cov, Formation, Point, RoleGaussian};
use crate::rng;
use crate::stats::logsumexp;
use crate::trackio::NormalizedFrame;

#[derive(Clone, Debug, PartialEq)]
pub struct IndependentDataset {
    /// `z[j][l]`: location of player `l` in constructed frame `j`.
    pub z: Vec<Vec<Point>>,
    /// `source_index[j][l]`: original frame the location was taken from.
    pub source_index: Vec<Vec<usize>>,
}

impl IndependentDataset {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn d(&self) -> usize {
        self.z.first().map(|r| r.len()).unwrap_or(0)
    }
}

/// Build `⌊n/d⌋` constructed frames from the first `d·⌊n/d⌋` frames.
///
/// The frame indices are split by a seeded uniform random partition into `d`
/// equal subsets, one per player; the `j`-th index of player `l`'s subset
/// supplies `z[j][l]`.
pub fn build_independent_dataset(frames: &[NormalizedFrame], seed: u64) -> Result<IndependentDataset> {
    let d = frames.first().map(|f| f.d()).unwrap_or(0);
    if d == 0 || frames.len() < d {
        return Err(Error::InsufficientData {
            needed: d.max(1),
            got: frames.len(),
        });
    }
    let m = frames.len() / d;
    let mut idx: Vec<usize> = (0..d * m).collect();
    idx.shuffle(&mut rng::rng_from(seed, &[rng::stage::SHARED]));
    let mut z = Vec::with_capacity(m);
    let mut source_index = Vec::with_capacity(m);
    for j in 0..m {
        let src: Vec<usize> = (0..d).map(|l| idx[l * m + j]).collect();
        z.push(src.iter().enumerate().map(|(l, &i)| frames[i].y[l]).collect());
        source_index.push(src);
    }
    Ok(IndependentDataset { z, source_index })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedParams {
    pub formation: Formation,
    /// Row-stochastic `d × d` matrix; `pi[l][k]` = P(player `l` holds role `k`).
    pub pi: Vec<Vec<f64>>,
}

/// Off-diagonal initial assignment weight. Gives 0.5 on the diagonal at d = 11.
pub const INIT_OFF_DIAGONAL: f64 = 0.05;

/// Initial assignment matrix: `INIT_OFF_DIAGONAL` off the diagonal (shrunk
/// when `d > 11` so the diagonal never drops below 0.5), remainder on it.
pub fn initial_pi(d: usize) -> Vec<Vec<f64>> {
    if d == 1 {
        return vec![vec![1.0]];
    }
    let off = INIT_OFF_DIAGONAL.min(0.5 / (d - 1) as f64);
    let diag = 1.0 - off * (d - 1) as f64;
    (0..d)
        .map(|l| (0..d).map(|k| if l == k { diag } else { off }).collect())
        .collect()
}

/// Component `k` starts at the empirical moments of player `k`.
pub fn init_shared(frames: &[NormalizedFrame]) -> Result<SharedParams> {
    let d = frames.first().map(|f| f.d()).ok_or(Error::EmptyInput)?;
    let roles = (0..d)
        .map(|k| empirical_moments(frames.iter().map(|f| &f.y[k])).expect("non-empty"))
        .collect();
    Ok(SharedParams {
        formation: Formation::new(roles),
        pi: initial_pi(d),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SharedOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedFit {
    pub formation: Formation,
    pub pi: Vec<Vec<f64>>,
    /// Mean log-likelihood per constructed frame: initial value, then one per iteration.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Components re-seeded after losing all responsibility.
    pub reseeded: usize,
}

const DEAD_COMPONENT_MASS: f64 = 1e-8;

struct EStep {
    /// `resp[(j * d + l) * d + k]`
    resp: Vec<f64>,
    /// Per-point mixture log-likelihood, same layout as `z` flattened.
    point_ll: Vec<f64>,
    mean_ll: f64,
}

fn e_step(ds: &IndependentDataset, formation: &Formation, pi: &[Vec<f64>]) -> Result<EStep> {
    let d = ds.d();
    let prepared = formation.prepare()?;
    let log_pi: Vec<Vec<f64>> = pi.iter().map(|row| row.iter().map(|p| p.ln()).collect()).collect();
    let mut resp = Vec::with_capacity(ds.len() * d * d);
    let mut point_ll = Vec::with_capacity(ds.len() * d);
    let mut buf = vec![0.0; d];
    let mut total = 0.0;
    for row in &ds.z {
        for (l, x) in row.iter().enumerate() {
            for k in 0..d {
                buf[k] = log_pi[l][k] + prepared.roles[k].logpdf(x);
            }
            let lse = logsumexp(&buf);
            if !lse.is_finite() {
                return Err(Error::Numeric(format!(
                    "point {x:?} has zero likelihood under every component"
                )));
            }
            total += lse;
            point_ll.push(lse);
            resp.extend(buf.iter().map(|v| (v - lse).exp()));
        }
    }
    Ok(EStep {
        resp,
        point_ll,
        mean_ll: total / ds.len() as f64,
    })
}

fn m_step(
    ds: &IndependentDataset,
    e: &EStep,
    previous: &Formation,
    reseeded: &mut usize,
) -> (Formation, Vec<Vec<f64>>) {
    let d = ds.d();
    let m = ds.len() as f64;
    let mut pi = vec![vec![0.0; d]; d];
    let mut mass = vec![0.0; d];
    let mut sum = vec![[0.0; 2]; d];
    for (j, row) in ds.z.iter().enumerate() {
        for (l, x) in row.iter().enumerate() {
            let r = &e.resp[(j * d + l) * d..(j * d + l + 1) * d];
            for k in 0..d {
                pi[l][k] += r[k];
                mass[k] += r[k];
                sum[k][0] += r[k] * x[0];
                sum[k][1] += r[k] * x[1];
            }
        }
    }
    for row in &mut pi {
        for v in row.iter_mut() {
            *v /= m;
        }
    }
    let mu: Vec<Point> = (0..d).map(|k| [sum[k][0] / mass[k], sum[k][1] / mass[k]]).collect();
    let mut cov = vec![[[0.0; 2]; 2]; d];
    for (j, row) in ds.z.iter().enumerate() {
        for (l, x) in row.iter().enumerate() {
            let r = &e.resp[(j * d + l) * d..(j * d + l + 1) * d];
            for k in 0..d {
                let dx = [x[0] - mu[k][0], x[1] - mu[k][1]];
                cov[k][0][0] += r[k] * dx[0] * dx[0];
                cov[k][0][1] += r[k] * dx[0] * dx[1];
                cov[k][1][1] += r[k] * dx[1] * dx[1];
            }
        }
    }
    let mut roles = Vec::with_capacity(d);
    for k in 0..d {
        if mass[k] < DEAD_COMPONENT_MASS {
            // Re-seed at the worst-explained point with the previous covariance.
            let worst = e
                .point_ll
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            let x = ds.z[worst / d][worst % d];
            roles.push(RoleGaussian::new(x, previous.roles[k].sigma));
            for row in pi.iter_mut() {
                row[k] += 1e-3;
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= s);
            }
            *reseeded += 1;
            continue;
        }
        let c = cov[k];
        let sigma = [
            [c[0][0] / mass[k], c[0][1] / mass[k]],
            [c[0][1] / mass[k], c[1][1] / mass[k]],
        ];
        roles.push(RoleGaussian::new(mu[k], regularize_cov(&sigma)));
    }
    (Formation::new(roles), pi)
}

/// Mean log-likelihood per constructed frame under the given parameters.
pub fn shared_log_likelihood(ds: &IndependentDataset, params: &SharedParams) -> Result<f64> {
    Ok(e_step(ds, &params.formation, &params.pi)?.mean_ll)
}

/// EM for the shared-component mixture. Stops after `max_iter` M-steps or when
/// the mean log-likelihood changes by less than `tol`.
pub fn fit_shared_gmm(ds: &IndependentDataset, init: SharedParams, opts: &SharedOptions) -> Result<SharedFit> {
    let d = ds.d();
    if ds.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if init.formation.d() != d || init.pi.len() != d {
        return Err(Error::ContractViolation(format!(
            "initial parameters have {} roles, data has {d} players",
            init.formation.d()
        )));
    }
    let mut formation = init.formation;
    let mut pi = init.pi;
    let mut e = e_step(ds, &formation, &pi)?;
    let mut trace = vec![e.mean_ll];
    let mut reseeded = 0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let (f, p) = m_step(ds, &e, &formation, &mut reseeded);
        formation = f;
        pi = p;
        e = e_step(ds, &formation, &pi)?;
        iterations += 1;
        let prev = *trace.last().unwrap();
        trace.push(e.mean_ll);
        if (e.mean_ll - prev).abs() < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(SharedFit {
        formation,
        pi,
        loglik_trace: trace,
        iterations,
        converged,
        reseeded,
    })
}

/// Build the dataset, initialize from per-player moments, and fit.
pub fn fit_shared_from_frames(frames: &[NormalizedFrame], seed: u64, opts: &SharedOptions) -> Result<SharedFit> {
    let ds = build_independent_dataset(frames, seed)?;
    let init = init_shared(frames)?;
    fit_shared_gmm(&ds, init, opts)
}
