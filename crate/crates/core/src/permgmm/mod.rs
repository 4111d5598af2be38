//! Multi-regime Gaussian mixture with hidden permutations, fitted by EM.
//!
//! A frame is generated by drawing a regime `r` with probability `v_r`, a
//! permutation `Q` from the regime's weights `w_{r,Q}`, role locations
//! `X_k ~ N(μ_{r,k}, Σ_{r,k})`, and emitting `Y = QX`.

mod init;
mod metrics;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use init::{init_multi_regime, init_one_regime, min_rule_weights, InitMode};
pub use metrics::{
    avg_permutation, frame_perm_prob, frame_regime_prob, no_swap_probability, no_swap_probability_parameters,
    possession_correlation, weighted_average,
};

use crate::error::{Error, Result};
use crate::gausscore::{regularize_cov, Formation, Permutation, PreparedFormation, RoleGaussian};
use crate::stats::logsumexp;
use crate::trackio::NormalizedFrame;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub v: f64,
    pub formation: Formation,
    /// `weights[j]` = `w_{r,Q}` for `Q = support[j]`.
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeModel {
    /// Permutation support shared by all regimes; identity first.
    pub support: Vec<Permutation>,
    pub regimes: Vec<Regime>,
    /// Mean log-likelihood per frame: initial value, then one per iteration.
    #[serde(default)]
    pub loglik_trace: Vec<f64>,
    #[serde(default)]
    pub n_frames_fit: usize,
    #[serde(default)]
    pub iterations: usize,
    #[serde(default)]
    pub converged: bool,
    /// Frames excluded from the last M-step because their likelihood underflowed.
    #[serde(default)]
    pub underflow_frames: usize,
}

impl RegimeModel {
    pub fn new(support: Vec<Permutation>, regimes: Vec<Regime>) -> Result<Self> {
        let m = Self {
            support,
            regimes,
            loglik_trace: Vec::new(),
            n_frames_fit: 0,
            iterations: 0,
            converged: false,
            underflow_frames: 0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn d(&self) -> usize {
        self.support.first().map(|q| q.len()).unwrap_or(0)
    }

    pub fn n_regimes(&self) -> usize {
        self.regimes.len()
    }

    pub fn identity_index(&self) -> Option<usize> {
        self.support.iter().position(|q| q.is_identity())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ContractViolation(m));
        if self.support.is_empty() || self.regimes.is_empty() {
            return bad("model needs a support and at least one regime".into());
        }
        let d = self.d();
        if self.support.iter().any(|q| q.len() != d) {
            return bad("support permutations differ in size".into());
        }
        let mut sorted = self.support.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.support.len() {
            return bad("support has duplicate permutations".into());
        }
        if self.identity_index().is_none() {
            return bad("support must contain the identity".into());
        }
        let vsum: f64 = self.regimes.iter().map(|r| r.v).sum();
        if (vsum - 1.0).abs() > 1e-8 {
            return bad(format!("regime probabilities sum to {vsum}"));
        }
        for (i, r) in self.regimes.iter().enumerate() {
            if r.formation.d() != d || r.weights.len() != self.support.len() {
                return bad(format!("regime {i} does not match the support"));
            }
            let wsum: f64 = r.weights.iter().sum();
            if (wsum - 1.0).abs() > 1e-8 || r.weights.iter().any(|&w| !(w >= 0.0)) || !(r.v >= 0.0) {
                return bad(format!("regime {i} weights are not a distribution"));
            }
        }
        Ok(())
    }

    pub(crate) fn prepare(&self) -> Result<Prepared> {
        Ok(Prepared {
            formations: self
                .regimes
                .iter()
                .map(|r| r.formation.prepare())
                .collect::<Result<_>>()?,
            log_v: self.regimes.iter().map(|r| r.v.ln()).collect(),
            log_w: self
                .regimes
                .iter()
                .map(|r| r.weights.iter().map(|w| w.ln()).collect())
                .collect(),
            maps: self.support.iter().map(|q| q.map().to_vec()).collect(),
        })
    }
}

pub(crate) struct Prepared {
    formations: Vec<PreparedFormation>,
    log_v: Vec<f64>,
    log_w: Vec<Vec<f64>>,
    maps: Vec<Vec<usize>>,
}

impl Prepared {
    /// Posterior for one frame and its log-likelihood; `None` on underflow.
    pub(crate) fn posterior(&self, y: &[[f64; 2]], table: &mut Vec<f64>) -> (Option<FramePosterior>, f64) {
        let d = y.len();
        let nr = self.formations.len();
        let mut joint: Vec<Vec<f64>> = Vec::with_capacity(nr);
        let mut regime_ll = Vec::with_capacity(nr);
        for r in 0..nr {
            self.formations[r].log_density_table(y, table);
            let row: Vec<f64> = self
                .maps
                .iter()
                .zip(&self.log_w[r])
                .map(|(map, lw)| {
                    if *lw == f64::NEG_INFINITY {
                        return f64::NEG_INFINITY;
                    }
                    let s: f64 = map.iter().enumerate().map(|(l, &k)| table[l * d + k]).sum();
                    lw + s
                })
                .collect();
            let lse = logsumexp(&row);
            regime_ll.push(self.log_v[r] + lse);
            joint.push(row.into_iter().map(|v| v - lse).collect());
        }
        let total = logsumexp(&regime_ll);
        if !total.is_finite() {
            return (None, total);
        }
        let v = regime_ll.iter().map(|x| (x - total).exp()).collect();
        let w = joint
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|x| if x.is_nan() { 0.0 } else { x.exp() })
                    .collect()
            })
            .collect();
        (Some(FramePosterior { v, w }), total)
    }
}

/// Posterior regime and permutation probabilities of one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePosterior {
    /// `v[r]` = P(R = r | y).
    pub v: Vec<f64>,
    /// `w[r][j]` = P(Π = support[j] | y, R = r).
    pub w: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct EStep {
    /// `None` for frames whose likelihood underflowed under every component.
    pub posteriors: Vec<Option<FramePosterior>>,
    /// Mean log-likelihood over frames that did not underflow.
    pub mean_loglik: f64,
    pub underflow: usize,
}

pub fn e_step(frames: &[NormalizedFrame], model: &RegimeModel) -> Result<EStep> {
    let prepared = model.prepare()?;
    let d = model.d();
    if let Some(f) = frames.iter().find(|f| f.d() != d) {
        return Err(Error::ContractViolation(format!(
            "frame has {} players, model has {d} roles",
            f.d()
        )));
    }
    let out: Vec<(Option<FramePosterior>, f64)> = frames
        .par_iter()
        .map_init(|| Vec::with_capacity(d * d), |table, f| prepared.posterior(&f.y, table))
        .collect();
    let mut total = 0.0;
    let mut underflow = 0;
    let mut posteriors = Vec::with_capacity(out.len());
    for (p, ll) in out {
        if p.is_some() {
            total += ll;
        } else {
            underflow += 1;
        }
        posteriors.push(p);
    }
    let used = frames.len() - underflow;
    if used == 0 {
        return Err(Error::Numeric("every frame has zero likelihood under the model".into()));
    }
    Ok(EStep {
        posteriors,
        mean_loglik: total / used as f64,
        underflow,
    })
}

/// Mean log-likelihood per frame.
pub fn log_likelihood(frames: &[NormalizedFrame], model: &RegimeModel) -> Result<f64> {
    Ok(e_step(frames, model)?.mean_loglik)
}

/// Closed-form parameter updates from the posteriors; weights below `prune`
/// are zeroed and renormalized, and permutations left with zero weight in
/// every regime leave the support (the identity always stays).
pub fn m_step(frames: &[NormalizedFrame], e: &EStep, model: &RegimeModel, prune: f64) -> Result<RegimeModel> {
    let d = model.d();
    let m = model.support.len();
    let nr = model.n_regimes();
    let n_used = (frames.len() - e.underflow) as f64;
    let mut regimes = Vec::with_capacity(nr);
    let mut soft = vec![0.0; d * d];
    for r in 0..nr {
        let mut mass = 0.0;
        let mut wsum = vec![0.0; m];
        let mut role_sum = vec![[0.0; 2]; d];
        // Soft assignment A[l][k] = Σ_Q w_irQ 1{map[l] = k}, cached per frame.
        let mut assigns: Vec<(usize, f64, Vec<f64>)> = Vec::with_capacity(frames.len());
        for (i, (f, p)) in frames.iter().zip(&e.posteriors).enumerate() {
            let Some(p) = p else { continue };
            let vi = p.v[r];
            mass += vi;
            soft.iter_mut().for_each(|a| *a = 0.0);
            for (j, q) in model.support.iter().enumerate() {
                let w = p.w[r][j];
                wsum[j] += vi * w;
                if w == 0.0 {
                    continue;
                }
                for (l, &k) in q.map().iter().enumerate() {
                    soft[l * d + k] += w;
                }
            }
            for l in 0..d {
                for k in 0..d {
                    let a = vi * soft[l * d + k];
                    role_sum[k][0] += a * f.y[l][0];
                    role_sum[k][1] += a * f.y[l][1];
                }
            }
            assigns.push((i, vi, soft.clone()));
        }
        if !(mass >= 1e-8 * n_used) {
            return Err(Error::RegimeDeath { regime: r, mass });
        }
        let mu: Vec<[f64; 2]> = role_sum.iter().map(|s| [s[0] / mass, s[1] / mass]).collect();
        let mut cov = vec![[0.0; 3]; d];
        for (i, vi, a) in &assigns {
            let f = &frames[*i];
            for l in 0..d {
                for k in 0..d {
                    let wk = vi * a[l * d + k];
                    if wk == 0.0 {
                        continue;
                    }
                    let dx = [f.y[l][0] - mu[k][0], f.y[l][1] - mu[k][1]];
                    cov[k][0] += wk * dx[0] * dx[0];
                    cov[k][1] += wk * dx[0] * dx[1];
                    cov[k][2] += wk * dx[1] * dx[1];
                }
            }
        }
        let roles = (0..d)
            .map(|k| {
                let c = cov[k];
                let sigma = [[c[0] / mass, c[1] / mass], [c[1] / mass, c[2] / mass]];
                RoleGaussian::new(mu[k], regularize_cov(&sigma))
            })
            .collect();
        let mut weights: Vec<f64> = wsum.iter().map(|w| w / mass).collect();
        prune_weights(&mut weights, prune);
        regimes.push(Regime {
            v: mass / n_used,
            formation: Formation::new(roles),
            weights,
        });
    }
    let keep: Vec<bool> = (0..m)
        .map(|j| model.support[j].is_identity() || regimes.iter().any(|r| r.weights[j] > 0.0))
        .collect();
    let support = model
        .support
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(q, _)| q.clone())
        .collect();
    for r in &mut regimes {
        r.weights = r
            .weights
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(w, _)| *w)
            .collect();
    }
    Ok(RegimeModel {
        support,
        regimes,
        loglik_trace: model.loglik_trace.clone(),
        n_frames_fit: frames.len(),
        iterations: model.iterations,
        converged: false,
        underflow_frames: e.underflow,
    })
}

fn prune_weights(w: &mut [f64], prune: f64) {
    let kept: f64 = w.iter().filter(|&&x| x >= prune).sum();
    if kept <= 0.0 {
        return;
    }
    for x in w.iter_mut() {
        *x = if *x >= prune { *x / kept } else { 0.0 };
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub prune: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-7,
            prune: 1e-10,
        }
    }
}

/// EM: alternate M- and E-steps until the mean log-likelihood moves by less
/// than `tol` or `max_iter` M-steps have run.
pub fn fit(frames: &[NormalizedFrame], init: RegimeModel, opts: &FitOptions) -> Result<RegimeModel> {
    if frames.is_empty() {
        return Err(Error::EmptyInput);
    }
    init.validate()?;
    let mut model = init;
    let mut e = e_step(frames, &model)?;
    model.loglik_trace = vec![e.mean_loglik];
    model.iterations = 0;
    model.n_frames_fit = frames.len();
    model.underflow_frames = e.underflow;
    while model.iterations < opts.max_iter {
        let mut next = m_step(frames, &e, &model, opts.prune)?;
        e = e_step(frames, &next)?;
        next.iterations = model.iterations + 1;
        let prev = *model.loglik_trace.last().unwrap();
        next.loglik_trace.push(e.mean_loglik);
        next.underflow_frames = e.underflow;
        model = next;
        if (e.mean_loglik - prev).abs() < opts.tol {
            model.converged = true;
            break;
        }
    }
    Ok(model)
}
