//! Choose a sparse permutation support from the shared fit.
//!
//! Candidates come from thresholding the shared-fit assignment matrix. Each
//! surviving candidate `Q` is then tested with a classifier that tries to tell
//! observed frames from their `Q`-permuted copies: a low error rate bounds the
//! overlap between the two distributions, and hence `P(Π = Q)`, from above.

mod gaussnd;
mod mixture;
mod qda;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gaussnd::{regularize_nd, GaussianNd};
pub use mixture::{fit_mixture, gmm_bayes_error_rate, GaussianMixture, MixtureClassifier, MixtureOptions};
pub use qda::{pooled_gaussian, qda_error_rate, qda_params, QdaParams};

use crate::error::{Error, Result};
use crate::gausscore::Permutation;
use crate::rng;
use crate::stats::normal_quantile;
use crate::trackio::NormalizedFrame;

/// Evaluation samples per class required before an error rate is reported.
pub const MIN_EVAL_SAMPLES: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapBound {
    pub error_rate: f64,
    /// Samples per class.
    pub n_eval: usize,
    pub alpha: f64,
    /// `2·error_rate + z_{1−α} / sqrt(2·n_eval)`.
    pub bound: f64,
}

pub fn overlap_bound(error_rate: f64, n_eval: usize, alpha: f64) -> OverlapBound {
    let z = normal_quantile(1.0 - alpha);
    OverlapBound {
        error_rate,
        n_eval,
        alpha,
        bound: 2.0 * error_rate + z / (2.0 * n_eval as f64).sqrt(),
    }
}

/// Empirical error of a discriminant on disjoint class samples. Frames at even
/// positions of `eval` are class-1 samples as observed, frames at odd
/// positions are `Q̃`-permuted into class-2 samples, so no two
/// classifications share a frame.
pub(crate) fn split_error_rate<F>(
    eval: &[Vec<f64>],
    q: &Permutation,
    alpha: f64,
    class1_wins: F,
) -> Result<OverlapBound>
where
    F: Fn(&[f64]) -> bool + Sync,
{
    let n = eval.len() / 2;
    if n < MIN_EVAL_SAMPLES {
        return Err(Error::InsufficientSample {
            needed: 2 * MIN_EVAL_SAMPLES,
            got: eval.len(),
        });
    }
    let idx = q.coordinate_index();
    let errors: usize = (0..n)
        .into_par_iter()
        .map_init(Vec::new, |zq, i| {
            let mut e = 0;
            if !class1_wins(&eval[2 * i]) {
                e += 1;
            }
            zq.clear();
            zq.extend(idx.iter().map(|&j| eval[2 * i + 1][j]));
            if class1_wins(zq) {
                e += 1;
            }
            e
        })
        .sum();
    Ok(overlap_bound(errors as f64 / (2 * n) as f64, n, alpha))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub permutation: Permutation,
    /// `min_l pi[l][map[l]]`.
    pub min_pi_entry: f64,
    pub qda_bound: Option<OverlapBound>,
    pub gmm_bound: Option<OverlapBound>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscardStage {
    Qda,
    Gmm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscardedCandidate {
    #[serde(flatten)]
    pub record: CandidateRecord,
    pub stage: DiscardStage,
}

/// Identity first, then the remaining permutations in lexicographic order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub kept: Vec<CandidateRecord>,
    #[serde(default)]
    pub discarded: Vec<DiscardedCandidate>,
}

impl CandidateSet {
    pub fn perms(&self) -> Vec<Permutation> {
        self.kept.iter().map(|r| r.permutation.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    /// Wrap a hand-picked support; the identity is added when missing.
    pub fn from_perms(d: usize, perms: &[Permutation]) -> Self {
        let mut all: Vec<Permutation> = perms.to_vec();
        all.push(Permutation::identity(d));
        let kept = order_support(all)
            .into_iter()
            .map(|permutation| CandidateRecord {
                permutation,
                min_pi_entry: f64::NAN,
                qda_bound: None,
                gmm_bound: None,
            })
            .collect();
        Self {
            kept,
            discarded: Vec::new(),
        }
    }
}

fn order_support(mut perms: Vec<Permutation>) -> Vec<Permutation> {
    perms.sort();
    perms.dedup();
    if let Some(pos) = perms.iter().position(|q| q.is_identity()) {
        let id = perms.remove(pos);
        perms.insert(0, id);
    }
    perms
}

fn min_entry(pi: &[Vec<f64>], q: &Permutation) -> f64 {
    q.map()
        .iter()
        .enumerate()
        .map(|(l, &k)| pi[l][k])
        .fold(f64::INFINITY, f64::min)
}

/// Every permutation whose entries all satisfy `pi[l][map[l]] ≥ p_thresh`,
/// plus the identity, found by depth-first search over allowed row entries.
pub fn candidates_from_pi(pi: &[Vec<f64>], p_thresh: f64, cap: usize) -> Result<CandidateSet> {
    let d = pi.len();
    if pi.iter().any(|row| row.len() != d) {
        return Err(Error::ContractViolation("assignment matrix must be square".into()));
    }
    let allowed: Vec<Vec<usize>> = pi
        .iter()
        .map(|row| (0..d).filter(|&k| row[k] >= p_thresh).collect())
        .collect();
    let mut found = Vec::new();
    let mut map = Vec::with_capacity(d);
    let mut used = vec![false; d];
    dfs(&allowed, &mut map, &mut used, &mut found, cap)?;
    let identity = Permutation::identity(d);
    if !found.contains(&identity) {
        found.push(identity);
    }
    let kept = order_support(found)
        .into_iter()
        .map(|q| CandidateRecord {
            min_pi_entry: min_entry(pi, &q),
            permutation: q,
            qda_bound: None,
            gmm_bound: None,
        })
        .collect();
    Ok(CandidateSet {
        kept,
        discarded: Vec::new(),
    })
}

fn dfs(
    allowed: &[Vec<usize>],
    map: &mut Vec<usize>,
    used: &mut [bool],
    found: &mut Vec<Permutation>,
    cap: usize,
) -> Result<()> {
    let l = map.len();
    if l == allowed.len() {
        if found.len() >= cap {
            return Err(Error::CandidateExplosion { cap });
        }
        found.push(Permutation::new(map.clone()).expect("bijection by construction"));
        return Ok(());
    }
    for &k in &allowed[l] {
        if !used[k] {
            used[k] = true;
            map.push(k);
            dfs(allowed, map, used, found, cap)?;
            map.pop();
            used[k] = false;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectConfig {
    pub p_thresh: f64,
    pub o_thresh: f64,
    pub alpha: f64,
    pub gmm_components: usize,
    pub candidate_cap: usize,
    /// Mixture training frames are capped at this multiple of the evaluation set.
    pub train_factor: usize,
    /// Skip the mixture pass entirely.
    pub skip_gmm: bool,
    pub seed: u64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            p_thresh: 0.025,
            o_thresh: 0.05,
            alpha: 0.05,
            gmm_components: 8,
            candidate_cap: 10_000,
            train_factor: 4,
            skip_gmm: false,
            seed: 0,
        }
    }
}

/// Split frames into classifier-training and evaluation indices.
///
/// Evaluation uses the frames on the subsampling grid. Training uses the
/// held-out frames, capped at `train_factor` times the evaluation size by a
/// seeded subset. Without held-out frames the grid frames are split in half.
pub fn train_eval_split(frames: &[NormalizedFrame], train_factor: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut r = rng::rng_from(seed, &[rng::stage::SELECT, 1]);
    let eval: Vec<usize> = (0..frames.len()).filter(|&i| !frames[i].held_out).collect();
    let mut train: Vec<usize> = (0..frames.len()).filter(|&i| frames[i].held_out).collect();
    if train.is_empty() {
        let mut shuffled = eval;
        shuffled.shuffle(&mut r);
        let half = shuffled.len() / 2;
        let mut train = shuffled[..half].to_vec();
        let mut eval = shuffled[half..].to_vec();
        train.sort_unstable();
        eval.sort_unstable();
        return (train, eval);
    }
    let cap = train_factor.saturating_mul(eval.len());
    if train.len() > cap {
        train.shuffle(&mut r);
        train.truncate(cap);
        train.sort_unstable();
    }
    (train, eval)
}

/// Candidates from `pi`, then the QDA pass and the mixture pass on survivors.
/// Both classifiers are fitted on the training frames and scored on the
/// evaluation frames of [`train_eval_split`]. The identity is always kept.
pub fn select_permutations(frames: &[NormalizedFrame], pi: &[Vec<f64>], cfg: &SelectConfig) -> Result<CandidateSet> {
    if !(cfg.p_thresh >= 0.0 && cfg.p_thresh <= 1.0) || !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::Config("thresholds must lie in [0, 1]".into()));
    }
    let mut set = candidates_from_pi(pi, cfg.p_thresh, cfg.candidate_cap)?;
    if set.len() == 1 {
        return Ok(set);
    }
    let flat: Vec<Vec<f64>> = frames.iter().map(|f| f.flatten()).collect();
    let (train_idx, eval_idx) = train_eval_split(frames, cfg.train_factor, cfg.seed);
    if eval_idx.len() < 2 * MIN_EVAL_SAMPLES {
        return Err(Error::InsufficientSample {
            needed: 2 * MIN_EVAL_SAMPLES,
            got: eval_idx.len(),
        });
    }
    if train_idx.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let train: Vec<Vec<f64>> = train_idx.iter().map(|&i| flat[i].clone()).collect();
    let eval: Vec<Vec<f64>> = eval_idx.iter().map(|&i| flat[i].clone()).collect();
    let class1 = pooled_gaussian(&train)?;
    let records = std::mem::take(&mut set.kept);
    let scored: Vec<CandidateRecord> = records
        .into_par_iter()
        .map(|mut rec| {
            if !rec.permutation.is_identity() {
                let params = qda_params(&class1, &rec.permutation)?;
                rec.qda_bound = Some(qda_error_rate(&eval, &rec.permutation, &params, cfg.alpha)?);
            }
            Ok(rec)
        })
        .collect::<Result<_>>()?;
    let mut survivors = Vec::new();
    for rec in scored {
        match &rec.qda_bound {
            Some(b) if b.bound < cfg.o_thresh => set.discarded.push(DiscardedCandidate {
                record: rec,
                stage: DiscardStage::Qda,
            }),
            _ => survivors.push(rec),
        }
    }
    if cfg.skip_gmm || survivors.len() == 1 {
        set.kept = survivors;
        return Ok(set);
    }
    let clf = MixtureClassifier::fit(
        &flat,
        &train_idx,
        &eval_idx,
        cfg.gmm_components,
        rng::derive_seed(cfg.seed, &[rng::stage::SELECT, 2]),
    )?;
    let scored: Vec<CandidateRecord> = survivors
        .into_par_iter()
        .map(|mut rec| {
            if !rec.permutation.is_identity() {
                rec.gmm_bound = Some(clf.error_rate(&eval, &rec.permutation, cfg.alpha)?);
            }
            Ok(rec)
        })
        .collect::<Result<_>>()?;
    for rec in scored {
        match &rec.gmm_bound {
            Some(b) if b.bound < cfg.o_thresh => set.discarded.push(DiscardedCandidate {
                record: rec,
                stage: DiscardStage::Gmm,
            }),
            _ => set.kept.push(rec),
        }
    }
    Ok(set)
}
