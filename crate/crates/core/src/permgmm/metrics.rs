use super::{e_step, FramePosterior, RegimeModel};
use crate::error::{Error, Result};
use crate::gausscore::Point;
use crate::stats::pearson;
use crate::trackio::{NormalizedFrame, Possession};

/// `Σ_Q w_{r,Q} Q`: expected permutation matrix of regime `r`.
pub fn avg_permutation(model: &RegimeModel, r: usize) -> Vec<Vec<f64>> {
    let d = model.d();
    let mut m = vec![vec![0.0; d]; d];
    for (q, w) in model.support.iter().zip(&model.regimes[r].weights) {
        for (l, &k) in q.map().iter().enumerate() {
            m[l][k] += w;
        }
    }
    m
}

fn single_posterior(model: &RegimeModel, y: &[Point]) -> Result<FramePosterior> {
    let prepared = model.prepare()?;
    let mut table = Vec::new();
    prepared
        .posterior(y, &mut table)
        .0
        .ok_or_else(|| Error::Numeric("frame likelihood underflowed".into()))
}

/// Posterior regime probabilities of one frame.
pub fn frame_regime_prob(model: &RegimeModel, y: &[Point]) -> Result<Vec<f64>> {
    Ok(single_posterior(model, y)?.v)
}

/// Posterior permutation probabilities of one frame within regime `r`.
pub fn frame_perm_prob(model: &RegimeModel, y: &[Point], r: usize) -> Result<Vec<f64>> {
    Ok(single_posterior(model, y)?.w.swap_remove(r))
}

/// Mean over frames of `Σ_r P(R = r | y) P(Π = I | y, R = r)`. Frames whose
/// likelihood underflows are skipped.
pub fn no_swap_probability(model: &RegimeModel, frames: &[NormalizedFrame]) -> Result<f64> {
    let id = model
        .identity_index()
        .ok_or_else(|| Error::ContractViolation("support lacks the identity".into()))?;
    let e = e_step(frames, model)?;
    let (sum, n) = e
        .posteriors
        .iter()
        .flatten()
        .map(|p| p.v.iter().zip(&p.w).map(|(v, w)| v * w[id]).sum::<f64>())
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    Ok(sum / n as f64)
}

/// Parameter-based variant: `Σ_r v_r w_{r,I}`.
pub fn no_swap_probability_parameters(model: &RegimeModel) -> f64 {
    match model.identity_index() {
        Some(id) => model.regimes.iter().map(|r| r.v * r.weights[id]).sum(),
        None => 0.0,
    }
}

/// Average of per-segment values weighted by their frame counts.
pub fn weighted_average(values: &[(f64, usize)]) -> Option<f64> {
    let n: usize = values.iter().map(|v| v.1).sum();
    if n == 0 {
        return None;
    }
    Some(values.iter().map(|(x, c)| x * *c as f64).sum::<f64>() / n as f64)
}

/// Pearson correlation between each regime's posterior probability and the
/// indicator of each possession value; `table[r][h]` follows
/// [`Possession::ALL`]. `None` where a series is constant.
pub fn possession_correlation(model: &RegimeModel, frames: &[NormalizedFrame]) -> Result<Vec<Vec<Option<f64>>>> {
    let e = e_step(frames, model)?;
    let rows: Vec<(&NormalizedFrame, &FramePosterior)> = frames
        .iter()
        .zip(&e.posteriors)
        .filter_map(|(f, p)| p.as_ref().map(|p| (f, p)))
        .collect();
    Ok((0..model.n_regimes())
        .map(|r| {
            let v: Vec<f64> = rows.iter().map(|(_, p)| p.v[r]).collect();
            Possession::ALL
                .iter()
                .map(|&h| {
                    let ind: Vec<f64> = rows.iter().map(|(f, _)| (f.possession == h) as u8 as f64).collect();
                    pearson(&v, &ind)
                })
                .collect()
        })
        .collect())
}
