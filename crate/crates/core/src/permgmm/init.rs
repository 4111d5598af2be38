use serde::{Deserialize, Serialize};

use super::{fit, FitOptions, Regime, RegimeModel};
use crate::error::{Error, Result};
use crate::gausscore::{empirical_moments, Formation, Permutation};
use crate::trackio::{NormalizedFrame, Possession};

/// `w_Q ∝ min_l pi[l][map[l]]`, normalized. Falls back to uniform when every
/// minimum is zero; the second value reports whether that happened.
pub fn min_rule_weights(pi: &[Vec<f64>], support: &[Permutation]) -> (Vec<f64>, bool) {
    let raw: Vec<f64> = support
        .iter()
        .map(|q| {
            q.map()
                .iter()
                .enumerate()
                .map(|(l, &k)| pi[l][k])
                .fold(f64::INFINITY, f64::min)
                .max(0.0)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 && total.is_finite() {
        (raw.iter().map(|w| w / total).collect(), false)
    } else {
        (vec![1.0 / support.len() as f64; support.len()], true)
    }
}

/// Identity gets 1/2, the other permutations share the remaining 1/2.
fn identity_half_weights(support: &[Permutation]) -> Vec<f64> {
    if support.len() == 1 {
        return vec![1.0];
    }
    let rest = 0.5 / (support.len() - 1) as f64;
    support
        .iter()
        .map(|q| if q.is_identity() { 0.5 } else { rest })
        .collect()
}

/// One regime with the shared-fit formation and min-rule weights.
pub fn init_one_regime(formation: &Formation, pi: &[Vec<f64>], support: &[Permutation]) -> Result<RegimeModel> {
    if support.is_empty() {
        return Err(Error::ContractViolation("candidate set is empty".into()));
    }
    let (weights, _) = min_rule_weights(pi, support);
    RegimeModel::new(
        support.to_vec(),
        vec![Regime {
            v: 1.0,
            formation: formation.clone(),
            weights,
        }],
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Seed regimes with one-regime fits on home, away, then unassigned frames.
    FromPossession,
    /// Per-player moments of consecutive chronological chunks; min-rule weights.
    ChronologicalSplit,
    /// Chronological formations; identity weight 1/2, the rest split equally.
    IdentityHalf,
}

fn player_moments(frames: &[NormalizedFrame]) -> Formation {
    let d = frames[0].d();
    Formation::new(
        (0..d)
            .map(|k| empirical_moments(frames.iter().map(|f| &f.y[k])).expect("non-empty chunk"))
            .collect(),
    )
}

fn chronological_formations(frames: &[NormalizedFrame], l: usize) -> Result<Vec<Formation>> {
    if frames.len() < l {
        return Err(Error::InsufficientData {
            needed: l,
            got: frames.len(),
        });
    }
    let n = frames.len();
    Ok((0..l)
        .map(|r| player_moments(&frames[r * n / l..(r + 1) * n / l]))
        .collect())
}

/// Initial `l`-regime model with uniform regime probabilities. `pi` (the
/// shared-fit assignment matrix) feeds the min-rule weights where used; when
/// absent those modes fall back to identity-half weights.
pub fn init_multi_regime(
    frames: &[NormalizedFrame],
    support: &[Permutation],
    l: usize,
    mode: InitMode,
    pi: Option<&[Vec<f64>]>,
    opts: &FitOptions,
) -> Result<RegimeModel> {
    if l == 0 {
        return Err(Error::Config("at least one regime is required".into()));
    }
    if support.is_empty() {
        return Err(Error::ContractViolation("candidate set is empty".into()));
    }
    if frames.is_empty() {
        return Err(Error::EmptyInput);
    }
    let default_weights = || match pi {
        Some(pi) => min_rule_weights(pi, support).0,
        None => identity_half_weights(support),
    };
    let v = 1.0 / l as f64;
    let regimes = match mode {
        InitMode::ChronologicalSplit => chronological_formations(frames, l)?
            .into_iter()
            .map(|formation| Regime {
                v,
                formation,
                weights: default_weights(),
            })
            .collect(),
        InitMode::IdentityHalf => chronological_formations(frames, l)?
            .into_iter()
            .map(|formation| Regime {
                v,
                formation,
                weights: identity_half_weights(support),
            })
            .collect(),
        InitMode::FromPossession => {
            if l > Possession::ALL.len() {
                return Err(Error::Config(format!(
                    "possession initialization supports at most 3 regimes, got {l}"
                )));
            }
            let mut regimes = Vec::with_capacity(l);
            for &side in &Possession::ALL[..l] {
                let subset: Vec<NormalizedFrame> = frames.iter().filter(|f| f.possession == side).cloned().collect();
                if subset.is_empty() {
                    return Err(Error::Config(format!(
                        "no frames with possession {} for possession initialization",
                        side.code()
                    )));
                }
                let seed = RegimeModel::new(
                    support.to_vec(),
                    vec![Regime {
                        v: 1.0,
                        formation: player_moments(&subset),
                        weights: default_weights(),
                    }],
                )?;
                let fitted = fit(&subset, seed, opts)?;
                let mut weights = vec![0.0; support.len()];
                for (q, w) in fitted.support.iter().zip(&fitted.regimes[0].weights) {
                    let j = support.iter().position(|s| s == q).expect("support only shrinks");
                    weights[j] = *w;
                }
                regimes.push(Regime {
                    v,
                    formation: fitted.regimes[0].formation.clone(),
                    weights,
                });
            }
            regimes
        }
    };
    RegimeModel::new(support.to_vec(), regimes)
}
