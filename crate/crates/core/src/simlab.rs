//! Synthetic frames from known models and the two-role robustness experiment.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assign::{fit_hard_assignment, HardOptions};
use crate::error::{Error, Result};
use crate::gausscore::{regularize_cov, Formation, Permutation, Point, RoleGaussian};
use crate::permgmm::{fit, init_one_regime, FitOptions, RegimeModel};
use crate::rng;
use crate::sharedgmm::{fit_shared_from_frames, SharedOptions};
use crate::trackio::NormalizedFrame;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub model: RegimeModel,
    pub n: usize,
    pub seed: u64,
}

/// Frames with the latent regime and permutation (support index) that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulated {
    pub frames: Vec<NormalizedFrame>,
    pub regimes: Vec<usize>,
    pub perms: Vec<usize>,
}

fn sample_role(g: &RoleGaussian, r: &mut rng::Rng) -> Point {
    let s = regularize_cov(&g.sigma);
    let l00 = s[0][0].sqrt();
    let l10 = s[0][1] / l00;
    let l11 = (s[1][1] - l10 * l10).max(0.0).sqrt();
    let a: f64 = r.sample(StandardNormal);
    let b: f64 = r.sample(StandardNormal);
    [g.mu[0] + l00 * a, g.mu[1] + l10 * a + l11 * b]
}

/// Draw `R ~ v`, `Π ~ w_R`, `X_k ~ N(μ_{R,k}, Σ_{R,k})` and emit `Y = ΠX`
/// (player `l` gets the location of role `map[l]`). Frames are already in
/// model coordinates: zero frame mean, unit spread, timestamps `0, 1, ...`.
pub fn simulate(spec: &GeneratorSpec) -> Result<Simulated> {
    spec.model.validate()?;
    let mut r = rng::rng_from(spec.seed, &[rng::stage::SIMULATE]);
    let regime_dist = WeightedIndex::new(spec.model.regimes.iter().map(|g| g.v))
        .map_err(|e| Error::ContractViolation(format!("regime probabilities: {e}")))?;
    let perm_dists = spec
        .model
        .regimes
        .iter()
        .map(|g| {
            WeightedIndex::new(g.weights.iter().copied())
                .map_err(|e| Error::ContractViolation(format!("permutation weights: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Simulated {
        frames: Vec::with_capacity(spec.n),
        regimes: Vec::with_capacity(spec.n),
        perms: Vec::with_capacity(spec.n),
    };
    for i in 0..spec.n {
        let reg = regime_dist.sample(&mut r);
        let j = perm_dists[reg].sample(&mut r);
        let x: Vec<Point> = spec.model.regimes[reg]
            .formation
            .roles
            .iter()
            .map(|g| sample_role(g, &mut r))
            .collect();
        let mut f = NormalizedFrame::from_model_coords(spec.model.support[j].map().iter().map(|&k| x[k]).collect());
        f.timestamp = i as f64;
        out.frames.push(f);
        out.regimes.push(reg);
        out.perms.push(j);
    }
    Ok(out)
}

/// `(1/d) Σ_k |μ̂_σ(k) − μ_k|²` under the role matching `σ` that minimizes it.
pub fn matched_mse(estimate: &[Point], truth: &[Point]) -> f64 {
    let d = truth.len();
    let cost: Vec<Vec<f64>> = truth
        .iter()
        .map(|t| {
            estimate
                .iter()
                .map(|e| (e[0] - t[0]).powi(2) + (e[1] - t[1]).powi(2))
                .collect()
        })
        .collect();
    let q = crate::assign::hungarian(&cost);
    crate::assign::assignment_cost(&cost, &q) / d as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// One-regime permutation mixture with support {identity, swap}.
    PermutationModel,
    /// Shared-component mixture on the decorrelated dataset.
    SharedGmm,
    /// Per-frame optimal assignment.
    HardAssignment,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::PermutationModel, Method::SharedGmm, Method::HardAssignment];

    pub fn name(self) -> &'static str {
        match self {
            Method::PermutationModel => "permutation-model",
            Method::SharedGmm => "shared-gmm",
            Method::HardAssignment => "hard-assignment",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoRoleConfig {
    pub deltas: Vec<f64>,
    pub p: f64,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
}

impl Default for TwoRoleConfig {
    fn default() -> Self {
        Self {
            deltas: (1..=20).map(|i| i as f64 / 10.0).collect(),
            p: 0.2,
            n: 5000,
            reps: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub delta: f64,
    pub method: Method,
    pub mse_mean: f64,
    pub mse_std: f64,
}

/// Role means `(δ, 0)` and `(−δ, 0)` with identity covariance, players swapped
/// with probability `p`.
pub fn two_role_model(delta: f64, p: f64) -> Result<RegimeModel> {
    RegimeModel::new(
        vec![Permutation::identity(2), Permutation::transposition(2, 0, 1)],
        vec![crate::permgmm::Regime {
            v: 1.0,
            formation: Formation::new(vec![
                RoleGaussian::standard([delta, 0.0]),
                RoleGaussian::standard([-delta, 0.0]),
            ]),
            weights: vec![1.0 - p, p],
        }],
    )
}

/// Per-method MSE of one replicate.
pub fn two_role_replicate(delta: f64, p: f64, n: usize, seed: u64) -> Result<[f64; 3]> {
    let truth = two_role_model(delta, p)?;
    let sim = simulate(&GeneratorSpec {
        model: truth.clone(),
        n,
        seed,
    })?;
    let true_means = truth.regimes[0].formation.means();
    let shared = fit_shared_from_frames(&sim.frames, seed, &SharedOptions::default())?;
    let init = init_one_regime(&shared.formation, &shared.pi, &truth.support)?;
    let perm = fit(&sim.frames, init, &FitOptions::default())?;
    let hard = fit_hard_assignment(&sim.frames, &HardOptions::default())?;
    Ok([
        matched_mse(&perm.regimes[0].formation.means(), &true_means),
        matched_mse(&shared.formation.means(), &true_means),
        matched_mse(&hard.formation.means(), &true_means),
    ])
}

/// Replicates run in parallel; replicate `k` at grid index `i` uses the seed
/// `derive_seed(seed, [EXPERIMENT, i, k])`, so results do not depend on
/// scheduling. Rows are ordered by delta, then [`Method::ALL`].
pub fn two_role_experiment(cfg: &TwoRoleConfig) -> Result<Vec<MseRow>> {
    if cfg.deltas.is_empty() {
        return Err(Error::Config("delta grid is empty".into()));
    }
    if cfg.reps == 0 {
        return Err(Error::Config("at least one replicate is required".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..cfg.deltas.len())
        .flat_map(|i| (0..cfg.reps).map(move |k| (i, k)))
        .collect();
    let results: Vec<[f64; 3]> = jobs
        .par_iter()
        .map(|&(i, k)| {
            let seed = rng::derive_seed(cfg.seed, &[rng::stage::EXPERIMENT, i as u64, k as u64]);
            two_role_replicate(cfg.deltas[i], cfg.p, cfg.n, seed)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(cfg.deltas.len() * 3);
    for (i, &delta) in cfg.deltas.iter().enumerate() {
        let reps = &results[i * cfg.reps..(i + 1) * cfg.reps];
        for (m, &method) in Method::ALL.iter().enumerate() {
            let xs: Vec<f64> = reps.iter().map(|r| r[m]).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = if xs.len() > 1 {
                xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
            } else {
                0.0
            };
            rows.push(MseRow {
                delta,
                method,
                mse_mean: mean,
                mse_std: var.sqrt(),
            });
        }
    }
    Ok(rows)
}

/// `start:stop:step` grid, inclusive of `stop` up to rounding.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("invalid grid {spec:?}: {e}")))?;
    match parts.as_slice() {
        [x] => Ok(vec![*x]),
        [a, b, s] if *s > 0.0 && b >= a => {
            let count = ((b - a) / s + 1e-9).floor() as usize;
            Ok((0..=count)
                .map(|i| a + i as f64 * s)
                .map(|x| (x * 1e9).round() / 1e9)
                .collect())
        }
        _ => Err(Error::Config(format!(
            "invalid grid {spec:?}; expected start:stop:step"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gausscore::empirical_moments;
    use crate::permgmm::Regime;

    #[test]
    fn identity_model_means_converge() {
        let f = Formation::new(vec![
            RoleGaussian::standard([1.0, -1.0]),
            RoleGaussian::new([3.0, 2.0], [[2.0, 0.5], [0.5, 1.0]]),
        ]);
        let model = RegimeModel::new(
            vec![Permutation::identity(2)],
            vec![Regime {
                v: 1.0,
                formation: f.clone(),
                weights: vec![1.0],
            }],
        )
        .unwrap();
        let sim = simulate(&GeneratorSpec {
            model,
            n: 100_000,
            seed: 1,
        })
        .unwrap();
        for k in 0..2 {
            let m = empirical_moments(sim.frames.iter().map(|fr| &fr.y[k])).unwrap();
            assert!((m.mu[0] - f.roles[k].mu[0]).abs() < 0.02);
            assert!((m.mu[1] - f.roles[k].mu[1]).abs() < 0.02);
        }
        let m1 = empirical_moments(sim.frames.iter().map(|fr| &fr.y[1])).unwrap();
        assert!((m1.sigma[0][1] - 0.5).abs() < 0.03);
    }

    #[test]
    fn swap_frequency_and_latents() {
        let model = two_role_model(50.0, 0.2).unwrap();
        let sim = simulate(&GeneratorSpec {
            model,
            n: 10_000,
            seed: 2,
        })
        .unwrap();
        let freq = sim.perms.iter().filter(|&&j| j == 1).count() as f64 / 1e4;
        assert!((freq - 0.2).abs() < 0.01);
        // With roles 100 apart the latent swap is visible in the data.
        for (f, &j) in sim.frames.iter().zip(&sim.perms) {
            assert_eq!(f.y[0][0] < 0.0, j == 1);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let model = two_role_model(1.0, 0.3).unwrap();
        let a = simulate(&GeneratorSpec {
            model: model.clone(),
            n: 50,
            seed: 3,
        })
        .unwrap();
        let b = simulate(&GeneratorSpec {
            model: model.clone(),
            n: 50,
            seed: 3,
        })
        .unwrap();
        let c = simulate(&GeneratorSpec { model, n: 50, seed: 4 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn mse_uses_best_matching() {
        let truth = [[1.0, 0.0], [-1.0, 0.0]];
        assert_eq!(matched_mse(&[[-1.0, 0.0], [1.0, 0.0]], &truth), 0.0);
        assert!((matched_mse(&[[1.0, 1.0], [-1.0, 0.0]], &truth) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn grid_parsing() {
        let g = parse_grid("0.1:2.0:0.1").unwrap();
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], 0.1);
        assert_eq!(g[19], 2.0);
        assert_eq!(parse_grid("0.5").unwrap(), vec![0.5]);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("a:b").is_err());
    }

    #[test]
    fn experiment_shape_and_reproducibility() {
        let cfg = TwoRoleConfig {
            deltas: vec![0.3, 2.0],
            p: 0.2,
            n: 1000,
            reps: 3,
            seed: 9,
        };
        let rows = two_role_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].method, Method::PermutationModel);
        assert_eq!(rows, two_role_experiment(&cfg).unwrap());
    }
}
