use formlab::formmetrics::mixture_wasserstein_matching;
use formlab::permgmm::{fit, frame_perm_prob, init_one_regime, no_swap_probability, Regime};
use formlab::pipeline::{read_json, run_pipeline, ModelArtifact, PipelineConfig, PipelineInput};
use formlab::sharedgmm::{fit_shared_from_frames, SharedOptions};
use formlab::simlab::{simulate, GeneratorSpec, Simulated};
use formlab::trackio::{write_csv, InputFormat, TrackingFrame};
use formlab::{FitOptions, Formation, Permutation, Possession, RegimeModel, RoleGaussian};

fn planted(d: usize, spacing: f64) -> RegimeModel {
    let roles = (0..d)
        .map(|k| {
            RoleGaussian::new(
                [spacing * (k % 3) as f64, spacing * (k / 3) as f64],
                [[1.0, 0.3], [0.3, 0.8]],
            )
        })
        .collect();
    RegimeModel::new(
        vec![
            Permutation::identity(d),
            Permutation::transposition(d, 0, 1),
            Permutation::transposition(d, 2, 4),
        ],
        vec![Regime {
            v: 1.0,
            formation: Formation::new(roles),
            weights: vec![0.7, 0.2, 0.1],
        }],
    )
    .unwrap()
}

fn fit_from_shared(sim: &Simulated, truth: &RegimeModel, seed: u64) -> RegimeModel {
    let shared = fit_shared_from_frames(&sim.frames, seed, &SharedOptions::default()).unwrap();
    let init = init_one_regime(&shared.formation, &shared.pi, &truth.support).unwrap();
    fit(&sim.frames, init, &FitOptions::default()).unwrap()
}

/// Weight of each true permutation under the fitted model, after mapping
/// fitted role labels onto the true ones.
fn weights_in_truth_labels(fitted: &RegimeModel, truth: &RegimeModel) -> (Vec<f64>, Permutation) {
    let (_, matching) =
        mixture_wasserstein_matching(&fitted.regimes[0].formation, &truth.regimes[0].formation).unwrap();
    let to_truth = |q: &Permutation| Permutation::new(q.map().iter().map(|&k| matching.map()[k]).collect()).unwrap();
    let w = truth
        .support
        .iter()
        .map(|t| {
            fitted
                .support
                .iter()
                .zip(&fitted.regimes[0].weights)
                .filter(|(q, _)| to_truth(q) == *t)
                .map(|(_, w)| *w)
                .sum()
        })
        .collect();
    (w, matching)
}

#[test]
fn generator_round_trip_recovers_weights_and_means() {
    let truth = planted(6, 6.0);
    for seed in [11u64, 12, 13] {
        let sim = simulate(&GeneratorSpec {
            model: truth.clone(),
            n: 5000,
            seed,
        })
        .unwrap();
        let fitted = fit_from_shared(&sim, &truth, seed);
        let (w, matching) = weights_in_truth_labels(&fitted, &truth);
        for (got, want) in w.iter().zip(&truth.regimes[0].weights) {
            assert!((got - want).abs() < 0.03, "seed {seed}: weights {w:?}");
        }
        for (k, role) in fitted.regimes[0].formation.roles.iter().enumerate() {
            let t = &truth.regimes[0].formation.roles[matching.map()[k]];
            assert!(
                (role.mu[0] - t.mu[0]).abs() < 0.05 && (role.mu[1] - t.mu[1]).abs() < 0.05,
                "seed {seed}: role {k}"
            );
        }
        let p = no_swap_probability(&fitted, &sim.frames).unwrap();
        assert!((p - 0.7).abs() < 0.03, "seed {seed}: no-swap {p}");
    }
}

#[test]
fn posterior_argmax_matches_latent_permutation() {
    let truth = planted(6, 6.0);
    let sim = simulate(&GeneratorSpec {
        model: truth.clone(),
        n: 3000,
        seed: 21,
    })
    .unwrap();
    let fitted = fit_from_shared(&sim, &truth, 21);
    let (_, matching) = weights_in_truth_labels(&fitted, &truth);
    let mut agree = 0;
    for (f, &j) in sim.frames.iter().zip(&sim.perms) {
        let post = frame_perm_prob(&fitted, &f.y, 0).unwrap();
        let best = (0..post.len()).max_by(|&a, &b| post[a].total_cmp(&post[b])).unwrap();
        let roles: Vec<usize> = fitted.support[best].map().iter().map(|&k| matching.map()[k]).collect();
        if roles == truth.support[j].map() {
            agree += 1;
        }
    }
    let rate = agree as f64 / sim.frames.len() as f64;
    assert!(rate >= 0.95, "agreement {rate}");
}

#[test]
fn pipeline_on_tracking_file_recovers_planted_support() {
    let truth = planted(11, 6.0);
    let sim = simulate(&GeneratorSpec {
        model: truth.clone(),
        n: 4000,
        seed: 31,
    })
    .unwrap();
    let frames: Vec<TrackingFrame> = sim
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| TrackingFrame {
            timestamp: i as f64 * 0.2,
            positions: f.y.iter().map(|p| [3.0 * p[0] - 20.0, 3.0 * p[1] + 5.0]).collect(),
            possession: Possession::Unassigned,
            lineup_id: "A".into(),
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("match.csv");
    write_csv(std::fs::File::create(&input).unwrap(), &frames).unwrap();
    let out = dir.path().join("out");
    let report = run_pipeline(
        &PipelineConfig::default(),
        &PipelineInput::Tracking {
            path: input,
            format: InputFormat::Csv,
        },
        &out,
    )
    .unwrap();
    assert_eq!(report.segments.len(), 1);
    assert_eq!(report.segments[0].n_frames, 800);
    let model: ModelArtifact = read_json(&out.join("segment_000/model.json")).unwrap();
    assert_eq!(model.model.support.len(), 3);
    let (w, _) = weights_in_truth_labels(&model.model, &truth);
    for (got, want) in w.iter().zip(&truth.regimes[0].weights) {
        assert!((got - want).abs() < 0.05, "weights {w:?}");
    }
    for name in [
        "shared.json",
        "perms.json",
        "model.json",
        "formation.json",
        "posteriors.csv",
    ] {
        assert!(out.join("segment_000").join(name).exists(), "{name}");
    }
    assert!(out.join("report.json").exists());
}
