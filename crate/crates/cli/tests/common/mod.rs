#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use formlab::permgmm::Regime;
use formlab::simlab::{simulate, GeneratorSpec};
use formlab::trackio::{write_csv, TrackingFrame};
use formlab::{Formation, Permutation, Possession, RegimeModel, RoleGaussian};

pub fn planted() -> RegimeModel {
    let d = 11;
    let roles = (0..d)
        .map(|k| RoleGaussian::new([6.0 * (k % 3) as f64, 6.0 * (k / 3) as f64], [[1.0, 0.3], [0.3, 0.8]]))
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

/// Tracking CSV with `n` frames at 0.2 s spacing, split evenly over `lineups`.
pub fn tracking_csv(dir: &Path, n: usize, seed: u64, lineups: &[&str]) -> PathBuf {
    let sim = simulate(&GeneratorSpec {
        model: planted(),
        n,
        seed,
    })
    .unwrap();
    let frames: Vec<TrackingFrame> = sim
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| TrackingFrame {
            timestamp: i as f64 * 0.2,
            positions: f.y.iter().map(|p| [3.0 * p[0] - 20.0, 3.0 * p[1] + 5.0]).collect(),
            possession: if (i / 50) % 2 == 0 {
                Possession::Home
            } else {
                Possession::Away
            },
            lineup_id: lineups[i * lineups.len() / n].into(),
        })
        .collect();
    let path = dir.join("match.csv");
    write_csv(std::fs::File::create(&path).unwrap(), &frames).unwrap();
    path
}

pub fn formlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_formlab"))
        .args(args)
        .env_remove("FORMLAB_THREADS")
        .output()
        .unwrap()
}

pub fn ok(args: &[&str]) -> Output {
    let out = formlab(args);
    assert!(
        out.status.success(),
        "formlab {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Parsed error report from stderr.
pub fn error_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|_| panic!("stderr: {}", String::from_utf8_lossy(&out.stderr)))
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}
