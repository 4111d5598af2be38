mod common;

use std::fs;

use common::{error_json, formlab, ok, p, tracking_csv};
use formlab::pipeline::{read_json, ModelArtifact, SharedArtifact};
use formlab::rng::derive_seed;

fn json(path: &std::path::Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn staged_commands_reproduce_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let input = tracking_csv(d, 2000, 5, &["A"]);
    let frames = d.join("frames.bin");
    ok(&["ingest", "--input", p(&input), "--out", p(&frames)]);
    ok(&[
        "fit-shared",
        "--frames",
        p(&frames),
        "--seed",
        "9",
        "--out",
        p(&d.join("shared.json")),
    ]);
    ok(&[
        "select-perms",
        "--frames",
        p(&frames),
        "--shared",
        p(&d.join("shared.json")),
        "--seed",
        "9",
        "--out",
        p(&d.join("perms.json")),
    ]);
    let init = format!("shared:{}", p(&d.join("shared.json")));
    ok(&[
        "fit",
        "--frames",
        p(&frames),
        "--perms",
        p(&d.join("perms.json")),
        "--init",
        &init,
        "--out",
        p(&d.join("model.json")),
    ]);
    ok(&[
        "posteriors",
        "--model",
        p(&d.join("model.json")),
        "--frames",
        p(&frames),
        "--out",
        p(&d.join("posteriors.csv")),
    ]);
    let out = d.join("run");
    ok(&["pipeline", "--input", p(&input), "--seed", "9", "--out", p(&out)]);

    let seg = out.join("segment_000");
    for f in ["shared.json", "perms.json", "posteriors.csv"] {
        assert_eq!(fs::read(d.join(f)).unwrap(), fs::read(seg.join(f)).unwrap(), "{f}");
    }
    let staged: ModelArtifact = read_json(&d.join("model.json")).unwrap();
    let piped: ModelArtifact = read_json(&seg.join("model.json")).unwrap();
    assert_eq!(staged.model, piped.model);
    assert_eq!(staged.init, init);
    assert_eq!(piped.init, "shared");
    let shared: SharedArtifact = read_json(&seg.join("shared.json")).unwrap();
    assert_eq!(shared.seed, derive_seed(9, &[0]));
}

#[test]
fn missing_input_exits_with_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.csv");
    for args in [
        vec!["pipeline", "--input", p(&missing), "--out", p(dir.path())],
        vec!["ingest", "--input", p(&missing), "--out", p(&dir.path().join("f.bin"))],
    ] {
        let out = formlab(&args);
        assert_eq!(out.status.code(), Some(2));
        assert_eq!(error_json(&out)["error"], "io");
    }
}

#[test]
fn usage_and_config_errors_exit_with_one() {
    let out = formlab(&[
        "fit", "--frames", "f.bin", "--perms", "p.json", "--init", "bogus", "--out", "m.json",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"], "usage");

    let dir = tempfile::tempdir().unwrap();
    let input = tracking_csv(dir.path(), 2000, 5, &["A"]);
    let out = formlab(&[
        "pipeline",
        "--input",
        p(&input),
        "--p-thresh",
        "1.5",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_json(&out);
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("p_thresh"));
}

#[test]
fn three_regimes_with_identity_half_are_forwarded() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let input = tracking_csv(d, 2000, 5, &["A"]);
    let out = d.join("run");
    ok(&[
        "pipeline",
        "--input",
        p(&input),
        "--regimes",
        "3",
        "--init",
        "identity-half",
        "--out",
        p(&out),
    ]);
    let model: ModelArtifact = read_json(&out.join("segment_000/model.json")).unwrap();
    assert_eq!(model.init, "identity-half");
    assert_eq!(model.model.n_regimes(), 3);
    let report = json(&out.join("report.json"));
    assert_eq!(report["config"]["regimes"], 3);
    assert_eq!(report["config"]["init"], "identity-half");
    let header = fs::read_to_string(out.join("segment_000/posteriors.csv")).unwrap();
    assert!(header.starts_with("frame_index,t,v_1,v_2,v_3,w_identity_1,w_identity_2,w_identity_3\n"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let input = tracking_csv(d, 2000, 5, &["A"]);
    let cfg = d.join("formlab.toml");
    fs::write(&cfg, "seed = 5\nregimes = 2\ninit = \"chrono\"\nteam = \"Blue\"\n").unwrap();
    let out = d.join("run");
    ok(&[
        "--config",
        p(&cfg),
        "pipeline",
        "--input",
        p(&input),
        "--regimes",
        "1",
        "--init",
        "shared",
        "--out",
        p(&out),
    ]);
    let report = json(&out.join("report.json"));
    assert_eq!(report["config"]["seed"], 5);
    assert_eq!(report["config"]["regimes"], 1);
    assert_eq!(report["config"]["team"], "Blue");
    let shared: SharedArtifact = read_json(&out.join("segment_000/shared.json")).unwrap();
    assert_eq!(shared.seed, derive_seed(5, &[0]));
    assert_eq!(json(&out.join("segment_000/formation.json"))["team"], "Blue");

    fs::write(&cfg, "stride = 0\n").unwrap();
    let bad = formlab(&["--config", p(&cfg), "pipeline", "--input", p(&input), "--out", p(&out)]);
    assert_eq!(error_json(&bad)["error"], "config");
}

#[test]
fn pipeline_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let input = tracking_csv(d, 4000, 6, &["A", "B"]);
    let mut runs = Vec::new();
    for threads in ["1", "4"] {
        let out = d.join(format!("run{threads}"));
        ok(&[
            "--threads",
            threads,
            "pipeline",
            "--input",
            p(&input),
            "--compare-regimes",
            "--out",
            p(&out),
        ]);
        runs.push(out);
    }
    let env_out = d.join("run_env");
    let run = std::process::Command::new(env!("CARGO_BIN_EXE_formlab"))
        .args([
            "pipeline",
            "--input",
            p(&input),
            "--compare-regimes",
            "--out",
            p(&env_out),
        ])
        .env("FORMLAB_THREADS", "2")
        .output()
        .unwrap();
    assert!(run.status.success());
    runs.push(env_out);

    let report = json(&runs[0].join("report.json"));
    assert_eq!(report["segments"].as_array().unwrap().len(), 2);
    assert_eq!(report["substitutions"].as_array().unwrap().len(), 1);
    let mut files = vec!["report.json".to_string()];
    for s in ["segment_000", "segment_001"] {
        for f in [
            "shared.json",
            "perms.json",
            "model.json",
            "formation.json",
            "posteriors.csv",
        ] {
            files.push(format!("{s}/{f}"));
        }
    }
    for other in &runs[1..] {
        for f in &files {
            assert_eq!(
                fs::read(runs[0].join(f)).unwrap(),
                fs::read(other.join(f)).unwrap(),
                "{f}"
            );
        }
    }
}

#[test]
fn stage_commands_need_a_segment_when_several_exist() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let input = tracking_csv(d, 4000, 6, &["A", "B"]);
    let frames = d.join("frames.bin");
    let stats = ok(&[
        "ingest",
        "--input",
        p(&input),
        "--attack-side",
        "right,left",
        "--out",
        p(&frames),
    ]);
    let stats: serde_json::Value = serde_json::from_slice(&stats.stdout).unwrap();
    assert_eq!(stats["segments"], 2);
    assert_eq!(stats["kept"], 800);

    let shared = d.join("shared.json");
    let out = formlab(&["fit-shared", "--frames", p(&frames), "--out", p(&shared)]);
    assert_eq!(error_json(&out)["error"], "config");
    ok(&[
        "fit-shared",
        "--frames",
        p(&frames),
        "--segment",
        "1",
        "--out",
        p(&shared),
    ]);
    let out = formlab(&[
        "fit-shared",
        "--frames",
        p(&frames),
        "--segment",
        "7",
        "--out",
        p(&shared),
    ]);
    assert_eq!(error_json(&out)["error"], "config");

    let out = formlab(&[
        "ingest",
        "--input",
        p(&input),
        "--attack-side",
        "left,right,left",
        "--out",
        p(&frames),
    ]);
    assert_eq!(error_json(&out)["error"], "config");
}

#[test]
fn fit_requires_a_shared_file_for_shared_init() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let input = tracking_csv(d, 2000, 5, &["A"]);
    let frames = d.join("frames.bin");
    ok(&["ingest", "--input", p(&input), "--out", p(&frames)]);
    ok(&["fit-shared", "--frames", p(&frames), "--out", p(&d.join("shared.json"))]);
    ok(&[
        "select-perms",
        "--frames",
        p(&frames),
        "--shared",
        p(&d.join("shared.json")),
        "--out",
        p(&d.join("perms.json")),
    ]);
    let out = formlab(&[
        "fit",
        "--frames",
        p(&frames),
        "--perms",
        p(&d.join("perms.json")),
        "--out",
        p(&d.join("m.json")),
    ]);
    assert_eq!(error_json(&out)["error"], "config");
    ok(&[
        "fit",
        "--frames",
        p(&frames),
        "--perms",
        p(&d.join("perms.json")),
        "--regimes",
        "2",
        "--init",
        "chrono",
        "--out",
        p(&d.join("m.json")),
    ]);
    let report = ok(&["report", "--model", p(&d.join("m.json")), "--frames", p(&frames)]);
    let report: serde_json::Value = serde_json::from_slice(&report.stdout).unwrap();
    assert_eq!(report["n_regimes"], 2);
    assert_eq!(report["n_frames"], 400);
    assert_eq!(report["possession_correlation"].as_array().unwrap().len(), 2);
    assert!(report["possession_correlation"][0]["H"].is_number());
}

#[test]
fn simulate_writes_frames_and_latents() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let model = d.join("truth.json");
    formlab::pipeline::write_json(
        &model,
        &ModelArtifact {
            init: "planted".into(),
            model: common::planted(),
        },
    )
    .unwrap();
    let frames = d.join("sim.bin");
    let latents = d.join("latents.csv");
    ok(&[
        "simulate",
        "--model",
        p(&model),
        "--n",
        "300",
        "--seed",
        "4",
        "--out",
        p(&frames),
        "--latents",
        p(&latents),
    ]);
    let sim = formlab::simlab::simulate(&formlab::simlab::GeneratorSpec {
        model: common::planted(),
        n: 300,
        seed: 4,
    })
    .unwrap();
    assert_eq!(formlab::trackio::read_frames(&frames).unwrap(), sim.frames);
    let rows: Vec<String> = fs::read_to_string(&latents)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(rows.len(), 301);
    assert_eq!(rows[0], "frame_index,regime,permutation");
    let j = sim.perms[0];
    let map: Vec<String> = common::planted().support[j]
        .map()
        .iter()
        .map(|k| k.to_string())
        .collect();
    assert_eq!(rows[1], format!("0,0,{}", map.join(" ")));
}

#[test]
fn bench_two_role_writes_mse_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mse.csv");
    ok(&[
        "bench-two-role",
        "--deltas",
        "0.5:1.0:0.5",
        "--n",
        "1000",
        "--reps",
        "2",
        "--seed",
        "3",
        "--out",
        p(&out),
    ]);
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["delta", "method", "mse_mean", "mse_std"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 6);
    let methods: Vec<&str> = rows[..3].iter().map(|r| &r[1]).collect();
    assert_eq!(methods, ["permutation-model", "shared-gmm", "hard-assignment"]);
    assert_eq!(&rows[3][0], "1.0");
}

#[test]
fn cluster_reports_time_in_cluster() {
    use formlab::pipeline::{write_json, FormationArtifact};
    use formlab::{Formation, RoleGaussian};

    let dir = tempfile::tempdir().unwrap();
    let forms = dir.path().join("forms");
    fs::create_dir(&forms).unwrap();
    let template = |shift: f64, wide: bool| {
        Formation::new(
            (0..4)
                .map(|k| {
                    let x = if wide { 3.0 * k as f64 } else { 0.5 * k as f64 };
                    RoleGaussian::standard([x + shift, 0.0])
                })
                .collect(),
        )
    };
    let specs = [
        ("Red", 0.0, false, 60.0),
        ("Red", 0.01, true, 180.0),
        ("Blue", 0.02, true, 90.0),
        ("Blue", -0.01, true, 30.0),
    ];
    for (i, (team, shift, wide, secs)) in specs.iter().enumerate() {
        let f = FormationArtifact {
            formation: template(*shift, *wide),
            team: Some(team.to_string()),
            segment: Some(i as u32),
            duration: Some(*secs),
        };
        write_json(&forms.join(format!("f{i}.json")), &f).unwrap();
    }
    let out = dir.path().join("clusters.json");
    ok(&[
        "cluster",
        "--formations",
        p(&forms),
        "--k",
        "2",
        "--seed",
        "1",
        "--out",
        p(&out),
    ]);
    let report = json(&out);
    let labels: Vec<u64> = report["members"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["cluster"].as_u64().unwrap())
        .collect();
    assert_ne!(labels[0], labels[1]);
    assert_eq!(labels[1], labels[2]);
    assert_eq!(labels[2], labels[3]);

    let table = fs::read_to_string(dir.path().join("clusters.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "team,cluster,time,percent");
    assert_eq!(lines.len(), 5);
    let wide = labels[1];
    let red_wide = lines.iter().find(|l| l.starts_with(&format!("Red,{wide},"))).unwrap();
    assert_eq!(*red_wide, format!("Red,{wide},180.0,75.0"));
    let blue_wide = lines.iter().find(|l| l.starts_with(&format!("Blue,{wide},"))).unwrap();
    assert_eq!(*blue_wide, format!("Blue,{wide},120.0,100.0"));
}

#[test]
fn distance_of_a_formation_to_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f.json");
    let formation = common::planted().regimes[0].formation.clone();
    formlab::pipeline::write_json(&f, &formlab::pipeline::FormationArtifact::bare(formation.clone())).unwrap();
    let g = dir.path().join("g.json");
    formlab::pipeline::write_json(
        &g,
        &formlab::pipeline::FormationArtifact::bare(formation.relabeled(&[1, 0, 2, 3, 4, 5, 6, 7, 8, 9, 10])),
    )
    .unwrap();
    let out = ok(&["distance", "--a", p(&f), "--b", p(&g)]);
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r["mixture_wasserstein"].as_f64().unwrap() < 1e-9);
    assert!(r["sliced_distance"].as_f64().unwrap() < 1e-12);
    assert_eq!(r["matching"][0], 1);
    assert_eq!(r["matching"][1], 0);
}
