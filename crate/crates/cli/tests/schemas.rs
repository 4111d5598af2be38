mod common;

use std::fs;
use std::path::{Path, PathBuf};

use common::{ok, p, tracking_csv};
use serde_json::Value;

fn load(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("schemas")
        .join(format!("{name}.schema.json"));
    jsonschema::validator_for(&load(&path)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn check(name: &str, doc: &Value) {
    let v = schema(name);
    let errors: Vec<String> = v
        .iter_errors(doc)
        .map(|e| format!("{} at {}", e, e.instance_path()))
        .collect();
    assert!(errors.is_empty(), "{name}: {errors:#?}");
}

#[test]
fn every_json_output_matches_its_schema() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let input = tracking_csv(d, 4000, 8, &["A", "B"]);
    let frames = d.join("frames.bin");

    let stats = ok(&["ingest", "--input", p(&input), "--out", p(&frames)]);
    check("ingest_stats", &serde_json::from_slice(&stats.stdout).unwrap());

    let seg = ["--frames", p(&frames), "--segment", "0"];
    ok(&[&["fit-shared"][..], &seg, &["--out", p(&d.join("shared.json"))]].concat());
    check("shared", &load(&d.join("shared.json")));
    ok(&[
        &["select-perms"][..],
        &seg,
        &["--shared", p(&d.join("shared.json")), "--out", p(&d.join("perms.json"))],
    ]
    .concat());
    check("perms", &load(&d.join("perms.json")));
    ok(&[
        &["fit"][..],
        &seg,
        &[
            "--perms",
            p(&d.join("perms.json")),
            "--regimes",
            "2",
            "--init",
            "possession",
            "--out",
            p(&d.join("model.json")),
        ],
    ]
    .concat());
    check("model", &load(&d.join("model.json")));
    let report = ok(&[&["report", "--model", p(&d.join("model.json"))][..], &seg].concat());
    check("model_report", &serde_json::from_slice(&report.stdout).unwrap());
    let bare = ok(&["report", "--model", p(&d.join("model.json"))]);
    check("model_report", &serde_json::from_slice(&bare.stdout).unwrap());
    ok(&[
        &["fit-hard"][..],
        &seg,
        &["--team", "A", "--out", p(&d.join("hard.json"))],
    ]
    .concat());
    check("formation", &load(&d.join("hard.json")));

    let out = d.join("run");
    let summary = ok(&[
        "pipeline",
        "--input",
        p(&input),
        "--compare-regimes",
        "--team",
        "A",
        "--out",
        p(&out),
    ]);
    check("pipeline_summary", &serde_json::from_slice(&summary.stdout).unwrap());
    check("report", &load(&out.join("report.json")));
    for s in ["segment_000", "segment_001"] {
        let s = out.join(s);
        check("shared", &load(&s.join("shared.json")));
        check("perms", &load(&s.join("perms.json")));
        check("model", &load(&s.join("model.json")));
        check("formation", &load(&s.join("formation.json")));
    }

    let dist = ok(&[
        "distance",
        "--a",
        p(&d.join("hard.json")),
        "--b",
        p(&out.join("segment_001/formation.json")),
    ]);
    check("distance", &serde_json::from_slice(&dist.stdout).unwrap());

    let forms = d.join("forms");
    fs::create_dir(&forms).unwrap();
    fs::copy(d.join("hard.json"), forms.join("hard.json")).unwrap();
    for s in ["segment_000", "segment_001"] {
        fs::copy(out.join(s).join("formation.json"), forms.join(format!("{s}.json"))).unwrap();
    }
    ok(&[
        "cluster",
        "--formations",
        p(&forms),
        "--k",
        "2",
        "--out",
        p(&d.join("clusters.json")),
    ]);
    check("clusters", &load(&d.join("clusters.json")));
}

#[test]
fn schemas_reject_wrong_versions_and_shapes() {
    let formation = serde_json::json!({
        "schema_version": 1,
        "roles": [{ "mu": [0.0, 1.0], "sigma": [[1.0, 0.0], [0.0, 1.0]] }]
    });
    assert!(schema("formation").is_valid(&formation));
    let mut bumped = formation.clone();
    bumped["schema_version"] = 2.into();
    assert!(!schema("formation").is_valid(&bumped));
    let mut short = formation.clone();
    short["roles"][0]["mu"] = serde_json::json!([0.0]);
    assert!(!schema("formation").is_valid(&short));
    let mut extra = formation;
    extra["colour"] = "red".into();
    assert!(!schema("formation").is_valid(&extra));
}
