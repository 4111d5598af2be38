use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use formlab::assign::{fit_hard_assignment, HardOptions};
use formlab::formmetrics::{
    embedding_distance, formation_overlap_index, kmeans, mixture_wasserstein_matching, sliced_embedding, KMeansOptions,
};
use formlab::permgmm::fit;
use formlab::permselect::select_permutations;
use formlab::pipeline::{
    initial_model, load_formation, load_model, model_report, read_json, run_pipeline, to_json, write_json,
    write_posteriors, Aggregate, FormationArtifact, InitSpec, ModelArtifact, PermsArtifact, PipelineConfig,
    PipelineInput, SharedArtifact,
};
use formlab::rng::derive_seed;
use formlab::sharedgmm::fit_shared_from_frames;
use formlab::simlab::{parse_grid, simulate, two_role_experiment, GeneratorSpec, TwoRoleConfig};
use formlab::trackio::{kept_frames, parse_tracking, prepare_frames, read_frames, write_frames};
use formlab::{Error, NormalizedFrame, Permutation, Result};
use serde::Serialize;

use crate::args::{Cli, Command, Format, FramesArgs};

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn base_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::from_toml_file(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn print_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            print!("{}", to_json(value)?);
            Ok(())
        }
    }
}

/// Frames of one segment; the segment may be omitted when only one is present.
fn segment_frames(args: &FramesArgs) -> Result<(u32, Vec<NormalizedFrame>)> {
    let frames = read_frames(&args.path)?;
    if frames.is_empty() {
        return Err(Error::EmptyInput);
    }
    let present: BTreeSet<u32> = frames.iter().map(|f| f.segment).collect();
    let segment = match args.segment {
        Some(s) if present.contains(&s) => s,
        Some(s) => return Err(Error::Config(format!("segment {s} not found; present: {present:?}"))),
        None if present.len() == 1 => frames[0].segment,
        None => {
            return Err(Error::Config(format!(
                "{} holds segments {present:?}; choose one with --segment",
                args.path.display()
            )))
        }
    };
    Ok((segment, frames.into_iter().filter(|f| f.segment == segment).collect()))
}

fn duration(frames: &[NormalizedFrame]) -> f64 {
    match (frames.first(), frames.last()) {
        (Some(a), Some(b)) => b.timestamp - a.timestamp,
        _ => 0.0,
    }
}

#[derive(Serialize)]
struct DistanceReport {
    mixture_wasserstein: f64,
    /// `matching[k]` is the role of `b` paired with role `k` of `a`.
    matching: Permutation,
    sliced_distance: f64,
    overlap_index: [f64; 2],
}

#[derive(Serialize)]
struct ClusterMember {
    file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    team: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    segment: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    duration: Option<f64>,
    cluster: usize,
}

#[derive(Serialize)]
struct TimeInCluster {
    team: String,
    cluster: usize,
    /// Seconds, counting one unit for a formation without a duration.
    time: f64,
    percent: f64,
}

#[derive(Serialize)]
struct ClusterReport {
    k: usize,
    directions: usize,
    seed: u64,
    inertia: f64,
    members: Vec<ClusterMember>,
    centroids: Vec<Vec<f64>>,
    /// File closest to each centroid.
    representatives: Vec<Option<String>>,
    time_in_cluster: Vec<TimeInCluster>,
}

#[derive(Serialize)]
struct PipelineSummary {
    out: PathBuf,
    segments: usize,
    aggregate: Aggregate,
}

fn time_in_cluster(members: &[ClusterMember], k: usize) -> Vec<TimeInCluster> {
    let mut by_team: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for m in members {
        if let Some(team) = &m.team {
            by_team.entry(team).or_insert_with(|| vec![0.0; k])[m.cluster] += m.duration.unwrap_or(1.0);
        }
    }
    let mut rows = Vec::new();
    for (team, times) in by_team {
        let total: f64 = times.iter().sum();
        for (cluster, &time) in times.iter().enumerate() {
            rows.push(TimeInCluster {
                team: team.to_string(),
                cluster,
                time,
                percent: if total > 0.0 { 100.0 * time / total } else { 0.0 },
            });
        }
    }
    rows
}

fn formation_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn run(cli: Cli) -> Result<()> {
    init_threads(cli.threads)?;
    let mut cfg = base_config(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest {
            input,
            format,
            ingest,
            out,
        } => {
            ingest.apply(&mut cfg);
            cfg.validate()?;
            let parsed = parse_tracking(&input, Format::resolve(format, &input))?;
            let (frames, stats) = prepare_frames(parsed, &cfg.ingest())?;
            if frames.is_empty() {
                return Err(Error::EmptyInput);
            }
            write_frames(&out, &frames)?;
            print_json(&stats, None)
        }
        Command::FitShared { frames, seed, em, out } => {
            seed.apply(&mut cfg);
            em.apply(&mut cfg);
            cfg.validate()?;
            let (segment, all) = segment_frames(&frames)?;
            let kept = kept_frames(&all);
            let seed = derive_seed(cfg.seed, &[segment as u64]);
            let fit = fit_shared_from_frames(&kept, seed, &cfg.shared())?;
            write_json(&out, &SharedArtifact::new(fit, seed))
        }
        Command::SelectPerms {
            frames,
            shared,
            select,
            seed,
            out,
        } => {
            select.apply(&mut cfg);
            seed.apply(&mut cfg);
            cfg.validate()?;
            let (segment, all) = segment_frames(&frames)?;
            let shared: SharedArtifact = read_json(&shared)?;
            let seed = derive_seed(cfg.seed, &[segment as u64]);
            let set = select_permutations(&all, &shared.pi, &cfg.select(seed))?;
            write_json(
                &out,
                &PermsArtifact {
                    d: shared.formation.d(),
                    set,
                },
            )
        }
        Command::Fit {
            frames,
            perms,
            fit: fit_args,
            em,
            seed,
            out,
        } => {
            fit_args.apply(&mut cfg);
            em.apply(&mut cfg);
            seed.apply(&mut cfg);
            cfg.validate()?;
            let (_, all) = segment_frames(&frames)?;
            let kept = kept_frames(&all);
            let perms: PermsArtifact = read_json(&perms)?;
            let shared = match &cfg.init {
                InitSpec::Shared(Some(p)) => Some(read_json::<SharedArtifact>(p)?),
                InitSpec::Shared(None) => {
                    return Err(Error::Config(
                        "--init shared needs a fit: use shared:<shared.json>".into(),
                    ))
                }
                _ => None,
            };
            let init = initial_model(
                &kept,
                &perms.set.perms(),
                cfg.regimes,
                &cfg.init,
                shared.as_ref().map(|s| (&s.formation, s.pi.as_slice())),
                &cfg,
            )?;
            let model = fit(&kept, init, &cfg.fit())?;
            write_json(
                &out,
                &ModelArtifact {
                    init: cfg.init.to_string(),
                    model,
                },
            )
        }
        Command::FitHard { frames, em, team, out } => {
            em.apply(&mut cfg);
            cfg.validate()?;
            let (segment, all) = segment_frames(&frames)?;
            let kept = kept_frames(&all);
            let opts = HardOptions {
                max_iter: cfg.max_iter,
                tol: cfg.tol,
            };
            let hard = fit_hard_assignment(&kept, &opts)?;
            let artifact = FormationArtifact {
                formation: hard.formation,
                team: team.or(cfg.team),
                segment: Some(segment),
                duration: Some(duration(&kept)),
            };
            write_json(&out, &artifact)
        }
        Command::Posteriors { model, frames, out } => {
            let model = load_model(&model)?;
            let (_, all) = segment_frames(&frames)?;
            write_posteriors(create(&out)?, &kept_frames(&all), &model)
        }
        Command::Report {
            model,
            frames,
            segment,
            out,
        } => {
            let model = load_model(&model)?;
            let kept = match frames {
                Some(path) => Some(kept_frames(&segment_frames(&FramesArgs { path, segment })?.1)),
                None => None,
            };
            print_json(&model_report(&model, kept.as_deref())?, out.as_deref())
        }
        Command::Distance { a, b, directions, out } => {
            let fa = load_formation(&a)?.formation;
            let fb = load_formation(&b)?.formation;
            let (mixture_wasserstein, matching) = mixture_wasserstein_matching(&fa, &fb)?;
            let sliced_distance =
                embedding_distance(&sliced_embedding(&fa, directions)?, &sliced_embedding(&fb, directions)?)?;
            let report = DistanceReport {
                mixture_wasserstein,
                matching,
                sliced_distance,
                overlap_index: [formation_overlap_index(&fa), formation_overlap_index(&fb)],
            };
            print_json(&report, out.as_deref())
        }
        Command::Cluster {
            formations,
            k,
            restarts,
            max_iter,
            directions,
            seed,
            out,
            csv,
        } => {
            seed.apply(&mut cfg);
            let files = formation_files(&formations)?;
            if files.is_empty() {
                return Err(Error::EmptyInput);
            }
            let loaded = files.iter().map(|f| load_formation(f)).collect::<Result<Vec<_>>>()?;
            let points = loaded
                .iter()
                .map(|f| sliced_embedding(&f.formation, directions).map(|e| e.values))
                .collect::<Result<Vec<_>>>()?;
            let result = kmeans(&points, k, &KMeansOptions { restarts, max_iter }, cfg.seed)?;
            let name = |p: &PathBuf| {
                p.file_name()
                    .map_or_else(String::new, |n| n.to_string_lossy().into_owned())
            };
            let members: Vec<ClusterMember> = files
                .iter()
                .zip(loaded)
                .zip(&result.labels)
                .map(|((p, f), &cluster)| ClusterMember {
                    file: name(p),
                    team: f.team,
                    segment: f.segment,
                    duration: f.duration,
                    cluster,
                })
                .collect();
            let report = ClusterReport {
                k,
                directions,
                seed: cfg.seed,
                inertia: result.inertia,
                time_in_cluster: time_in_cluster(&members, k),
                members,
                centroids: result.centroids,
                representatives: result
                    .representatives
                    .iter()
                    .map(|r| r.map(|i| name(&files[i])))
                    .collect(),
            };
            write_json(&out, &report)?;
            if !report.time_in_cluster.is_empty() {
                let path = csv.unwrap_or_else(|| out.with_extension("csv"));
                let mut w = csv::Writer::from_writer(create(&path)?);
                for row in &report.time_in_cluster {
                    w.serialize(row).map_err(csv_err)?;
                }
                w.flush().map_err(|e| Error::io(&path, e))?;
            }
            Ok(())
        }
        Command::Simulate {
            model,
            n,
            seed,
            out,
            latents,
        } => {
            seed.apply(&mut cfg);
            let model = load_model(&model)?;
            let sim = simulate(&GeneratorSpec {
                model: model.clone(),
                n,
                seed: cfg.seed,
            })?;
            write_frames(&out, &sim.frames)?;
            if let Some(path) = latents {
                let mut w = csv::Writer::from_writer(create(&path)?);
                w.write_record(["frame_index", "regime", "permutation"])
                    .map_err(csv_err)?;
                for (i, (r, j)) in sim.regimes.iter().zip(&sim.perms).enumerate() {
                    let map: Vec<String> = model.support[*j].map().iter().map(|k| k.to_string()).collect();
                    w.write_record([i.to_string(), r.to_string(), map.join(" ")])
                        .map_err(csv_err)?;
                }
                w.flush().map_err(|e| Error::io(&path, e))?;
            }
            Ok(())
        }
        Command::BenchTwoRole {
            deltas,
            p,
            n,
            reps,
            seed,
            out,
        } => {
            seed.apply(&mut cfg);
            let rows = two_role_experiment(&TwoRoleConfig {
                deltas: parse_grid(&deltas)?,
                p,
                n,
                reps,
                seed: cfg.seed,
            })?;
            let mut w = csv::Writer::from_writer(create(&out)?);
            for row in &rows {
                w.serialize(row).map_err(csv_err)?;
            }
            w.flush().map_err(|e| Error::io(&out, e))
        }
        Command::Pipeline {
            input,
            frames,
            format,
            ingest,
            select,
            fit: fit_args,
            em,
            seed,
            compare_regimes,
            team,
            out,
        } => {
            ingest.apply(&mut cfg);
            select.apply(&mut cfg);
            fit_args.apply(&mut cfg);
            em.apply(&mut cfg);
            seed.apply(&mut cfg);
            cfg.compare_regimes |= compare_regimes;
            if team.is_some() {
                cfg.team = team;
            }
            cfg.validate()?;
            let input = match (input, frames) {
                (Some(path), _) => PipelineInput::Tracking {
                    format: Format::resolve(format, &path),
                    path,
                },
                (None, Some(path)) => PipelineInput::Frames(path),
                (None, None) => return Err(Error::Config("either --input or --frames is required".into())),
            };
            let report = run_pipeline(&cfg, &input, &out)?;
            print_json(
                &PipelineSummary {
                    out,
                    segments: report.segments.len(),
                    aggregate: report.aggregate,
                },
                None,
            )
        }
    }
}
