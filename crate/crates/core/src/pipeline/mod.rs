//! End-to-end estimation: shared fit, support selection, permutation mixture,
//! posteriors and reports, per segment.

mod artifact;
mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use artifact::{
    from_json, load_formation, load_model, read_json, to_json, write_json, write_posteriors, FormationArtifact,
    ModelArtifact, PermsArtifact, SharedArtifact, Versioned, SCHEMA_VERSION,
};
pub use config::{InitSpec, PipelineConfig};

use crate::error::{Error, Result};
use crate::formmetrics::{formation_overlap_index, substitution_distance_report, SubstitutionRow};
use crate::gausscore::{Formation, Permutation};
use crate::permgmm::{
    avg_permutation, fit, init_multi_regime, init_one_regime, no_swap_probability, no_swap_probability_parameters,
    possession_correlation, weighted_average, RegimeModel,
};
use crate::permselect::select_permutations;
use crate::rng;
use crate::sharedgmm::fit_shared_from_frames;
use crate::trackio::{
    parse_tracking, prepare_frames, read_frames, IngestStats, InputFormat, NormalizedFrame, Possession,
};

pub enum PipelineInput {
    Tracking { path: PathBuf, format: InputFormat },
    Frames(PathBuf),
}

/// Summary of one fitted model, as printed by `report`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub n_regimes: usize,
    pub support: Vec<Permutation>,
    pub regime_probabilities: Vec<f64>,
    /// `avg_permutation[r][l][k]`.
    pub avg_permutation: Vec<Vec<Vec<f64>>>,
    /// Posterior-based when frames are available.
    pub no_swap_probability: Option<f64>,
    pub no_swap_probability_parameters: f64,
    /// Frames the posterior quantities were computed on.
    pub n_frames: usize,
    /// `possession_correlation[r]` maps possession code to the Pearson
    /// correlation of the regime posterior with that possession indicator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub possession_correlation: Option<Vec<BTreeMap<String, Option<f64>>>>,
}

pub fn model_report(model: &RegimeModel, frames: Option<&[NormalizedFrame]>) -> Result<ModelReport> {
    let frames = frames.filter(|f| !f.is_empty());
    let labelled = frames.is_some_and(|f| f.iter().any(|x| x.possession != Possession::Unassigned));
    let corr = match frames {
        Some(f) if labelled => Some(
            possession_correlation(model, f)?
                .into_iter()
                .map(|row| {
                    Possession::ALL
                        .iter()
                        .zip(row)
                        .map(|(h, c)| (h.code().to_string(), c))
                        .collect()
                })
                .collect(),
        ),
        _ => None,
    };
    Ok(ModelReport {
        n_regimes: model.n_regimes(),
        support: model.support.clone(),
        regime_probabilities: model.regimes.iter().map(|r| r.v).collect(),
        avg_permutation: (0..model.n_regimes()).map(|r| avg_permutation(model, r)).collect(),
        no_swap_probability: frames.map(|f| no_swap_probability(model, f)).transpose()?,
        no_swap_probability_parameters: no_swap_probability_parameters(model),
        n_frames: frames.map_or(0, |f| f.len()),
        possession_correlation: corr,
    })
}

/// Overlap index of the one-regime formation against those of a two-regime
/// fit, regimes ordered so that `bc_two[0] <= bc_two[1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapComparison {
    pub bc_one: f64,
    pub bc_two: [f64; 2],
    /// Index into the two-regime model of each `bc_two` entry.
    pub regime_order: [usize; 2],
    pub diff: [f64; 2],
}

pub fn overlap_comparison(one: &RegimeModel, two: &RegimeModel) -> Result<OverlapComparison> {
    if one.n_regimes() != 1 || two.n_regimes() != 2 {
        return Err(Error::ContractViolation(
            "comparison needs a 1- and a 2-regime model".into(),
        ));
    }
    let bc_one = formation_overlap_index(&one.regimes[0].formation);
    let b: Vec<f64> = two
        .regimes
        .iter()
        .map(|r| formation_overlap_index(&r.formation))
        .collect();
    let order = if b[0] <= b[1] { [0, 1] } else { [1, 0] };
    let bc_two = [b[order[0]], b[order[1]]];
    Ok(OverlapComparison {
        bc_one,
        bc_two,
        regime_order: order,
        diff: [bc_two[0] - bc_one, bc_two[1] - bc_one],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub segment: u32,
    pub n_frames: usize,
    pub n_held_out: usize,
    pub duration: f64,
    pub support_size: usize,
    pub discarded: usize,
    pub final_loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub underflow_frames: usize,
    pub model: ModelReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap_comparison: Option<OverlapComparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_frames: usize,
    /// Frame-weighted over segments.
    pub no_swap_probability: Option<f64>,
    pub no_swap_probability_parameters: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config: PipelineConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ingest: Option<IngestStats>,
    pub segments: Vec<SegmentReport>,
    pub aggregate: Aggregate,
    /// Distances between consecutive segment formations.
    pub substitutions: Vec<SubstitutionRow>,
}

/// Everything produced for one segment.
pub struct SegmentOutput {
    pub shared: SharedArtifact,
    pub perms: PermsArtifact,
    pub model: ModelArtifact,
    pub formation: FormationArtifact,
    pub posteriors_csv: Vec<u8>,
    pub report: SegmentReport,
}

pub struct PipelineOutput {
    pub segments: Vec<SegmentOutput>,
    pub report: PipelineReport,
}

/// Initial model for `regimes` regimes under `init`.
pub fn initial_model(
    frames: &[NormalizedFrame],
    support: &[Permutation],
    regimes: usize,
    init: &InitSpec,
    shared: Option<(&Formation, &[Vec<f64>])>,
    cfg: &PipelineConfig,
) -> Result<RegimeModel> {
    let pi = shared.map(|s| s.1);
    if regimes == 1 {
        if let (InitSpec::Shared(_), Some((f, pi))) = (init, shared) {
            return init_one_regime(f, pi, support);
        }
    }
    if matches!(init, InitSpec::Shared(_)) && shared.is_none() {
        return Err(Error::Config("shared initialization needs a shared fit".into()));
    }
    init_multi_regime(frames, support, regimes, init.multi_regime_mode(), pi, &cfg.fit())
}

fn fit_model(
    frames: &[NormalizedFrame],
    support: &[Permutation],
    regimes: usize,
    shared: &SharedArtifact,
    cfg: &PipelineConfig,
) -> Result<RegimeModel> {
    let init = initial_model(
        frames,
        support,
        regimes,
        &cfg.init,
        Some((&shared.formation, &shared.pi)),
        cfg,
    )?;
    fit(frames, init, &cfg.fit())
}

fn run_segment(segment: u32, all: &[NormalizedFrame], cfg: &PipelineConfig) -> Result<SegmentOutput> {
    let seed = rng::derive_seed(cfg.seed, &[segment as u64]);
    let kept: Vec<NormalizedFrame> = all.iter().filter(|f| !f.held_out).cloned().collect();
    if kept.is_empty() {
        return Err(Error::EmptyInput);
    }
    let shared = match &cfg.init {
        InitSpec::Shared(Some(path)) => read_json::<SharedArtifact>(path)?,
        _ => SharedArtifact::new(fit_shared_from_frames(&kept, seed, &cfg.shared())?, seed),
    };
    let set = select_permutations(all, &shared.pi, &cfg.select(seed))?;
    let support = set.perms();
    let model = fit_model(&kept, &support, cfg.regimes, &shared, cfg)?;

    let mut comparison = None;
    let mut comparison_error = None;
    let mut one_regime = (cfg.regimes == 1).then(|| model.clone());
    if cfg.compare_regimes && cfg.regimes <= 2 {
        match fit_model(&kept, &support, 3 - cfg.regimes, &shared, cfg) {
            Ok(other) => {
                let (one, two) = if cfg.regimes == 1 {
                    (&model, &other)
                } else {
                    (&other, &model)
                };
                comparison = Some(overlap_comparison(one, two)?);
                if cfg.regimes == 2 {
                    one_regime = Some(other);
                }
            }
            Err(e) => comparison_error = Some(e.to_string()),
        }
    }

    let mut posteriors_csv = Vec::new();
    write_posteriors(&mut posteriors_csv, &kept, &model)?;
    let duration = kept.last().map_or(0.0, |l| l.timestamp - kept[0].timestamp);
    let formation = FormationArtifact {
        formation: one_regime.map_or_else(|| shared.formation.clone(), |m| m.regimes[0].formation.clone()),
        team: cfg.team.clone(),
        segment: Some(segment),
        duration: Some(duration),
    };
    let report = SegmentReport {
        segment,
        n_frames: kept.len(),
        n_held_out: all.len() - kept.len(),
        duration,
        support_size: support.len(),
        discarded: set.discarded.len(),
        final_loglik: *model.loglik_trace.last().expect("trace is never empty"),
        iterations: model.iterations,
        converged: model.converged,
        underflow_frames: model.underflow_frames,
        model: model_report(&model, Some(&kept))?,
        overlap_comparison: comparison,
        comparison_error,
    };
    Ok(SegmentOutput {
        perms: PermsArtifact {
            d: shared.formation.d(),
            set,
        },
        model: ModelArtifact {
            init: cfg.init.to_string(),
            model,
        },
        shared,
        formation,
        posteriors_csv,
        report,
    })
}

/// Run every stage on prepared frames, grouped by their `segment` field.
pub fn run_on_frames(
    frames: &[NormalizedFrame],
    cfg: &PipelineConfig,
    ingest: Option<IngestStats>,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut groups: BTreeMap<u32, Vec<NormalizedFrame>> = BTreeMap::new();
    for f in frames {
        groups.entry(f.segment).or_default().push(f.clone());
    }
    let segments = groups
        .iter()
        .map(|(&s, fs)| run_segment(s, fs, cfg))
        .collect::<Result<Vec<_>>>()?;
    let counts = |x: fn(&SegmentReport) -> Option<f64>| -> Option<f64> {
        let vals: Vec<(f64, usize)> = segments
            .iter()
            .filter_map(|s| x(&s.report).map(|v| (v, s.report.n_frames)))
            .collect();
        weighted_average(&vals)
    };
    let aggregate = Aggregate {
        n_frames: segments.iter().map(|s| s.report.n_frames).sum(),
        no_swap_probability: counts(|r| r.model.no_swap_probability),
        no_swap_probability_parameters: counts(|r| Some(r.model.no_swap_probability_parameters)),
    };
    let substitutions = if segments.len() >= 2 {
        let fs: Vec<Formation> = segments.iter().map(|s| s.formation.formation.clone()).collect();
        substitution_distance_report(&fs)?
    } else {
        Vec::new()
    };
    let report = PipelineReport {
        config: cfg.clone(),
        ingest,
        segments: segments.iter().map(|s| s.report.clone()).collect(),
        aggregate,
        substitutions,
    };
    Ok(PipelineOutput { segments, report })
}

/// Load the input, run, and write `segment_XXX/{shared.json, perms.json,
/// model.json, formation.json, posteriors.csv}` and `report.json` under `out`.
pub fn run_pipeline(cfg: &PipelineConfig, input: &PipelineInput, out: &Path) -> Result<PipelineReport> {
    cfg.validate()?;
    let (frames, stats) = match input {
        PipelineInput::Tracking { path, format } => {
            let parsed = parse_tracking(path, *format)?;
            let (frames, stats) = prepare_frames(parsed, &cfg.ingest())?;
            (frames, Some(stats))
        }
        PipelineInput::Frames(path) => (read_frames(path)?, None),
    };
    let result = run_on_frames(&frames, cfg, stats)?;
    write_output(&result, out)?;
    Ok(result.report)
}

pub fn write_output(result: &PipelineOutput, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for s in &result.segments {
        let dir = out.join(format!("segment_{:03}", s.report.segment));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_json(&dir.join("shared.json"), &s.shared)?;
        write_json(&dir.join("perms.json"), &s.perms)?;
        write_json(&dir.join("model.json"), &s.model)?;
        write_json(&dir.join("formation.json"), &s.formation)?;
        let p = dir.join("posteriors.csv");
        std::fs::write(&p, &s.posteriors_csv).map_err(|e| Error::io(&p, e))?;
    }
    write_json(&out.join("report.json"), &result.report)
}
