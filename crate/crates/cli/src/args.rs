use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use formlab::pipeline::{InitSpec, PipelineConfig};
use formlab::trackio::{AttackSide, InputFormat};

#[derive(Parser, Debug)]
#[command(
    name = "formlab",
    version,
    about = "Estimate team formations and player roles from tracking data"
)]
pub struct Cli {
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, env = "FORMLAB_THREADS")]
    pub threads: Option<usize>,

    /// TOML file with pipeline settings. Flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse, segment, orient and normalize tracking data into frames.bin.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        format: Option<Format>,
        #[command(flatten)]
        ingest: IngestArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the shared-component mixture and the player-role probabilities.
    FitShared {
        #[command(flatten)]
        frames: FramesArgs,
        #[command(flatten)]
        seed: SeedArg,
        #[command(flatten)]
        em: EmArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Choose the permutation support from the role probabilities.
    SelectPerms {
        #[command(flatten)]
        frames: FramesArgs,
        #[arg(long)]
        shared: PathBuf,
        #[command(flatten)]
        select: SelectArgs,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the permutation mixture on a selected support.
    Fit {
        #[command(flatten)]
        frames: FramesArgs,
        #[arg(long)]
        perms: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        em: EmArgs,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the hard-assignment baseline formation.
    FitHard {
        #[command(flatten)]
        frames: FramesArgs,
        #[command(flatten)]
        em: EmArgs,
        #[arg(long)]
        team: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-frame regime and no-swap posteriors as CSV.
    Posteriors {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        frames: FramesArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a fitted model; frames add posterior-based quantities.
    Report {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long)]
        segment: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distances between two formations.
    Distance {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Projection directions of the sliced embedding.
        #[arg(long, default_value_t = formlab::formmetrics::DEFAULT_DIRECTIONS)]
        directions: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster a directory of formation files.
    Cluster {
        #[arg(long)]
        formations: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        #[arg(long, default_value_t = 300)]
        max_iter: usize,
        #[arg(long, default_value_t = formlab::formmetrics::DEFAULT_DIRECTIONS)]
        directions: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
        /// Time-in-cluster table; defaults to the output path with a .csv extension.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Draw frames from a fitted or hand-written model.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
        /// CSV of the latent regime and permutation of every frame.
        #[arg(long)]
        latents: Option<PathBuf>,
    },
    /// Two-role robustness experiment: MSE of three estimators over a grid of separations.
    BenchTwoRole {
        #[arg(long, default_value = "0.1:2.0:0.1")]
        deltas: String,
        #[arg(long, default_value_t = 0.2)]
        p: f64,
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage per segment and write all artifacts under a directory.
    Pipeline {
        /// Raw tracking file.
        #[arg(long, required_unless_present = "frames", conflicts_with = "frames")]
        input: Option<PathBuf>,
        /// Frames written by `ingest`.
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long)]
        format: Option<Format>,
        #[command(flatten)]
        ingest: IngestArgs,
        #[command(flatten)]
        select: SelectArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        em: EmArgs,
        #[command(flatten)]
        seed: SeedArg,
        /// Also fit the other of one and two regimes and compare overlaps.
        #[arg(long)]
        compare_regimes: bool,
        #[arg(long)]
        team: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    pub fn resolve(format: Option<Format>, path: &std::path::Path) -> InputFormat {
        match format {
            Some(Format::Csv) => InputFormat::Csv,
            Some(Format::Jsonl) => InputFormat::JsonLines,
            None => match path.extension().and_then(|e| e.to_str()) {
                Some("jsonl" | "ndjson") => InputFormat::JsonLines,
                _ => InputFormat::Csv,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Side {
    Left,
    Right,
}

#[derive(Args, Debug)]
pub struct FramesArgs {
    #[arg(long = "frames")]
    pub path: PathBuf,
    /// Segment to use when the file holds several.
    #[arg(long)]
    pub segment: Option<u32>,
}

#[derive(Args, Debug)]
pub struct SeedArg {
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub min_segment_sec: Option<f64>,
    /// One side for all segments, or a comma-separated side per segment.
    #[arg(long, value_delimiter = ',')]
    pub attack_side: Vec<Side>,
}

#[derive(Args, Debug)]
pub struct EmArgs {
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[arg(long)]
    pub p_thresh: Option<f64>,
    #[arg(long)]
    pub o_thresh: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gmm_components: Option<usize>,
    #[arg(long)]
    pub candidate_cap: Option<usize>,
    #[arg(long)]
    pub train_factor: Option<usize>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub regimes: Option<usize>,
    /// shared[:<shared.json>], possession, chrono or identity-half.
    #[arg(long, value_parser = parse_init)]
    pub init: Option<InitSpec>,
    /// Permutations whose weight falls below this are dropped.
    #[arg(long)]
    pub prune: Option<f64>,
}

fn parse_init(s: &str) -> Result<InitSpec, String> {
    s.parse().map_err(|e: formlab::Error| e.to_string())
}

fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
    if let Some(v) = v {
        *slot = v.clone();
    }
}

impl SeedArg {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        set(&mut cfg.seed, &self.seed);
    }
}

impl IngestArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        set(&mut cfg.stride, &self.stride);
        set(&mut cfg.min_segment_sec, &self.min_segment_sec);
        if !self.attack_side.is_empty() {
            cfg.attack_sides = self
                .attack_side
                .iter()
                .map(|s| match s {
                    Side::Left => AttackSide::Left,
                    Side::Right => AttackSide::Right,
                })
                .collect();
        }
    }
}

impl EmArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        set(&mut cfg.max_iter, &self.max_iter);
        set(&mut cfg.tol, &self.tol);
    }
}

impl SelectArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        set(&mut cfg.p_thresh, &self.p_thresh);
        set(&mut cfg.o_thresh, &self.o_thresh);
        set(&mut cfg.alpha, &self.alpha);
        set(&mut cfg.gmm_components, &self.gmm_components);
        set(&mut cfg.candidate_cap, &self.candidate_cap);
        set(&mut cfg.train_factor, &self.train_factor);
    }
}

impl FitArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        set(&mut cfg.regimes, &self.regimes);
        set(&mut cfg.init, &self.init);
        set(&mut cfg.prune, &self.prune);
    }
}
