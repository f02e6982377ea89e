//! `ceb`: command-line front end for the boundary-centric segmentation
//! pipeline.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use ceb_core::classifier::ScorerConfig;
use ceb_core::grid::Connectivity;
use ceb_core::matching::SolverOptions;
use ceb_core::metrics::MatchProtocol;
use ceb_core::pipeline::{Mode, PipelineConfig, RimPolicy};
use ceb_core::region_graph::{EnumerationCaps, DEFAULT_MAX_CANDIDATES, DEFAULT_MAX_NODES};
use ceb_core::signature::{SignatureConfig, DEFAULT_BRANCH_LENGTH, DEFAULT_CANVAS};
use ceb_core::synth::SynthSpec;
use ceb_core::temporal::{Schedule, TemporalConfig};

#[derive(Parser, Debug)]
#[command(
    name = "ceb",
    version,
    about = "Cell instance segmentation from foreground probability maps"
)]
pub struct Cli {
    /// Flat `key = value` file supplying defaults for any flag; flags given
    /// on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads for frame-level parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Segment one probability map into a label map.
    Segment(SegmentArgs),
    /// Segment a directory of frames with temporal consistency.
    SegmentVideo(SegmentVideoArgs),
    /// Label boundary signatures against ground truth for training.
    MakeTraining(MakeTrainingArgs),
    /// Export unlabeled boundary signatures of one probability map.
    ExtractSignatures(ExtractArgs),
    /// Train the built-in boundary classifier on labeled manifests.
    Train(TrainArgs),
    /// Score the signatures of a manifest.
    Score(ScoreArgs),
    /// Compare predicted label maps with ground truth.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic corpus of probability maps and ground truth.
    Synth(SynthArgs),
    /// Write the watershed seeds of a probability map as a label map.
    Seeds(DumpArgs),
    /// Write the watershed regions (boundary pixels as 65535) as a label map.
    Watershed(DumpArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Ceb,
    WoCls,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RimArg {
    HigherMean,
    Unassigned,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Synchronous,
    Sweep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Greedy,
    Optimal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProbFormat {
    Cebp,
    Pgm,
}

#[derive(Args, Debug, Clone)]
pub struct PipelineArgs {
    /// Threshold quantization step.
    #[arg(long, default_value_t = 1.0 / 255.0)]
    pub step: f32,
    /// Smallest seed area in pixels.
    #[arg(long, default_value_t = 3)]
    pub min_area: usize,
    /// Pixel connectivity, 4 or 8.
    #[arg(long, default_value_t = 8, value_parser = parse_connectivity)]
    pub connectivity: u32,
    /// Signature canvas side in pixels.
    #[arg(long, default_value_t = DEFAULT_CANVAS)]
    pub canvas: usize,
    /// Pixels walked along each fork-road branch.
    #[arg(long, default_value_t = DEFAULT_BRANCH_LENGTH)]
    pub branch_length: usize,
    /// Boundaries scoring at least this are kept as cell-cell boundaries.
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    /// Largest region-graph component that is enumerated.
    #[arg(long, default_value_t = DEFAULT_MAX_NODES)]
    pub max_nodes: usize,
    /// Largest number of candidates enumerated per frame.
    #[arg(long, default_value_t = DEFAULT_MAX_CANDIDATES)]
    pub max_candidates: usize,
    /// `wo-cls` treats every boundary as TRUE and needs no scorer.
    #[arg(long, value_enum, default_value_t = ModeArg::Ceb)]
    pub mode: ModeArg,
    /// Owner of boundary pixels on an instance's outer edge.
    #[arg(long, value_enum, default_value_t = RimArg::HigherMean)]
    pub rim: RimArg,
}

fn parse_connectivity(s: &str) -> Result<u32, String> {
    match s {
        "4" => Ok(4),
        "8" => Ok(8),
        _ => Err(format!("`{s}` is not 4 or 8")),
    }
}

impl PipelineArgs {
    pub fn config(&self) -> PipelineConfig {
        PipelineConfig {
            step: self.step,
            min_area: self.min_area,
            connectivity: Connectivity::from_count(self.connectivity).expect("validated by clap"),
            signature: SignatureConfig {
                canvas: self.canvas,
                branch_length: self.branch_length,
            },
            theta: self.theta,
            caps: self.caps(),
            mode: match self.mode {
                ModeArg::Ceb => Mode::Ceb,
                ModeArg::WoCls => Mode::WithoutClassifier,
            },
            rim: match self.rim {
                RimArg::HigherMean => RimPolicy::HigherMean,
                RimArg::Unassigned => RimPolicy::Unassigned,
            },
            solver: SolverOptions::default(),
        }
    }

    pub fn caps(&self) -> EnumerationCaps {
        EnumerationCaps {
            max_nodes: self.max_nodes,
            max_candidates: self.max_candidates,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ScorerArgs {
    /// Built-in classifier model (CEBM).
    #[arg(long, value_name = "FILE", group = "scorer")]
    pub model: Option<PathBuf>,
    /// Labeled manifest; its labels are returned as scores 1 and 0.
    #[arg(long, value_name = "MANIFEST", group = "scorer")]
    pub oracle: Option<PathBuf>,
    /// CSV of `signature_id,score` rows.
    #[arg(long, value_name = "CSV", group = "scorer")]
    pub scores: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct TemporalArgs {
    /// Scores below this are confident merges.
    #[arg(long, default_value_t = 0.1)]
    pub sigma_low: f64,
    /// Scores above this are confident boundaries.
    #[arg(long, default_value_t = 0.9)]
    pub sigma_high: f64,
    /// Propagation iterations.
    #[arg(long, default_value_t = 10)]
    pub iterations: usize,
    /// Frame update order within an iteration.
    #[arg(long, value_enum, default_value_t = ScheduleArg::Synchronous)]
    pub schedule: ScheduleArg,
    /// Threshold used for regions still unselected after the last iteration.
    #[arg(long, default_value_t = 0.5)]
    pub final_threshold: f64,
}

impl TemporalArgs {
    pub fn config(&self, caps: EnumerationCaps) -> TemporalConfig {
        TemporalConfig {
            sigma_low: self.sigma_low,
            sigma_high: self.sigma_high,
            iterations: self.iterations,
            schedule: match self.schedule {
                ScheduleArg::Synchronous => Schedule::Synchronous,
                ScheduleArg::Sweep => Schedule::Sweep,
            },
            final_threshold: self.final_threshold,
            caps,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Args, Debug)]
pub struct SegmentArgs {
    /// Probability map (CEBP or PGM).
    #[arg(long)]
    pub probmap: PathBuf,
    /// Output label map (16-bit PGM).
    #[arg(long)]
    pub out: PathBuf,
    /// Frame index used in signature ids.
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
pub struct SegmentVideoArgs {
    /// Directory of probability maps; frames are taken in file-name order.
    #[arg(long)]
    pub frames: PathBuf,
    /// Output directory; one label map per frame, named after its input.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub temporal: TemporalArgs,
}

#[derive(Args, Debug)]
pub struct MakeTrainingArgs {
    /// Probability maps; repeat for several frames, paired with --gt in order.
    #[arg(long, required = true)]
    pub probmap: Vec<PathBuf>,
    /// Ground-truth label maps (16-bit PGM).
    #[arg(long, required = true)]
    pub gt: Vec<PathBuf>,
    /// Output directory for signature PGMs and the manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Frame index of the first map; later maps count up from it.
    #[arg(long, default_value_t = 0)]
    pub first_frame: usize,
    /// Also write the matching models as an LP listing.
    #[arg(long, value_name = "FILE")]
    pub dump_model: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    pub probmap: PathBuf,
    /// Output directory for signature PGMs and the manifest.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Labeled manifests; repeatable.
    #[arg(long, required = true)]
    pub manifest: Vec<PathBuf>,
    /// Output model (CEBM).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV of the mean loss before training and after each epoch.
    #[arg(long, value_name = "CSV")]
    pub loss_curve: Option<PathBuf>,
    #[arg(long, default_value_t = ScorerConfig::default().hidden)]
    pub hidden: usize,
    #[arg(long, default_value_t = ScorerConfig::default().learning_rate)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = ScorerConfig::default().momentum)]
    pub momentum: f64,
    #[arg(long, default_value_t = ScorerConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = ScorerConfig::default().batch_size)]
    pub batch_size: usize,
    /// Focal-loss exponent.
    #[arg(long, default_value_t = ScorerConfig::default().gamma)]
    pub gamma: f64,
    /// Focal-loss weight of the TRUE class.
    #[arg(long, default_value_t = ScorerConfig::default().alpha)]
    pub alpha: f64,
    /// Random seed for initialization and shuffling.
    #[arg(long, default_value_t = ScorerConfig::default().seed)]
    pub seed: u64,
    /// Side of the max-pooled classifier input.
    #[arg(long, default_value_t = ScorerConfig::default().input_side)]
    pub input_side: usize,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// Manifest whose signatures are scored.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output CSV of `signature_id,score`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub scorer: ScorerArgs,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Predicted label maps; repeat, paired with --gt in order.
    #[arg(long, required = true)]
    pub pred: Vec<PathBuf>,
    #[arg(long, required = true)]
    pub gt: Vec<PathBuf>,
    /// Output metrics CSV; the table is printed either way.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Instance pairing used for TP counting.
    #[arg(long, value_enum, default_value_t = ProtocolArg::Greedy)]
    pub protocol: ProtocolArg,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory; maps go to `prob/`, ground truth to `gt/`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = SynthSpec::default().width)]
    pub width: usize,
    #[arg(long, default_value_t = SynthSpec::default().height)]
    pub height: usize,
    #[arg(long, default_value_t = SynthSpec::default().cells)]
    pub cells: usize,
    #[arg(long, default_value_t = SynthSpec::default().radius_min)]
    pub radius_min: f64,
    #[arg(long, default_value_t = SynthSpec::default().radius_max)]
    pub radius_max: f64,
    #[arg(long, default_value_t = SynthSpec::default().blur_sigma)]
    pub blur_sigma: f64,
    /// Amplitude of uniform noise.
    #[arg(long, default_value_t = SynthSpec::default().noise)]
    pub noise: f64,
    #[arg(long, default_value_t = SynthSpec::default().seed)]
    pub seed: u64,
    #[arg(long, default_value_t = SynthSpec::default().frames)]
    pub frames: usize,
    /// Cell displacement per frame in pixels.
    #[arg(long, default_value_t = SynthSpec::default().drift)]
    pub drift: f64,
    /// Chance that a cell is placed touching an earlier one.
    #[arg(long, default_value_t = SynthSpec::default().cluster)]
    pub cluster: f64,
    #[arg(long, default_value_t = SynthSpec::default().max_cluster)]
    pub max_cluster: usize,
    /// Probability map file format.
    #[arg(long, value_enum, default_value_t = ProbFormat::Cebp)]
    pub format: ProbFormat,
}

impl SynthArgs {
    pub fn spec(&self) -> SynthSpec {
        SynthSpec {
            width: self.width,
            height: self.height,
            cells: self.cells,
            radius_min: self.radius_min,
            radius_max: self.radius_max,
            blur_sigma: self.blur_sigma,
            noise: self.noise,
            seed: self.seed,
            frames: self.frames,
            drift: self.drift,
            cluster: self.cluster,
            max_cluster: self.max_cluster,
        }
    }
}

#[derive(Args, Debug)]
pub struct DumpArgs {
    #[arg(long)]
    pub probmap: PathBuf,
    /// Output label map (16-bit PGM).
    #[arg(long, value_name = "FILE")]
    pub dump: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

impl From<ProtocolArg> for MatchProtocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Greedy => MatchProtocol::Greedy,
            ProtocolArg::Optimal => MatchProtocol::Optimal,
        }
    }
}

fn main() -> ExitCode {
    let cmd = Cli::command().mut_subcommands(|s| s.args_override_self(true));
    let args = match config::splice(&cmd, std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let matches = match cmd.try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if cli.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return ExitCode::from(2);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
    {
        log::warn!("thread pool already initialized: {e}");
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<commands::Usage>().is_some() => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}

/// Error chain joined by `: `, leaving out causes whose text the previous
/// message already ends with.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.ends_with(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}
