//! `dclose`: saliency maps for black-box object detectors.

mod cmd;
mod config;
mod corpus;
mod detectors;
mod engine;
mod error;
mod manifest;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{EngineArgs, Settings};
use crate::detectors::parse_box;
use crate::error::{CliError, CliResult};
use crate::manifest::{Job, Method, RunManifest, TargetSel};

const EXIT_CODES: &str = "Exit codes: 0 success, 2 usage, 3 bad input, 4 detector unavailable, \
5 target out of range, 6 detector failed during the run, 7 malformed file, 8 cannot write output.";

#[derive(Debug, Parser)]
#[command(name = "dclose", version, about = "Saliency maps for black-box object detectors", after_help = EXIT_CODES)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Explain one detected object.
    Explain(ExplainArgs),
    /// Run both methods over a corpus and report metrics per size group.
    Benchmark(BenchmarkArgs),
    /// Compare maps from a detector and a randomized copy of it.
    Sanity(SanityArgs),
    /// Explain two targets and render their signed difference.
    Errordiff(ErrordiffArgs),
    /// Convert COCO annotation JSON to a corpus manifest.
    ConvertCoco(ConvertArgs),
    /// Render a stored map as heatmap and overlay PNGs.
    Render(RenderArgs),
    /// Write the synthetic blob suite as images plus a corpus manifest.
    Suite(SuiteArgs),
    /// Re-run a job recorded in a run manifest.
    Replay(ReplayArgs),
    /// Answer detector protocol requests with a synthetic detector.
    #[command(hide = true)]
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
struct Source {
    #[arg(long)]
    image: PathBuf,
    /// synthetic:blob[:x1,y1,x2,y2], subprocess:<command> or tcp:<host:port>.
    #[arg(long, default_value = "synthetic:blob")]
    detector: String,
    #[arg(long, value_enum, default_value = "dclose")]
    method: Method,
    /// Worker threads (0 uses every core); also the number of external detector handles.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Clone, Args)]
struct TargetArgs {
    /// Index into the detections on the clean image.
    #[arg(long, conflicts_with = "bbox")]
    target: Option<usize>,
    /// Explicit target box x1,y1,x2,y2; requires --class.
    #[arg(long = "box", value_name = "X1,Y1,X2,Y2", requires = "class")]
    bbox: Option<String>,
    #[arg(long)]
    class: Option<usize>,
}

impl TargetArgs {
    fn resolve(&self) -> CliResult<TargetSel> {
        match (&self.bbox, self.class) {
            (Some(b), Some(class_id)) => Ok(TargetSel::Explicit { bbox: parse_box(b)?, class_id }),
            _ => Ok(TargetSel::Index { index: self.target.unwrap_or(0) }),
        }
    }
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    target: TargetArgs,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Debug, Args)]
struct SanityArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    target: TargetArgs,
    /// Seed of the randomized detector.
    #[arg(long, default_value_t = 1)]
    random_seed: u64,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Debug, Args)]
struct ErrordiffArgs {
    #[command(flatten)]
    source: Source,
    /// First target: detection index, or x1,y1,x2,y2:class.
    #[arg(long)]
    first: String,
    /// Second target, same syntax as --first.
    #[arg(long)]
    second: String,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// JSON array of {image_path, objects: [{box, class_id, class_name}]}.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "synthetic:blob")]
    detector: String,
    /// Add segment-only, +density and fusion-order rows.
    #[arg(long)]
    ablation: bool,
    /// Objects processed in parallel (0 uses every core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    /// COCO annotation JSON.
    #[arg(long)]
    annotations: PathBuf,
    /// Directory prepended to every file_name.
    #[arg(long)]
    image_root: Option<PathBuf>,
    #[arg(long, default_value = "corpus.json")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// A DCLS file.
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// The map is signed; use the divergent colormap.
    #[arg(long)]
    diff: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SuiteArgs {
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, default_value = "suite")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    manifest: PathBuf,
    #[arg(long, default_value = "replay")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    detector: String,
    /// Listen on a TCP address instead of stdio.
    #[arg(long)]
    listen: Option<String>,
    /// Exit after the first TCP connection closes.
    #[arg(long)]
    once: bool,
}

/// `3` is an index; `x1,y1,x2,y2:7` is a box with class 7.
fn parse_target(s: &str) -> CliResult<TargetSel> {
    if let Some((b, c)) = s.rsplit_once(':') {
        let class_id = c.trim().parse().map_err(|e| CliError::input(format!("bad class in `{s}`: {e}")))?;
        return Ok(TargetSel::Explicit { bbox: parse_box(b)?, class_id });
    }
    let index = s.trim().parse().map_err(|e| CliError::input(format!("bad target `{s}`: {e}")))?;
    Ok(TargetSel::Index { index })
}

fn dispatch(command: Command) -> CliResult<()> {
    let (job, settings, out): (Job, Settings, PathBuf) = match command {
        Command::Explain(a) => {
            let s = a.source;
            let job = Job::Explain { image: s.image, detector: s.detector, target: a.target.resolve()?, method: s.method };
            (job, a.engine.resolve(Some(s.jobs))?, s.out)
        }
        Command::Sanity(a) => {
            let s = a.source;
            let job = Job::Sanity {
                image: s.image,
                detector: s.detector,
                target: a.target.resolve()?,
                method: s.method,
                random_seed: a.random_seed,
            };
            (job, a.engine.resolve(Some(s.jobs))?, s.out)
        }
        Command::Errordiff(a) => {
            let s = a.source;
            let job = Job::Errordiff {
                image: s.image,
                detector: s.detector,
                first: parse_target(&a.first)?,
                second: parse_target(&a.second)?,
                method: s.method,
            };
            (job, a.engine.resolve(Some(s.jobs))?, s.out)
        }
        Command::Benchmark(a) => {
            let job = Job::Benchmark { corpus: a.corpus, detector: a.detector, ablation: a.ablation, jobs: a.jobs };
            (job, a.engine.resolve(None)?, a.out)
        }
        Command::ConvertCoco(a) => {
            let job = Job::ConvertCoco { annotations: a.annotations, image_root: a.image_root, output: a.out.clone() };
            (job, Settings::default(), a.out)
        }
        Command::Render(a) => (Job::Render { map: a.map, image: a.image, diff: a.diff }, Settings::default(), a.out),
        Command::Suite(a) => (Job::Suite { seed: a.seed }, Settings::default(), a.out),
        Command::Replay(a) => {
            let m = RunManifest::read(&a.manifest)?;
            let mut job = m.job;
            let mut out = a.out;
            if let Job::ConvertCoco { output, .. } = &mut job {
                let name = output.file_name().map_or_else(|| "corpus.json".into(), |n| n.to_owned());
                manifest::ensure_dir(&out)?;
                out = out.join(name);
                *output = out.clone();
            }
            m.settings.validate()?;
            (job, m.settings, out)
        }
        Command::Serve(a) => return cmd::serve::run(&a.detector, a.listen.as_deref(), a.once),
    };
    cmd::run(&job, &settings, &out).map(|_| ())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
