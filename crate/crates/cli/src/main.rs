mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tubelink_core::linker::{Variant, DEFAULT_K, DEFAULT_M, DEFAULT_TAU};

const EXIT_DATA: u8 = 2;
const EXIT_USAGE: u8 = 64;

/// Fast deformable tube linking: link, benchmark and evaluate action tubes.
#[derive(Debug, Parser)]
#[command(name = "tubelink", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write seeded synthetic proposal and ground-truth files.
    Generate(GenerateArgs),
    /// Extract up to M tubes from a proposal file.
    Link(LinkArgs),
    /// Attach class labels to linked tubes by mean IoU against ground truth.
    Label(LabelArgs),
    /// Time the three linkers over a range of proposal densities (CSV).
    Bench(BenchArgs),
    /// Frame-mAP or video-mAP of labelled tubes against ground truth.
    Eval(EvalArgs),
    /// Coselection rate between two tube files.
    Coselect(CoselectArgs),
    /// Coselection sweep of top-K against unpruned linking on a synthetic dataset (CSV).
    Sweep(SweepArgs),
    /// Multi-task loss of one tube prediction.
    Loss(LossArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Algo {
    Exact,
    Ht,
    #[value(name = "ht-ts")]
    HtTs,
}

impl From<Algo> for Variant {
    fn from(a: Algo) -> Self {
        match a {
            Algo::Exact => Variant::Exact,
            Algo::Ht => Variant::Ht,
            Algo::HtTs => Variant::HtTs,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Metric {
    #[value(name = "frame-map")]
    FrameMap,
    #[value(name = "video-map")]
    VideoMap,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Output directory; receives `<video_id>.proposals.json` and `<video_id>.gt.json`.
    #[arg(long)]
    out: PathBuf,
    /// Scenario JSON; flags below override its fields.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = positive)]
    videos: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = positive)]
    frames: Option<usize>,
    #[arg(long)]
    actors: Option<usize>,
    #[arg(long, value_parser = positive)]
    per_actor: Option<usize>,
    #[arg(long)]
    background: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    classes: Option<u32>,
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Debug, Args)]
struct LinkerArgs {
    #[arg(long, default_value_t = DEFAULT_TAU, value_parser = unit_interval)]
    tau: f64,
    #[arg(long, default_value_t = DEFAULT_K, value_parser = positive)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_M, value_parser = positive)]
    m: usize,
}

#[derive(Debug, Args)]
struct LinkArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    linker: LinkerArgs,
    #[arg(long, value_enum, default_value = "ht-ts")]
    algo: Algo,
    /// Keep emitting objectness-only tubes once no legal tube is left.
    #[arg(long)]
    fill_illegal: bool,
    /// Defaults to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LabelArgs {
    /// Tube file(s) as written by `link` (one object or an array).
    #[arg(long)]
    tubes: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Minimum mean IoU for a positive label (inclusive).
    #[arg(long, default_value_t = tubelink_core::targets::POSITIVE_MEAN_IOU, value_parser = unit_interval)]
    threshold: f64,
    /// Drop tubes that end up labelled background.
    #[arg(long)]
    drop_background: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Proposals per frame, comma separated.
    #[arg(long = "n", value_delimiter = ',', default_value = "300,500,700,1000", value_parser = positive)]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 5, value_parser = positive)]
    t: usize,
    #[arg(long, default_value_t = DEFAULT_M, value_parser = positive)]
    m: usize,
    #[arg(long, default_value_t = DEFAULT_K, value_parser = positive)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_TAU, value_parser = unit_interval)]
    tau: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5, value_parser = positive)]
    repeat: usize,
    /// CSV destination; defaults to stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Labelled tubes: one `{video_id, tubes}` object or an array of them.
    #[arg(long)]
    pred: PathBuf,
    /// Ground truth: one `{video_id, tubes}` object or an array of them.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, value_enum)]
    metric: Metric,
    /// Defaults to 0.5 for frame-map and 0.2 for video-map.
    #[arg(long, value_parser = unit_interval)]
    sigma: Option<f64>,
}

#[derive(Debug, Args)]
struct CoselectArgs {
    /// Tubes linked with top-K selection.
    #[arg(long)]
    a: PathBuf,
    /// Tubes linked without top-K selection.
    #[arg(long)]
    b: PathBuf,
    #[arg(long, value_delimiter = ',', required = true, value_parser = unit_interval)]
    theta: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true, value_parser = positive)]
    n: Vec<usize>,
    /// Emit CSV even for a single (theta, n) pair.
    #[arg(long)]
    csv: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 20, value_parser = positive)]
    videos: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TAU, value_parser = unit_interval)]
    tau: f64,
    #[arg(long, default_value_t = DEFAULT_K, value_parser = positive)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_M, value_parser = positive)]
    m: usize,
    /// Use a beam as wide as the densest frame instead of `--k`.
    #[arg(long)]
    full_beam: bool,
    #[arg(long, value_delimiter = ',', default_value = "0.7,0.8,0.9,1.0", value_parser = unit_interval)]
    theta: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "50,100,150,200", value_parser = positive)]
    n: Vec<usize>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LossArgs {
    /// JSON with `class_probs`, `offsets`, `class` and `targets`.
    #[arg(long)]
    input: PathBuf,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("`{s}` is not a positive integer")),
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        _ => Err(format!("`{s}` is not a number in [0, 1]")),
    }
}

/// Bad invocation detected after argument parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Link(a) => commands::link(a),
        Command::Label(a) => commands::label(a),
        Command::Bench(a) => commands::bench(a),
        Command::Eval(a) => commands::eval(a),
        Command::Coselect(a) => commands::coselect(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Loss(a) => commands::loss(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_DATA)
            }
        }
    }
}
