//! `rainres` command-line front end.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "rainres",
    version,
    about = "Temporal super-resolution of gridded rainfall"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic advecting-cell events.
    Synth(SynthArgs),
    /// Split an events directory chronologically into train/test triples.
    Dataset(DatasetArgs),
    /// Train a CNN-baseline or TempNet model.
    Train(TrainArgs),
    /// Score interpolators with one of the evaluation protocols.
    Eval(EvalArgs),
    /// Interpolate the frame between two grids.
    Interpolate(InterpolateArgs),
    /// Recursively insert midpoints into an event.
    Upsample(UpsampleArgs),
    /// Render grids as PNG images.
    Render(RenderArgs),
    /// Time each method on test frame pairs.
    Bench(BenchArgs),
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    /// Output directory; one subdirectory per event.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    events: usize,
    #[arg(long, default_value_t = 64)]
    rows: usize,
    #[arg(long, default_value_t = 64)]
    cols: usize,
    #[arg(long, default_value_t = 10)]
    frames: usize,
    #[arg(long, default_value_t = 6)]
    cells: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum advection speed in cells per frame.
    #[arg(long, default_value_t = 2.0)]
    max_speed: f64,
    #[arg(long, default_value_t = 0.0)]
    salt_density: f64,
}

#[derive(Debug, Args, Serialize)]
struct DatasetArgs {
    /// Directory holding one subdirectory per event.
    #[arg(long)]
    data: PathBuf,
    /// Split manifest to write.
    #[arg(long)]
    out: PathBuf,
    /// Fraction of events (chronologically first) used for training.
    #[arg(long, default_value_t = 0.7, conflicts_with = "test_from_year")]
    train_fraction: f64,
    /// Events starting in this year or later are test events.
    #[arg(long)]
    test_from_year: Option<i32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModelArg {
    Cnn,
    Tempnet,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Split manifest written by `dataset`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint path for the best-test-loss weights. `history.csv`,
    /// `manifest.json` and the final-epoch checkpoint go beside it.
    #[arg(long)]
    out: PathBuf,
    /// Single-threaded run with a timing-free history.csv.
    #[arg(long)]
    reference: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Protocol {
    Direct,
    SkipOne,
    SecondIteration,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum MethodArg {
    All,
    Nearest,
    Flow,
    Cnn,
    Tempnet,
    Oracle,
}

#[derive(Debug, Args, Serialize)]
struct ModelPaths {
    /// CNN-baseline checkpoint.
    #[arg(long)]
    cnn: Option<PathBuf>,
    /// TempNet checkpoint.
    #[arg(long)]
    tempnet: Option<PathBuf>,
    /// Synthetic-event manifest, for the oracle method.
    #[arg(long)]
    synth_manifest: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    #[arg(long, value_enum, default_value_t = Protocol::Direct)]
    protocol: Protocol,
    #[arg(long, value_enum, default_value_t = MethodArg::All)]
    method: MethodArg,
    /// Split manifest written by `dataset`.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    models: ModelPaths,
    /// Wet-cell threshold for POD/FAR/CSI (strictly greater than).
    #[arg(long, default_value_t = 0.0)]
    threshold: f32,
    /// Reference threading: a single worker thread.
    #[arg(long)]
    reference: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct InterpolateArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long)]
    before: PathBuf,
    #[arg(long)]
    after: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Model checkpoint for `cnn` or `tempnet`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// With `flow`, also write the flow components as `<prefix>_u.rgrd`
    /// and `<prefix>_v.rgrd` (signed grids).
    #[arg(long)]
    flow_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct UpsampleArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Event directory.
    #[arg(long)]
    event: PathBuf,
    #[arg(long, default_value_t = 1)]
    depth: u32,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct RenderArgs {
    /// A grid file or an event directory.
    #[arg(long)]
    input: PathBuf,
    /// PNG path for a grid, output directory for an event.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    models: ModelPaths,
    /// Number of test pairs to time.
    #[arg(long, default_value_t = 20)]
    pairs: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
