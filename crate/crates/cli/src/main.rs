//! `seedtrack`: capture, synthesize, label, reseed, review, evaluate and
//! export annotation sessions.

mod commands;
mod error;
mod frames;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "seedtrack", version, about = "Seed-point video annotation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Receive sessions over the network or replay a stored one.
    #[command(subcommand)]
    Capture(CaptureCmd),
    /// Render a synthetic session with ground truth.
    Synth(SynthArgs),
    /// Label every frame of a session from its seed.
    Label(LabelArgs),
    /// Add corrective seeds on one frame of a run and re-propagate into a new run.
    Reseed(ReseedArgs),
    /// Score runs against reference masks.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Serve the review HTTP API.
    #[command(subcommand)]
    Review(ReviewCmd),
    /// Write a session or run in an exchange format.
    Export(ExportArgs),
}

#[derive(Subcommand, Debug)]
enum CaptureCmd {
    /// Accept device connections and store one session per connection.
    Serve {
        /// Defaults to 0.0.0.0 and SEEDTRACK_PORT (38400).
        #[arg(long, value_name = "HOST:PORT")]
        bind: Option<String>,
        #[arg(long, value_name = "DIR", env = "SEEDTRACK_STORE")]
        store: PathBuf,
    },
    /// Stream a stored session to a capture server.
    Replay {
        #[arg(long, value_name = "DIR")]
        session: PathBuf,
        /// Defaults to 127.0.0.1 and SEEDTRACK_PORT (38400).
        #[arg(long, value_name = "HOST:PORT")]
        target: Option<String>,
        #[arg(long, default_value_t = 30.0)]
        fps: f64,
        /// Session id announced to the server (default: the stored id).
        #[arg(long)]
        id: Option<String>,
    },
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Scene spec (TOML).
    #[arg(long, value_name = "FILE", required_unless_present = "preset", conflicts_with = "preset")]
    spec: Option<PathBuf>,
    /// Built-in scene: moving-disc, distractor or two-blob.
    #[arg(long)]
    preset: Option<String>,
    /// Session directory to create; its name is the session id.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Noise seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct BackendArgs {
    #[arg(long, default_value = "chroma-flood")]
    segmenter: String,
    #[arg(long, default_value = "overlap")]
    tracker: String,
    /// Command line of an adapter process; required by the `adapter` backends.
    #[arg(long, value_name = "CMD")]
    adapter: Option<String>,
    #[arg(long = "segmenter-param", value_name = "KEY=VALUE")]
    segmenter_params: Vec<String>,
    #[arg(long = "tracker-param", value_name = "KEY=VALUE")]
    tracker_params: Vec<String>,
}

#[derive(Args, Debug)]
struct LabelArgs {
    #[arg(long, value_name = "DIR")]
    session: PathBuf,
    #[command(flatten)]
    backends: BackendArgs,
    #[arg(long)]
    start_frame: Option<usize>,
    #[arg(long)]
    stop_frame: Option<usize>,
    /// Run id to create (default: next free `run-NNNN`).
    #[arg(long)]
    run_id: Option<String>,
}

#[derive(Args, Debug)]
struct ReseedArgs {
    #[arg(long, value_name = "DIR")]
    session: PathBuf,
    /// Run to correct.
    #[arg(long, value_name = "ID")]
    run: String,
    #[arg(long, value_name = "K")]
    frame: usize,
    #[arg(long = "point", value_name = "X,Y", required = true)]
    points: Vec<String>,
    /// Run id to create (default: next free `run-NNNN`).
    #[arg(long)]
    run_id: Option<String>,
    /// Command line for runs made with the `adapter` backends.
    #[arg(long, value_name = "CMD")]
    adapter: Option<String>,
}

#[derive(Subcommand, Debug)]
enum EvalCmd {
    /// Mean ± sample std of per-frame Dice of a run against reference masks.
    Dice {
        /// Annotation run directory.
        #[arg(long, value_name = "DIR")]
        run: PathBuf,
        /// Directory of reference masks `NNNNNN.png`.
        #[arg(long, value_name = "DIR")]
        reference: PathBuf,
        /// `uniform:N`, `stride:N`, `all` or `3,10,42`.
        #[arg(long, default_value = "all")]
        frames: String,
    },
    /// Reference-vs-machine Dice beside reference-vs-rater Dice.
    Concordance {
        #[arg(long, value_name = "DIR")]
        reference: PathBuf,
        #[arg(long, value_name = "DIR", num_args = 1.., required = true)]
        raters: Vec<PathBuf>,
        #[arg(long, value_name = "DIR")]
        run: PathBuf,
        #[arg(long, default_value = "all")]
        frames: String,
    },
    /// Annotator versus machine throughput.
    Speed {
        /// CSV with header `rater,frame,seconds`.
        #[arg(long, value_name = "FILE")]
        timings: PathBuf,
        #[arg(long, value_name = "DIR")]
        run: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum ReviewCmd {
    Serve {
        #[arg(long, value_name = "DIR", env = "SEEDTRACK_STORE")]
        store: PathBuf,
        /// Defaults to 127.0.0.1 and SEEDTRACK_REVIEW_PORT (38401).
        #[arg(long, value_name = "HOST:PORT")]
        bind: Option<String>,
    },
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ExportFormat {
    /// YUV4MPEG2 stream, optionally with the run's masks overlaid.
    Video,
    /// Run-length encoded masks (text).
    Rle,
}

#[derive(Args, Debug)]
struct ExportArgs {
    format: ExportFormat,
    #[arg(long, value_name = "DIR")]
    session: PathBuf,
    /// Required for `rle`; overlays the masks for `video`.
    #[arg(long, value_name = "ID")]
    run: Option<String>,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Video frame rate (default: from the session timestamps).
    #[arg(long)]
    fps: Option<f64>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = commands::run(cli.command) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}

fn port_from_env(var: &str, default: u16) -> Result<u16, CliError> {
    match std::env::var(var) {
        Ok(v) => v
            .parse()
            .map_err(|_| CliError::invalid(format!("{var}=`{v}` is not a port number"))),
        Err(_) => Ok(default),
    }
}
