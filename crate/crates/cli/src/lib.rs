//! `maskbench` command-line driver and local annotation service.

pub mod commands;
pub mod service;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use maskbench_core::bank::Polarity;

/// Error caused by how the command was invoked rather than by its inputs
/// failing mid-run. Exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "maskbench", version, about = "Word-image segmentation, annotation and OCR benchmarking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the sixteen segmentation candidates for every manifest image.
    Candidates(CandidatesArgs),
    /// Pad, render and recognize annotated masks, then score against ground truth.
    Evaluate(EvaluateArgs),
    /// Pad one binary mask and render it for OCR.
    Pad(PadArgs),
    /// Serve the annotation API for one dataset.
    Serve(ServeArgs),
    /// Render tables from saved report.json files.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolarityArg {
    Normal,
    Inverted,
}

impl From<PolarityArg> for Polarity {
    fn from(p: PolarityArg) -> Self {
        match p {
            PolarityArg::Normal => Polarity::Normal,
            PolarityArg::Inverted => Polarity::Inverted,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CandidatesArgs {
    /// Tab-separated manifest: image_id, image path, ground truth.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; one subdirectory per image.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "normal")]
    pub polarity: PolarityArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report unreadable images and continue with the rest.
    #[arg(long)]
    pub keep_going: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory holding `<image_id>.png` masks, usually the annotation directory.
    #[arg(long)]
    pub masks: PathBuf,
    /// TOML file with `command`, `timeout_secs` and `engine_tag`.
    #[arg(long, conflicts_with = "adapter_cmd")]
    pub adapter_config: Option<PathBuf>,
    /// Adapter command template; `{input}` is replaced by the rendered PNG path.
    #[arg(long)]
    pub adapter_cmd: Option<String>,
    #[arg(long, default_value = "external", requires = "adapter_cmd")]
    pub engine_tag: String,
    #[arg(long, default_value_t = 30.0, requires = "adapter_cmd")]
    pub timeout: f64,
    /// Directory for report.txt, report.csv, rows.csv and report.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Score images without a mask as empty hypotheses instead of aborting.
    #[arg(long)]
    pub lenient: bool,
    #[arg(long)]
    pub case_insensitive: bool,
    /// Skip margin padding before recognition.
    #[arg(long)]
    pub no_pad: bool,
    /// Maximum number of engine processes at once.
    #[arg(long, default_value_t = 4)]
    pub jobs: usize,
    /// Label for the Algorithm column; defaults to the engine tag.
    #[arg(long)]
    pub algorithm: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct PadArgs {
    /// Mask image; any nonzero sample is foreground.
    #[arg(long)]
    pub mask: PathBuf,
    /// Rendered black-on-white PNG.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Annotation directory (records and masks).
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, default_value = "127.0.0.1:7878")]
    pub listen: SocketAddr,
    /// Permit a non-loopback listen address.
    #[arg(long)]
    pub allow_remote: bool,
    #[arg(long)]
    pub read_only: bool,
    /// Seed for the clustering candidates.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Text,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// report.json files written by `evaluate`.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: FormatArg,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Candidates(a) => commands::candidates(&a).map(|_| ()),
        Command::Evaluate(a) => commands::evaluate(&a).map(|_| ()),
        Command::Pad(a) => commands::pad(&a),
        Command::Serve(a) => service::run_blocking(&a),
        Command::Report(a) => commands::report(&a).map(|text| print!("{text}")),
    }
}

/// Parse arguments, run, and map failures to an exit status.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
