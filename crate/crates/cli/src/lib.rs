//! `microstate` command line tool: fit, tokenize, features, stats, eval,
//! synth.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 data contract
//! error, 4 internal invariant failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use microstate::FitMode;
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod inputs;

pub use config::PipelineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Prep,
    Gfp,
    Cluster,
    Tokenize,
    Features,
    Stats,
    Eval,
    Synth,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Ingest => "ingest",
            Stage::Prep => "prep",
            Stage::Gfp => "gfp",
            Stage::Cluster => "cluster",
            Stage::Tokenize => "tokenize",
            Stage::Features => "features",
            Stage::Stats => "stats",
            Stage::Eval => "eval",
            Stage::Synth => "synth",
            Stage::Write => "write",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("[config] {0}")]
    Config(String),

    #[error("[ingest] {0}")]
    Input(String),

    #[error("[{stage}] {}{source}", context.as_deref().map(|c| format!("{c}: ")).unwrap_or_default())]
    Stage {
        stage: Stage,
        context: Option<String>,
        #[source]
        source: microstate::Error,
    },

    #[error("[{stage}] invariant violated: {message}")]
    Invariant { stage: Stage, message: String },
}

impl CliError {
    pub fn stage(stage: Stage, source: microstate::Error) -> Self {
        CliError::Stage {
            stage,
            context: None,
            source,
        }
    }

    /// Attach the file being processed.
    pub fn context(self, path: &Path) -> Self {
        match self {
            CliError::Stage { stage, source, .. } => CliError::Stage {
                stage,
                context: Some(path.display().to_string()),
                source,
            },
            other => other,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Stage { source, .. } if source.is_input_error() => 2,
            CliError::Stage { .. } => 3,
            CliError::Invariant { .. } => 4,
        }
    }
}

/// Tag core errors with a stage.
pub(crate) trait StageExt<T> {
    fn at(self, stage: Stage) -> Result<T, CliError>;
}

impl<T> StageExt<T> for microstate::Result<T> {
    fn at(self, stage: Stage) -> Result<T, CliError> {
        self.map_err(|e| CliError::stage(stage, e))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "microstate",
    version,
    about = "EEG microstate tokenization pipeline"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,

    #[command(subcommand)]
    pub command: Command,
}

fn parse_mode(s: &str) -> Result<FitMode, String> {
    s.parse().map_err(|e: microstate::Error| e.to_string())
}

/// Flags shared by every subcommand. They override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Number of microstates
    #[arg(long, global = true)]
    pub k: Option<usize>,

    #[arg(long, global = true)]
    pub batch_size: Option<usize>,

    /// Center update rule: literal|weighted
    #[arg(long, global = true, value_parser = parse_mode)]
    pub mode: Option<FitMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthFormat {
    Msr,
    Csv,
    Edf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a microstate codebook on GFP peaks
    Fit {
        /// Recordings, directories or glob patterns (replace config inputs)
        inputs: Vec<String>,
    },
    /// Map recordings to windowed microstate sequences
    Tokenize {
        inputs: Vec<String>,
        /// Codebook file (default: <out>/codebook.mscb)
        #[arg(long)]
        codebook: Option<PathBuf>,
    },
    /// Band-power feature matrices per window
    Features { inputs: Vec<String> },
    /// Microstate rank tables per recording and label
    Stats {
        /// Token dataset directory (default: <out>/tokens)
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        top: Option<usize>,
    },
    /// Train and score the per-epoch softmax classifier
    Eval {
        /// Dataset directory (default: <out>/tokens or <out>/features)
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum)]
        features: Option<config::FeatureKind>,
    },
    /// Write synthetic wake-like and deep-sleep-like recordings
    Synth {
        #[arg(long, default_value_t = 1)]
        wake: usize,
        #[arg(long, default_value_t = 1)]
        deep: usize,
        /// Seconds per recording
        #[arg(long, default_value_t = 300.0)]
        duration: f64,
        #[arg(long, default_value_t = 256.0)]
        fs: f64,
        #[arg(long, default_value_t = 6)]
        channels: usize,
        #[arg(long, value_enum, default_value_t = SynthFormat::Msr)]
        format: SynthFormat,
    },
}

impl Cli {
    /// Config file (or defaults) with flags applied, validated.
    pub fn resolve_config(&self) -> Result<PipelineConfig, CliError> {
        let mut cfg = match &self.common.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        let c = &self.common;
        if let Some(seed) = c.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &c.out {
            cfg.out = out.clone();
        }
        if let Some(k) = c.k {
            cfg.fit.k = k;
        }
        if let Some(n) = c.batch_size {
            cfg.fit.batch_size = n;
        }
        if let Some(mode) = c.mode {
            cfg.fit.mode = mode;
        }
        match &self.command {
            Command::Fit { inputs }
            | Command::Tokenize { inputs, .. }
            | Command::Features { inputs }
                if !inputs.is_empty() =>
            {
                cfg.inputs = inputs.clone();
            }
            Command::Stats { top: Some(top), .. } => cfg.stats.top = *top,
            Command::Eval {
                features: Some(kind),
                ..
            } => cfg.eval.features = *kind,
            _ => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Run a parsed command line.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.resolve_config()?;
    match &cli.command {
        Command::Fit { .. } => commands::fit(&cfg).map(|_| ()),
        Command::Tokenize { codebook, .. } => {
            let path = codebook
                .clone()
                .unwrap_or_else(|| cfg.out.join(commands::CODEBOOK_FILE));
            commands::tokenize(&cfg, &path).map(|_| ())
        }
        Command::Features { .. } => commands::features(&cfg).map(|_| ()),
        Command::Stats { dataset, .. } => {
            let dir = dataset
                .clone()
                .unwrap_or_else(|| cfg.out.join(commands::TOKENS_DIR));
            let text = commands::stats(&cfg, &dir)?;
            print!("{text}");
            Ok(())
        }
        Command::Eval { dataset, .. } => {
            let default = match cfg.eval.features {
                config::FeatureKind::Histogram => commands::TOKENS_DIR,
                config::FeatureKind::Bandpower => commands::FEATURES_DIR,
            };
            let dir = dataset.clone().unwrap_or_else(|| cfg.out.join(default));
            let summary = commands::eval(&cfg, &dir)?;
            let report = &summary.report;
            println!(
                "accuracy {:.4}  kappa {:.4}  ({} test epochs)",
                report.test.accuracy, report.test.kappa, report.test_epochs
            );
            Ok(())
        }
        Command::Synth {
            wake,
            deep,
            duration,
            fs,
            channels,
            format,
        } => commands::synth(&cfg, *wake, *deep, *duration, *fs, *channels, *format).map(|_| ()),
    }
}

/// Parse `args`, run, and map the outcome to an exit code. Errors go to
/// stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
        Err(_) => {
            eprintln!("error: internal failure");
            4
        }
    }
}
