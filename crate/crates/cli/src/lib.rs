//! `ctcfuse` command line: decode, train, bench, eval and gen.

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ctcfuse::{CollapseMode, FeatureSet};

pub mod bench;
pub mod decode;
pub mod eval;
pub mod gen;
pub mod train;

/// Bad flag combinations found after parsing; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub(crate) fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "ctcfuse", version, about = "CTC decoding with feature-fused beam search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode emission files with greedy or beam search.
    Decode(decode::DecodeArgs),
    /// Train feature weights with the structured perceptron.
    Train(train::TrainArgs),
    /// Time greedy and beam decoding per sentence.
    Bench(bench::BenchArgs),
    /// Corpus BLEU of a hypothesis file against a reference file.
    Eval(eval::EvalArgs),
    /// Write a synthetic emission dataset.
    Gen(gen::GenArgs),
}

/// Options shared by every command that runs beam search.
#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// Tokens kept per frame [default: 2 * beam].
    #[arg(long)]
    pub prune: Option<usize>,
    #[arg(long, default_value_t = CollapseMode::Classic)]
    pub mode: CollapseMode,
    /// Enabled features, e.g. `c+l+r+t`, `lm_norm,blank_ratio`, `none`.
    #[arg(long, default_value = "all")]
    pub features: FeatureSet,
    /// Blank-ratio threshold.
    #[arg(long, default_value_t = ctcfuse::scoring::DEFAULT_DELTA)]
    pub delta: f64,
    /// Threads; output order and content do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Inputs {
    pub names: Vec<String>,
    pub paths: Vec<PathBuf>,
}

/// A single `.ctce` file or every `.ctce` file in a directory, sorted.
pub(crate) fn emission_inputs(path: &std::path::Path) -> anyhow::Result<Inputs> {
    let paths = if path.is_dir() {
        ctcfuse::io::list_emission_files(path)?
    } else {
        vec![path.to_path_buf()]
    };
    if paths.is_empty() {
        anyhow::bail!("no .{} files in {}", ctcfuse::io::EMISSION_EXT, path.display());
    }
    let names = paths
        .iter()
        .map(|p| {
            p.file_name()
                .map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
        })
        .collect();
    Ok(Inputs { names, paths })
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Decode(a) => decode::run(&a),
        Command::Train(a) => train::run(&a),
        Command::Bench(a) => bench::run(&a),
        Command::Eval(a) => eval::run(&a),
        Command::Gen(a) => gen::run(&a),
    }
}
