use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use ctcfuse::corpus_bleu;

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Hypotheses, one space-tokenized sentence per line.
    #[arg(long)]
    pub hyp: PathBuf,
    /// References, aligned line by line with `--hyp`.
    #[arg(long = "ref")]
    pub reference: PathBuf,
}

fn sentences(path: &std::path::Path) -> anyhow::Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect())
}

pub fn bleu(hyps: &[Vec<String>], refs: &[Vec<String>]) -> anyhow::Result<f64> {
    if hyps.len() != refs.len() {
        bail!("{} hypothesis lines but {} reference lines", hyps.len(), refs.len());
    }
    Ok(corpus_bleu(hyps, refs)?)
}

pub fn run(args: &EvalArgs) -> anyhow::Result<()> {
    let score = bleu(&sentences(&args.hyp)?, &sentences(&args.reference)?)?;
    println!("{score:.2}");
    Ok(())
}
