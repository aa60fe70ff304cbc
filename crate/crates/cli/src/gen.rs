use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use ctcfuse::io::{self, Manifest, ManifestEntry, EMISSION_EXT};
use ctcfuse::synth::{estimate_bigram_arpa, generate_synthetic, SyntheticTaskSpec};

use crate::usage;

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    /// Vocabulary size including the blank.
    #[arg(long, default_value_t = 64)]
    pub vocab_size: usize,
    #[arg(long)]
    pub count: usize,
    /// Frames per source token.
    #[arg(long, default_value_t = 3)]
    pub k: u32,
    #[arg(long, default_value_t = 0.1)]
    pub temperature: f64,
    /// Probability that a token frame is confusable with its partner.
    #[arg(long, default_value_t = 0.0)]
    pub ambiguity: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub min_len: usize,
    #[arg(long, default_value_t = 24)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

pub const VOCAB_FILE: &str = "vocab.txt";
pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const REFERENCES_FILE: &str = "references.txt";
pub const LM_FILE: &str = "bigram.arpa";

/// Writes `vocab.txt`, one `.ctce` file per sentence, `manifest.tsv`,
/// `references.txt` and `bigram.arpa`, a bigram LM estimated from the
/// references of the first half (the training half under `--auto-split`).
pub fn run(args: &GenArgs) -> anyhow::Result<()> {
    let spec = SyntheticTaskSpec {
        vocab_size: args.vocab_size,
        source_len_min: args.min_len,
        source_len_max: args.max_len,
        split_factor: args.k,
        temperature: args.temperature,
        noise: args.noise,
        ambiguity: args.ambiguity,
        seed: args.seed,
        ..SyntheticTaskSpec::default()
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    if args.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let task = generate_synthetic(&spec, args.count)?;
    let out = &args.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let write = |name: &str, bytes: &[u8]| {
        let path = out.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
    };

    write(VOCAB_FILE, task.vocab.to_text().as_bytes())?;
    let width = args.count.saturating_sub(1).to_string().len().max(6);
    let mut manifest = Manifest::default();
    let mut references = String::new();
    for (i, inst) in task.instances.iter().enumerate() {
        let name = format!("{i:0width$}.{EMISSION_EXT}");
        write(&name, &io::write_emissions(&inst.emissions))?;
        let reference = task.vocab.render(&inst.reference);
        references.push_str(&reference);
        references.push('\n');
        manifest.entries.push(ManifestEntry {
            emissions: name.into(),
            reference,
        });
    }
    write(MANIFEST_FILE, manifest.to_text().as_bytes())?;
    write(REFERENCES_FILE, references.as_bytes())?;
    let refs = task.references();
    let train_half = &refs[..refs.len().div_ceil(2)];
    write(LM_FILE, estimate_bigram_arpa(train_half, &task.vocab).as_bytes())?;
    Ok(())
}
