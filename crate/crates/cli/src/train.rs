use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use ctcfuse::io::load_manifest;
use ctcfuse::perceptron::split_halves;
use ctcfuse::{train, NGramLm, TrainConfig, Vocabulary};

use crate::{usage, SearchArgs};

#[derive(Debug, Clone, Args)]
#[command(group = clap::ArgGroup::new("split").required(true).args(["heldout", "auto_split"]))]
pub struct TrainArgs {
    /// Training manifest: `emission-path<TAB>reference` per line.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub lm: PathBuf,
    #[arg(long)]
    pub beam: usize,
    /// Perceptron learning rate.
    #[arg(long)]
    pub lr: f64,
    /// Update against every hypothesis that outscores the gold one.
    #[arg(long)]
    pub multi_update: bool,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Held-out manifest for model selection.
    #[arg(long)]
    pub heldout: Option<PathBuf>,
    /// Train on the first half of `--manifest` and hold out the second.
    #[arg(long)]
    pub auto_split: bool,
    /// Weights file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Training log [default: `<out>.log`].
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Select and write the averaged weight vector.
    #[arg(long)]
    pub averaging: bool,
    #[command(flatten)]
    pub search: SearchArgs,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            beam_size: self.beam,
            token_prune_count: self.search.prune,
            mode: self.search.mode,
            features: self.search.features,
            delta: self.search.delta,
            max_epochs: self.epochs,
            patience: self.patience,
            multi_update: self.multi_update,
            averaging: self.averaging,
            seed: self.seed,
            workers: self.search.workers,
        }
    }

    fn log_path(&self) -> PathBuf {
        self.log.clone().unwrap_or_else(|| {
            let mut name = self.out.clone().into_os_string();
            name.push(".log");
            name.into()
        })
    }
}

pub fn run(args: &TrainArgs) -> anyhow::Result<()> {
    let cfg = args.config();
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    if args.search.workers == 0 {
        return Err(usage("--workers must be at least 1"));
    }
    let vocab =
        Vocabulary::load(&args.vocab).with_context(|| format!("loading vocabulary {}", args.vocab.display()))?;
    let lm = NGramLm::load(&args.lm, &vocab).with_context(|| format!("loading LM {}", args.lm.display()))?;
    let instances =
        load_manifest(&args.manifest, &vocab).with_context(|| format!("loading {}", args.manifest.display()))?;
    let (train_set, heldout) = match &args.heldout {
        Some(p) => (
            instances,
            load_manifest(p, &vocab).with_context(|| format!("loading {}", p.display()))?,
        ),
        None => split_halves(instances),
    };
    log::info!("{} training and {} held-out instances", train_set.len(), heldout.len());

    let (model, log) = train(&train_set, &heldout, &cfg, Some(&lm))?;
    for &i in &log.skipped {
        eprintln!(
            "warning: skipped training instance {} (reference longer than its frames allow)",
            i + 1
        );
    }
    std::fs::write(&args.out, model.to_weights_text()).with_context(|| format!("writing {}", args.out.display()))?;
    let log_path = args.log_path();
    std::fs::write(&log_path, log.to_tsv()).with_context(|| format!("writing {}", log_path.display()))?;
    Ok(())
}
