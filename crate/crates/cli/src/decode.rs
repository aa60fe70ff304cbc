use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use ctcfuse::emissions::ROW_TOLERANCE;
use ctcfuse::{decode_batch, io, DecodeConfig, DecodeResult, EmissionMatrix, NGramLm, ScoringModel, Vocabulary};
use serde::Serialize;

use crate::{emission_inputs, usage, SearchArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Jsonl,
}

#[derive(Debug, Clone, Args)]
pub struct DecodeArgs {
    /// A `.ctce` file or a directory of them (decoded in file-name order).
    #[arg(long)]
    pub emissions: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// ARPA language model; without it `lm_norm` is 0.
    #[arg(long)]
    pub lm: Option<PathBuf>,
    /// `feature<TAB>weight` lines; missing features weigh 0.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub beam: usize,
    #[arg(long, default_value_t = 1)]
    pub nbest: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Add the end-of-sentence LM probability before the final ranking.
    #[arg(long)]
    pub lm_eos: bool,
    #[command(flatten)]
    pub search: SearchArgs,
}

/// Everything a decoding command needs, loaded and validated.
pub(crate) struct Loaded {
    pub vocab: Vocabulary,
    pub lm: Option<NGramLm>,
    pub names: Vec<String>,
    pub emissions: Vec<EmissionMatrix>,
}

pub(crate) fn load(
    emissions: &std::path::Path,
    vocab: &std::path::Path,
    lm: Option<&std::path::Path>,
) -> anyhow::Result<Loaded> {
    let vocab = Vocabulary::load(vocab).with_context(|| format!("loading vocabulary {}", vocab.display()))?;
    let lm = lm
        .map(|p| NGramLm::load(p, &vocab).with_context(|| format!("loading LM {}", p.display())))
        .transpose()?;
    let inputs = emission_inputs(emissions)?;
    let emissions = inputs
        .paths
        .iter()
        .map(|p| {
            io::load_emissions(p)
                .and_then(|m| m.validated(&vocab, ROW_TOLERANCE))
                .with_context(|| format!("loading {}", p.display()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(Loaded {
        vocab,
        lm,
        names: inputs.names,
        emissions,
    })
}

pub(crate) fn scoring_model(weights: Option<&std::path::Path>, search: &SearchArgs) -> anyhow::Result<ScoringModel> {
    let model = match weights {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading weights {}", p.display()))?;
            ScoringModel::parse_weights(&text, search.features).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ScoringModel::new(search.features),
    };
    Ok(model.with_delta(search.delta))
}

pub(crate) fn decode_config(
    beam: usize,
    nbest: usize,
    scoring: ScoringModel,
    search: &SearchArgs,
) -> anyhow::Result<DecodeConfig> {
    let mut cfg = DecodeConfig::new(beam)
        .with_scoring(scoring)
        .with_mode(search.mode)
        .with_nbest(nbest);
    cfg.token_prune_count = search.prune;
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    if search.workers == 0 {
        return Err(usage("--workers must be at least 1"));
    }
    Ok(cfg)
}

#[derive(Serialize)]
pub(crate) struct NbestRecord {
    pub text: String,
    pub tokens: Vec<u32>,
    pub ctc_logprob: f64,
    pub features: serde_json::Map<String, serde_json::Value>,
    pub score: f64,
}

#[derive(Serialize)]
struct SentenceRecord<'a> {
    index: usize,
    source: &'a str,
    nbest: Vec<NbestRecord>,
}

pub(crate) fn nbest_records(result: &DecodeResult, vocab: &Vocabulary) -> Vec<NbestRecord> {
    result
        .nbest
        .iter()
        .map(|h| NbestRecord {
            text: vocab.render(h.labels()),
            tokens: h.labels().to_vec(),
            ctc_logprob: h.ctc_logprob(),
            features: h
                .features
                .iter()
                .map(|(f, v)| (f.name().to_string(), serde_json::json!(v)))
                .collect(),
            score: h.score,
        })
        .collect()
}

pub fn run(args: &DecodeArgs) -> anyhow::Result<()> {
    let scoring = scoring_model(args.weights.as_deref(), &args.search)?;
    let cfg = decode_config(args.beam, args.nbest, scoring, &args.search)?;
    let data = load(&args.emissions, &args.vocab, args.lm.as_deref())?;
    let mut cfg = cfg;
    cfg.lm_end_of_sentence = args.lm_eos && data.lm.is_some();
    let results = decode_batch(&data.emissions, &cfg, data.lm.as_ref(), args.search.workers)?;

    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    for (index, (result, name)) in results.iter().zip(&data.names).enumerate() {
        match args.format {
            Format::Text => {
                for h in &result.nbest {
                    writeln!(out, "{}", data.vocab.render(h.labels()))?;
                }
            }
            Format::Jsonl => {
                let record = SentenceRecord {
                    index,
                    source: name,
                    nbest: nbest_records(result, &data.vocab),
                };
                writeln!(out, "{}", serde_json::to_string(&record)?)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
