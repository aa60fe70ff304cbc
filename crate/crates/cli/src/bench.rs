use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use clap::Args;
use ctcfuse::{greedy_decode, BeamSearch, DecodeConfig, EmissionMatrix, NGramLm};
use rayon::prelude::*;
use serde::Serialize;

use crate::decode::{decode_config, load, nbest_records, scoring_model, NbestRecord};
use crate::{usage, SearchArgs};

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Directory of `.ctce` files.
    #[arg(long)]
    pub emissions: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub lm: PathBuf,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Beam sizes to time; greedy is always timed too.
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,20")]
    pub beams: Vec<usize>,
    /// Timed runs per sentence and method; the per-sentence time is their median.
    #[arg(long, default_value_t = 5)]
    pub repeat: usize,
    /// Untimed runs per sentence and method before timing.
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    /// Width of the source-length buckets.
    #[arg(long, default_value_t = 8)]
    pub bucket_width: usize,
    /// JSON-lines record stream.
    #[arg(long, default_value = "bench.jsonl")]
    pub records: PathBuf,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(tag = "method", content = "beam", rename_all = "lowercase")]
pub enum Method {
    Greedy,
    Beam(usize),
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Greedy => f.write_str("greedy"),
            Method::Beam(b) => write!(f, "beam{b}"),
        }
    }
}

/// Per-sentence timing of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    /// Every timed run, in microseconds.
    pub samples: Vec<f64>,
}

impl Timing {
    pub fn median(&self) -> f64 {
        median(&self.samples)
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn micros(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e6
}

/// Times `method` on `m`: `warmup` untimed runs then `repeat` timed ones.
/// Only decoding is inside the timer.
pub fn time_sentence(
    m: &EmissionMatrix,
    method: Method,
    cfg: &DecodeConfig,
    lm: Option<&NGramLm>,
    warmup: usize,
    repeat: usize,
) -> ctcfuse::Result<Timing> {
    let mut samples = Vec::with_capacity(repeat);
    for i in 0..warmup + repeat {
        let start = Instant::now();
        match method {
            Method::Greedy => {
                std::hint::black_box(greedy_decode(std::hint::black_box(m), cfg.mode));
            }
            Method::Beam(beam) => {
                let cfg = DecodeConfig {
                    beam_size: beam,
                    nbest: 1,
                    ..cfg.clone()
                };
                std::hint::black_box(BeamSearch::new(std::hint::black_box(m), &cfg, lm)?.finish());
            }
        }
        let t = micros(start);
        if i >= warmup {
            samples.push(t);
        }
    }
    Ok(Timing { samples })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    #[serde(flatten)]
    pub method: Method,
    /// `"all"` or `"lo-hi"` source lengths.
    pub bucket: String,
    pub sentences: usize,
    /// Timed runs aggregated into this row.
    pub samples: usize,
    /// Mean of the per-sentence medians, microseconds.
    pub mean_us: f64,
    /// Median of the per-sentence medians, microseconds.
    pub median_us: f64,
}

/// One row per method for all sentences, then one per method and bucket.
pub fn timing_rows(source_lens: &[usize], timings: &[(Method, Vec<Timing>)], bucket_width: usize) -> Vec<TimingRow> {
    let row = |method: Method, bucket: String, picked: Vec<&Timing>| {
        let medians: Vec<f64> = picked.iter().map(|t| t.median()).collect();
        TimingRow {
            method,
            bucket,
            sentences: picked.len(),
            samples: picked.iter().map(|t| t.samples.len()).sum(),
            mean_us: mean(&medians),
            median_us: median(&medians),
        }
    };
    let mut rows: Vec<TimingRow> = timings
        .iter()
        .map(|(m, ts)| row(*m, "all".into(), ts.iter().collect()))
        .collect();
    let width = bucket_width.max(1);
    let mut buckets: Vec<usize> = source_lens.iter().map(|l| l.saturating_sub(1) / width).collect();
    buckets.sort_unstable();
    buckets.dedup();
    for (method, ts) in timings {
        for &b in &buckets {
            let picked = ts
                .iter()
                .zip(source_lens)
                .filter(|(_, l)| l.saturating_sub(1) / width == b)
                .map(|(t, _)| t)
                .collect();
            rows.push(row(*method, format!("{}-{}", b * width + 1, (b + 1) * width), picked));
        }
    }
    rows
}

/// Whether the all-sentence mean time never drops as the beam grows.
pub fn monotone_in_beam(rows: &[TimingRow]) -> bool {
    let mut beams: Vec<(usize, f64)> = rows
        .iter()
        .filter(|r| r.bucket == "all")
        .filter_map(|r| match r.method {
            Method::Beam(b) => Some((b, r.mean_us)),
            Method::Greedy => None,
        })
        .collect();
    beams.sort_by_key(|&(b, _)| b);
    beams.windows(2).all(|w| w[1].1 >= w[0].1)
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record<'a> {
    Config {
        sentences: usize,
        beams: &'a [usize],
        repeat: usize,
        warmup: usize,
        workers: usize,
        prune: Option<usize>,
        mode: String,
        features: String,
    },
    Sentence {
        index: usize,
        source: &'a str,
        source_len: usize,
        frames: usize,
        greedy: String,
        beams: Vec<BeamOutput>,
    },
    Timing(&'a TimingRow),
    Summary {
        monotone_in_beam: bool,
        beam1_over_greedy: Option<f64>,
    },
}

#[derive(Serialize)]
struct BeamOutput {
    beam: usize,
    #[serde(flatten)]
    best: NbestRecord,
}

pub fn run(args: &BenchArgs) -> anyhow::Result<()> {
    if args.repeat == 0 {
        return Err(usage("--repeat must be at least 1"));
    }
    let mut beams = args.beams.clone();
    beams.sort_unstable();
    beams.dedup();
    let scoring = scoring_model(args.weights.as_deref(), &args.search)?;
    let mut configs = Vec::new();
    for &b in &beams {
        configs.push(decode_config(b, 1, scoring.clone(), &args.search)?);
    }
    let base = decode_config(1, 1, scoring, &args.search)?;
    let data = load(&args.emissions, &args.vocab, Some(&args.lm))?;
    let lm = data.lm.as_ref();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.search.workers)
        .build()?;

    let mut methods = vec![Method::Greedy];
    methods.extend(beams.iter().map(|&b| Method::Beam(b)));
    let mut timings = Vec::new();
    for &method in &methods {
        let ts = pool.install(|| {
            data.emissions
                .par_iter()
                .map(|m| time_sentence(m, method, &base, lm, args.warmup, args.repeat))
                .collect::<ctcfuse::Result<Vec<_>>>()
        })?;
        timings.push((method, ts));
    }
    let source_lens: Vec<usize> = data.emissions.iter().map(EmissionMatrix::source_len).collect();
    let rows = timing_rows(&source_lens, &timings, args.bucket_width);
    let monotone = monotone_in_beam(&rows);
    let mean_of = |m: Method| {
        rows.iter()
            .find(|r| r.method == m && r.bucket == "all")
            .map(|r| r.mean_us)
    };
    let ratio = mean_of(Method::Beam(1))
        .zip(mean_of(Method::Greedy))
        .map(|(b, g)| b / g);

    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    writeln!(
        out,
        "{:<8} {:>9} {:>9} {:>9} {:>12} {:>12}",
        "method", "bucket", "sentences", "samples", "mean_ms", "median_ms"
    )?;
    for r in &rows {
        writeln!(
            out,
            "{:<8} {:>9} {:>9} {:>9} {:>12.4} {:>12.4}",
            r.method.to_string(),
            r.bucket,
            r.sentences,
            r.samples,
            r.mean_us / 1e3,
            r.median_us / 1e3
        )?;
    }
    writeln!(
        out,
        "mean time non-decreasing in beam size: {}",
        if monotone { "yes" } else { "NO" }
    )?;
    if let Some(r) = ratio {
        writeln!(out, "beam1 / greedy: {r:.2}x")?;
    }
    out.flush()?;

    let file = std::fs::File::create(&args.records).with_context(|| format!("creating {}", args.records.display()))?;
    let mut rec = std::io::BufWriter::new(file);
    let mut emit = |r: &Record| -> anyhow::Result<()> { Ok(writeln!(rec, "{}", serde_json::to_string(r)?)?) };
    emit(&Record::Config {
        sentences: data.emissions.len(),
        beams: &beams,
        repeat: args.repeat,
        warmup: args.warmup,
        workers: args.search.workers,
        prune: args.search.prune,
        mode: args.search.mode.to_string(),
        features: args.search.features.to_string(),
    })?;
    for (index, (m, name)) in data.emissions.iter().zip(&data.names).enumerate() {
        let mut outputs = Vec::new();
        for cfg in &configs {
            let result = BeamSearch::new(m, cfg, lm)?.finish();
            let best = nbest_records(&result, &data.vocab).remove(0);
            outputs.push(BeamOutput {
                beam: cfg.beam_size,
                best,
            });
        }
        emit(&Record::Sentence {
            index,
            source: name,
            source_len: m.source_len(),
            frames: m.frames(),
            greedy: data.vocab.render(&greedy_decode(m, base.mode)),
            beams: outputs,
        })?;
    }
    for r in &rows {
        emit(&Record::Timing(r))?;
    }
    emit(&Record::Summary {
        monotone_in_beam: monotone,
        beam1_over_greedy: ratio,
    })?;
    rec.flush()?;
    Ok(())
}
