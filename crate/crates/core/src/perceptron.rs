//! Structured-perceptron training of the scoring-model weights over beam
//! search, with early update and held-out early stopping on corpus BLEU.

use std::collections::HashMap;
use std::hash::Hash;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ctc::{min_frames, CollapseMode};
use crate::decoder::{decode_batch, BeamSearch, DecodeConfig, Hypothesis, ScoredHypothesis};
use crate::emissions::EmissionMatrix;
use crate::error::{Error, Result};
use crate::lm::NGramLm;
use crate::scoring::{FeatureSet, FeatureVector, ScoringModel, DEFAULT_DELTA};
use crate::vocab::{TokenId, BLANK_ID};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainInstance {
    pub emissions: EmissionMatrix,
    pub reference: Vec<TokenId>,
}

impl TrainInstance {
    pub fn new(emissions: EmissionMatrix, reference: Vec<TokenId>) -> Self {
        Self { emissions, reference }
    }

    pub fn source_len(&self) -> usize {
        self.emissions.source_len()
    }
}

impl AsRef<EmissionMatrix> for TrainInstance {
    fn as_ref(&self) -> &EmissionMatrix {
        &self.emissions
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beam_size: usize,
    pub token_prune_count: Option<usize>,
    pub mode: CollapseMode,
    pub features: FeatureSet,
    pub delta: f64,
    pub max_epochs: usize,
    /// Held-out evaluations without improvement before stopping.
    pub patience: usize,
    /// One update per hypothesis outscoring the gold instead of one per instance.
    pub multi_update: bool,
    /// Evaluate and return the averaged weight vector.
    pub averaging: bool,
    pub seed: u64,
    /// Threads for held-out decoding.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            beam_size: 10,
            token_prune_count: None,
            mode: CollapseMode::Classic,
            features: FeatureSet::all(),
            delta: DEFAULT_DELTA,
            max_epochs: 50,
            patience: 5,
            multi_update: false,
            averaging: false,
            seed: 0,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning rate {} must be >= 0",
                self.learning_rate
            )));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        self.decode_config(ScoringModel::new(self.features)).validate()
    }

    pub fn decode_config(&self, scoring: ScoringModel) -> DecodeConfig {
        DecodeConfig {
            beam_size: self.beam_size,
            token_prune_count: self.token_prune_count,
            mode: self.mode,
            scoring,
            nbest: 1,
            lm_end_of_sentence: false,
        }
    }
}

/// Whether `h` can still grow into `reference` in the frames left after `step`.
pub fn reference_compatible(
    h: &Hypothesis,
    reference: &[TokenId],
    m: &EmissionMatrix,
    step: usize,
    mode: CollapseMode,
) -> bool {
    if !reference.starts_with(&h.labels) {
        return false;
    }
    let remaining = m.frames().saturating_sub(step);
    let suffix = &reference[h.labels.len()..];
    let mut needed = min_frames(suffix, mode);
    // Continuing with the same label needs a blank first unless some
    // derivation already ends in one.
    if mode == CollapseMode::Classic
        && h.log_p_blank == f64::NEG_INFINITY
        && !suffix.is_empty()
        && h.labels.last() == suffix.first()
    {
        needed += 1;
    }
    needed <= remaining
}

/// `w + alpha * (phi_gold - phi_pred)`. The CTC weight is not part of `w`.
pub fn perceptron_update(
    w: &FeatureVector,
    phi_gold: &FeatureVector,
    phi_pred: &FeatureVector,
    alpha: f64,
) -> Result<FeatureVector> {
    w.add_scaled_difference(phi_gold, phi_pred, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateKind {
    /// No gold-compatible hypothesis survived this step.
    Early { step: usize },
    /// Search finished with a different top hypothesis.
    Final,
}

/// What happened while decoding one training instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceTrace {
    /// Per consumed frame: whether any beam entry was still reference-compatible.
    pub compatible: Vec<bool>,
    pub kind: Option<UpdateKind>,
    /// `(phi_gold, phi_pred)` pairs to apply in order.
    pub updates: Vec<(FeatureVector, FeatureVector)>,
}

fn best_compatible<'h>(
    hyps: &'h [ScoredHypothesis],
    reference: &[TokenId],
    m: &EmissionMatrix,
    step: usize,
    mode: CollapseMode,
) -> Option<&'h ScoredHypothesis> {
    let mut best: Option<&ScoredHypothesis> = None;
    for h in hyps {
        if reference_compatible(&h.hypothesis, reference, m, step, mode)
            && best.is_none_or(|b| h.ctc_logprob() > b.ctc_logprob())
        {
            best = Some(h);
        }
    }
    best
}

/// Decodes one instance under `model` and collects the updates the
/// early-update rule asks for. Processing stops at the first update.
pub fn run_instance(
    inst: &TrainInstance,
    model: &ScoringModel,
    cfg: &TrainConfig,
    lm: Option<&NGramLm>,
) -> Result<InstanceTrace> {
    let m = &inst.emissions;
    let dcfg = cfg.decode_config(model.clone());
    let mut search = BeamSearch::new(m, &dcfg, lm)?;
    let mut gold = search.hypotheses().swap_remove(0);
    if !reference_compatible(&gold.hypothesis, &inst.reference, m, 0, cfg.mode) {
        return Err(Error::Unrealizable {
            required: min_frames(&inst.reference, cfg.mode),
            available: m.frames(),
        });
    }
    let mut compatible = Vec::with_capacity(m.frames());
    while search.step() {
        let step = search.steps_taken();
        let hyps = search.hypotheses();
        match best_compatible(&hyps, &inst.reference, m, step, cfg.mode) {
            Some(g) => {
                compatible.push(true);
                gold = g.clone();
            }
            None => {
                compatible.push(false);
                // every hypothesis in the beam outranked the lost reference prefix
                let preds = if cfg.multi_update { &hyps[..] } else { &hyps[..1] };
                let updates = preds.iter().map(|p| (gold.features, p.features)).collect();
                return Ok(InstanceTrace {
                    compatible,
                    kind: Some(UpdateKind::Early { step }),
                    updates,
                });
            }
        }
    }
    let hyps = search.hypotheses();
    if hyps[0].labels() == inst.reference.as_slice() {
        return Ok(InstanceTrace {
            compatible,
            kind: None,
            updates: Vec::new(),
        });
    }
    let outranking: Vec<&ScoredHypothesis> = if cfg.multi_update {
        hyps.iter()
            .take_while(|h| h.labels() != inst.reference.as_slice())
            .collect()
    } else {
        vec![&hyps[0]]
    };
    Ok(InstanceTrace {
        compatible,
        kind: Some(UpdateKind::Final),
        updates: outranking.iter().map(|p| (gold.features, p.features)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    /// 0 is the all-zero starting point.
    pub epoch: usize,
    pub updates: usize,
    pub early_updates: usize,
    pub final_updates: usize,
    pub heldout_bleu: f64,
    pub heldout_exact: f64,
    pub weights: FeatureVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    Patience,
    /// An epoch made no updates; further epochs would repeat it.
    Converged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    /// Training instances whose reference cannot be realized in their frames.
    pub skipped: Vec<usize>,
    pub stop: StopReason,
}

impl TrainLog {
    /// Tab-separated, one line per epoch, deterministic.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\tupdates\tearly\tfinal\theldout_bleu\theldout_exact\tweights\n");
        for e in &self.epochs {
            let weights: Vec<String> = e.weights.iter().map(|(f, w)| format!("{}={}", f.name(), w)).collect();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{}\n",
                e.epoch,
                e.updates,
                e.early_updates,
                e.final_updates,
                e.heldout_bleu,
                e.heldout_exact,
                weights.join(",")
            ));
        }
        out.push_str(&format!(
            "# best_epoch={} stop={:?} skipped={:?}\n",
            self.best_epoch, self.stop, self.skipped
        ));
        out
    }
}

/// Held-out corpus BLEU and exact-match rate of `model`.
pub fn evaluate(
    heldout: &[TrainInstance],
    model: &ScoringModel,
    cfg: &TrainConfig,
    lm: Option<&NGramLm>,
) -> Result<(f64, f64)> {
    let results = decode_batch(heldout, &cfg.decode_config(model.clone()), lm, cfg.workers)?;
    let hyps: Vec<&[TokenId]> = results.iter().map(|r| r.best().labels()).collect();
    let refs: Vec<&[TokenId]> = heldout.iter().map(|i| i.reference.as_slice()).collect();
    let exact = hyps.iter().zip(&refs).filter(|(h, r)| h == r).count() as f64 / heldout.len() as f64;
    Ok((corpus_bleu(&hyps, &refs)?, exact))
}

/// Trains feature weights from zero. Returns the model of the best held-out
/// epoch (epoch 0 being the all-zero model) and the training log.
pub fn train(
    instances: &[TrainInstance],
    heldout: &[TrainInstance],
    cfg: &TrainConfig,
    lm: Option<&NGramLm>,
) -> Result<(ScoringModel, TrainLog)> {
    cfg.validate()?;
    if instances.is_empty() || heldout.is_empty() {
        return Err(Error::Config("training and held-out sets must be non-empty".into()));
    }
    let mut skipped = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        if let Some(pos) = inst.reference.iter().position(|&t| t == BLANK_ID) {
            return Err(Error::Item {
                index: i,
                source: Box::new(Error::BlankInReference(pos)),
            });
        }
        if min_frames(&inst.reference, cfg.mode) > inst.emissions.frames() {
            log::warn!(
                "skipping training instance {i}: reference cannot fit in {} frames",
                inst.emissions.frames()
            );
            skipped.push(i);
        }
    }

    let mut model = ScoringModel::new(cfg.features).with_delta(cfg.delta);
    let mut weight_sum = FeatureVector::zeros(cfg.features);
    let mut weight_count = 0usize;
    let (bleu0, exact0) = evaluate(heldout, &model, cfg, lm)?;
    let mut epochs = vec![EpochLog {
        epoch: 0,
        updates: 0,
        early_updates: 0,
        final_updates: 0,
        heldout_bleu: bleu0,
        heldout_exact: exact0,
        weights: *model.weights(),
    }];
    let mut best = (bleu0, model.clone(), 0usize);
    let mut stale = 0;
    let mut stop = StopReason::MaxEpochs;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..instances.len()).filter(|i| !skipped.contains(i)).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut updates, mut early, mut fin) = (0, 0, 0);
        for &i in &order {
            let trace = run_instance(&instances[i], &model, cfg, lm)?;
            match trace.kind {
                Some(UpdateKind::Early { .. }) => early += 1,
                Some(UpdateKind::Final) => fin += 1,
                None => {}
            }
            let mut w = *model.weights();
            for (gold, pred) in &trace.updates {
                w = perceptron_update(&w, gold, pred, cfg.learning_rate)?;
                updates += 1;
            }
            model.set_weights(w)?;
            if cfg.averaging {
                weight_sum = weight_sum.add_scaled_difference(&w, &FeatureVector::zeros(cfg.features), 1.0)?;
                weight_count += 1;
            }
        }
        debug_assert_eq!(model.ctc_weight(), 1.0);

        let eval_model = if cfg.averaging && weight_count > 0 {
            let zeros = FeatureVector::zeros(cfg.features);
            let avg = zeros.add_scaled_difference(&weight_sum, &zeros, 1.0 / weight_count as f64)?;
            ScoringModel::from_weights(avg).with_delta(cfg.delta)
        } else {
            model.clone()
        };
        let (bleu, exact) = evaluate(heldout, &eval_model, cfg, lm)?;
        log::info!("epoch {epoch}: {updates} updates, held-out BLEU {bleu:.2}, exact {exact:.3}");
        epochs.push(EpochLog {
            epoch,
            updates,
            early_updates: early,
            final_updates: fin,
            heldout_bleu: bleu,
            heldout_exact: exact,
            weights: *eval_model.weights(),
        });
        if bleu > best.0 {
            best = (bleu, eval_model, epoch);
            stale = 0;
        } else {
            stale += 1;
        }
        if updates == 0 {
            stop = StopReason::Converged;
            break;
        }
        if stale >= cfg.patience {
            stop = StopReason::Patience;
            break;
        }
    }

    let (_, best_model, best_epoch) = best;
    Ok((
        best_model,
        TrainLog {
            epochs,
            best_epoch,
            skipped,
            stop,
        },
    ))
}

/// Deterministic 50/50 split: the first half (rounded up) trains, the rest is held out.
pub fn split_halves<T>(mut items: Vec<T>) -> (Vec<T>, Vec<T>) {
    let heldout = items.split_off(items.len().div_ceil(2));
    (items, heldout)
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

pub const BLEU_MAX_ORDER: usize = 4;

/// Corpus BLEU in `[0, 100]` with clipped 1..4-gram precisions aggregated
/// over the corpus and the brevity penalty. Unsmoothed: any order with zero
/// matches (or no hypothesis n-grams) yields 0.
pub fn corpus_bleu<T, H, R>(hypotheses: &[H], references: &[R]) -> Result<f64>
where
    T: Eq + Hash,
    H: AsRef<[T]>,
    R: AsRef<[T]>,
{
    if hypotheses.len() != references.len() {
        return Err(Error::Config(format!(
            "{} hypotheses for {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if references.is_empty() {
        return Err(Error::Config("empty corpus".into()));
    }
    let mut matches = [0usize; BLEU_MAX_ORDER];
    let mut totals = [0usize; BLEU_MAX_ORDER];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hypotheses.iter().zip(references) {
        let (h, r) = (h.as_ref(), r.as_ref());
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=BLEU_MAX_ORDER {
            let ref_counts = ngram_counts(r, n);
            for (gram, count) in ngram_counts(h, n) {
                matches[n - 1] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
            }
            totals[n - 1] += (h.len() + 1).saturating_sub(n);
        }
    }
    if hyp_len == 0 || matches.contains(&0) {
        return Ok(0.0);
    }
    let log_precision: f64 = matches
        .iter()
        .zip(&totals)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum::<f64>()
        / BLEU_MAX_ORDER as f64;
    let brevity = if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(100.0 * brevity * log_precision.exp())
}
