//! Greedy CTC labeling and prefix beam search with feature-fused selection.
//!
//! Each beam entry is a collapsed prefix carrying the log mass of its
//! derivations split by whether they end in a blank (`log_p_blank`) or in the
//! prefix's last label (`log_p_nonblank`). Per frame, every entry is extended
//! by the blank and by the frame's pruned tokens; identical prefixes reached
//! through different derivations are merged by log-adding their masses, and
//! the `beam_size` best prefixes under the linear scoring model survive.
//!
//! Prefixes live in a per-search trie so that extending, merging and LM
//! scoring never copy label sequences.

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use smallvec::SmallVec;

use crate::ctc::CollapseMode;
use crate::emissions::EmissionMatrix;
use crate::error::{Error, Result};
use crate::lm::{LmState, NGramLm};
use crate::math::{logaddexp, LN_10};
use crate::scoring::{FeatureSet, FeatureVector, PrefixStats, ScoringModel};
use crate::vocab::{TokenId, BLANK_ID};

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeConfig {
    pub beam_size: usize,
    /// Tokens kept per frame before extension; `None` means `2 * beam_size`.
    pub token_prune_count: Option<usize>,
    pub mode: CollapseMode,
    pub scoring: ScoringModel,
    /// Hypotheses returned; at most `beam_size`.
    pub nbest: usize,
    /// Add `log P(</s> | prefix)` to the LM total before the final ranking.
    pub lm_end_of_sentence: bool,
}

impl DecodeConfig {
    /// Classic collapse, no features, 1-best.
    pub fn new(beam_size: usize) -> Self {
        Self {
            beam_size,
            token_prune_count: None,
            mode: CollapseMode::Classic,
            scoring: ScoringModel::new(FeatureSet::empty()),
            nbest: 1,
            lm_end_of_sentence: false,
        }
    }

    pub fn with_scoring(mut self, scoring: ScoringModel) -> Self {
        self.scoring = scoring;
        self
    }

    pub fn with_mode(mut self, mode: CollapseMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_prune(mut self, count: usize) -> Self {
        self.token_prune_count = Some(count);
        self
    }

    pub fn with_nbest(mut self, nbest: usize) -> Self {
        self.nbest = nbest;
        self
    }

    pub fn prune_count(&self) -> usize {
        self.token_prune_count.unwrap_or(2 * self.beam_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::Config("beam size must be at least 1".into()));
        }
        if self.prune_count() == 0 {
            return Err(Error::Config("token prune count must be at least 1".into()));
        }
        if self.nbest == 0 || self.nbest > self.beam_size {
            return Err(Error::Config(format!(
                "nbest {} must be between 1 and the beam size {}",
                self.nbest, self.beam_size
            )));
        }
        Ok(())
    }
}

/// A collapsed prefix with its CTC mass split by the last frame's symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub labels: Vec<TokenId>,
    pub log_p_blank: f64,
    pub log_p_nonblank: f64,
    pub lm_state: LmState,
    /// Natural-log LM total of `labels`.
    pub lm_logprob: f64,
    /// Consecutive final blanks of the best-scoring incoming derivation.
    pub trailing_blanks: usize,
}

impl Hypothesis {
    pub fn ctc_logprob(&self) -> f64 {
        logaddexp(self.log_p_blank, self.log_p_nonblank)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredHypothesis {
    pub hypothesis: Hypothesis,
    pub features: FeatureVector,
    pub score: f64,
}

impl ScoredHypothesis {
    pub fn labels(&self) -> &[TokenId] {
        &self.hypothesis.labels
    }

    pub fn ctc_logprob(&self) -> f64 {
        self.hypothesis.ctc_logprob()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Distinct prefixes after merging.
    pub candidates: usize,
    pub kept: usize,
    pub best_score: f64,
}

#[derive(Debug, Clone)]
pub struct DecodeResult {
    /// Best first by combined score.
    pub nbest: Vec<ScoredHypothesis>,
    pub steps: Vec<StepStats>,
    pub elapsed: Duration,
}

impl DecodeResult {
    pub fn best(&self) -> &ScoredHypothesis {
        &self.nbest[0]
    }

    /// Equality ignoring wall-time.
    pub fn same_output(&self, other: &DecodeResult) -> bool {
        self.nbest == other.nbest && self.steps == other.steps
    }
}

/// Collapses the per-frame argmax path.
pub fn greedy_decode(m: &EmissionMatrix, mode: CollapseMode) -> Vec<TokenId> {
    let mut out = Vec::new();
    let mut prev = BLANK_ID;
    for row in m.rows() {
        let token = crate::emissions::argmax(row);
        let keep = match mode {
            CollapseMode::Classic => token != BLANK_ID && token != prev,
            CollapseMode::InsertionOnly => token != BLANK_ID,
        };
        if keep {
            out.push(token);
        }
        prev = token;
    }
    out
}

/// Appends the `count` most probable tokens of `row` to `out`, best first,
/// ties to the lower id, with the blank removed.
fn top_tokens(row: &[f64], count: usize, buf: &mut Vec<(f64, TokenId)>, out: &mut Vec<TokenId>) {
    buf.clear();
    if count >= row.len() {
        buf.extend(row.iter().enumerate().map(|(i, &v)| (v, i as TokenId)));
        buf.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    } else if count == 2 {
        // the beam-1 default; two registers beat the general insertion buffer
        let (mut v1, mut i1, mut v2, mut i2) = if row[1] > row[0] {
            (row[1], 1, row[0], 0)
        } else {
            (row[0], 0, row[1], 1)
        };
        for (i, &v) in row.iter().enumerate().skip(2) {
            if v > v2 {
                if v > v1 {
                    (v2, i2) = (v1, i1);
                    (v1, i1) = (v, i);
                } else {
                    (v2, i2) = (v, i);
                }
            }
        }
        buf.push((v1, i1 as TokenId));
        buf.push((v2, i2 as TokenId));
    } else {
        buf.extend(row[..count].iter().enumerate().map(|(i, &v)| (v, i as TokenId)));
        buf.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut floor = buf[count - 1].0;
        for (i, &v) in row[count..].iter().enumerate() {
            if v > floor {
                let pos = buf.iter().position(|&(w, _)| v > w).unwrap_or(count);
                buf.pop();
                buf.insert(pos, (v, (i + count) as TokenId));
                floor = buf[count - 1].0;
            }
        }
    }
    out.extend(buf.iter().map(|&(_, t)| t).filter(|&t| t != BLANK_ID));
}

const ROOT: u32 = 0;

struct Node {
    parent: u32,
    token: TokenId,
    len: u32,
    lm_state: LmState,
    lm_logprob: f64,
}

struct Trie {
    nodes: Vec<Node>,
}

impl Trie {
    fn new() -> Self {
        Self {
            nodes: vec![Node {
                parent: ROOT,
                token: BLANK_ID,
                len: 0,
                lm_state: LmState::empty(),
                lm_logprob: 0.0,
            }],
        }
    }

    /// Appends a new node. Prefixes are not deduplicated here: the search
    /// only needs to find the children already on the beam.
    fn push(&mut self, parent: u32, token: TokenId, lm: Option<&NGramLm>) -> u32 {
        let p = &self.nodes[parent as usize];
        let (lm_state, lm_logprob) = match lm {
            Some(lm) => {
                let (lp10, next) = lm.logprob(&p.lm_state, token);
                (next, p.lm_logprob + lp10 * LN_10)
            }
            None => (LmState::empty(), 0.0),
        };
        let id = self.nodes.len() as u32;
        let node = Node {
            parent,
            token,
            len: p.len + 1,
            lm_state,
            lm_logprob,
        };
        self.nodes.push(node);
        id
    }

    fn labels(&self, mut node: u32) -> Vec<TokenId> {
        let mut out = vec![0; self.nodes[node as usize].len as usize];
        while node != ROOT {
            let n = &self.nodes[node as usize];
            out[n.len as usize - 1] = n.token;
            node = n.parent;
        }
        out
    }

    fn cmp_labels(&self, a: u32, b: u32) -> Ordering {
        if a == b {
            return Ordering::Equal;
        }
        self.labels(a).cmp(&self.labels(b))
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    node: u32,
    log_pb: f64,
    log_pnb: f64,
    trailing: u32,
    /// Mass of the strongest single contribution merged into this entry.
    best_in: f64,
    ctc: f64,
    lm_total: f64,
    score: f64,
}

/// Incremental beam search over one emission matrix.
///
/// [`beam_search`] drives it to completion; the perceptron trainer steps it
/// frame by frame to watch the reference fall off the beam.
pub struct BeamSearch<'a> {
    m: &'a EmissionMatrix,
    cfg: &'a DecodeConfig,
    lm: Option<&'a NGramLm>,
    /// Pruned non-blank tokens of frame `t` are `tokens[offsets[t]..offsets[t + 1]]`.
    tokens: Vec<TokenId>,
    offsets: Vec<usize>,
    trie: Trie,
    beam: Vec<Entry>,
    candidates: Vec<Entry>,
    slot: Vec<u32>,
    stamp: Vec<u32>,
    step: usize,
    stats: Vec<StepStats>,
    started: Instant,
}

impl<'a> BeamSearch<'a> {
    pub fn new(m: &'a EmissionMatrix, cfg: &'a DecodeConfig, lm: Option<&'a NGramLm>) -> Result<Self> {
        let started = Instant::now();
        cfg.validate()?;
        // Every frame's pruned token list is computed up front, before the
        // sequential loop.
        let prune = cfg.prune_count();
        let mut tokens = Vec::with_capacity(m.frames() * prune.min(m.vocab_size()));
        let mut offsets = Vec::with_capacity(m.frames() + 1);
        let mut buf = Vec::with_capacity(prune.min(m.vocab_size()) + 1);
        offsets.push(0);
        for row in m.rows() {
            top_tokens(row, prune, &mut buf, &mut tokens);
            offsets.push(tokens.len());
        }
        let mut trie = Trie::new();
        let expected_nodes = 2 * m.frames() * cfg.beam_size + 1;
        trie.nodes.reserve(expected_nodes);
        let mut search = Self {
            m,
            cfg,
            lm,
            tokens,
            offsets,
            trie,
            beam: Vec::with_capacity(cfg.beam_size),
            candidates: Vec::new(),
            slot: vec![0; expected_nodes],
            stamp: vec![0; expected_nodes],
            step: 0,
            stats: Vec::with_capacity(m.frames()),
            started,
        };
        let mut root = Entry {
            node: ROOT,
            log_pb: 0.0,
            log_pnb: f64::NEG_INFINITY,
            trailing: 0,
            best_in: 0.0,
            ctc: 0.0,
            lm_total: 0.0,
            score: 0.0,
        };
        search.score_entry(&mut root);
        search.beam.push(root);
        Ok(search)
    }

    /// Frames consumed so far.
    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step == self.m.frames()
    }

    fn features(&self, e: &Entry) -> FeatureVector {
        self.cfg.scoring.extract(&PrefixStats {
            step: self.step,
            len: self.trie.nodes[e.node as usize].len as usize,
            lm_logprob: e.lm_total,
            trailing_blanks: e.trailing as usize,
            source_len: self.m.source_len(),
        })
    }

    fn score_entry(&self, e: &mut Entry) {
        e.ctc = logaddexp(e.log_pb, e.log_pnb);
        e.lm_total = self.trie.nodes[e.node as usize].lm_logprob;
        e.score = self.cfg.scoring.score_unchecked(e.ctc, &self.features(e));
    }

    /// Best first: combined score, then CTC mass, then shorter prefix, then token ids.
    fn rank(trie: &Trie, a: &Entry, b: &Entry) -> Ordering {
        b.score
            .total_cmp(&a.score)
            .then_with(|| b.ctc.total_cmp(&a.ctc))
            .then_with(|| trie.nodes[a.node as usize].len.cmp(&trie.nodes[b.node as usize].len))
            .then_with(|| trie.cmp_labels(a.node, b.node))
    }

    /// Merges one derivation into `node`. At most one of `pb`, `pnb` is finite.
    #[inline]
    fn accumulate(&mut self, node: u32, pb: f64, pnb: f64, trailing: u32) {
        let contrib = pb.max(pnb);
        if contrib == f64::NEG_INFINITY {
            return;
        }
        let n = node as usize;
        if n >= self.stamp.len() {
            let len = self.trie.nodes.len().max(2 * self.stamp.len());
            self.stamp.resize(len, 0);
            self.slot.resize(len, 0);
        }
        let stamp = self.step as u32 + 1;
        if self.stamp[n] == stamp {
            let c = &mut self.candidates[self.slot[n] as usize];
            c.log_pb = logaddexp(c.log_pb, pb);
            c.log_pnb = logaddexp(c.log_pnb, pnb);
            if contrib > c.best_in {
                c.best_in = contrib;
                c.trailing = trailing;
            }
        } else {
            self.stamp[n] = stamp;
            self.slot[n] = self.candidates.len() as u32;
            self.candidates.push(Entry {
                node,
                log_pb: pb,
                log_pnb: pnb,
                trailing,
                best_in: contrib,
                ctc: 0.0,
                lm_total: 0.0,
                score: 0.0,
            });
        }
    }

    /// Consumes one frame. Returns `false` once all frames are consumed.
    pub fn step(&mut self) -> bool {
        if self.is_done() {
            return false;
        }
        let t = self.step;
        let row = self.m.row(t);
        let lp_blank = row[BLANK_ID as usize];
        let (lo, hi) = (self.offsets[t], self.offsets[t + 1]);
        let classic = self.cfg.mode == CollapseMode::Classic;
        self.candidates.clear();

        let beam = std::mem::take(&mut self.beam);
        for e in &beam {
            let total = e.ctc;
            // blank first: fixes the merge order for the trailing-blank counter
            self.accumulate(e.node, total + lp_blank, f64::NEG_INFINITY, e.trailing + 1);
            let last = (e.node != ROOT).then(|| self.trie.nodes[e.node as usize].token);
            // extensions of `e` that are themselves on the beam must merge into those entries
            let kids: SmallVec<[(TokenId, u32); 4]> = beam
                .iter()
                .filter(|k| k.node != ROOT && self.trie.nodes[k.node as usize].parent == e.node)
                .map(|k| (self.trie.nodes[k.node as usize].token, k.node))
                .collect();
            let lm = self.lm;
            let child = |trie: &mut Trie, c: TokenId| match kids.iter().find(|(t, _)| *t == c) {
                Some(&(_, node)) => node,
                None => trie.push(e.node, c, lm),
            };
            for i in lo..hi {
                let c = self.tokens[i];
                let lp = row[c as usize];
                if classic && last == Some(c) {
                    self.accumulate(e.node, f64::NEG_INFINITY, e.log_pnb + lp, 0);
                    if e.log_pb > f64::NEG_INFINITY {
                        let node = child(&mut self.trie, c);
                        self.accumulate(node, f64::NEG_INFINITY, e.log_pb + lp, 0);
                    }
                } else {
                    let node = child(&mut self.trie, c);
                    self.accumulate(node, f64::NEG_INFINITY, total + lp, 0);
                }
            }
        }
        self.step += 1;

        let mut candidates = std::mem::take(&mut self.candidates);
        for c in candidates.iter_mut() {
            self.score_entry(c);
        }
        let n_candidates = candidates.len();
        let keep = self.cfg.beam_size;
        let trie = &self.trie;
        if keep == 1 {
            let best = (1..candidates.len()).fold(0, |best, i| {
                if Self::rank(trie, &candidates[i], &candidates[best]) == Ordering::Less {
                    i
                } else {
                    best
                }
            });
            candidates.swap(0, best);
            candidates.truncate(1);
        } else if candidates.len() > keep {
            candidates.select_nth_unstable_by(keep - 1, |a, b| Self::rank(trie, a, b));
            candidates.truncate(keep);
        }
        candidates.sort_by(|a, b| Self::rank(trie, a, b));

        let mut beam = beam;
        beam.clear();
        beam.extend_from_slice(&candidates);
        self.stats.push(StepStats {
            candidates: n_candidates,
            kept: beam.len(),
            best_score: beam[0].score,
        });
        self.beam = beam;
        self.candidates = candidates;
        true
    }

    fn materialize(&self, e: &Entry) -> ScoredHypothesis {
        let node = &self.trie.nodes[e.node as usize];
        ScoredHypothesis {
            hypothesis: Hypothesis {
                labels: self.trie.labels(e.node),
                log_p_blank: e.log_pb,
                log_p_nonblank: e.log_pnb,
                lm_state: node.lm_state,
                lm_logprob: e.lm_total,
                trailing_blanks: e.trailing as usize,
            },
            features: self.features(e),
            score: e.score,
        }
    }

    /// Current beam, best first.
    pub fn hypotheses(&self) -> Vec<ScoredHypothesis> {
        self.beam.iter().map(|e| self.materialize(e)).collect()
    }

    /// Runs any remaining frames and returns the ranked n-best list.
    pub fn finish(mut self) -> DecodeResult {
        while self.step() {}
        let mut final_beam = self.beam.clone();
        if self.cfg.lm_end_of_sentence {
            if let Some(lm) = self.lm {
                for e in final_beam.iter_mut() {
                    let node = &self.trie.nodes[e.node as usize];
                    if let Some(end) = lm.end_logprob(&node.lm_state) {
                        e.lm_total = node.lm_logprob + end * LN_10;
                        e.score = self.cfg.scoring.score_unchecked(e.ctc, &self.features(e));
                    }
                }
                let trie = &self.trie;
                final_beam.sort_by(|a, b| Self::rank(trie, a, b));
            }
        }
        let nbest = final_beam
            .iter()
            .take(self.cfg.nbest)
            .map(|e| self.materialize(e))
            .collect();
        DecodeResult {
            nbest,
            steps: std::mem::take(&mut self.stats),
            elapsed: self.started.elapsed(),
        }
    }
}

pub fn beam_search(m: &EmissionMatrix, cfg: &DecodeConfig, lm: Option<&NGramLm>) -> Result<DecodeResult> {
    Ok(BeamSearch::new(m, cfg, lm)?.finish())
}

/// Decodes every matrix, in input order, on up to `workers` threads.
/// Output does not depend on `workers`.
pub fn decode_batch<M: AsRef<EmissionMatrix> + Sync>(
    ms: &[M],
    cfg: &DecodeConfig,
    lm: Option<&NGramLm>,
    workers: usize,
) -> Result<Vec<DecodeResult>> {
    cfg.validate()?;
    let run = |(index, m): (usize, &M)| {
        beam_search(m.as_ref(), cfg, lm).map_err(|e| Error::Item {
            index,
            source: Box::new(e),
        })
    };
    if workers <= 1 {
        return ms.iter().enumerate().map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| ms.par_iter().enumerate().map(run).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::Feature;

    fn uniform(frames: usize, v: usize) -> EmissionMatrix {
        EmissionMatrix::from_probs(&vec![vec![1.0 / v as f64; v]; frames], 1).unwrap()
    }

    #[test]
    fn greedy_examples() {
        let a = vec![0.1, 0.9];
        let b = vec![0.9, 0.1];
        let m = EmissionMatrix::from_probs(&[a.clone(), b.clone(), a.clone()], 1).unwrap();
        assert_eq!(greedy_decode(&m, CollapseMode::Classic), vec![1, 1]);
        let m = EmissionMatrix::from_probs(&[b.clone(), b.clone()], 1).unwrap();
        assert!(greedy_decode(&m, CollapseMode::Classic).is_empty());
        let ra = vec![0.1, 0.8, 0.1];
        let rb = vec![0.1, 0.1, 0.8];
        let m = EmissionMatrix::from_probs(&[ra.clone(), ra, rb], 1).unwrap();
        assert_eq!(greedy_decode(&m, CollapseMode::Classic), vec![1, 2]);
        assert_eq!(greedy_decode(&m, CollapseMode::InsertionOnly), vec![1, 1, 2]);
    }

    #[test]
    fn two_frame_uniform_beam() {
        let m = uniform(2, 2);
        let cfg = DecodeConfig::new(2).with_nbest(2);
        let r = beam_search(&m, &cfg, None).unwrap();
        assert_eq!(r.nbest.len(), 2);
        assert_eq!(r.nbest[0].labels(), &[1]);
        assert!((r.nbest[0].ctc_logprob() - 0.75f64.ln()).abs() < 1e-12);
        assert!(r.nbest[1].labels().is_empty());
        assert!((r.nbest[1].ctc_logprob() - 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn top_tokens_orders_and_drops_blank() {
        let row = [0.5f64.ln(), 0.1f64.ln(), 0.3f64.ln(), 0.1f64.ln()];
        let mut buf = Vec::new();
        let mut out = Vec::new();
        top_tokens(&row, 2, &mut buf, &mut out);
        assert_eq!(out, vec![2]);
        out.clear();
        top_tokens(&row, 3, &mut buf, &mut out);
        assert_eq!(out, vec![2, 1]);
        out.clear();
        top_tokens(&row, 10, &mut buf, &mut out);
        assert_eq!(out, vec![2, 1, 3]);
    }

    #[test]
    fn top_tokens_matches_full_sort_with_ties() {
        let rows: [&[f64]; 4] = [
            &[-1.0, -1.0, -2.0, -1.0, -0.5],
            &[-3.0, -2.0, -2.0, -2.0, -3.0],
            &[-0.1, -5.0, -5.0, -0.1, -0.1],
            &[-2.0, -1.0, -1.0, -4.0, -1.0],
        ];
        let mut buf = Vec::new();
        for row in rows {
            let mut sorted: Vec<(f64, TokenId)> = row.iter().enumerate().map(|(i, &v)| (v, i as TokenId)).collect();
            sorted.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for count in 1..=row.len() {
                let mut out = Vec::new();
                top_tokens(row, count, &mut buf, &mut out);
                let want: Vec<TokenId> = sorted[..count].iter().map(|p| p.1).filter(|&t| t != BLANK_ID).collect();
                assert_eq!(out, want, "row {row:?} count {count}");
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(DecodeConfig::new(0).validate().is_err());
        assert!(DecodeConfig::new(2).with_nbest(3).validate().is_err());
        assert!(DecodeConfig::new(2).with_prune(0).validate().is_err());
        assert_eq!(DecodeConfig::new(5).prune_count(), 10);
    }

    #[test]
    fn repeated_labels_need_a_blank_in_classic_mode() {
        // a a with a strong blank between: classic [a, a] only via the blank.
        let m = EmissionMatrix::from_probs(&[vec![0.1, 0.9], vec![0.8, 0.2], vec![0.1, 0.9]], 1).unwrap();
        let cfg = DecodeConfig::new(4).with_nbest(3);
        let r = beam_search(&m, &cfg, None).unwrap();
        let aa = r.nbest.iter().find(|h| h.labels() == [1, 1]).unwrap();
        let expected = crate::ctc::ctc_loss(&m, &[1, 1], CollapseMode::Classic).unwrap();
        assert!((aa.ctc_logprob() + expected).abs() < 1e-12);
    }

    #[test]
    fn trailing_blanks_follow_the_best_derivation() {
        let m = EmissionMatrix::from_probs(&[vec![0.2, 0.8], vec![0.9, 0.1], vec![0.9, 0.1]], 1).unwrap();
        let cfg = DecodeConfig::new(3).with_nbest(2);
        let r = beam_search(&m, &cfg, None).unwrap();
        let best = r.best();
        assert_eq!(best.labels(), &[1]);
        assert_eq!(best.hypothesis.trailing_blanks, 2);
        let empty = r.nbest.iter().find(|h| h.labels().is_empty()).unwrap();
        assert_eq!(empty.hypothesis.trailing_blanks, 3);
    }

    #[test]
    fn features_enter_the_ranking() {
        let m = uniform(2, 2);
        let mut scoring = ScoringModel::new(FeatureSet::empty().with(Feature::BlankRatio));
        // the empty prefix has ratio feature max(0, 2 - 4) = 0; push via a small delta
        scoring = scoring.with_delta(0.0);
        scoring.set_weight(Feature::BlankRatio, -10.0).unwrap();
        let cfg = DecodeConfig::new(2).with_nbest(2).with_scoring(scoring);
        let r = beam_search(&m, &cfg, None).unwrap();
        assert_eq!(r.best().labels(), &[1]);
        assert!(r.nbest[1].score < r.nbest[0].score);
    }

    #[test]
    fn batch_matches_sequential() {
        let ms: Vec<EmissionMatrix> = (0..5).map(|i| uniform(2 + i, 3)).collect();
        let cfg = DecodeConfig::new(3);
        let one = decode_batch(&ms, &cfg, None, 1).unwrap();
        let four = decode_batch(&ms, &cfg, None, 4).unwrap();
        for (a, b) in one.iter().zip(&four) {
            assert!(a.same_output(b));
        }
    }
}
