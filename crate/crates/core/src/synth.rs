//! Seeded synthetic emission tasks standing in for a trained network.
//!
//! References are drawn from a sparse random Markov chain, so a bigram LM
//! estimated from them carries real signal. Each reference token is planted at
//! its own frame of a `k * source_len` lattice with blanks elsewhere; rows are
//! softened with uniform noise and a temperature, and a fraction of token
//! frames is made ambiguous by moving mass to a fixed confusable partner.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::emissions::EmissionMatrix;
use crate::error::{Error, Result};
use crate::lm::NGramLm;
use crate::math::log_softmax;
use crate::perceptron::TrainInstance;
use crate::vocab::{TokenId, Vocabulary, BLANK_ID};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTaskSpec {
    /// Including the blank.
    pub vocab_size: usize,
    pub source_len_min: usize,
    pub source_len_max: usize,
    /// Frames per source token.
    pub split_factor: u32,
    /// Softmax temperature over planted scores; smaller is peakier.
    pub temperature: f64,
    /// Uniform score noise in `[0, noise)`; must stay below the planted margin of 1.
    pub noise: f64,
    /// Probability that a token frame shares its mass with the confusable partner.
    pub ambiguity: f64,
    /// Partner's share of that mass.
    pub ambiguity_share: f64,
    /// The share is drawn from `ambiguity_share +- share_jitter`.
    pub share_jitter: f64,
    /// Out-degree of the Markov chain generating references.
    pub successors: usize,
    pub seed: u64,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        Self {
            vocab_size: 64,
            source_len_min: 3,
            source_len_max: 24,
            split_factor: 3,
            temperature: 0.1,
            noise: 0.5,
            ambiguity: 0.0,
            ambiguity_share: 0.5,
            share_jitter: 0.15,
            successors: 4,
            seed: 0,
        }
    }
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.vocab_size < 3 {
            return bad(format!("vocabulary size {} < 3", self.vocab_size));
        }
        if self.split_factor < 1 {
            return bad("split factor must be >= 1".into());
        }
        if self.source_len_min < 1 || self.source_len_min > self.source_len_max {
            return bad(format!(
                "bad source length range {}..={}",
                self.source_len_min, self.source_len_max
            ));
        }
        if self.split_factor as usize * self.source_len_min < 2 {
            return bad("k * min source length must be >= 2".into());
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return bad(format!("temperature {} must be > 0", self.temperature));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad(format!("noise {} must be in [0, 1)", self.noise));
        }
        if !(0.0..=1.0).contains(&self.ambiguity) || !(0.0..=1.0).contains(&self.ambiguity_share) {
            return bad("ambiguity and share must be in [0, 1]".into());
        }
        if self.successors == 0 {
            return bad("successors must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub vocab: Vocabulary,
    pub instances: Vec<TrainInstance>,
    /// Confusable partner of each token id (blank maps to itself).
    pub confusions: Vec<TokenId>,
}

impl SyntheticTask {
    pub fn references(&self) -> Vec<Vec<TokenId>> {
        self.instances.iter().map(|i| i.reference.clone()).collect()
    }
}

pub fn synthetic_vocabulary(size: usize) -> Result<Vocabulary> {
    let width = (size - 1).to_string().len();
    Vocabulary::with_tokens((1..size).map(|i| format!("w{i:0width$}")))
}

struct Chain {
    start: Vec<TokenId>,
    next: Vec<Vec<(TokenId, f64)>>,
}

impl Chain {
    fn new(vocab_size: usize, successors: usize, rng: &mut ChaCha8Rng) -> Self {
        let tokens: Vec<TokenId> = (1..vocab_size as TokenId).collect();
        let next = (0..vocab_size)
            .map(|_| {
                let picks: Vec<TokenId> = tokens
                    .choose_multiple(rng, successors.min(tokens.len()))
                    .copied()
                    .collect();
                let weights: Vec<f64> = picks.iter().map(|_| rng.random_range(0.2..1.0)).collect();
                let total: f64 = weights.iter().sum();
                picks.into_iter().zip(weights.into_iter().map(|w| w / total)).collect()
            })
            .collect();
        Self { start: tokens, next }
    }

    fn sample(&self, len: usize, rng: &mut ChaCha8Rng) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(len);
        let mut cur = *self.start.choose(rng).unwrap();
        out.push(cur);
        while out.len() < len {
            let u: f64 = rng.random();
            let succ = &self.next[cur as usize];
            let mut acc = 0.0;
            cur = succ.last().unwrap().0;
            for &(t, p) in succ {
                acc += p;
                if u < acc {
                    cur = t;
                    break;
                }
            }
            out.push(cur);
        }
        out
    }
}

fn confusion_pairs(vocab_size: usize, rng: &mut ChaCha8Rng) -> Vec<TokenId> {
    let mut tokens: Vec<TokenId> = (1..vocab_size as TokenId).collect();
    tokens.shuffle(rng);
    let mut partner: Vec<TokenId> = (0..vocab_size as TokenId).collect();
    for pair in tokens.chunks(2) {
        if let [a, b] = *pair {
            partner[a as usize] = b;
            partner[b as usize] = a;
        }
    }
    if tokens.len() % 2 == 1 {
        let odd = *tokens.last().unwrap();
        partner[odd as usize] = tokens[0];
    }
    partner
}

/// Generates `count` instances. Same spec, same output.
pub fn generate_synthetic(spec: &SyntheticTaskSpec, count: usize) -> Result<SyntheticTask> {
    spec.validate()?;
    let v = spec.vocab_size;
    let vocab = synthetic_vocabulary(v)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let chain = Chain::new(v, spec.successors, &mut rng);
    let confusions = confusion_pairs(v, &mut rng);
    let k = spec.split_factor as usize;

    let mut instances = Vec::with_capacity(count);
    let mut scores = vec![0.0; v];
    for _ in 0..count {
        let source_len = rng.random_range(spec.source_len_min..=spec.source_len_max);
        let frames = k * source_len;
        // At most one token per two frames keeps a blank between any two
        // planted tokens, so repeats stay realizable.
        let max_len = (frames / 2).max(1);
        let lo = source_len.saturating_sub(1).clamp(1, max_len);
        let hi = (source_len + 1).clamp(lo, max_len);
        let len = rng.random_range(lo..=hi);
        let reference = chain.sample(len, &mut rng);

        let mut planted = vec![BLANK_ID; frames];
        for (j, &token) in reference.iter().enumerate() {
            planted[(2 * j + 1) * frames / (2 * len)] = token;
        }
        let mut data = Vec::with_capacity(frames * v);
        for &p in &planted {
            for s in scores.iter_mut() {
                *s = if spec.noise > 0.0 {
                    rng.random_range(0.0..spec.noise)
                } else {
                    0.0
                };
            }
            scores[p as usize] += 1.0;
            for s in scores.iter_mut() {
                *s /= spec.temperature;
            }
            let mut row = log_softmax(&scores);
            if p != BLANK_ID && spec.ambiguity > 0.0 && rng.random::<f64>() < spec.ambiguity {
                let partner = confusions[p as usize] as usize;
                let jitter = if spec.share_jitter > 0.0 {
                    rng.random_range(-spec.share_jitter..=spec.share_jitter)
                } else {
                    0.0
                };
                let share = (spec.ambiguity_share + jitter).clamp(0.0, 1.0);
                let mass = row[p as usize].exp() + row[partner].exp();
                row[p as usize] = ((1.0 - share) * mass).ln();
                row[partner] = (share * mass).ln();
            }
            data.extend_from_slice(&row);
        }
        let m = EmissionMatrix::new(data, frames, v, source_len)?.with_split_factor(spec.split_factor);
        instances.push(TrainInstance::new(m, reference));
    }
    Ok(SyntheticTask {
        vocab,
        instances,
        confusions,
    })
}

/// Discount subtracted from every seen bigram count.
pub const BIGRAM_DISCOUNT: f64 = 0.5;

/// ARPA text of a backoff bigram model estimated from `sentences`: add-one
/// unigrams over every real vocabulary token, absolutely discounted bigrams,
/// and backoff weights that make each conditional distribution sum to one.
/// No sentence-boundary symbols are added.
pub fn estimate_bigram_arpa(sentences: &[Vec<TokenId>], vocab: &Vocabulary) -> String {
    let v = vocab.len();
    let mut unigram = vec![0usize; v];
    let mut bigram: std::collections::BTreeMap<(TokenId, TokenId), usize> = Default::default();
    let mut total = 0usize;
    for s in sentences {
        for &t in s {
            unigram[t as usize] += 1;
            total += 1;
        }
        for w in s.windows(2) {
            *bigram.entry((w[0], w[1])).or_insert(0) += 1;
        }
    }
    let real = (v - 1) as f64;
    let p_uni: Vec<f64> = unigram
        .iter()
        .map(|&c| (c as f64 + 1.0) / (total as f64 + real))
        .collect();
    let mut ctx_total = vec![0usize; v];
    let mut ctx_types = vec![0usize; v];
    let mut seen_uni_mass = vec![0.0f64; v];
    for (&(a, b), &c) in &bigram {
        ctx_total[a as usize] += c;
        ctx_types[a as usize] += 1;
        seen_uni_mass[a as usize] += p_uni[b as usize];
    }

    let mut out = String::from("\\data\\\n");
    out.push_str(&format!("ngram 1={}\nngram 2={}\n\n\\1-grams:\n", v - 1, bigram.len()));
    for t in 1..v {
        out.push_str(&format!("{}\t{}", p_uni[t].log10(), vocab.tokens()[t]));
        if ctx_total[t] > 0 {
            let left = BIGRAM_DISCOUNT * ctx_types[t] as f64 / ctx_total[t] as f64;
            let backoff = left / (1.0 - seen_uni_mass[t]);
            out.push_str(&format!("\t{}", backoff.log10()));
        }
        out.push('\n');
    }
    out.push_str("\n\\2-grams:\n");
    for (&(a, b), &c) in &bigram {
        let p = (c as f64 - BIGRAM_DISCOUNT) / ctx_total[a as usize] as f64;
        out.push_str(&format!(
            "{}\t{} {}\n",
            p.log10(),
            vocab.tokens()[a as usize],
            vocab.tokens()[b as usize]
        ));
    }
    out.push_str("\n\\end\\\n");
    out
}

pub fn estimate_bigram_lm(sentences: &[Vec<TokenId>], vocab: &Vocabulary) -> Result<NGramLm> {
    NGramLm::parse(&estimate_bigram_arpa(sentences, vocab), vocab)
}

/// Small constructed task on which pure CTC decoding always picks the wrong
/// word and a bigram LM picks the right one.
#[derive(Debug, Clone)]
pub struct DisambiguationToy {
    pub vocab: Vocabulary,
    pub lm: NGramLm,
    pub train: Vec<TrainInstance>,
    pub heldout: Vec<TrainInstance>,
}

/// Two five-word sentences whose middle words (`c3`, `c8`) are confusable.
/// Each instance favours the partner of the correct middle word by
/// 0.55 +- 0.03 against 0.40 -+ 0.03.
pub fn disambiguation_toy(train: usize, heldout: usize, seed: u64) -> Result<DisambiguationToy> {
    let vocab = Vocabulary::with_tokens((1..=10).map(|i| format!("c{i}")))?;
    let templates: [Vec<TokenId>; 2] = [vec![1, 2, 3, 4, 5], vec![6, 7, 8, 9, 10]];
    let partner = |t: TokenId| match t {
        3 => 8,
        8 => 3,
        t => t,
    };
    let lm = estimate_bigram_lm(&templates, &vocab)?;
    let v = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |n: usize| -> Result<Vec<TrainInstance>> {
        (0..n)
            .map(|i| {
                let reference = templates[i % 2].clone();
                let source_len = reference.len();
                let frames = 3 * source_len;
                let mut rows = Vec::with_capacity(frames);
                for f in 0..frames {
                    let mut row = vec![0.0; v];
                    if f % 3 == 1 {
                        let token = reference[f / 3];
                        let rest = 0.02 / (v - 3) as f64;
                        row.iter_mut().for_each(|p| *p = rest);
                        if token != partner(token) {
                            let jitter = rng.random_range(-0.03..=0.03);
                            row[partner(token) as usize] = 0.55 + jitter;
                            row[token as usize] = 0.40 - jitter;
                            row[BLANK_ID as usize] = 0.03;
                        } else {
                            row[token as usize] = 0.90;
                            row[BLANK_ID as usize] = 0.08;
                            let rest = 0.02 / (v - 2) as f64;
                            row.iter_mut()
                                .enumerate()
                                .filter(|(j, _)| *j != token as usize && *j != 0)
                                .for_each(|(_, p)| *p = rest);
                        }
                    } else {
                        let rest = 0.05 / (v - 1) as f64;
                        row.iter_mut().for_each(|p| *p = rest);
                        row[BLANK_ID as usize] = 0.95;
                    }
                    rows.push(row);
                }
                let m = EmissionMatrix::from_probs(&rows, source_len)?;
                Ok(TrainInstance::new(m, reference))
            })
            .collect()
    };
    let train = make(train)?;
    let heldout = make(heldout)?;
    Ok(DisambiguationToy {
        vocab,
        lm,
        train,
        heldout,
    })
}
