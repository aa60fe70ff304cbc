//! ARPA backoff n-gram language models over the shared vocabulary.
//!
//! Probabilities are kept in log10 exactly as written in the file and are
//! converted to natural log only by [`NGramLm::sequence_logprob`] and the
//! decoder's feature code.

use std::io::Read;
use std::path::Path;

use indexmap::IndexMap;
use rustc_hash::{FxBuildHasher, FxHashMap};

use crate::error::{Error, Result};
use crate::math::LN_10;
use crate::vocab::{TokenId, Vocabulary};

/// Query result for tokens the model cannot represent when it has no `<unk>`.
pub const DEFAULT_UNK_FLOOR: f64 = -7.0;

pub const UNK: &str = "<unk>";
pub const SENTENCE_START: &str = "<s>";
pub const SENTENCE_END: &str = "</s>";

type Key = Box<[u32]>;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    log10_prob: f64,
    log10_backoff: Option<f64>,
}

/// The longest suffix of the history that the model has as an n-gram
/// context. Backoff from a longer history is exact, so nothing else matters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct LmState {
    ctx: u32,
}

impl LmState {
    pub fn empty() -> Self {
        Self::default()
    }
}

const EMPTY_CTX: u32 = 0;

#[derive(Debug, Clone, Copy)]
struct Context {
    log10_backoff: f64,
    /// Longest proper suffix that is itself a context.
    suffix: u32,
}

#[derive(Debug, Clone, Copy)]
struct Ngram {
    log10_prob: f64,
    /// State after this n-gram: its own context id below the top order,
    /// otherwise that of its longest suffix context.
    next: u32,
}

#[inline]
fn index_key(ctx: u32, word: u32) -> u64 {
    (u64::from(ctx) << 32) | u64::from(word)
}

#[derive(Debug, Clone)]
pub struct NGramLm {
    max_order: usize,
    tables: Vec<IndexMap<Key, Entry, FxBuildHasher>>,
    /// Word ids of each context; index 0 is the empty context.
    context_words: Vec<Box<[u32]>>,
    contexts: Vec<Context>,
    index: FxHashMap<u64, Ngram>,
    /// Which word ids have a unigram.
    known: Vec<bool>,
    /// Word strings for internal ids `>= vocab_len` (words the vocabulary lacks).
    extra_words: Vec<String>,
    vocab_words: Vec<String>,
    unk: Option<u32>,
    end: Option<u32>,
    unk_floor: f64,
}

impl NGramLm {
    pub fn load(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, vocab)
    }

    pub fn from_reader(mut reader: impl Read, vocab: &Vocabulary) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        Self::parse(&text, vocab)
    }

    /// Parses ARPA text. Words absent from `vocab` are kept under private ids
    /// when the model has `<unk>` (and `<s>`/`</s>` always); otherwise they
    /// are a load error.
    pub fn parse(text: &str, vocab: &Vocabulary) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let err = |line: usize, message: String| Error::Arpa {
            line: line + 1,
            message,
        };

        let mut i = lines
            .iter()
            .position(|l| l.trim() == "\\data\\")
            .ok_or_else(|| err(lines.len(), "missing \\data\\ header".into()))?
            + 1;

        let mut counts: Vec<usize> = Vec::new();
        while i < lines.len() {
            let line = lines[i].trim();
            if line.is_empty() {
                i += 1;
                if !counts.is_empty() {
                    break;
                }
                continue;
            }
            let Some(rest) = line.strip_prefix("ngram ") else {
                break;
            };
            let (order, count) = rest
                .split_once('=')
                .ok_or_else(|| err(i, format!("malformed count line {line:?}")))?;
            let order: usize = order
                .trim()
                .parse()
                .map_err(|_| err(i, format!("bad order in {line:?}")))?;
            let count: usize = count
                .trim()
                .parse()
                .map_err(|_| err(i, format!("bad count in {line:?}")))?;
            if order != counts.len() + 1 {
                return Err(err(
                    i,
                    format!("expected ngram {} count, found order {order}", counts.len() + 1),
                ));
            }
            counts.push(count);
            i += 1;
        }
        if counts.is_empty() {
            return Err(err(i.min(lines.len()), "no ngram counts in header".into()));
        }
        let max_order = counts.len();

        // Collect raw sections first: word mapping depends on whether <unk> exists.
        let mut sections: Vec<Vec<(usize, f64, Vec<&str>, Option<f64>)>> = Vec::with_capacity(max_order);
        for order in 1..=max_order {
            while i < lines.len() && lines[i].trim().is_empty() {
                i += 1;
            }
            let header = format!("\\{order}-grams:");
            if i >= lines.len() {
                return Err(err(i, format!("truncated: missing {header} section")));
            }
            if lines[i].trim() != header {
                return Err(err(i, format!("expected {header}, found {:?}", lines[i].trim())));
            }
            i += 1;
            let mut entries = Vec::with_capacity(counts[order - 1]);
            while i < lines.len() {
                let line = lines[i].trim();
                if line.is_empty() || line.starts_with('\\') {
                    break;
                }
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() != order + 1 && fields.len() != order + 2 {
                    return Err(err(i, format!("expected {order} words, found {:?}", line)));
                }
                let prob: f64 = fields[0]
                    .parse()
                    .map_err(|_| err(i, format!("bad log-probability {:?}", fields[0])))?;
                let backoff = match fields.get(order + 1) {
                    Some(b) => Some(b.parse::<f64>().map_err(|_| err(i, format!("bad backoff {b:?}")))?),
                    None => None,
                };
                entries.push((i, prob, fields[1..=order].to_vec(), backoff));
                i += 1;
            }
            if entries.len() != counts[order - 1] {
                return Err(err(
                    i.min(lines.len()),
                    format!(
                        "{order}-gram count mismatch: header declares {}, section has {}",
                        counts[order - 1],
                        entries.len()
                    ),
                ));
            }
            sections.push(entries);
        }
        while i < lines.len() && lines[i].trim().is_empty() {
            i += 1;
        }
        if i >= lines.len() || lines[i].trim() != "\\end\\" {
            return Err(err(i.min(lines.len()), "truncated: missing \\end\\".into()));
        }

        let has_unk = sections[0].iter().any(|(_, _, w, _)| w[0] == UNK);
        let vocab_words: Vec<String> = vocab.tokens().to_vec();
        let mut extra_words: Vec<String> = Vec::new();
        let mut word_ids: std::collections::HashMap<&str, u32> = std::collections::HashMap::new();
        for (line, _, words, _) in &sections[0] {
            let w = words[0];
            let id = match vocab.id(w) {
                Some(id) => id,
                None if has_unk || w == SENTENCE_START || w == SENTENCE_END || w == UNK => {
                    extra_words.push(w.to_string());
                    (vocab_words.len() + extra_words.len() - 1) as u32
                }
                None => {
                    return Err(err(
                        *line,
                        format!("word {w:?} is not in the vocabulary and the model has no {UNK}"),
                    ))
                }
            };
            word_ids.insert(w, id);
        }

        let mut tables: Vec<IndexMap<Key, Entry, FxBuildHasher>> = Vec::with_capacity(max_order);
        for (o, entries) in sections.into_iter().enumerate() {
            let mut table = IndexMap::with_capacity_and_hasher(entries.len(), FxBuildHasher);
            for (line, prob, words, backoff) in entries {
                let key: Key = words
                    .iter()
                    .map(|w| {
                        word_ids
                            .get(w)
                            .copied()
                            .ok_or_else(|| err(line, format!("word {w:?} has no unigram entry")))
                    })
                    .collect::<Result<Vec<u32>>>()?
                    .into_boxed_slice();
                if o > 0 && !tables[o - 1].contains_key(&key[..o]) {
                    return Err(err(
                        line,
                        format!("context {:?} of this {}-gram is missing", &words[..o], o + 1),
                    ));
                }
                let entry = Entry {
                    log10_prob: prob,
                    log10_backoff: backoff,
                };
                if table.insert(key, entry).is_some() {
                    return Err(err(line, format!("duplicate {}-gram {:?}", o + 1, words)));
                }
            }
            tables.push(table);
        }

        let unk = word_ids.get(UNK).copied();
        let end = word_ids.get(SENTENCE_END).copied();
        let mut known = vec![false; vocab_words.len() + extra_words.len()];
        for k in tables[0].keys() {
            known[k[0] as usize] = true;
        }
        let (context_words, contexts, index) = build_index(&tables);
        Ok(Self {
            max_order,
            tables,
            context_words,
            contexts,
            index,
            known,
            extra_words,
            vocab_words,
            unk,
            end,
            unk_floor: DEFAULT_UNK_FLOOR,
        })
    }

    pub fn with_unk_floor(mut self, log10_floor: f64) -> Self {
        self.unk_floor = log10_floor;
        self
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Number of n-grams per order, lowest first.
    pub fn counts(&self) -> Vec<usize> {
        self.tables.iter().map(IndexMap::len).collect()
    }

    pub fn has_unk(&self) -> bool {
        self.unk.is_some()
    }

    fn word(&self, id: u32) -> &str {
        let id = id as usize;
        if id < self.vocab_words.len() {
            &self.vocab_words[id]
        } else {
            &self.extra_words[id - self.vocab_words.len()]
        }
    }

    /// All n-grams of one order as `(words, log10 prob, log10 backoff)`, in file order.
    pub fn ngrams(&self, order: usize) -> impl Iterator<Item = (&[u32], f64, Option<f64>)> + '_ {
        self.tables[order - 1]
            .iter()
            .map(|(k, e)| (&k[..], e.log10_prob, e.log10_backoff))
    }

    /// Words of the context `state` stands for, oldest first.
    pub fn context_words(&self, state: &LmState) -> &[u32] {
        &self.context_words[state.ctx as usize]
    }

    fn map_word(&self, token: TokenId) -> Option<u32> {
        if self.known.get(token as usize).copied().unwrap_or(false) {
            Some(token)
        } else {
            self.unk
        }
    }

    /// Conditional log10 probability of `token` after `state` using standard
    /// backoff, plus the successor state.
    pub fn logprob(&self, state: &LmState, token: TokenId) -> (f64, LmState) {
        let Some(word) = self.map_word(token) else {
            return (self.unk_floor, LmState::empty());
        };
        let mut ctx = state.ctx;
        let mut backoff = 0.0;
        loop {
            if let Some(ng) = self.index.get(&index_key(ctx, word)) {
                return (backoff + ng.log10_prob, LmState { ctx: ng.next });
            }
            let c = self.contexts[ctx as usize];
            backoff += c.log10_backoff;
            debug_assert!(ctx != EMPTY_CTX, "mapped word without a unigram");
            ctx = c.suffix;
        }
    }

    /// Same query straight from the n-gram tables, given explicit history words.
    #[cfg(test)]
    fn logprob_words(&self, history: &[u32], token: TokenId) -> f64 {
        let Some(word) = self.map_word(token) else {
            return self.unk_floor;
        };
        let keep = history.len().min(self.max_order - 1);
        let mut buf: Vec<u32> = history[history.len() - keep..].to_vec();
        buf.push(word);
        let last = buf.len() - 1;
        let mut backoff = 0.0;
        for start in 0..=last {
            if let Some(e) = self.tables[last - start].get(&buf[start..]) {
                return backoff + e.log10_prob;
            }
            if let Some(e) = self.tables[last - start - 1].get(&buf[start..last]) {
                backoff += e.log10_backoff.unwrap_or(0.0);
            }
        }
        unreachable!()
    }

    /// Natural-log total of the sequence scored from the empty state.
    pub fn sequence_logprob(&self, tokens: &[TokenId]) -> f64 {
        let mut state = LmState::empty();
        let mut total = 0.0;
        for &t in tokens {
            let (lp, next) = self.logprob(&state, t);
            total += lp;
            state = next;
        }
        total * LN_10
    }

    /// log10 probability of `</s>` after `state`, when the model has it.
    pub fn end_logprob(&self, state: &LmState) -> Option<f64> {
        self.end.map(|end| self.logprob(state, end).0)
    }

    /// ARPA text reproducing this model's n-grams in their original order.
    pub fn to_arpa(&self) -> String {
        let mut out = String::from("\\data\\\n");
        for (o, table) in self.tables.iter().enumerate() {
            out.push_str(&format!("ngram {}={}\n", o + 1, table.len()));
        }
        for (o, table) in self.tables.iter().enumerate() {
            out.push_str(&format!("\n\\{}-grams:\n", o + 1));
            for (key, entry) in table {
                out.push_str(&entry.log10_prob.to_string());
                out.push('\t');
                for (j, &w) in key.iter().enumerate() {
                    if j > 0 {
                        out.push(' ');
                    }
                    out.push_str(self.word(w));
                }
                if let Some(b) = entry.log10_backoff {
                    out.push('\t');
                    out.push_str(&b.to_string());
                }
                out.push('\n');
            }
        }
        out.push_str("\n\\end\\\n");
        out
    }
}

/// Integer ids for every n-gram below the top order (as contexts) and a
/// `(context, word)` hash index over all n-grams.
fn build_index(
    tables: &[IndexMap<Key, Entry, FxBuildHasher>],
) -> (Vec<Box<[u32]>>, Vec<Context>, FxHashMap<u64, Ngram>) {
    let max_order = tables.len();
    let mut context_words: Vec<Box<[u32]>> = vec![Box::new([])];
    let mut contexts = vec![Context {
        log10_backoff: 0.0,
        suffix: EMPTY_CTX,
    }];
    // context id of the n-gram at position i of table o, for o < max_order - 1
    let mut ids: Vec<Vec<u32>> = Vec::with_capacity(max_order);
    let lookup = |ids: &Vec<Vec<u32>>, words: &[u32]| -> Option<u32> {
        if words.is_empty() {
            return Some(EMPTY_CTX);
        }
        let o = words.len() - 1;
        let i = tables.get(o)?.get_index_of(words)?;
        ids.get(o).map(|v| v[i])
    };
    let longest_suffix = |ids: &Vec<Vec<u32>>, words: &[u32]| -> u32 {
        (1..=words.len())
            .find_map(|s| lookup(ids, &words[s..]))
            .unwrap_or(EMPTY_CTX)
    };
    for (o, table) in tables.iter().enumerate().take(max_order - 1) {
        let mut order_ids = Vec::with_capacity(table.len());
        for (key, entry) in table {
            let suffix = longest_suffix(&ids, key);
            order_ids.push(contexts.len() as u32);
            context_words.push(key.clone());
            contexts.push(Context {
                log10_backoff: entry.log10_backoff.unwrap_or(0.0),
                suffix,
            });
        }
        debug_assert_eq!(ids.len(), o);
        ids.push(order_ids);
    }
    let total: usize = tables.iter().map(IndexMap::len).sum();
    let mut index = FxHashMap::with_capacity_and_hasher(total, FxBuildHasher);
    for (o, table) in tables.iter().enumerate() {
        for (i, (key, entry)) in table.iter().enumerate() {
            let n = key.len();
            let ctx = lookup(&ids, &key[..n - 1]).expect("contexts are validated on load");
            let next = if o + 1 < max_order {
                ids[o][i]
            } else {
                longest_suffix(&ids, key)
            };
            index.insert(
                index_key(ctx, key[n - 1]),
                Ngram {
                    log10_prob: entry.log10_prob,
                    next,
                },
            );
        }
    }
    (context_words, contexts, index)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HAND: &str = "\\data\\
ngram 1=2
ngram 2=1

\\1-grams:
-0.3010\ta\t-0.3010
-0.6990\tb\t0.0

\\2-grams:
-0.1549\ta b

\\end\\
";

    fn vocab() -> Vocabulary {
        Vocabulary::with_tokens(["a", "b", "c"]).unwrap()
    }

    #[test]
    fn loads_declared_counts() {
        let lm = NGramLm::parse(HAND, &vocab()).unwrap();
        assert_eq!(lm.counts(), vec![2, 1]);
        assert_eq!(lm.max_order(), 2);
    }

    #[test]
    fn hand_backoff_queries() {
        let v = vocab();
        let lm = NGramLm::parse(HAND, &v).unwrap();
        let (a, b) = (v.id("a").unwrap(), v.id("b").unwrap());
        let (p_a, after_a) = lm.logprob(&LmState::empty(), a);
        assert!((10f64.powf(p_a) - 0.5).abs() < 1e-3);
        assert_eq!(lm.context_words(&after_a), &[a]);
        let (p_b_a, _) = lm.logprob(&after_a, b);
        assert!((10f64.powf(p_b_a) - 0.700).abs() < 1e-3);
        let (_, after_b) = lm.logprob(&LmState::empty(), b);
        let (p_a_b, _) = lm.logprob(&after_b, a);
        assert!((p_a_b - (0.0 - 0.3010)).abs() < 1e-12);
        // backoff(a) applies when "a a" is unseen
        let (p_a_a, _) = lm.logprob(&after_a, a);
        assert!((p_a_a - (-0.3010 - 0.3010)).abs() < 1e-12);
    }

    #[test]
    fn sequence_total_in_natural_log() {
        let v = vocab();
        let lm = NGramLm::parse(HAND, &v).unwrap();
        assert_eq!(lm.sequence_logprob(&[]), 0.0);
        let total = lm.sequence_logprob(&[1, 2]);
        assert!((total - (0.5f64.ln() + 0.7f64.ln())).abs() < 2e-3);
        assert!((total - (-1.049)).abs() < 1e-3);
    }

    #[test]
    fn unknown_token_uses_floor_without_unk() {
        let v = vocab();
        let lm = NGramLm::parse(HAND, &v).unwrap();
        let (p, next) = lm.logprob(&LmState::empty(), 3);
        assert_eq!(p, DEFAULT_UNK_FLOOR);
        assert_eq!(next, LmState::empty());
        let lm = lm.with_unk_floor(-5.0);
        assert_eq!(lm.logprob(&LmState::empty(), 3).0, -5.0);
    }

    #[test]
    fn unknown_token_routes_through_unk() {
        let text = "\\data\\\nngram 1=3\n\n\\1-grams:\n-0.5\t<unk>\n-0.3\ta\n-1.0\t<s>\n\n\\end\\\n";
        let lm = NGramLm::parse(text, &vocab()).unwrap();
        assert!(lm.has_unk());
        assert_eq!(lm.logprob(&LmState::empty(), 2).0, -0.5);
    }

    #[test]
    fn rejects_out_of_vocabulary_words_without_unk() {
        let text = "\\data\\\nngram 1=1\n\n\\1-grams:\n-0.5\tzzz\n\n\\end\\\n";
        assert!(matches!(
            NGramLm::parse(text, &vocab()),
            Err(Error::Arpa { line: 5, .. })
        ));
    }

    #[test]
    fn count_mismatch_and_truncation() {
        let bad = HAND.replace("ngram 1=2", "ngram 1=3");
        let e = NGramLm::parse(&bad, &vocab()).unwrap_err();
        assert!(e.to_string().contains("count mismatch"), "{e}");
        let truncated = HAND.replace("\\end\\\n", "");
        let e = NGramLm::parse(&truncated, &vocab()).unwrap_err();
        assert!(e.to_string().contains("\\end\\"), "{e}");
        let garbage = HAND.replace("-0.1549\ta b", "x\ta b");
        assert!(matches!(
            NGramLm::parse(&garbage, &vocab()),
            Err(Error::Arpa { line: 10, .. })
        ));
        assert!(NGramLm::parse("hello", &vocab()).is_err());
    }

    #[test]
    fn missing_context_is_rejected() {
        let text = HAND.replace("-0.1549\ta b", "-0.1549\tc b");
        let text = text.replace("ngram 1=2", "ngram 1=2");
        let e = NGramLm::parse(&text, &vocab()).unwrap_err();
        assert!(
            e.to_string().contains("unigram") || e.to_string().contains("missing"),
            "{e}"
        );
    }

    const TRIGRAM: &str = "\\data\\
ngram 1=4
ngram 2=4
ngram 3=2

\\1-grams:
-0.8\ta\t-0.2
-0.6\tb\t-0.4
-0.9\tc\t-0.1
-0.7\t<s>\t-0.3

\\2-grams:
-0.3\ta b\t-0.25
-0.5\tb c\t-0.15
-0.4\tb a
-0.2\t<s> a\t-0.05

\\3-grams:
-0.1\ta b c
-0.15\t<s> a b

\\end\\
";

    #[test]
    fn indexed_queries_match_table_backoff() {
        let v = vocab();
        let lm = NGramLm::parse(TRIGRAM, &v).unwrap();
        let s = lm.extra_words.iter().position(|w| w == SENTENCE_START).unwrap() as u32 + v.len() as u32;
        let alphabet = [1u32, 2, 3, s];
        // every history up to length 3 over the alphabet
        let mut histories: Vec<Vec<u32>> = vec![vec![]];
        for len in 1..=3 {
            let mut next = Vec::new();
            for h in histories.iter().filter(|h| h.len() == len - 1) {
                for &w in &alphabet {
                    let mut g = h.clone();
                    g.push(w);
                    next.push(g);
                }
            }
            histories.extend(next);
        }
        for h in &histories {
            let mut state = LmState::empty();
            for &w in h {
                state = lm.logprob(&state, w).1;
            }
            for &w in &alphabet {
                let fast = lm.logprob(&state, w).0;
                let slow = lm.logprob_words(h, w);
                assert!((fast - slow).abs() < 1e-12, "history {h:?} word {w}: {fast} vs {slow}");
            }
        }
    }

    #[test]
    fn arpa_round_trip_reproduces_file() {
        let v = vocab();
        let lm = NGramLm::parse(HAND, &v).unwrap();
        let again = NGramLm::parse(&lm.to_arpa(), &v).unwrap();
        assert_eq!(again.to_arpa(), lm.to_arpa());
        assert_eq!(again.counts(), lm.counts());
    }
}
