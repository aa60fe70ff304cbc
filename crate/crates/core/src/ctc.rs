//! CTC path semantics: collapse, loss by forward recursion, gradient by
//! forward-backward occupancy, and an enumeration oracle for small instances.

use std::fmt;
use std::str::FromStr;

use crate::emissions::EmissionMatrix;
use crate::error::{Error, Result};
use crate::math::logaddexp;
use crate::vocab::{TokenId, BLANK_ID};

/// How a frame-level path maps to an output label sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CollapseMode {
    /// Merge adjacent repeats, then drop blanks (standard CTC).
    #[default]
    Classic,
    /// Drop blanks only; every non-blank frame emits a label.
    InsertionOnly,
}

impl fmt::Display for CollapseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CollapseMode::Classic => "classic",
            CollapseMode::InsertionOnly => "insertion",
        })
    }
}

impl FromStr for CollapseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classic" => Ok(CollapseMode::Classic),
            "insertion" | "insertion-only" => Ok(CollapseMode::InsertionOnly),
            other => Err(Error::Config(format!("unknown collapse mode {other:?}"))),
        }
    }
}

pub fn collapse(path: &[TokenId], mode: CollapseMode) -> Vec<TokenId> {
    let mut out = Vec::with_capacity(path.len());
    let mut prev = BLANK_ID;
    for &token in path {
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

/// Number of adjacent equal pairs, i.e. blanks Classic mode must insert.
pub fn adjacent_repeats(labels: &[TokenId]) -> usize {
    labels.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Fewest frames any path needs to collapse to `labels`.
pub fn min_frames(labels: &[TokenId], mode: CollapseMode) -> usize {
    match mode {
        CollapseMode::Classic => labels.len() + adjacent_repeats(labels),
        CollapseMode::InsertionOnly => labels.len(),
    }
}

fn check_reference(m: &EmissionMatrix, reference: &[TokenId]) -> Result<()> {
    for (i, &id) in reference.iter().enumerate() {
        if id == BLANK_ID {
            return Err(Error::BlankInReference(i));
        }
        if id as usize >= m.vocab_size() {
            return Err(Error::TokenOutOfRange {
                id,
                size: m.vocab_size(),
            });
        }
    }
    Ok(())
}

/// Blank-augmented label sequence `[-, y1, -, y2, ..., -]` with its transition rules.
struct Lattice {
    labels: Vec<TokenId>,
    mode: CollapseMode,
}

impl Lattice {
    fn new(m: &EmissionMatrix, reference: &[TokenId], mode: CollapseMode) -> Result<Self> {
        check_reference(m, reference)?;
        let required = min_frames(reference, mode);
        if required > m.frames() {
            return Err(Error::Unrealizable {
                required,
                available: m.frames(),
            });
        }
        let mut labels = Vec::with_capacity(2 * reference.len() + 1);
        labels.push(BLANK_ID);
        for &y in reference {
            labels.push(y);
            labels.push(BLANK_ID);
        }
        Ok(Self { labels, mode })
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    /// Visits the states `s` may be entered from at the previous frame.
    #[inline]
    fn for_each_pred(&self, s: usize, mut f: impl FnMut(usize)) {
        let is_blank = self.labels[s] == BLANK_ID;
        match self.mode {
            CollapseMode::Classic => {
                f(s);
                if s >= 1 {
                    f(s - 1);
                }
                if !is_blank && s >= 2 && self.labels[s - 2] != self.labels[s] {
                    f(s - 2);
                }
            }
            CollapseMode::InsertionOnly => {
                if is_blank {
                    f(s);
                    if s >= 1 {
                        f(s - 1);
                    }
                } else {
                    f(s - 1);
                    if s >= 2 {
                        f(s - 2);
                    }
                }
            }
        }
    }

    fn is_final(&self, s: usize) -> bool {
        s + 1 == self.len() || s + 2 == self.len()
    }

    /// Full forward table, `alpha[t][s]` includes the emission at `t`.
    fn forward(&self, m: &EmissionMatrix) -> Vec<Vec<f64>> {
        let s_len = self.len();
        let mut alpha = vec![vec![f64::NEG_INFINITY; s_len]; m.frames()];
        alpha[0][0] = m.get(0, self.labels[0]);
        if s_len > 1 {
            alpha[0][1] = m.get(0, self.labels[1]);
        }
        for t in 1..m.frames() {
            let (prev, cur) = alpha.split_at_mut(t);
            let prev = &prev[t - 1];
            for (s, slot) in cur[0].iter_mut().enumerate() {
                let mut acc = f64::NEG_INFINITY;
                self.for_each_pred(s, |p| acc = logaddexp(acc, prev[p]));
                if acc > f64::NEG_INFINITY {
                    *slot = acc + m.get(t, self.labels[s]);
                }
            }
        }
        alpha
    }

    /// `beta[t][s]`: log mass of completing from state `s` after frame `t`,
    /// excluding the emission at `t`.
    fn backward(&self, m: &EmissionMatrix) -> Vec<Vec<f64>> {
        let s_len = self.len();
        let frames = m.frames();
        let mut beta = vec![vec![f64::NEG_INFINITY; s_len]; frames];
        for s in 0..s_len {
            if self.is_final(s) {
                beta[frames - 1][s] = 0.0;
            }
        }
        for t in (0..frames - 1).rev() {
            let (cur, next) = beta.split_at_mut(t + 1);
            let next = &next[0];
            let cur = &mut cur[t];
            for s_next in 0..s_len {
                if next[s_next] == f64::NEG_INFINITY {
                    continue;
                }
                let via = next[s_next] + m.get(t + 1, self.labels[s_next]);
                self.for_each_pred(s_next, |p| cur[p] = logaddexp(cur[p], via));
            }
        }
        beta
    }
}

/// Negative log-likelihood of `reference` summed over all paths that collapse to it.
pub fn ctc_loss(m: &EmissionMatrix, reference: &[TokenId], mode: CollapseMode) -> Result<f64> {
    let lattice = Lattice::new(m, reference, mode)?;
    let s_len = lattice.len();
    let mut prev = vec![f64::NEG_INFINITY; s_len];
    let mut cur = vec![f64::NEG_INFINITY; s_len];
    prev[0] = m.get(0, lattice.labels[0]);
    if s_len > 1 {
        prev[1] = m.get(0, lattice.labels[1]);
    }
    for t in 1..m.frames() {
        for (s, slot) in cur.iter_mut().enumerate() {
            let mut acc = f64::NEG_INFINITY;
            lattice.for_each_pred(s, |p| acc = logaddexp(acc, prev[p]));
            *slot = if acc > f64::NEG_INFINITY {
                acc + m.get(t, lattice.labels[s])
            } else {
                f64::NEG_INFINITY
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let mut total = prev[s_len - 1];
    if s_len >= 2 {
        total = logaddexp(total, prev[s_len - 2]);
    }
    Ok(-total)
}

/// Largest `V^T` the enumeration oracle accepts.
pub const BRUTEFORCE_LIMIT: u128 = 1_000_000;

/// Enumerates every frame labeling. Returns `+inf` when no path collapses to `reference`.
pub fn ctc_loss_bruteforce(m: &EmissionMatrix, reference: &[TokenId], mode: CollapseMode) -> Result<f64> {
    check_reference(m, reference)?;
    let v = m.vocab_size();
    let frames = m.frames();
    let labelings = (v as u128).checked_pow(frames as u32).unwrap_or(u128::MAX);
    if labelings > BRUTEFORCE_LIMIT {
        return Err(Error::TooLarge {
            labelings,
            limit: BRUTEFORCE_LIMIT,
        });
    }
    let mut path = vec![0 as TokenId; frames];
    let mut total = f64::NEG_INFINITY;
    loop {
        if collapse(&path, mode) == reference {
            let logp: f64 = path.iter().enumerate().map(|(t, &k)| m.get(t, k)).sum();
            total = logaddexp(total, logp);
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == frames {
                return Ok(-total);
            }
            path[pos] += 1;
            if (path[pos] as usize) < v {
                break;
            }
            path[pos] = 0;
            pos += 1;
        }
    }
}

/// Gradient of the NLL with respect to each raw log-probability entry,
/// row-major `T x V`. Entry `(t, k)` equals minus the posterior expected
/// number of times the paths use token `k` at frame `t`.
pub fn ctc_gradient(m: &EmissionMatrix, reference: &[TokenId], mode: CollapseMode) -> Result<Vec<f64>> {
    let lattice = Lattice::new(m, reference, mode)?;
    let alpha = lattice.forward(m);
    let beta = lattice.backward(m);
    let log_total = alpha[0]
        .iter()
        .zip(&beta[0])
        .fold(f64::NEG_INFINITY, |acc, (a, b)| logaddexp(acc, a + b));
    if log_total == f64::NEG_INFINITY {
        return Err(Error::Emissions(
            "reference has zero probability under these emissions".into(),
        ));
    }
    let v = m.vocab_size();
    let mut grad = vec![0.0; m.frames() * v];
    for t in 0..m.frames() {
        for s in 0..lattice.len() {
            let occ = alpha[t][s] + beta[t][s] - log_total;
            if occ > f64::NEG_INFINITY {
                grad[t * v + lattice.labels[s] as usize] -= occ.exp();
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: TokenId = 1;
    const B: TokenId = 2;
    const BL: TokenId = BLANK_ID;

    fn uniform(frames: usize, v: usize) -> EmissionMatrix {
        EmissionMatrix::from_probs(&vec![vec![1.0 / v as f64; v]; frames], 1).unwrap()
    }

    #[test]
    fn collapse_examples() {
        let path = [A, BL, A, A, B];
        assert_eq!(collapse(&path, CollapseMode::Classic), vec![A, A, B]);
        assert_eq!(collapse(&path, CollapseMode::InsertionOnly), vec![A, A, A, B]);
        assert!(collapse(&[BL, BL, BL], CollapseMode::Classic).is_empty());
        assert!(collapse(&[BL, BL, BL], CollapseMode::InsertionOnly).is_empty());
    }

    #[test]
    fn min_frames_counts_separators() {
        assert_eq!(min_frames(&[A, A, A], CollapseMode::Classic), 5);
        assert_eq!(min_frames(&[A, A, A], CollapseMode::InsertionOnly), 3);
        assert_eq!(min_frames(&[A, B, A], CollapseMode::Classic), 3);
    }

    // Values from enumerating the 4 paths over T=2, V={-,a} by hand.
    #[test]
    fn two_frame_uniform_examples() {
        let m = uniform(2, 2);
        let classic = ctc_loss(&m, &[A], CollapseMode::Classic).unwrap();
        assert!((classic - (-(0.75f64).ln())).abs() < 1e-12);
        assert!((classic - 0.287682).abs() < 1e-6);
        let ins = ctc_loss(&m, &[A], CollapseMode::InsertionOnly).unwrap();
        assert!((ins - 0.693147).abs() < 1e-6);
        let empty = ctc_loss(&m, &[], CollapseMode::Classic).unwrap();
        assert!((empty - 1.386294).abs() < 1e-6);
        for mode in [CollapseMode::Classic, CollapseMode::InsertionOnly] {
            for reference in [&[][..], &[A][..]] {
                let dp = ctc_loss(&m, reference, mode).unwrap();
                let bf = ctc_loss_bruteforce(&m, reference, mode).unwrap();
                assert!((dp - bf).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn oracle_edge_cases() {
        let m = uniform(2, 2);
        assert_eq!(
            ctc_loss_bruteforce(&m, &[A, A], CollapseMode::Classic).unwrap(),
            f64::INFINITY
        );
        let p = 0.3f64;
        let single = EmissionMatrix::from_probs(&[vec![1.0 - p, p]], 1).unwrap();
        let nll = ctc_loss_bruteforce(&single, &[A], CollapseMode::Classic).unwrap();
        assert!((nll + p.ln()).abs() < 1e-12);
        let big = uniform(11, 4);
        assert!(matches!(
            ctc_loss_bruteforce(&big, &[A], CollapseMode::Classic),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn unrealizable_reference_is_an_error() {
        let m = uniform(2, 2);
        match ctc_loss(&m, &[A, A], CollapseMode::Classic) {
            Err(Error::Unrealizable {
                required: 3,
                available: 2,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(ctc_loss(&m, &[A, A], CollapseMode::InsertionOnly).is_ok());
        assert!(matches!(
            ctc_loss(&m, &[BL], CollapseMode::Classic),
            Err(Error::BlankInReference(0))
        ));
        assert!(matches!(
            ctc_loss(&m, &[7], CollapseMode::Classic),
            Err(Error::TokenOutOfRange { .. })
        ));
    }

    #[test]
    fn single_frame_gradient() {
        let m = EmissionMatrix::from_probs(&[vec![0.4, 0.35, 0.25]], 1).unwrap();
        let g = ctc_gradient(&m, &[A], CollapseMode::Classic).unwrap();
        assert_eq!(g, vec![0.0, -1.0, 0.0]);
    }

    #[test]
    fn unused_entries_have_zero_gradient() {
        let m = uniform(3, 3);
        let g = ctc_gradient(&m, &[A], CollapseMode::Classic).unwrap();
        for t in 0..3 {
            assert_eq!(g[t * 3 + B as usize], 0.0);
            // every path puts exactly one token per frame
            let row: f64 = g[t * 3..t * 3 + 3].iter().sum();
            assert!((row + 1.0).abs() < 1e-12);
        }
    }
}
