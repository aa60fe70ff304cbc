#![allow(dead_code)]

use std::collections::HashMap;

use ctcfuse::{CollapseMode, EmissionMatrix, TokenId, BLANK_ID};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random normalized rows; `peak` > 0 sharpens them.
pub fn random_matrix(rng: &mut impl Rng, frames: usize, v: usize, peak: f64) -> EmissionMatrix {
    let rows: Vec<Vec<f64>> = (0..frames)
        .map(|_| {
            let raw: Vec<f64> = (0..v)
                .map(|_| rng.random_range(0.01..1.0f64).powf(1.0 + peak))
                .collect();
            let z: f64 = raw.iter().sum();
            raw.iter().map(|x| x / z).collect()
        })
        .collect();
    EmissionMatrix::from_probs(&rows, frames).unwrap()
}

/// Collapse written out independently of the library.
pub fn collapse_ref(path: &[TokenId], mode: CollapseMode) -> Vec<TokenId> {
    let mut out = Vec::new();
    for (t, &k) in path.iter().enumerate() {
        let repeat = mode == CollapseMode::Classic && t > 0 && path[t - 1] == k;
        if k != BLANK_ID && !repeat {
            out.push(k);
        }
    }
    out
}

/// Probability of every labeling, by summing plain path products.
pub fn labeling_probs(m: &EmissionMatrix, mode: CollapseMode) -> HashMap<Vec<TokenId>, f64> {
    let (frames, v) = (m.frames(), m.vocab_size());
    let mut probs = HashMap::new();
    let total = v.pow(frames as u32);
    let mut path = vec![0 as TokenId; frames];
    for mut code in 0..total {
        let mut p = 1.0;
        for (t, slot) in path.iter_mut().enumerate() {
            *slot = (code % v) as TokenId;
            code /= v;
            p *= m.get(t, *slot).exp();
        }
        *probs.entry(collapse_ref(&path, mode)).or_insert(0.0) += p;
    }
    probs
}

/// Highest-probability labeling; ties go to the shorter, then lexicographically smaller one.
pub fn max_marginal(probs: &HashMap<Vec<TokenId>, f64>) -> (Vec<TokenId>, f64) {
    let (labels, p) = probs
        .iter()
        .max_by(|a, b| {
            a.1.total_cmp(b.1)
                .then_with(|| b.0.len().cmp(&a.0.len()))
                .then_with(|| b.0.cmp(a.0))
        })
        .unwrap();
    (labels.clone(), *p)
}

pub fn mode_of(i: usize) -> CollapseMode {
    if i % 2 == 0 {
        CollapseMode::Classic
    } else {
        CollapseMode::InsertionOnly
    }
}
