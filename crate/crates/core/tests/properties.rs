mod common;

use common::collapse_ref;
use ctcfuse::ctc::collapse;
use ctcfuse::math::{logaddexp, logsumexp};
use ctcfuse::perceptron::perceptron_update;
use ctcfuse::scoring::{feature_blank_ratio, feature_lm_norm, feature_trailing_blanks, DEFAULT_DELTA};
use ctcfuse::synth::estimate_bigram_lm;
use ctcfuse::{CollapseMode, Feature, FeatureSet, FeatureVector, LmState, ScoringModel, Vocabulary};
use proptest::prelude::*;

fn vector() -> impl Strategy<Value = FeatureVector> {
    prop::array::uniform3(-10.0f64..10.0).prop_map(|[l, r, t]| {
        FeatureVector::from_pairs([
            (Feature::LmNorm, l),
            (Feature::BlankRatio, r),
            (Feature::TrailingBlank, t),
        ])
    })
}

proptest! {
    #[test]
    fn logaddexp_merges_in_any_order(a in -50.0f64..5.0, b in -50.0f64..5.0, c in -50.0f64..5.0) {
        let left = logaddexp(logaddexp(a, b), c);
        let right = logaddexp(a, logaddexp(c, b));
        prop_assert!((left - right).abs() < 1e-12);
        prop_assert!((left - logsumexp(&[a, b, c])).abs() < 1e-12);
        prop_assert_eq!(logaddexp(a, f64::NEG_INFINITY), a);
    }

    #[test]
    fn collapse_matches_reference(path in prop::collection::vec(0u32..4, 0..12)) {
        for mode in [CollapseMode::Classic, CollapseMode::InsertionOnly] {
            prop_assert_eq!(collapse(&path, mode), collapse_ref(&path, mode));
        }
        let once = collapse(&path, CollapseMode::InsertionOnly);
        prop_assert_eq!(collapse(&once, CollapseMode::InsertionOnly), once);
    }

    #[test]
    fn blank_features_are_clipped_and_monotone(n in 0usize..60, m in 0usize..20, src in 0usize..20) {
        let r = feature_blank_ratio(n, m, DEFAULT_DELTA);
        prop_assert!(r >= 0.0);
        prop_assert!(feature_blank_ratio(n + 1, m, DEFAULT_DELTA) >= r);
        let t = feature_trailing_blanks(n, src);
        prop_assert!(t >= 0.0);
        prop_assert!(feature_trailing_blanks(n + 1, src) >= t);
    }

    #[test]
    fn combined_score_is_linear(w in vector(), phi in vector(), psi in vector(), ctc in -40.0f64..0.0) {
        let model = ScoringModel::from_weights(w);
        let s_phi = model.combined_score(ctc, &phi).unwrap();
        let s_psi = model.combined_score(0.0, &psi).unwrap();
        let zeros = FeatureVector::zeros(FeatureSet::all());
        let sum = phi.add_scaled_difference(&psi, &zeros, 1.0).unwrap();
        prop_assert!((model.combined_score(ctc, &sum).unwrap() - (s_phi + s_psi)).abs() < 1e-9);
        let by_hand: f64 = ctc + w.iter().zip(phi.iter()).map(|((_, a), (_, b))| a * b).sum::<f64>();
        prop_assert!((s_phi - by_hand).abs() < 1e-9);
    }

    #[test]
    fn updates_move_along_the_feature_difference(
        w in vector(), gold in vector(), pred in vector(), alpha in 0.0f64..2.0, steps in 1usize..6,
    ) {
        let mut model = ScoringModel::from_weights(w);
        for _ in 0..steps {
            let next = perceptron_update(model.weights(), &gold, &pred, alpha).unwrap();
            model.set_weights(next).unwrap();
            prop_assert_eq!(model.ctc_weight(), 1.0);
        }
        for ((f, got), ((_, w0), ((_, g), (_, p)))) in model.weights().iter().zip(w.iter().zip(gold.iter().zip(pred.iter()))) {
            prop_assert!((got - (w0 + steps as f64 * alpha * (g - p))).abs() < 1e-9, "{}", f.name());
        }
    }
}

#[test]
fn lm_norm_handles_empty_output() {
    assert_eq!(feature_lm_norm(-3.0, 0), 0.0);
    assert_eq!(feature_lm_norm(-3.0, 2), -1.5);
}

#[test]
fn estimated_bigram_distributions_sum_to_one() {
    let vocab = Vocabulary::with_tokens(["a", "b", "c", "d"]).unwrap();
    let sentences = vec![vec![1, 2, 3], vec![1, 2, 2, 4], vec![3, 1]];
    let lm = estimate_bigram_lm(&sentences, &vocab).unwrap();
    let words: Vec<u32> = (1..vocab.len() as u32).collect();
    let mut states = vec![LmState::empty()];
    states.extend(words.iter().map(|&w| lm.logprob(&LmState::empty(), w).1));
    for state in states {
        let total: f64 = words.iter().map(|&w| 10f64.powf(lm.logprob(&state, w).0)).sum();
        assert!((total - 1.0).abs() < 1e-9, "{:?}: {total}", lm.context_words(&state));
    }
}
