mod common;

use common::{labeling_probs, max_marginal, mode_of, random_matrix, rng};
use ctcfuse::ctc::ctc_loss;
use ctcfuse::synth::{estimate_bigram_lm, generate_synthetic, SyntheticTaskSpec};
use ctcfuse::{
    beam_search, decode_batch, greedy_decode, CollapseMode, DecodeConfig, Feature, FeatureSet, ScoringModel,
};
use rand::Rng;

fn saturated(v: usize, frames: usize) -> DecodeConfig {
    // Distinct prefixes after T frames never exceed sum_{l<=T} (V-1)^l.
    let bound: usize = (0..=frames).map(|l| (v - 1).pow(l as u32)).sum();
    DecodeConfig::new(bound).with_prune(v)
}

#[test]
fn saturated_beam_finds_max_marginal_labeling() {
    let mut r = rng(10);
    let mut mismatches = 0;
    for i in 0..200 {
        let frames = r.random_range(1..=5);
        let v = r.random_range(2..=4);
        let mode = mode_of(i);
        let m = random_matrix(&mut r, frames, v, 1.0);
        let (best, p) = max_marginal(&labeling_probs(&m, mode));
        let cfg = saturated(v, frames).with_mode(mode);
        let top = beam_search(&m, &cfg, None).unwrap();
        if top.best().labels() != best.as_slice() {
            mismatches += 1;
        }
        assert!((top.best().ctc_logprob() - p.ln()).abs() < 1e-9);
    }
    assert_eq!(mismatches, 0);
}

#[test]
fn saturated_masses_equal_forward_scores() {
    let mut r = rng(11);
    for i in 0..40 {
        let mode = mode_of(i);
        let m = random_matrix(&mut r, 4, 3, 0.0);
        let cfg = saturated(3, 4).with_mode(mode);
        let cfg = DecodeConfig {
            nbest: cfg.beam_size,
            ..cfg
        };
        let result = beam_search(&m, &cfg, None).unwrap();
        let mut total = 0.0;
        for h in &result.nbest {
            let forward = -ctc_loss(&m, h.labels(), mode).unwrap();
            assert!((h.ctc_logprob() - forward).abs() < 1e-9);
            total += forward.exp();
        }
        assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn beam_one_matches_greedy_on_peaked_rows() {
    let spec = SyntheticTaskSpec {
        temperature: 0.02,
        seed: 5,
        ..SyntheticTaskSpec::default()
    };
    let task = generate_synthetic(&spec, 30).unwrap();
    for inst in &task.instances {
        let r = beam_search(&inst.emissions, &DecodeConfig::new(1), None).unwrap();
        assert_eq!(
            r.best().labels(),
            greedy_decode(&inst.emissions, CollapseMode::Classic).as_slice()
        );
    }
}

#[test]
fn batch_output_is_independent_of_workers() {
    let spec = SyntheticTaskSpec {
        ambiguity: 0.5,
        seed: 6,
        ..SyntheticTaskSpec::default()
    };
    let task = generate_synthetic(&spec, 24).unwrap();
    let lm = estimate_bigram_lm(&task.references(), &task.vocab).unwrap();
    let mut scoring = ScoringModel::new(FeatureSet::all());
    scoring.set_weight(Feature::LmNorm, 0.8).unwrap();
    scoring.set_weight(Feature::BlankRatio, -0.2).unwrap();
    let cfg = DecodeConfig::new(6).with_scoring(scoring).with_nbest(3);
    let one = decode_batch(&task.instances, &cfg, Some(&lm), 1).unwrap();
    let four = decode_batch(&task.instances, &cfg, Some(&lm), 4).unwrap();
    assert!(one.iter().zip(&four).all(|(a, b)| a.same_output(b)));
}

#[test]
fn nbest_is_sorted_and_distinct() {
    let mut r = rng(12);
    for _ in 0..20 {
        let m = random_matrix(&mut r, 6, 4, 0.3);
        let result = beam_search(&m, &DecodeConfig::new(8).with_nbest(8), None).unwrap();
        let scores: Vec<f64> = result.nbest.iter().map(|h| h.score).collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
        let mut labels: Vec<_> = result.nbest.iter().map(|h| h.labels().to_vec()).collect();
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), result.nbest.len());
    }
}
