//! Fixtures shared by the criterion benches.

use ctcfuse::perceptron::split_halves;
use ctcfuse::synth::{estimate_bigram_lm, generate_synthetic, SyntheticTaskSpec};
use ctcfuse::{Feature, FeatureSet, NGramLm, ScoringModel, TrainInstance};

pub struct Fixture {
    pub instances: Vec<TrainInstance>,
    pub lm: NGramLm,
    pub scoring: ScoringModel,
}

/// `count` ambiguous synthetic sentences, a bigram LM from the first half's
/// references, and fixed weights on every feature.
pub fn fixture(count: usize, seed: u64) -> Fixture {
    let spec = SyntheticTaskSpec {
        ambiguity: 0.5,
        seed,
        ..SyntheticTaskSpec::default()
    };
    let task = generate_synthetic(&spec, count).expect("valid spec");
    let (train, _) = split_halves(task.references());
    let lm = estimate_bigram_lm(&train, &task.vocab).expect("estimated LM parses");
    let mut scoring = ScoringModel::new(FeatureSet::all());
    for (f, w) in [
        (Feature::LmNorm, 1.0),
        (Feature::BlankRatio, -0.5),
        (Feature::TrailingBlank, -0.5),
    ] {
        scoring.set_weight(f, w).expect("feature is enabled");
    }
    Fixture {
        instances: task.instances,
        lm,
        scoring,
    }
}
