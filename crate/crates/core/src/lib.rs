//! Decoding toolkit for CTC-trained non-autoregressive translation models.
//!
//! The crate covers the full decode-time pipeline that sits after the neural
//! network: per-frame emission matrices go in, ranked translations come out.
//!
//! - [`ctc`]: collapse semantics, exact loss and gradient, brute-force oracle.
//! - [`lm`]: ARPA backoff n-gram models with incremental state.
//! - [`scoring`]: the linear scoring model and its features.
//! - [`decoder`]: greedy labeling and prefix beam search with derivation merging.
//! - [`perceptron`]: structured-perceptron training of feature weights, corpus BLEU.
//! - [`io`]: the `CTCE` emission container and dataset manifests.
//! - [`synth`]: seeded synthetic emission tasks for tests and benchmarks.

pub mod ctc;
pub mod decoder;
pub mod emissions;
mod error;
pub mod io;
pub mod lm;
pub mod math;
pub mod perceptron;
pub mod scoring;
pub mod synth;
pub mod vocab;

pub use ctc::CollapseMode;
pub use decoder::{beam_search, decode_batch, greedy_decode, BeamSearch, DecodeConfig, DecodeResult, Hypothesis};
pub use emissions::EmissionMatrix;
pub use error::{Error, Result};
pub use lm::{LmState, NGramLm};
pub use perceptron::{corpus_bleu, train, TrainConfig, TrainInstance};
pub use scoring::{Feature, FeatureSet, FeatureVector, ScoringModel};
pub use vocab::{TokenId, Vocabulary, BLANK, BLANK_ID};
