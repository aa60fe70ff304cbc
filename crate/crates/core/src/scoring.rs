//! Linear scoring model: CTC log-probability plus a weighted feature vector.
//!
//! The CTC weight is fixed at 1 and is not part of the trainable weights.
//! Features are name-keyed; a [`FeatureSet`] selects which ones are active, so
//! ablations such as `c+l` or `c+l+r+t` are pure configuration.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Weight of the CTC log-probability. Never trained.
pub const CTC_WEIGHT: f64 = 1.0;

/// Blank/non-blank ratio threshold.
pub const DEFAULT_DELTA: f64 = 4.0;

pub const FEATURE_COUNT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    /// LM log-probability divided by output length.
    LmNorm,
    /// Clipped excess of the blank/non-blank ratio over delta.
    BlankRatio,
    /// Trailing blanks beyond the source length.
    TrailingBlank,
}

impl Feature {
    pub const ALL: [Feature; FEATURE_COUNT] = [Feature::LmNorm, Feature::BlankRatio, Feature::TrailingBlank];

    pub fn name(self) -> &'static str {
        match self {
            Feature::LmNorm => "lm_norm",
            Feature::BlankRatio => "blank_ratio",
            Feature::TrailingBlank => "trailing_blank",
        }
    }

    /// Accepts full names and the one-letter ablation aliases `l`, `r`, `t`.
    pub fn from_name(name: &str) -> Option<Feature> {
        match name {
            "lm_norm" | "l" | "lm" => Some(Feature::LmNorm),
            "blank_ratio" | "r" => Some(Feature::BlankRatio),
            "trailing_blank" | "t" => Some(Feature::TrailingBlank),
            _ => None,
        }
    }

    #[inline]
    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Set of enabled features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FeatureSet(u8);

impl FeatureSet {
    pub fn empty() -> Self {
        Self(0)
    }

    pub fn all() -> Self {
        Feature::ALL.into_iter().collect()
    }

    pub fn with(self, f: Feature) -> Self {
        Self(self.0 | 1 << f.index())
    }

    pub fn contains(self, f: Feature) -> bool {
        self.0 & (1 << f.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Feature> {
        Feature::ALL.into_iter().filter(move |f| self.contains(*f))
    }
}

impl FromIterator<Feature> for FeatureSet {
    fn from_iter<I: IntoIterator<Item = Feature>>(iter: I) -> Self {
        iter.into_iter().fold(Self::empty(), Self::with)
    }
}

/// Parses `c+l+r+t`, `lm_norm,blank_ratio`, `none`, ... The CTC term `c`
/// is always on and is accepted for readability.
impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut set = FeatureSet::empty();
        for part in s.split(['+', ',']).map(str::trim).filter(|p| !p.is_empty()) {
            if part == "all" {
                set = FeatureSet::all();
                continue;
            }
            if part == "c" || part == "ctc" || part == "none" {
                continue;
            }
            let f = Feature::from_name(part).ok_or_else(|| Error::Config(format!("unknown feature {part:?}")))?;
            set = set.with(f);
        }
        Ok(set)
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("none");
        }
        let names: Vec<&str> = self.iter().map(Feature::name).collect();
        f.write_str(&names.join(","))
    }
}

/// Values for exactly the features of one [`FeatureSet`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    set: FeatureSet,
    values: [f64; FEATURE_COUNT],
}

impl FeatureVector {
    pub fn zeros(set: FeatureSet) -> Self {
        Self {
            set,
            values: [0.0; FEATURE_COUNT],
        }
    }

    /// Builds a vector from `(feature, value)` pairs; the set is the pairs' features.
    pub fn from_pairs<I: IntoIterator<Item = (Feature, f64)>>(pairs: I) -> Self {
        let mut v = Self::zeros(FeatureSet::empty());
        for (f, x) in pairs {
            v.set = v.set.with(f);
            v.values[f.index()] = x;
        }
        v
    }

    pub fn feature_set(&self) -> FeatureSet {
        self.set
    }

    pub fn get(&self, f: Feature) -> Option<f64> {
        self.set.contains(f).then(|| self.values[f.index()])
    }

    /// Sets an enabled feature's value; values for disabled features are ignored.
    pub fn set(&mut self, f: Feature, value: f64) {
        if self.set.contains(f) {
            self.values[f.index()] = value;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Feature, f64)> + '_ {
        self.set.iter().map(|f| (f, self.values[f.index()]))
    }

    fn check_same_set(&self, other: &FeatureVector) -> Result<()> {
        if self.set != other.set {
            return Err(Error::FeatureMismatch {
                expected: self.set.to_string(),
                found: other.set.to_string(),
            });
        }
        Ok(())
    }

    pub fn dot(&self, other: &FeatureVector) -> Result<f64> {
        self.check_same_set(other)?;
        Ok(self
            .iter()
            .filter(|&(_, x)| x != 0.0)
            .map(|(f, x)| x * other.values[f.index()])
            .sum())
    }

    /// `self + scale * (a - b)`.
    pub fn add_scaled_difference(&self, a: &FeatureVector, b: &FeatureVector, scale: f64) -> Result<FeatureVector> {
        self.check_same_set(a)?;
        self.check_same_set(b)?;
        let mut out = *self;
        for f in self.set.iter() {
            let i = f.index();
            out.values[i] += scale * (a.values[i] - b.values[i]);
        }
        Ok(out)
    }

    pub fn is_zero(&self) -> bool {
        self.iter().all(|(_, x)| x == 0.0)
    }
}

pub fn feature_lm_norm(lm_logprob_total: f64, output_len: usize) -> f64 {
    if output_len == 0 {
        0.0
    } else {
        lm_logprob_total / output_len as f64
    }
}

pub fn feature_blank_ratio(n_blanks: usize, n_nonblanks: usize, delta: f64) -> f64 {
    let ratio = if n_nonblanks == 0 {
        n_blanks as f64
    } else {
        n_blanks as f64 / n_nonblanks as f64
    };
    (ratio - delta).max(0.0)
}

pub fn feature_trailing_blanks(trailing: usize, source_len: usize) -> f64 {
    trailing.saturating_sub(source_len) as f64
}

/// What the decoder knows about a prefix after a given number of frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrefixStats {
    /// Frames consumed so far.
    pub step: usize,
    /// Non-blank labels in the prefix.
    pub len: usize,
    /// Natural-log LM total of the prefix.
    pub lm_logprob: f64,
    pub trailing_blanks: usize,
    pub source_len: usize,
}

impl PrefixStats {
    /// Frames that produced no new label. Exact in insertion-only mode; in
    /// classic mode merged repeats are counted as blanks.
    pub fn blanks(&self) -> usize {
        self.step.saturating_sub(self.len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringModel {
    weights: FeatureVector,
    delta: f64,
}

impl ScoringModel {
    /// Zero weights for every feature in `set`.
    pub fn new(set: FeatureSet) -> Self {
        Self {
            weights: FeatureVector::zeros(set),
            delta: DEFAULT_DELTA,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn from_weights(weights: FeatureVector) -> Self {
        Self {
            weights,
            delta: DEFAULT_DELTA,
        }
    }

    pub fn ctc_weight(&self) -> f64 {
        CTC_WEIGHT
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn features(&self) -> FeatureSet {
        self.weights.set
    }

    pub fn weights(&self) -> &FeatureVector {
        &self.weights
    }

    pub fn weight(&self, f: Feature) -> Option<f64> {
        self.weights.get(f)
    }

    pub fn set_weights(&mut self, weights: FeatureVector) -> Result<()> {
        self.weights.check_same_set(&weights)?;
        self.weights = weights;
        Ok(())
    }

    pub fn set_weight(&mut self, f: Feature, w: f64) -> Result<()> {
        if !self.weights.set.contains(f) {
            return Err(Error::Config(format!("feature {f} is not enabled")));
        }
        self.weights.set(f, w);
        Ok(())
    }

    /// Feature values of a prefix under this model's feature set.
    #[inline]
    pub fn extract(&self, stats: &PrefixStats) -> FeatureVector {
        let mut phi = FeatureVector::zeros(self.weights.set);
        let set = self.weights.set;
        if set.contains(Feature::LmNorm) {
            phi.values[Feature::LmNorm.index()] = feature_lm_norm(stats.lm_logprob, stats.len);
        }
        if set.contains(Feature::BlankRatio) {
            phi.values[Feature::BlankRatio.index()] = feature_blank_ratio(stats.blanks(), stats.len, self.delta);
        }
        if set.contains(Feature::TrailingBlank) {
            phi.values[Feature::TrailingBlank.index()] =
                feature_trailing_blanks(stats.trailing_blanks, stats.source_len);
        }
        phi
    }

    /// `ctc_logprob + w . phi`, after checking the feature sets agree.
    pub fn combined_score(&self, ctc_logprob: f64, phi: &FeatureVector) -> Result<f64> {
        Ok(CTC_WEIGHT * ctc_logprob + self.weights.dot(phi)?)
    }

    #[inline]
    pub(crate) fn score_unchecked(&self, ctc_logprob: f64, phi: &FeatureVector) -> f64 {
        let mut s = CTC_WEIGHT * ctc_logprob;
        for i in 0..FEATURE_COUNT {
            // a zero weight must not turn an infinite feature into NaN
            if self.weights.values[i] != 0.0 {
                s += self.weights.values[i] * phi.values[i];
            }
        }
        s
    }

    /// Parses `name<TAB>value` lines. Unlisted enabled features stay 0;
    /// `ctc` and features outside `set` are rejected.
    pub fn parse_weights(text: &str, set: FeatureSet) -> Result<Self> {
        let mut model = Self::new(set);
        let mut seen = FeatureSet::empty();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Weights { line: i + 1, message };
            let (name, value) = line
                .split_once('\t')
                .ok_or_else(|| err(format!("expected name<TAB>value, found {line:?}")))?;
            let name = name.trim();
            if name == "ctc" {
                return Err(err("the ctc weight is fixed at 1 and cannot be set".into()));
            }
            let f = Feature::from_name(name).ok_or_else(|| err(format!("unknown feature {name:?}")))?;
            if !set.contains(f) {
                return Err(err(format!("feature {name:?} is not enabled")));
            }
            if seen.contains(f) {
                return Err(err(format!("feature {name:?} listed twice")));
            }
            seen = seen.with(f);
            let w: f64 = value.trim().parse().map_err(|_| err(format!("bad weight {value:?}")))?;
            if !w.is_finite() {
                return Err(err(format!("weight {value:?} is not finite")));
            }
            model.weights.set(f, w);
        }
        Ok(model)
    }

    pub fn to_weights_text(&self) -> String {
        let mut out = String::new();
        for (f, w) in self.weights.iter() {
            out.push_str(&format!("{}\t{}\n", f.name(), w));
        }
        out
    }
}

/// Free-function form of [`ScoringModel::combined_score`].
pub fn combined_score(ctc_logprob: f64, phi: &FeatureVector, model: &ScoringModel) -> Result<f64> {
    model.combined_score(ctc_logprob, phi)
}
