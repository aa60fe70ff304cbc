//! Per-frame log-probability lattice produced by a non-autoregressive model.

use crate::error::{Error, Result};
use crate::math::logsumexp;
use crate::vocab::{TokenId, Vocabulary};

/// Default bound on `|logsumexp(row)|` accepted by [`EmissionMatrix::validate`].
pub const ROW_TOLERANCE: f64 = 1e-3;

/// Frames-per-source-token convention used when nothing else is known.
pub const DEFAULT_SPLIT_FACTOR: u32 = 3;

/// `T x V` natural-log probabilities, row-major, plus source-length metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMatrix {
    data: Vec<f64>,
    frames: usize,
    vocab_size: usize,
    source_len: usize,
    split_factor: u32,
}

impl EmissionMatrix {
    /// Wraps row-major data. Only the shape is checked here; see [`validate`](Self::validate).
    pub fn new(data: Vec<f64>, frames: usize, vocab_size: usize, source_len: usize) -> Result<Self> {
        if frames == 0 {
            return Err(Error::Emissions("matrix has no frames".into()));
        }
        if vocab_size < 2 {
            return Err(Error::Emissions(format!("vocabulary width {vocab_size} < 2")));
        }
        if data.len() != frames * vocab_size {
            return Err(Error::Emissions(format!(
                "{} values for a {frames}x{vocab_size} matrix",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Emissions(format!(
                "entry ({}, {}) is not a log-probability",
                i / vocab_size,
                i % vocab_size
            )));
        }
        Ok(Self {
            data,
            frames,
            vocab_size,
            source_len,
            split_factor: DEFAULT_SPLIT_FACTOR,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, source_len: usize) -> Result<Self> {
        let frames = rows.len();
        let vocab_size = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().position(|r| r.len() != vocab_size) {
            return Err(Error::Emissions(format!(
                "row {r} has {} columns, row 0 has {vocab_size}",
                rows[r].len()
            )));
        }
        Self::new(rows.concat(), frames, vocab_size, source_len)
    }

    /// Builds a matrix from linear probabilities (convenient in tests).
    pub fn from_probs(rows: &[Vec<f64>], source_len: usize) -> Result<Self> {
        Self::from_rows(
            rows.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect(),
            source_len,
        )
    }

    pub fn with_split_factor(mut self, k: u32) -> Self {
        self.split_factor = k;
        self
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn split_factor(&self) -> u32 {
        self.split_factor
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.vocab_size..(t + 1) * self.vocab_size]
    }

    #[inline]
    pub fn get(&self, t: usize, token: TokenId) -> f64 {
        self.data[t * self.vocab_size + token as usize]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.vocab_size)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Row-normalization and width checks against `vocab`.
    pub fn validate(&self, vocab: &Vocabulary, tolerance: f64) -> Result<()> {
        if self.vocab_size != vocab.len() {
            return Err(Error::ColumnMismatch {
                expected: vocab.len(),
                found: self.vocab_size,
            });
        }
        self.check_normalized(tolerance)
    }

    /// Fails with the worst row when any row's logsumexp strays beyond `tolerance`.
    pub fn check_normalized(&self, tolerance: f64) -> Result<()> {
        let mut worst: Option<(usize, f64)> = None;
        for (t, row) in self.rows().enumerate() {
            let lse = logsumexp(row);
            let dev = if lse.is_finite() { lse.abs() } else { f64::INFINITY };
            if worst.is_none_or(|(_, w)| dev > w.abs()) {
                worst = Some((t, if lse.is_finite() { lse } else { f64::INFINITY }));
            }
        }
        match worst {
            Some((row, lse)) if lse.is_nan() || lse.abs() > tolerance => Err(Error::RowNormalization {
                row,
                logsumexp: lse,
                tolerance,
            }),
            _ => Ok(()),
        }
    }

    /// Consumes and returns the matrix if it passes [`validate`](Self::validate).
    pub fn validated(self, vocab: &Vocabulary, tolerance: f64) -> Result<Self> {
        self.validate(vocab, tolerance)?;
        Ok(self)
    }

    /// Per-frame argmax; ties go to the lower id.
    pub fn argmax_path(&self) -> Vec<TokenId> {
        self.rows().map(argmax).collect()
    }
}

impl AsRef<EmissionMatrix> for EmissionMatrix {
    fn as_ref(&self) -> &EmissionMatrix {
        self
    }
}

#[inline]
pub(crate) fn argmax(row: &[f64]) -> TokenId {
    let mut best = 0;
    let mut best_v = row[0];
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best as TokenId
}
