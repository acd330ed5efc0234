use crate::error::{Error, Result};
use crate::numkit::{Matrix, Scalar};

/// Per-frame log-probabilities over the CTC vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct LogProbLattice<T> {
    values: Matrix<T>,
}

fn row_tolerance<T: Scalar>() -> T {
    T::lit(1e-9).max(T::epsilon() * T::lit(64.0))
}

impl<T: Scalar> LogProbLattice<T> {
    /// Validates that every row is a log-distribution.
    pub fn new(values: Matrix<T>) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::shape("lattice needs at least one frame and symbol"));
        }
        let tol = row_tolerance::<T>();
        for (r, row) in values.iter_rows().enumerate() {
            if row.iter().any(|v| v.is_nan() || *v == T::infinity()) {
                return Err(Error::NonFinite(format!("lattice row {r}")));
            }
            let mass: T = row.iter().map(|v| v.exp()).sum();
            if (mass - T::one()).abs() > tol {
                return Err(Error::InvalidArgument(format!(
                    "lattice row {r} has probability mass {mass}"
                )));
            }
        }
        Ok(Self { values })
    }

    /// Normalizes arbitrary scores row-wise.
    pub fn from_logits(logits: &Matrix<T>) -> Result<Self> {
        Self::new(logits.log_softmax_rows())
    }

    /// From per-frame probabilities (each row must sum to 1).
    pub fn from_probs(probs: &Matrix<T>) -> Result<Self> {
        Self::new(probs.map(T::ln))
    }

    pub(crate) fn from_normalized(values: Matrix<T>) -> Self {
        Self { values }
    }

    pub fn frames(&self) -> usize {
        self.values.rows()
    }

    pub fn vocab(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }

    #[inline]
    pub fn at(&self, frame: usize, symbol: usize) -> T {
        self.values[(frame, symbol)]
    }

    pub fn frame(&self, frame: usize) -> &[T] {
        self.values.row(frame)
    }
}

/// Per-frame labels with a keep/drop mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameLabelAssignment {
    labels: Vec<usize>,
    keep: Vec<bool>,
}

impl FrameLabelAssignment {
    pub fn new(labels: Vec<usize>, keep: Vec<bool>) -> Result<Self> {
        if labels.len() != keep.len() {
            return Err(Error::shape(format!(
                "{} labels with {} mask entries",
                labels.len(),
                keep.len()
            )));
        }
        Ok(Self { labels, keep })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn keep_mask(&self) -> &[bool] {
        &self.keep
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `(frame, label)` for kept frames only.
    pub fn kept(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.labels
            .iter()
            .zip(&self.keep)
            .enumerate()
            .filter(|(_, (_, &k))| k)
            .map(|(i, (&l, _))| (i, l))
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }
}
