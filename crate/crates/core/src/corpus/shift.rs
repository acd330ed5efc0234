use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DomainCorpus, Utterance};
use crate::error::{Error, Result};
use crate::numkit::{Matrix, Scalar};

pub const MAX_CONDITION: f64 = 100.0;

#[derive(Clone, Debug, PartialEq)]
pub enum ShiftKind {
    /// Linear channel: every frame `x` becomes `A x + b`.
    Device { matrix: Matrix<f64>, bias: Vec<f64> },
    /// Additive seeded Gaussian noise.
    Environment { amplitude: f64, noise_seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainShiftSpec {
    pub kind: ShiftKind,
    pub tag: String,
}

/// Ratio of largest to smallest singular value (infinite when singular).
pub fn condition_number(m: &Matrix<f64>) -> f64 {
    let a = DMatrix::from_row_slice(m.rows(), m.cols(), m.data());
    let sv = a.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

impl DomainShiftSpec {
    pub fn device(matrix: Matrix<f64>, bias: Vec<f64>, tag: impl Into<String>) -> Result<Self> {
        if matrix.rows() != matrix.cols() || bias.len() != matrix.rows() {
            return Err(Error::shape(format!(
                "device channel {:?} with bias of length {}",
                matrix.shape(),
                bias.len()
            )));
        }
        let cond = condition_number(&matrix);
        if !(cond <= MAX_CONDITION) {
            return Err(Error::InvalidArgument(format!(
                "channel condition number {cond} exceeds {MAX_CONDITION}"
            )));
        }
        Ok(Self {
            kind: ShiftKind::Device { matrix, bias },
            tag: tag.into(),
        })
    }

    /// Identity plus uniform perturbation in `[-strength, strength]`,
    /// rejection sampled to the condition bound; bias entries uniform in
    /// `[-bias_scale, bias_scale]`.
    pub fn random_device(dim: usize, strength: f64, bias_scale: f64, seed: u64, tag: impl Into<String>) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            let mut m = Matrix::<f64>::identity(dim);
            for v in m.data_mut() {
                *v += rng.random_range(-strength..=strength);
            }
            if condition_number(&m) <= MAX_CONDITION {
                let bias = (0..dim).map(|_| rng.random_range(-bias_scale..=bias_scale)).collect();
                return Self::device(m, bias, tag);
            }
        }
        Err(Error::InvalidArgument(format!(
            "no well-conditioned channel at strength {strength}"
        )))
    }

    pub fn environment(amplitude: f64, noise_seed: u64, tag: impl Into<String>) -> Result<Self> {
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise amplitude {amplitude}")));
        }
        Ok(Self {
            kind: ShiftKind::Environment { amplitude, noise_seed },
            tag: tag.into(),
        })
    }
}

/// Applies the shift to every frame. The result carries the original
/// transcripts, marked hidden.
pub fn apply_shift<T: Scalar>(corpus: &DomainCorpus<T>, shift: &DomainShiftSpec) -> Result<DomainCorpus<T>> {
    let mut out = Vec::with_capacity(corpus.len());
    match &shift.kind {
        ShiftKind::Device { matrix, bias } => {
            let a: Matrix<T> = Matrix::new(
                matrix.rows(),
                matrix.cols(),
                matrix.data().iter().map(|&v| T::lit(v)).collect(),
            )?;
            let b = Matrix::row_vector(bias.iter().map(|&v| T::lit(v)).collect());
            for u in &corpus.utterances {
                if u.frames.cols() != a.rows() {
                    return Err(Error::shape(format!(
                        "utterance {} has width {}, channel is {}x{}",
                        u.id,
                        u.frames.cols(),
                        a.rows(),
                        a.cols()
                    )));
                }
                // row-vector frames: x A^T + b
                let frames = u.frames.matmul_t(&a)?.add_row_broadcast(&b)?;
                out.push(Utterance::new(u.id.clone(), frames, u.transcript.clone())?);
            }
        }
        ShiftKind::Environment { amplitude, noise_seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*noise_seed);
            for u in &corpus.utterances {
                let mut frames = u.frames.clone();
                for v in frames.data_mut() {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    *v += T::lit(amplitude * n);
                }
                out.push(Utterance::new(u.id.clone(), frames, u.transcript.clone())?);
            }
        }
    }
    Ok(DomainCorpus {
        charset: corpus.charset.clone(),
        domain_tag: shift.tag.clone(),
        utterances: out,
        labels_hidden: true,
    })
}
