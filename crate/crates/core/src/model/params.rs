use std::ops::{Index, IndexMut};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ctc::CharSet;
use crate::error::{Error, Result};
use crate::numkit::{init_uniform, Matrix, Scalar, Tape, Var};

/// Layer widths of the toy recognizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    /// Width of one raw input frame (before stacking).
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub decoder_dim: usize,
    pub attention_dim: usize,
    /// Frames stacked into one encoder step; 1 disables stacking.
    pub subsample: usize,
}

impl ModelDims {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim: 32,
            feature_dim: 16,
            decoder_dim: 16,
            attention_dim: 16,
            subsample: 1,
        }
    }

    pub fn stacked_input_dim(&self) -> usize {
        self.input_dim * self.subsample.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.input_dim,
            self.hidden_dim,
            self.feature_dim,
            self.decoder_dim,
            self.attention_dim,
            self.subsample,
        ];
        if all.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!("zero-sized dimension in {self:?}")));
        }
        Ok(())
    }
}

/// Every trainable tensor, in checkpoint order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Param {
    EncW1,
    EncB1,
    EncW2,
    EncB2,
    CtcW,
    CtcB,
    DecEmbed,
    DecWCtx,
    DecWState,
    DecBState,
    DecWQuery,
    DecWKey,
    DecWValue,
    DecWOutState,
    DecWOutCtx,
    DecBOut,
}

impl Param {
    pub const ALL: [Param; 16] = [
        Param::EncW1,
        Param::EncB1,
        Param::EncW2,
        Param::EncB2,
        Param::CtcW,
        Param::CtcB,
        Param::DecEmbed,
        Param::DecWCtx,
        Param::DecWState,
        Param::DecBState,
        Param::DecWQuery,
        Param::DecWKey,
        Param::DecWValue,
        Param::DecWOutState,
        Param::DecWOutCtx,
        Param::DecBOut,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::EncW1 => "encoder.w1",
            Param::EncB1 => "encoder.b1",
            Param::EncW2 => "encoder.w2",
            Param::EncB2 => "encoder.b2",
            Param::CtcW => "ctc.w",
            Param::CtcB => "ctc.b",
            Param::DecEmbed => "decoder.embed",
            Param::DecWCtx => "decoder.w_ctx",
            Param::DecWState => "decoder.w_state",
            Param::DecBState => "decoder.b_state",
            Param::DecWQuery => "decoder.w_query",
            Param::DecWKey => "decoder.w_key",
            Param::DecWValue => "decoder.w_value",
            Param::DecWOutState => "decoder.w_out_state",
            Param::DecWOutCtx => "decoder.w_out_ctx",
            Param::DecBOut => "decoder.b_out",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    /// `(rows, cols, fan_in)`
    fn layout(self, d: &ModelDims, vocab: usize) -> (usize, usize, usize) {
        let dec_vocab = vocab; // characters without blank, plus end-of-sequence
        match self {
            Param::EncW1 => (d.stacked_input_dim(), d.hidden_dim, d.stacked_input_dim()),
            Param::EncB1 => (1, d.hidden_dim, d.stacked_input_dim()),
            Param::EncW2 => (d.hidden_dim, d.feature_dim, d.hidden_dim),
            Param::EncB2 => (1, d.feature_dim, d.hidden_dim),
            Param::CtcW => (d.feature_dim, vocab, d.feature_dim),
            Param::CtcB => (1, vocab, d.feature_dim),
            Param::DecEmbed => (dec_vocab, d.decoder_dim, 1),
            Param::DecWCtx => (d.decoder_dim, d.decoder_dim, d.decoder_dim),
            Param::DecWState => (d.decoder_dim, d.decoder_dim, d.decoder_dim),
            Param::DecBState => (1, d.decoder_dim, d.decoder_dim),
            Param::DecWQuery => (d.decoder_dim, d.attention_dim, d.decoder_dim),
            Param::DecWKey => (d.feature_dim, d.attention_dim, d.feature_dim),
            Param::DecWValue => (d.feature_dim, d.decoder_dim, d.feature_dim),
            Param::DecWOutState => (d.decoder_dim, dec_vocab, d.decoder_dim),
            Param::DecWOutCtx => (d.decoder_dim, dec_vocab, d.decoder_dim),
            Param::DecBOut => (1, dec_vocab, d.decoder_dim),
        }
    }
}

/// Weights of the encoder, CTC head and attention decoder, plus the
/// symbol inventory they were built for.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    charset: CharSet,
    dims: ModelDims,
    tensors: Vec<Matrix<T>>,
    /// CTC weight the model was trained with (informational).
    pub lambda: f64,
}

impl<T: Scalar> ModelParams<T> {
    /// Seeded fan-in uniform initialization.
    pub fn init(charset: CharSet, dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = charset.len();
        let tensors = Param::ALL
            .iter()
            .map(|p| {
                let (r, c, fan_in) = p.layout(&dims, vocab);
                init_uniform(r, c, fan_in, &mut rng)
            })
            .collect();
        Ok(Self {
            charset,
            dims,
            tensors,
            lambda: 0.3,
        })
    }

    /// All-zero weights with the layout of `init`.
    pub fn zeros(charset: CharSet, dims: ModelDims) -> Result<Self> {
        dims.validate()?;
        let vocab = charset.len();
        let tensors = Param::ALL
            .iter()
            .map(|p| {
                let (r, c, _) = p.layout(&dims, vocab);
                Matrix::zeros(r, c)
            })
            .collect();
        Ok(Self {
            charset,
            dims,
            tensors,
            lambda: 0.3,
        })
    }

    /// Assembles from named tensors, checking every shape.
    pub fn from_tensors(charset: CharSet, dims: ModelDims, tensors: Vec<Matrix<T>>, lambda: f64) -> Result<Self> {
        dims.validate()?;
        if tensors.len() != Param::ALL.len() {
            return Err(Error::shape(format!("{} tensors, expected {}", tensors.len(), Param::ALL.len())));
        }
        for (p, t) in Param::ALL.iter().zip(&tensors) {
            let (r, c, _) = p.layout(&dims, charset.len());
            if t.shape() != (r, c) {
                return Err(Error::shape(format!(
                    "{} is {:?}, expected {:?}",
                    p.name(),
                    t.shape(),
                    (r, c)
                )));
            }
        }
        Ok(Self {
            charset,
            dims,
            tensors,
            lambda,
        })
    }

    pub fn charset(&self) -> &CharSet {
        &self.charset
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn tensors(&self) -> &[Matrix<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Matrix<T>] {
        &mut self.tensors
    }

    /// Zero tensors with the same layout, for accumulating gradients.
    pub fn zeros_like(&self) -> Self {
        Self {
            charset: self.charset.clone(),
            dims: self.dims,
            tensors: self.tensors.iter().map(|t| Matrix::zeros(t.rows(), t.cols())).collect(),
            lambda: self.lambda,
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data().len()).sum()
    }

    pub fn norm(&self) -> T {
        self.tensors.iter().map(Matrix::frobenius_norm_sq).sum::<T>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Matrix::is_finite)
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: T, other: &Self) -> Result<()> {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.axpy(alpha, b)?;
        }
        Ok(())
    }

    pub fn scale_in_place(&mut self, k: T) {
        for t in &mut self.tensors {
            for v in t.data_mut() {
                *v *= k;
            }
        }
    }

    /// Records every tensor as a leaf.
    pub fn register(&self, tape: &mut Tape<T>) -> ParamVars {
        ParamVars(self.tensors.iter().map(|t| tape.leaf(t.clone())).collect())
    }

    // decoder vocabulary: characters in charset order, then end-of-sequence

    pub fn eos(&self) -> usize {
        self.charset.num_characters()
    }

    pub fn decoder_vocab(&self) -> usize {
        self.charset.num_characters() + 1
    }

    pub fn char_to_token(&self, c: usize) -> usize {
        let b = self.charset.blank();
        debug_assert!(c != b);
        if c > b {
            c - 1
        } else {
            c
        }
    }

    pub fn token_to_char(&self, token: usize) -> usize {
        let b = self.charset.blank();
        if token >= b {
            token + 1
        } else {
            token
        }
    }
}

impl<T> Index<Param> for ModelParams<T> {
    type Output = Matrix<T>;
    fn index(&self, p: Param) -> &Matrix<T> {
        &self.tensors[p as usize]
    }
}

impl<T> IndexMut<Param> for ModelParams<T> {
    fn index_mut(&mut self, p: Param) -> &mut Matrix<T> {
        &mut self.tensors[p as usize]
    }
}

/// Tape handles of a registered [`ModelParams`].
#[derive(Clone, Debug)]
pub struct ParamVars(Vec<Var>);

impl ParamVars {
    pub fn get(&self, p: Param) -> Var {
        self.0[p as usize]
    }

    pub fn all(&self) -> &[Var] {
        &self.0
    }
}
