//! Synthetic frame-sequence corpora with controllable domain shift, and
//! their on-disk form.

mod generate;
mod io;
mod shift;

pub use generate::{generate, render_utterance, GeneratorSpec};
pub use io::{read_corpus, write_corpus, CORPUS_HEADER, MANIFEST_FILE};
pub use shift::{apply_shift, condition_number, DomainShiftSpec, ShiftKind};

use crate::ctc::CharSet;
use crate::error::{Error, Result};
use crate::numkit::{Matrix, Scalar};

/// One utterance: frames plus an optional transcript (charset indices).
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance<T> {
    pub id: String,
    pub frames: Matrix<T>,
    pub transcript: Option<Vec<usize>>,
}

impl<T: Scalar> Utterance<T> {
    pub fn new(id: impl Into<String>, frames: Matrix<T>, transcript: Option<Vec<usize>>) -> Result<Self> {
        let id = id.into();
        validate_id(&id)?;
        if frames.rows() == 0 {
            return Err(Error::shape(format!("utterance {id} has no frames")));
        }
        Ok(Self { id, frames, transcript })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }
}

pub(crate) fn validate_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['\t', '\n', '\r', '/', '\\']) || id.starts_with('#') || id.starts_with('.') {
        return Err(Error::InvalidArgument(format!("bad utterance id {id:?}")));
    }
    Ok(())
}

/// Utterances from one domain. When `labels_hidden` is set the transcripts
/// are kept only for scoring and are not handed to training code.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainCorpus<T> {
    pub charset: CharSet,
    pub domain_tag: String,
    pub utterances: Vec<Utterance<T>>,
    pub labels_hidden: bool,
}

impl<T: Scalar> DomainCorpus<T> {
    pub fn new(charset: CharSet, domain_tag: impl Into<String>, utterances: Vec<Utterance<T>>) -> Result<Self> {
        let corpus = Self {
            charset,
            domain_tag: domain_tag.into(),
            utterances,
            labels_hidden: false,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        if self.domain_tag.is_empty() || self.domain_tag.contains(['\t', '\n', '\r']) {
            return Err(Error::InvalidArgument(format!("bad domain tag {:?}", self.domain_tag)));
        }
        let dim = self.utterances.first().map(|u| u.frames.cols());
        for u in &self.utterances {
            validate_id(&u.id)?;
            if Some(u.frames.cols()) != dim {
                return Err(Error::shape(format!("utterance {} has a different frame width", u.id)));
            }
            if let Some(t) = &u.transcript {
                self.charset.validate_transcript(t)?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn frame_dim(&self) -> Option<usize> {
        self.utterances.first().map(|u| u.frames.cols())
    }

    /// Transcript usable for supervised training.
    pub fn training_transcript(&self, i: usize) -> Option<&[usize]> {
        if self.labels_hidden {
            None
        } else {
            self.utterances[i].transcript.as_deref()
        }
    }

    /// Transcript for scoring, hidden or not.
    pub fn reference_transcript(&self, i: usize) -> Option<&[usize]> {
        self.utterances[i].transcript.as_deref()
    }

    pub fn with_hidden_labels(mut self) -> Self {
        self.labels_hidden = true;
        self
    }

    /// Splits off the last `fraction` of utterances (at least one when the
    /// corpus has two or more).
    pub fn split_tail(&self, fraction: f64) -> (Self, Self) {
        let n = self.utterances.len();
        let mut tail = ((n as f64) * fraction).round() as usize;
        if n >= 2 {
            tail = tail.clamp(1, n - 1);
        } else {
            tail = 0;
        }
        let head = Self {
            utterances: self.utterances[..n - tail].to_vec(),
            ..self.clone_empty()
        };
        let rest = Self {
            utterances: self.utterances[n - tail..].to_vec(),
            ..self.clone_empty()
        };
        (head, rest)
    }

    fn clone_empty(&self) -> Self {
        Self {
            charset: self.charset.clone(),
            domain_tag: self.domain_tag.clone(),
            utterances: Vec::new(),
            labels_hidden: self.labels_hidden,
        }
    }
}
