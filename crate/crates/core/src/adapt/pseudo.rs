use std::cmp::Ordering;

use rayon::prelude::*;

use super::config::AdaptConfig;
use crate::corpus::DomainCorpus;
use crate::error::{Error, Result};
use crate::model::{beam_search, ModelParams};
use crate::numkit::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabel {
    /// Position of the utterance in its corpus.
    pub index: usize,
    pub id: String,
    /// Charset indices of the best hypothesis; may be empty.
    pub transcript: Vec<usize>,
    pub confidence: f64,
}

/// Pseudo labels sorted by confidence, highest first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PseudoLabelSet {
    entries: Vec<PseudoLabel>,
}

impl PseudoLabelSet {
    /// Sorts stably by descending confidence; rejects non-finite confidences.
    pub fn new(mut entries: Vec<PseudoLabel>) -> Result<Self> {
        if let Some(e) = entries.iter().find(|e| !e.confidence.is_finite()) {
            return Err(Error::NonFinite(format!("confidence of {}", e.id)));
        }
        entries.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap_or(Ordering::Equal));
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[PseudoLabel] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Beam-search decodes every target utterance.
pub fn pseudo_label<T: Scalar>(
    params: &ModelParams<T>,
    target: &DomainCorpus<T>,
    cfg: &AdaptConfig,
) -> Result<PseudoLabelSet> {
    let beam = cfg.beam();
    let entries = target
        .utterances
        .par_iter()
        .enumerate()
        .map(|(index, u)| {
            let r = beam_search(params, &u.frames, &beam)?;
            let best = r.best();
            Ok(PseudoLabel {
                index,
                id: u.id.clone(),
                transcript: best.tokens.clone(),
                confidence: best.confidence().as_f64(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PseudoLabelSet::new(entries)
}

/// Number of entries kept out of `n`: `ceil(keep_ratio * n)`.
pub fn kept_count(n: usize, keep_ratio: f64) -> usize {
    // guard against 0.7 * 10 = 7.000000000000001
    (((keep_ratio * n as f64) - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Keeps the most confident `ceil(keep_ratio * n)` entries.
pub fn filter_pseudo(set: &PseudoLabelSet, keep_ratio: f64) -> Result<PseudoLabelSet> {
    if !(keep_ratio > 0.0 && keep_ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!("keep_ratio {keep_ratio} outside (0, 1]")));
    }
    Ok(PseudoLabelSet {
        entries: set.entries[..kept_count(set.len(), keep_ratio)].to_vec(),
    })
}
