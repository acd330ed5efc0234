//! Frame-level label assignment: which character each encoder frame belongs to.

use std::fmt;
use std::str::FromStr;

use crate::ctc::{ctc_forced_align, ctc_greedy_predict, CharSet, FrameLabelAssignment, LogProbLattice};
use crate::error::{Error, Result};
use crate::numkit::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    /// Viterbi path of the CTC trellis conditioned on a transcript.
    CtcAlign,
    /// Uniform split of the frames over the transcript characters.
    FrameAverage,
    /// Per-frame CTC argmax, filtered by confidence.
    PseudoCtcPred,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [
        StrategyKind::PseudoCtcPred,
        StrategyKind::FrameAverage,
        StrategyKind::CtcAlign,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::CtcAlign => "ctc-align",
            StrategyKind::FrameAverage => "frame-average",
            StrategyKind::PseudoCtcPred => "pseudo-ctc",
        }
    }

    pub fn needs_transcript(self) -> bool {
        !matches!(self, StrategyKind::PseudoCtcPred)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ctc-align" => Ok(StrategyKind::CtcAlign),
            "frame-average" => Ok(StrategyKind::FrameAverage),
            "pseudo-ctc" => Ok(StrategyKind::PseudoCtcPred),
            other => Err(Error::Config(format!(
                "unknown assignment strategy {other:?} (expected ctc-align, frame-average or pseudo-ctc)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssignmentStrategy {
    pub kind: StrategyKind,
    /// Only consulted by [`StrategyKind::PseudoCtcPred`].
    pub confidence_threshold: f64,
}

impl Default for AssignmentStrategy {
    fn default() -> Self {
        Self {
            kind: StrategyKind::PseudoCtcPred,
            confidence_threshold: 0.9,
        }
    }
}

impl AssignmentStrategy {
    pub fn new(kind: StrategyKind, confidence_threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence_threshold) {
            return Err(Error::InvalidArgument(format!(
                "confidence threshold {confidence_threshold} outside [0, 1]"
            )));
        }
        Ok(Self {
            kind,
            confidence_threshold,
        })
    }
}

/// Splits `frames` evenly over the transcript: frame `i` gets character
/// `floor(i * M / N)`.
pub fn frame_average(frames: usize, transcript: &[usize], cs: &CharSet) -> Result<FrameLabelAssignment> {
    cs.validate_transcript(transcript)?;
    let m = transcript.len();
    if m == 0 {
        return FrameLabelAssignment::new(vec![cs.blank(); frames], vec![false; frames]);
    }
    let labels = (0..frames).map(|i| transcript[i * m / frames]).collect();
    FrameLabelAssignment::new(labels, vec![true; frames])
}

pub fn assign_labels<T: Scalar>(
    strategy: &AssignmentStrategy,
    lattice: &LogProbLattice<T>,
    transcript: Option<&[usize]>,
    cs: &CharSet,
) -> Result<FrameLabelAssignment> {
    match strategy.kind {
        StrategyKind::PseudoCtcPred => Ok(ctc_greedy_predict(
            lattice,
            T::lit(strategy.confidence_threshold),
            cs,
        )),
        StrategyKind::CtcAlign => {
            let t = transcript.ok_or(Error::MissingTranscript("ctc-align"))?;
            ctc_forced_align(lattice, t, cs)
        }
        StrategyKind::FrameAverage => {
            let t = transcript.ok_or(Error::MissingTranscript("frame-average"))?;
            frame_average(lattice.frames(), t, cs)
        }
    }
}
