use std::fmt;
use std::str::FromStr;

use crate::assign::{AssignmentStrategy, StrategyKind};
use crate::error::{Error, Result};
use crate::mmd::KernelSpec;
use crate::model::{BeamConfig, JointLossConfig};

/// Every scalar hyperparameter of pretraining and adaptation.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptConfig {
    /// CTC weight in the joint loss and in decoding.
    pub lambda: f64,
    /// Weight of the distribution-matching term.
    pub gamma: f64,
    /// Frame filter for pseudo CTC labels (strict `>`).
    pub confidence_threshold: f64,
    /// Fraction of pseudo-labelled target utterances kept, most confident first.
    pub keep_ratio: f64,
    pub beam_width: usize,
    pub max_len: usize,
    pub strategy: StrategyKind,
    pub kernel: KernelSpec,
    /// Source transcripts for ctc-align / frame-average come from the
    /// reference instead of greedy CTC decoding.
    pub reference_source_transcripts: bool,
    /// Epoch budget of source pretraining.
    pub epochs: usize,
    /// Epoch budget of adaptation.
    pub adapt_epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub adapt_step_size: f64,
    pub clip_norm: f64,
    pub patience: usize,
    /// Tail fraction of the source corpus held out for early stopping.
    pub dev_fraction: f64,
    pub seed: u64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            lambda: 0.3,
            gamma: 10.0,
            confidence_threshold: 0.9,
            keep_ratio: 0.7,
            beam_width: 10,
            max_len: 16,
            strategy: StrategyKind::PseudoCtcPred,
            kernel: KernelSpec::Linear,
            reference_source_transcripts: false,
            epochs: 40,
            adapt_epochs: 100,
            batch_size: 8,
            step_size: 0.1,
            adapt_step_size: 0.03,
            clip_norm: 5.0,
            patience: 5,
            dev_fraction: 0.1,
            seed: 0,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma {} must be finite and non-negative", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return bad(format!("confidence_threshold {} outside [0, 1]", self.confidence_threshold));
        }
        if !(self.keep_ratio > 0.0 && self.keep_ratio <= 1.0) {
            return bad(format!("keep_ratio {} outside (0, 1]", self.keep_ratio));
        }
        if self.beam_width == 0 || self.max_len == 0 || self.batch_size == 0 {
            return bad("beam_width, max_len and batch_size must be positive".into());
        }
        for (name, v) in [
            ("step_size", self.step_size),
            ("adapt_step_size", self.adapt_step_size),
            ("clip_norm", self.clip_norm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} {v} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.dev_fraction) {
            return bad(format!("dev_fraction {} outside [0, 1)", self.dev_fraction));
        }
        Ok(())
    }

    pub fn joint(&self) -> JointLossConfig {
        JointLossConfig { lambda: self.lambda }
    }

    pub fn beam(&self) -> BeamConfig {
        BeamConfig {
            lambda: self.lambda,
            beam_width: self.beam_width,
            max_len: self.max_len,
        }
    }

    pub fn assignment(&self) -> AssignmentStrategy {
        AssignmentStrategy {
            kind: self.strategy,
            confidence_threshold: self.confidence_threshold,
        }
    }
}

/// Rows of the ablation: what happens after pretraining.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// No adaptation.
    SourceOnly,
    /// Pseudo-label self-training, no matching term.
    SelfTraining,
    /// Self-training plus MMD between utterance-averaged features.
    DomainMmd,
    /// Self-training plus character-level MMD.
    Cmatch,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::SourceOnly, Method::SelfTraining, Method::DomainMmd, Method::Cmatch];

    pub fn name(self) -> &'static str {
        match self {
            Method::SourceOnly => "source-only",
            Method::SelfTraining => "self-training-only",
            Method::DomainMmd => "mmd-domain",
            Method::Cmatch => "cmatch",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method {s:?} (expected cmatch, mmd-domain, source-only or self-training-only)"
                ))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = AdaptConfig::default();
        c.validate().unwrap();
        assert_eq!(c.gamma, 10.0);
        assert_eq!(c.keep_ratio, 0.7);
        assert_eq!(c.beam_width, 10);
        assert_eq!(c.confidence_threshold, 0.9);
        assert_eq!(c.lambda, 0.3);
    }

    #[test]
    fn ranges_are_checked() {
        for f in [
            |c: &mut AdaptConfig| c.keep_ratio = 0.0,
            |c: &mut AdaptConfig| c.keep_ratio = 1.2,
            |c: &mut AdaptConfig| c.gamma = -1.0,
            |c: &mut AdaptConfig| c.lambda = 2.0,
            |c: &mut AdaptConfig| c.batch_size = 0,
        ] {
            let mut c = AdaptConfig::default();
            f(&mut c);
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("adv".parse::<Method>().is_err());
    }
}
