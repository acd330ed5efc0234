//! Label-synchronous beam search scored by the attention decoder and
//! re-scored with CTC prefix probabilities.

use std::cmp::Ordering;

use super::forward::{
    ctc_head_on_tape, decoder_initial, decoder_memory, decoder_step, encode_on_tape, mix, DecoderState,
};
use super::params::ModelParams;
use crate::ctc::{CtcPrefixState, LogProbLattice};
use crate::error::{Error, Result};
use crate::numkit::{Matrix, Scalar, Tape};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamConfig {
    pub lambda: f64,
    pub beam_width: usize,
    pub max_len: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            lambda: 0.3,
            beam_width: 10,
            max_len: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis<T> {
    /// Charset indices, without end-of-sequence.
    pub tokens: Vec<usize>,
    pub joint_score: T,
    pub att_score: T,
    pub ctc_score: T,
}

impl<T: Scalar> Hypothesis<T> {
    /// Joint score per emitted token, end-of-sequence included.
    pub fn confidence(&self) -> T {
        self.joint_score / T::from_usize_lossy(self.tokens.len() + 1)
    }
}

#[derive(Clone, Debug)]
pub struct BeamResult<T> {
    /// Finished hypotheses, best first.
    pub hypotheses: Vec<Hypothesis<T>>,
}

impl<T: Scalar> BeamResult<T> {
    pub fn best(&self) -> &Hypothesis<T> {
        &self.hypotheses[0]
    }

    pub fn confidence(&self) -> T {
        self.best().confidence()
    }
}

struct Live<T> {
    tokens: Vec<usize>,
    att: T,
    ctc: CtcPrefixState<T>,
    joint: T,
    decoder: DecoderState,
}

fn by_score_desc<T: Scalar>(a: T, b: T) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

pub fn beam_search<T: Scalar>(params: &ModelParams<T>, frames: &Matrix<T>, cfg: &BeamConfig) -> Result<BeamResult<T>> {
    if cfg.beam_width == 0 {
        return Err(Error::InvalidArgument("beam width must be at least 1".into()));
    }
    let cs = params.charset();
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let features = encode_on_tape(&mut tape, &pv, params, frames)?;
    let lp = ctc_head_on_tape(&mut tape, &pv, features)?;
    let lattice = LogProbLattice::from_normalized(tape.value(lp).clone());
    let memory = decoder_memory(&mut tape, &pv, features)?;
    let eos = params.eos();

    let mut live = vec![Live {
        tokens: Vec::new(),
        att: T::zero(),
        ctc: CtcPrefixState::initial(&lattice, cs),
        joint: T::zero(),
        decoder: decoder_initial(&mut tape, params),
    }];
    let mut ended: Vec<Hypothesis<T>> = Vec::new();

    for step in 0..=cfg.max_len {
        let mut candidates = Vec::new();
        for h in &live {
            let input = h.tokens.last().map_or(eos, |&c| params.char_to_token(c));
            let (next_dec, logp) = decoder_step(&mut tape, &pv, params, &memory, &h.decoder, input)?;
            let logp = tape.value(logp).row(0).to_vec();

            let att = h.att + logp[eos];
            let ctc = h.ctc.full_score();
            ended.push(Hypothesis {
                tokens: h.tokens.clone(),
                joint_score: mix(cfg.lambda, att, ctc),
                att_score: att,
                ctc_score: ctc,
            });
            if step == cfg.max_len {
                continue;
            }
            for c in cs.characters() {
                let att = h.att + logp[params.char_to_token(c)];
                let ctc = h.ctc.extend(&lattice, cs, c);
                let mut tokens = h.tokens.clone();
                tokens.push(c);
                candidates.push(Live {
                    tokens,
                    att,
                    joint: mix(cfg.lambda, att, ctc.prefix_score()),
                    ctc,
                    decoder: next_dec,
                });
            }
        }
        // stable: equal scores keep expansion order
        candidates.sort_by(|a, b| by_score_desc(a.joint, b.joint));
        candidates.truncate(cfg.beam_width);
        live = candidates;
        if live.is_empty() {
            break;
        }
        // extensions never raise a score, so a finished hypothesis that
        // beats every live one cannot be overtaken
        let best_ended = ended.iter().map(|h| h.joint_score).fold(T::neg_infinity(), T::max);
        if best_ended >= live[0].joint && best_ended > T::neg_infinity() {
            break;
        }
    }
    ended.sort_by(|a, b| by_score_desc(a.joint_score, b.joint_score));
    ended.truncate(cfg.beam_width.max(1));
    Ok(BeamResult { hypotheses: ended })
}
