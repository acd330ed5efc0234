use super::params::{ModelParams, Param, ParamVars};
use crate::ctc::{ctc_loss, LogProbLattice};
use crate::error::{Error, Result};
use crate::numkit::{Matrix, Scalar, Tape, Var};

/// CTC weight of the joint objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointLossConfig {
    pub lambda: f64,
}

impl Default for JointLossConfig {
    fn default() -> Self {
        Self { lambda: 0.3 }
    }
}

impl JointLossConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidArgument(format!("lambda {lambda} outside [0, 1]")));
        }
        Ok(Self { lambda })
    }
}

/// `(1 - lambda) * att + lambda * ctc`, skipping a term whose weight is zero
/// so that an impossible (`-inf`) score under a zero weight stays harmless.
pub fn mix<T: Scalar>(lambda: f64, att: T, ctc: T) -> T {
    if lambda == 0.0 {
        att
    } else if lambda == 1.0 {
        ctc
    } else {
        T::lit(1.0 - lambda) * att + T::lit(lambda) * ctc
    }
}

fn prepare_frames<T: Scalar>(params: &ModelParams<T>, frames: &Matrix<T>) -> Result<Matrix<T>> {
    let d = params.dims();
    if frames.cols() != d.input_dim {
        return Err(Error::shape(format!(
            "frames have width {}, model expects {}",
            frames.cols(),
            d.input_dim
        )));
    }
    let stacked = frames.stack_rows(d.subsample);
    if stacked.rows() == 0 {
        return Err(Error::shape(format!(
            "{} frames is fewer than one encoder step",
            frames.rows()
        )));
    }
    Ok(stacked)
}

/// Encoder features for `frames` (one row per encoder step).
pub fn encode_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    pv: &ParamVars,
    params: &ModelParams<T>,
    frames: &Matrix<T>,
) -> Result<Var> {
    let x = tape.leaf(prepare_frames(params, frames)?);
    let h = tape.matmul(x, pv.get(Param::EncW1))?;
    let h = tape.add_row(h, pv.get(Param::EncB1))?;
    let h = tape.tanh(h);
    let f = tape.matmul(h, pv.get(Param::EncW2))?;
    let f = tape.add_row(f, pv.get(Param::EncB2))?;
    Ok(tape.tanh(f))
}

/// CTC head log-probabilities for encoder features.
pub fn ctc_head_on_tape<T: Scalar>(tape: &mut Tape<T>, pv: &ParamVars, features: Var) -> Result<Var> {
    let z = tape.matmul(features, pv.get(Param::CtcW))?;
    let z = tape.add_row(z, pv.get(Param::CtcB))?;
    Ok(tape.log_softmax_rows(z))
}

pub fn encode<T: Scalar>(params: &ModelParams<T>, frames: &Matrix<T>) -> Result<Matrix<T>> {
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let f = encode_on_tape(&mut tape, &pv, params, frames)?;
    Ok(tape.value(f).clone())
}

/// Encoder features and the CTC lattice of one utterance.
pub fn encode_with_lattice<T: Scalar>(
    params: &ModelParams<T>,
    frames: &Matrix<T>,
) -> Result<(Matrix<T>, LogProbLattice<T>)> {
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let f = encode_on_tape(&mut tape, &pv, params, frames)?;
    let lp = ctc_head_on_tape(&mut tape, &pv, f)?;
    Ok((
        tape.value(f).clone(),
        LogProbLattice::from_normalized(tape.value(lp).clone()),
    ))
}

pub fn ctc_lattice<T: Scalar>(params: &ModelParams<T>, frames: &Matrix<T>) -> Result<LogProbLattice<T>> {
    Ok(encode_with_lattice(params, frames)?.1)
}

/// Per-utterance attention inputs: projected keys and values.
#[derive(Clone, Copy, Debug)]
pub struct DecoderMemory {
    keys: Var,
    values: Var,
}

/// Recurrent decoder state and the previous attention context.
#[derive(Clone, Copy, Debug)]
pub struct DecoderState {
    state: Var,
    context: Var,
}

pub fn decoder_memory<T: Scalar>(tape: &mut Tape<T>, pv: &ParamVars, features: Var) -> Result<DecoderMemory> {
    let keys = tape.matmul(features, pv.get(Param::DecWKey))?;
    let values = tape.matmul(features, pv.get(Param::DecWValue))?;
    Ok(DecoderMemory { keys, values })
}

pub fn decoder_initial<T: Scalar>(tape: &mut Tape<T>, params: &ModelParams<T>) -> DecoderState {
    let d = params.dims().decoder_dim;
    DecoderState {
        state: tape.leaf(Matrix::zeros(1, d)),
        context: tape.leaf(Matrix::zeros(1, d)),
    }
}

/// One decoder step fed with `token`; returns the next state and the
/// `1 x decoder_vocab` log-probabilities of the following token.
pub fn decoder_step<T: Scalar>(
    tape: &mut Tape<T>,
    pv: &ParamVars,
    params: &ModelParams<T>,
    memory: &DecoderMemory,
    prev: &DecoderState,
    token: usize,
) -> Result<(DecoderState, Var)> {
    let emb = tape.gather_rows(pv.get(Param::DecEmbed), vec![token])?;
    let from_ctx = tape.matmul(prev.context, pv.get(Param::DecWCtx))?;
    let from_state = tape.matmul(prev.state, pv.get(Param::DecWState))?;
    let s = tape.add(emb, from_ctx)?;
    let s = tape.add(s, from_state)?;
    let s = tape.add_row(s, pv.get(Param::DecBState))?;
    let s = tape.tanh(s);

    let q = tape.matmul(s, pv.get(Param::DecWQuery))?;
    let scores = tape.matmul_t(q, memory.keys)?;
    let scale = T::one() / T::from_usize_lossy(params.dims().attention_dim).sqrt();
    let scores = tape.scale(scores, scale);
    let weights = tape.softmax_rows(scores);
    let context = tape.matmul(weights, memory.values)?;

    let o1 = tape.matmul(s, pv.get(Param::DecWOutState))?;
    let o2 = tape.matmul(context, pv.get(Param::DecWOutCtx))?;
    let logits = tape.add(o1, o2)?;
    let logits = tape.add_row(logits, pv.get(Param::DecBOut))?;
    let logp = tape.log_softmax_rows(logits);
    Ok((DecoderState { state: s, context }, logp))
}

/// Teacher-forced attention log-likelihood of `transcript` followed by
/// end-of-sequence; returns one 1x1 log-prob var per predicted token.
pub fn teacher_forced_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    pv: &ParamVars,
    params: &ModelParams<T>,
    features: Var,
    transcript: &[usize],
) -> Result<Vec<Var>> {
    params.charset().validate_transcript(transcript)?;
    let memory = decoder_memory(tape, pv, features)?;
    let mut state = decoder_initial(tape, params);
    let eos = params.eos();
    let mut inputs = vec![eos];
    inputs.extend(transcript.iter().map(|&c| params.char_to_token(c)));
    let mut targets: Vec<usize> = transcript.iter().map(|&c| params.char_to_token(c)).collect();
    targets.push(eos);
    let mut picks = Vec::with_capacity(targets.len());
    for (&input, &target) in inputs.iter().zip(&targets) {
        let (next, logp) = decoder_step(tape, pv, params, &memory, &state, input)?;
        picks.push(tape.pick(logp, vec![(0, target)])?);
        state = next;
    }
    Ok(picks)
}

/// Graph for one utterance recorded on a shared tape.
#[derive(Clone, Copy, Debug)]
pub struct UtteranceGraph<T> {
    pub features: Var,
    pub log_probs: Var,
    /// `(1 - lambda) * att + lambda * ctc`, present when a transcript was given.
    pub loss: Option<Var>,
    pub att_loss: T,
    pub ctc_loss: T,
}

/// Records encoder, CTC head and (with a transcript) the joint loss.
pub fn build_utterance<T: Scalar>(
    tape: &mut Tape<T>,
    pv: &ParamVars,
    params: &ModelParams<T>,
    frames: &Matrix<T>,
    transcript: Option<&[usize]>,
    cfg: &JointLossConfig,
) -> Result<UtteranceGraph<T>> {
    let features = encode_on_tape(tape, pv, params, frames)?;
    let log_probs = ctc_head_on_tape(tape, pv, features)?;
    let Some(transcript) = transcript else {
        return Ok(UtteranceGraph {
            features,
            log_probs,
            loss: None,
            att_loss: T::zero(),
            ctc_loss: T::zero(),
        });
    };
    if transcript.is_empty() {
        return Err(Error::InvalidTranscript("empty transcript in joint loss".into()));
    }
    let lattice = LogProbLattice::from_normalized(tape.value(log_probs).clone());
    let ctc = ctc_loss(&lattice, transcript, params.charset())?;
    let ctc_var = tape.custom_scalar(ctc.nll, vec![(log_probs, ctc.grad)])?;

    let picks = teacher_forced_on_tape(tape, pv, params, features, transcript)?;
    let w = -T::one() / T::from_usize_lossy(picks.len());
    let terms: Vec<(T, Var)> = picks.iter().map(|&p| (w, p)).collect();
    let att_var = tape.weighted_sum(&terms)?;

    let lambda = T::lit(cfg.lambda);
    let loss = tape.weighted_sum(&[(T::one() - lambda, att_var), (lambda, ctc_var)])?;
    Ok(UtteranceGraph {
        features,
        log_probs,
        loss: Some(loss),
        att_loss: tape.value(att_var).item(),
        ctc_loss: ctc.nll,
    })
}

/// Joint loss value, its two components, and gradients for every parameter.
#[derive(Clone, Debug)]
pub struct JointLoss<T> {
    pub loss: T,
    pub att_loss: T,
    pub ctc_loss: T,
    pub grads: ModelParams<T>,
}

pub fn joint_loss<T: Scalar>(
    params: &ModelParams<T>,
    frames: &Matrix<T>,
    transcript: &[usize],
    cfg: &JointLossConfig,
) -> Result<JointLoss<T>> {
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let g = build_utterance(&mut tape, &pv, params, frames, Some(transcript), cfg)?;
    let loss = g.loss.expect("transcript given");
    let mut grads = tape.backward(loss)?;
    let mut out = params.zeros_like();
    for (p, &v) in Param::ALL.iter().zip(pv.all()) {
        out[*p] = grads.take(v);
    }
    Ok(JointLoss {
        loss: tape.value(loss).item(),
        att_loss: g.att_loss,
        ctc_loss: g.ctc_loss,
        grads: out,
    })
}

/// Sum of attention log-probabilities of `transcript` plus end-of-sequence.
pub fn attention_log_prob<T: Scalar>(params: &ModelParams<T>, frames: &Matrix<T>, transcript: &[usize]) -> Result<T> {
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let f = encode_on_tape(&mut tape, &pv, params, frames)?;
    let picks = teacher_forced_on_tape(&mut tape, &pv, params, f, transcript)?;
    Ok(picks.iter().map(|&p| tape.value(p).item()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctc::CharSet;
    use crate::model::ModelDims;
    use crate::numkit::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> (ModelParams<f64>, Matrix<f64>) {
        let cs = CharSet::letters(3).unwrap();
        let mut dims = ModelDims::new(4);
        dims.hidden_dim = 5;
        dims.feature_dim = 4;
        dims.decoder_dim = 3;
        dims.attention_dim = 3;
        let p = ModelParams::init(cs, dims, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        (p, Matrix::random_uniform(7, 4, 1.0, &mut rng))
    }

    #[test]
    fn encode_preserves_frame_count() {
        let (p, x) = small();
        assert_eq!(encode(&p, &x).unwrap().shape(), (7, 4));
        let z = p.zeros_like();
        assert!(encode(&z, &x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode_rejects_wrong_width() {
        let (p, _) = small();
        assert!(matches!(
            encode(&p, &Matrix::zeros(3, 5)),
            Err(Error::InvalidShape(_))
        ));
    }

    #[test]
    fn degenerate_mixtures() {
        let (p, x) = small();
        let t = [1, 2];
        let one = joint_loss(&p, &x, &t, &JointLossConfig::new(1.0).unwrap()).unwrap();
        assert!((one.loss - one.ctc_loss).abs() < 1e-12);
        let lat = ctc_lattice(&p, &x).unwrap();
        let direct = ctc_loss(&lat, &t, p.charset()).unwrap().nll;
        assert!((one.loss - direct).abs() < 1e-12);
        let zero = joint_loss(&p, &x, &t, &JointLossConfig::new(0.0).unwrap()).unwrap();
        assert!((zero.loss - zero.att_loss).abs() < 1e-12);
        let att = -attention_log_prob(&p, &x, &t).unwrap() / 3.0;
        assert!((zero.att_loss - att).abs() < 1e-12);
        assert!((mix(0.3, -2.0f64, -1.0) - (-1.7)).abs() < 1e-12);
    }

    #[test]
    fn joint_loss_gradient_check() {
        let (p, x) = small();
        let cfg = JointLossConfig::default();
        let t = [3, 1, 1];
        let err = grad_check(
            |tensors| {
                let q = ModelParams::from_tensors(p.charset().clone(), *p.dims(), tensors.to_vec(), 0.3)?;
                let out = joint_loss(&q, &x, &t, &cfg)?;
                Ok((out.loss, out.grads.tensors().to_vec()))
            },
            p.tensors(),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn infeasible_transcript_errors() {
        let (p, _) = small();
        let x = Matrix::zeros(2, 4);
        assert!(matches!(
            joint_loss(&p, &x, &[1, 1], &JointLossConfig::default()),
            Err(Error::InfeasibleAlignment { .. })
        ));
    }

    #[test]
    fn stacking_reduces_steps() {
        let (mut p, x) = small();
        let mut dims = *p.dims();
        dims.subsample = 2;
        p = ModelParams::init(p.charset().clone(), dims, 1).unwrap();
        assert_eq!(encode(&p, &x).unwrap().rows(), 3);
    }
}
