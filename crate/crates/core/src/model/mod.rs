//! Toy CTC-attention recognizer: two-layer encoder, CTC head, single-block
//! attention decoder, joint loss and CTC-rescored beam search.

mod beam;
mod checkpoint;
mod forward;
mod params;

pub use beam::{beam_search, BeamConfig, BeamResult, Hypothesis};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_HEADER};
pub use forward::{
    attention_log_prob, build_utterance, ctc_head_on_tape, ctc_lattice, decoder_initial, decoder_memory,
    decoder_step, encode, encode_on_tape, encode_with_lattice, joint_loss, mix, teacher_forced_on_tape,
    DecoderMemory, DecoderState, JointLoss, JointLossConfig, UtteranceGraph,
};
pub use params::{ModelDims, ModelParams, Param, ParamVars};
