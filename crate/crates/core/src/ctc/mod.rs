//! CTC loss, forced alignment, greedy frame prediction, and prefix scoring.

mod align;
mod charset;
mod lattice;
mod loss;
mod prefix;

pub use align::{ctc_forced_align, ctc_greedy_predict, greedy_decode, viterbi_path, ViterbiPath};
pub use charset::{CharSet, DEFAULT_BLANK};
pub use lattice::{FrameLabelAssignment, LogProbLattice};
pub use loss::{collapse, ctc_loss, extend_with_blanks, min_frames, CtcLoss};
pub use prefix::CtcPrefixState;
