use super::loss::{can_skip, check_feasible, extend_with_blanks};
use super::{CharSet, FrameLabelAssignment, LogProbLattice};
use crate::error::{Error, Result};
use crate::numkit::Scalar;

/// Most probable path through the extended-label trellis.
#[derive(Clone, Debug, PartialEq)]
pub struct ViterbiPath<T> {
    /// Symbol index emitted at each frame.
    pub symbols: Vec<usize>,
    /// Extended-trellis state occupied at each frame.
    pub states: Vec<usize>,
    /// Log-probability of the path.
    pub score: T,
}

/// Viterbi over the CTC trellis. Ties go to the lower trellis state.
pub fn viterbi_path<T: Scalar>(lattice: &LogProbLattice<T>, labels: &[usize], cs: &CharSet) -> Result<ViterbiPath<T>> {
    if lattice.vocab() != cs.len() {
        return Err(Error::shape("lattice vocab differs from charset"));
    }
    let ext = extend_with_blanks(labels, cs)?;
    let n = lattice.frames();
    check_feasible(n, labels)?;
    let s_len = ext.len();
    let blank = cs.blank();
    let ninf = T::neg_infinity();

    let mut delta = vec![ninf; s_len];
    let mut back = vec![0usize; n * s_len];
    delta[0] = lattice.at(0, ext[0]);
    if s_len > 1 {
        delta[1] = lattice.at(0, ext[1]);
    }
    let mut next = vec![ninf; s_len];
    for t in 1..n {
        for s in 0..s_len {
            // ascending candidate order + strict comparison = lowest index on ties
            let mut best = ninf;
            let mut arg = s;
            let lo = if can_skip(&ext, s, blank) { s - 2 } else { s.saturating_sub(1) };
            for p in lo..=s {
                if delta[p] > best {
                    best = delta[p];
                    arg = p;
                }
            }
            next[s] = best + lattice.at(t, ext[s]);
            back[t * s_len + s] = arg;
        }
        std::mem::swap(&mut delta, &mut next);
    }

    let mut end = s_len - 1;
    if s_len > 1 && delta[s_len - 2] >= delta[s_len - 1] {
        end = s_len - 2;
    }
    let score = delta[end];
    if score == ninf {
        return Err(Error::NonFinite("every alignment path has zero probability".into()));
    }
    let mut states = vec![0; n];
    states[n - 1] = end;
    for t in (1..n).rev() {
        states[t - 1] = back[t * s_len + states[t]];
    }
    let symbols = states.iter().map(|&s| ext[s]).collect();
    Ok(ViterbiPath { symbols, states, score })
}

/// Forced alignment: per-frame labels of the Viterbi path, blank frames dropped.
pub fn ctc_forced_align<T: Scalar>(
    lattice: &LogProbLattice<T>,
    labels: &[usize],
    cs: &CharSet,
) -> Result<FrameLabelAssignment> {
    let path = viterbi_path(lattice, labels, cs)?;
    let keep = path.symbols.iter().map(|&s| !cs.is_blank(s)).collect();
    FrameLabelAssignment::new(path.symbols, keep)
}

/// Per-frame argmax labels. A frame is kept when its top probability is
/// strictly above `threshold` and the label is not blank.
pub fn ctc_greedy_predict<T: Scalar>(lattice: &LogProbLattice<T>, threshold: T, cs: &CharSet) -> FrameLabelAssignment {
    let mut labels = Vec::with_capacity(lattice.frames());
    let mut keep = Vec::with_capacity(lattice.frames());
    for t in 0..lattice.frames() {
        let (arg, best) = argmax(lattice.frame(t));
        labels.push(arg);
        keep.push(best.exp() > threshold && !cs.is_blank(arg));
    }
    FrameLabelAssignment::new(labels, keep).expect("parallel vectors")
}

/// First maximal entry.
pub(crate) fn argmax<T: Scalar>(row: &[T]) -> (usize, T) {
    let mut arg = 0;
    let mut best = T::neg_infinity();
    for (i, &v) in row.iter().enumerate() {
        if v > best {
            best = v;
            arg = i;
        }
    }
    (arg, best)
}

/// Best-path decoding: argmax per frame, collapsed.
pub fn greedy_decode<T: Scalar>(lattice: &LogProbLattice<T>, cs: &CharSet) -> Vec<usize> {
    let path: Vec<usize> = (0..lattice.frames()).map(|t| argmax(lattice.frame(t)).0).collect();
    super::collapse(&path, cs)
}
