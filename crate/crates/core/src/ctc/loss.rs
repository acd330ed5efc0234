use super::{CharSet, LogProbLattice};
use crate::error::{Error, Result};
use crate::numkit::{Matrix, Scalar};

/// Interleaves blanks around every label: `ab` becomes `-a-b-`.
pub fn extend_with_blanks(labels: &[usize], cs: &CharSet) -> Result<Vec<usize>> {
    cs.validate_transcript(labels)?;
    let mut out = Vec::with_capacity(2 * labels.len() + 1);
    out.push(cs.blank());
    for &l in labels {
        out.push(l);
        out.push(cs.blank());
    }
    Ok(out)
}

/// Minimum number of frames a CTC path for `labels` needs: one per label plus
/// a separating blank between equal neighbours.
pub fn min_frames(labels: &[usize]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count()
}

pub(crate) fn check_feasible(frames: usize, labels: &[usize]) -> Result<()> {
    let required = min_frames(labels);
    if frames < required {
        return Err(Error::InfeasibleAlignment { frames, required });
    }
    Ok(())
}

/// Whether the trellis allows skipping from state `s - 2` to `s`.
#[inline]
pub(crate) fn can_skip(ext: &[usize], s: usize, blank: usize) -> bool {
    s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]
}

#[derive(Clone, Debug)]
pub struct CtcLoss<T> {
    /// `-ln P(labels | lattice)`
    pub nll: T,
    /// Derivative of `nll` with respect to every lattice entry.
    pub grad: Matrix<T>,
}

/// CTC negative log-likelihood and its gradient, by log-space
/// forward-backward over the blank-extended label trellis.
pub fn ctc_loss<T: Scalar>(lattice: &LogProbLattice<T>, labels: &[usize], cs: &CharSet) -> Result<CtcLoss<T>> {
    if lattice.vocab() != cs.len() {
        return Err(Error::shape(format!(
            "lattice vocab {} vs charset {}",
            lattice.vocab(),
            cs.len()
        )));
    }
    let ext = extend_with_blanks(labels, cs)?;
    let n = lattice.frames();
    check_feasible(n, labels)?;
    let s_len = ext.len();
    let blank = cs.blank();
    let ninf = T::neg_infinity();

    let mut alpha = vec![ninf; n * s_len];
    alpha[0] = lattice.at(0, ext[0]);
    if s_len > 1 {
        alpha[1] = lattice.at(0, ext[1]);
    }
    for t in 1..n {
        let (prev, cur) = alpha.split_at_mut(t * s_len);
        let prev = &prev[(t - 1) * s_len..];
        for s in 0..s_len {
            let mut acc = prev[s];
            if s >= 1 {
                acc = acc.log_add(prev[s - 1]);
            }
            if can_skip(&ext, s, blank) {
                acc = acc.log_add(prev[s - 2]);
            }
            cur[s] = acc + lattice.at(t, ext[s]);
        }
    }

    let mut beta = vec![ninf; n * s_len];
    let last = (n - 1) * s_len;
    beta[last + s_len - 1] = lattice.at(n - 1, ext[s_len - 1]);
    if s_len > 1 {
        beta[last + s_len - 2] = lattice.at(n - 1, ext[s_len - 2]);
    }
    for t in (0..n - 1).rev() {
        let (cur, next) = beta.split_at_mut((t + 1) * s_len);
        let cur = &mut cur[t * s_len..];
        for s in 0..s_len {
            let mut acc = next[s];
            if s + 1 < s_len {
                acc = acc.log_add(next[s + 1]);
            }
            if s + 2 < s_len && can_skip(&ext, s + 2, blank) {
                acc = acc.log_add(next[s + 2]);
            }
            cur[s] = acc + lattice.at(t, ext[s]);
        }
    }

    let mut log_p = alpha[last + s_len - 1];
    if s_len > 1 {
        log_p = log_p.log_add(alpha[last + s_len - 2]);
    }
    if log_p == ninf {
        // feasible but every path has zero probability
        return Err(Error::NonFinite("CTC likelihood underflowed to zero".into()));
    }

    let mut grad = Matrix::zeros(n, cs.len());
    for t in 0..n {
        for s in 0..s_len {
            let a = alpha[t * s_len + s];
            let b = beta[t * s_len + s];
            if a == ninf || b == ninf {
                continue;
            }
            let occupancy = (a + b - lattice.at(t, ext[s]) - log_p).exp();
            grad[(t, ext[s])] -= occupancy;
        }
    }
    Ok(CtcLoss { nll: -log_p, grad })
}

/// Collapses a frame path: merge repeats, then drop blanks.
pub fn collapse(path: &[usize], cs: &CharSet) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != cs.blank() {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cs_a() -> CharSet {
        // blank first, then 'a'
        CharSet::letters(1).unwrap()
    }

    #[test]
    fn extension_examples() {
        let cs = CharSet::letters(2).unwrap();
        assert_eq!(cs.decode(&extend_with_blanks(&[1, 2], &cs).unwrap()), "-a-b-");
        assert_eq!(cs.decode(&extend_with_blanks(&[], &cs).unwrap()), "-");
        assert_eq!(cs.decode(&extend_with_blanks(&[1, 1], &cs).unwrap()), "-a-a-");
        assert!(matches!(
            extend_with_blanks(&[1, 0], &cs),
            Err(Error::InvalidTranscript(_))
        ));
    }

    #[test]
    fn two_frame_uniform() {
        let lat = LogProbLattice::from_probs(&Matrix::filled(2, 2, 0.5f64)).unwrap();
        let loss = ctc_loss(&lat, &[1], &cs_a()).unwrap();
        assert!((loss.nll - (-(0.75f64).ln())).abs() < 1e-12);
        assert!((loss.nll - 0.287682).abs() < 1e-6);
    }

    #[test]
    fn single_frame_single_path() {
        let q = 0.3f64;
        let lat = LogProbLattice::from_probs(&Matrix::from_rows(&[vec![1.0 - q, q]]).unwrap()).unwrap();
        let loss = ctc_loss(&lat, &[1], &cs_a()).unwrap();
        assert!((loss.nll + q.ln()).abs() < 1e-14);
    }

    #[test]
    fn infeasible_is_explicit() {
        let lat = LogProbLattice::from_probs(&Matrix::filled(2, 2, 0.5f64)).unwrap();
        match ctc_loss(&lat, &[1, 1], &cs_a()) {
            Err(Error::InfeasibleAlignment { frames: 2, required: 3 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gradient_rows_sum_to_minus_one() {
        // each frame is occupied by exactly one symbol on every path
        let cs = CharSet::letters(3).unwrap();
        let logits = Matrix::from_rows(&[
            vec![0.1f64, 0.5, -0.3, 0.2],
            vec![0.4, -0.1, 0.0, 0.3],
            vec![-0.2, 0.3, 0.6, 0.1],
            vec![0.0, 0.0, 0.2, -0.4],
        ])
        .unwrap();
        let lat = LogProbLattice::from_logits(&logits).unwrap();
        let loss = ctc_loss(&lat, &[1, 3], &cs).unwrap();
        for r in 0..4 {
            assert!((loss.grad.row(r).iter().sum::<f64>() + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn collapse_rule() {
        let cs = CharSet::letters(2).unwrap();
        assert_eq!(collapse(&[1, 1, 0, 1, 2, 2, 0], &cs), vec![1, 1, 2]);
        assert_eq!(collapse(&[0, 0], &cs), Vec::<usize>::new());
    }

    #[test]
    fn long_sequence_stays_finite() {
        // probability-space recursion would underflow here
        let cs = CharSet::letters(3).unwrap();
        let n = 400;
        let lat = LogProbLattice::from_probs(&Matrix::filled(n, 4, 0.25f64)).unwrap();
        let labels: Vec<usize> = (0..60).map(|i| 1 + i % 3).collect();
        let loss = ctc_loss(&lat, &labels, &cs).unwrap();
        assert!(loss.nll.is_finite() && loss.nll > 0.0);
        assert!(loss.grad.is_finite());
    }
}
