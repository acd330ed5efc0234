//! CTC prefix probabilities for label-synchronous decoding.
//!
//! For a prefix `g` the scorer keeps, per frame `t`, the log-probability of
//! all partial paths over frames `0..=t` that collapse to `g` and end in a
//! non-blank (`r_n`) or a blank (`r_b`) symbol. Extending by one character
//! is a single pass over the frames.

use super::{CharSet, LogProbLattice};
use crate::numkit::Scalar;

#[derive(Clone, Debug)]
pub struct CtcPrefixState<T> {
    r_nonblank: Vec<T>,
    r_blank: Vec<T>,
    last: Option<usize>,
    /// Log-probability that the label sequence starts with this prefix.
    prefix_score: T,
}

impl<T: Scalar> CtcPrefixState<T> {
    /// State of the empty prefix.
    pub fn initial(lattice: &LogProbLattice<T>, cs: &CharSet) -> Self {
        let n = lattice.frames();
        let mut r_blank = Vec::with_capacity(n);
        let mut acc = T::zero();
        for t in 0..n {
            acc += lattice.at(t, cs.blank());
            r_blank.push(acc);
        }
        Self {
            r_nonblank: vec![T::neg_infinity(); n],
            r_blank,
            last: None,
            prefix_score: T::zero(),
        }
    }

    pub fn prefix_score(&self) -> T {
        self.prefix_score
    }

    /// Log-probability that the label sequence is exactly this prefix.
    pub fn full_score(&self) -> T {
        let n = self.r_blank.len();
        self.r_nonblank[n - 1].log_add(self.r_blank[n - 1])
    }

    /// State for this prefix followed by character `c` (non-blank).
    pub fn extend(&self, lattice: &LogProbLattice<T>, cs: &CharSet, c: usize) -> Self {
        debug_assert!(!cs.is_blank(c));
        let n = lattice.frames();
        let ninf = T::neg_infinity();
        let mut r_nonblank = vec![ninf; n];
        let mut r_blank = vec![ninf; n];
        if self.last.is_none() {
            r_nonblank[0] = lattice.at(0, c);
        }
        let mut psi = r_nonblank[0];
        for t in 1..n {
            // paths for the old prefix that may be followed by `c` at frame t
            let phi = if self.last == Some(c) {
                self.r_blank[t - 1]
            } else {
                self.r_blank[t - 1].log_add(self.r_nonblank[t - 1])
            };
            r_nonblank[t] = r_nonblank[t - 1].log_add(phi) + lattice.at(t, c);
            r_blank[t] = r_nonblank[t - 1].log_add(r_blank[t - 1]) + lattice.at(t, cs.blank());
            psi = psi.log_add(phi + lattice.at(t, c));
        }
        Self {
            r_nonblank,
            r_blank,
            last: Some(c),
            prefix_score: psi,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctc::ctc_loss;
    use crate::numkit::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn full_score_equals_ctc_likelihood() {
        let cs = CharSet::letters(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let lat = LogProbLattice::from_logits(&Matrix::<f64>::random_uniform(5, 3, 2.0, &mut rng)).unwrap();
            for labels in [vec![1], vec![1, 2], vec![2, 2], vec![1, 2, 1]] {
                let mut st = CtcPrefixState::initial(&lat, &cs);
                for &c in &labels {
                    st = st.extend(&lat, &cs, c);
                }
                let nll = ctc_loss(&lat, &labels, &cs).unwrap().nll;
                assert!((st.full_score() + nll).abs() < 1e-10);
            }
            let empty = CtcPrefixState::initial(&lat, &cs);
            let nll = ctc_loss(&lat, &[], &cs).unwrap().nll;
            assert!((empty.full_score() + nll).abs() < 1e-12);
        }
    }

    #[test]
    fn prefix_score_is_non_increasing() {
        let cs = CharSet::letters(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let lat = LogProbLattice::from_logits(&Matrix::<f64>::random_uniform(6, 4, 2.0, &mut rng)).unwrap();
        let mut st = CtcPrefixState::initial(&lat, &cs);
        for c in [2, 1, 1, 3] {
            let next = st.extend(&lat, &cs, c);
            assert!(next.prefix_score() <= st.prefix_score() + 1e-12);
            assert!(next.full_score() <= next.prefix_score() + 1e-12);
            st = next;
        }
    }
}
