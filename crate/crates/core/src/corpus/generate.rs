use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DomainCorpus, Utterance};
use crate::ctc::CharSet;
use crate::error::{Error, Result};
use crate::numkit::{Matrix, Scalar};

/// Parameters of the clean reference domain.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub charset: CharSet,
    pub num_utterances: usize,
    /// Inclusive range of transcript lengths.
    pub transcript_len: (usize, usize),
    /// Inclusive range of frames per character.
    pub frames_per_char: (usize, usize),
    /// Inclusive range of silence frames before, between and after characters.
    pub gap_frames: (usize, usize),
    pub input_dim: usize,
    /// Standard deviation of the per-frame Gaussian jitter.
    pub jitter: f64,
    /// Minimum distance between any two prototypes (silence included).
    pub min_prototype_distance: f64,
    /// Seeds the character prototypes. Corpora sharing it share a "language".
    pub prototype_seed: u64,
    /// Seeds transcripts, durations and jitter.
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(charset: CharSet, num_utterances: usize, seed: u64) -> Self {
        Self {
            charset,
            num_utterances,
            transcript_len: (2, 5),
            frames_per_char: (2, 4),
            gap_frames: (0, 1),
            input_dim: 8,
            jitter: 0.3,
            min_prototype_distance: 2.0,
            prototype_seed: seed,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [self.transcript_len, self.frames_per_char, self.gap_frames];
        if ranges.iter().any(|(lo, hi)| lo > hi) {
            return Err(Error::InvalidArgument("empty range in generator spec".into()));
        }
        if self.transcript_len.0 == 0 || self.frames_per_char.0 == 0 {
            return Err(Error::InvalidArgument(
                "transcripts and characters need at least one frame".into(),
            ));
        }
        if self.input_dim < 2 {
            return Err(Error::InvalidArgument("input_dim must be at least 2".into()));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::InvalidArgument(format!("jitter {}", self.jitter)));
        }
        if self.transcript_len.1 > 1 && self.charset.num_characters() < 2 {
            return Err(Error::InvalidArgument(
                "multi-character transcripts need at least two characters".into(),
            ));
        }
        Ok(())
    }
}

fn gaussian_vec<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// One prototype per character plus a silence prototype (last), rejection
/// sampled so that all pairwise distances exceed the configured minimum.
fn sample_prototypes<R: Rng>(spec: &GeneratorSpec, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let count = spec.charset.num_characters() + 1;
    let mut protos: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut attempts = 0;
    while protos.len() < count {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::InvalidArgument(
                "cannot place prototypes at the requested distance".into(),
            ));
        }
        let v = gaussian_vec(spec.input_dim, rng);
        if protos.iter().all(|p| dist(p, &v) > spec.min_prototype_distance) {
            protos.push(v);
        }
    }
    Ok(protos)
}

/// Frames for a transcript: each character's prototype held for its
/// duration, silence gaps around it, jitter added to every frame.
pub fn render_utterance<T: Scalar, R: Rng>(
    prototypes: &[Vec<f64>],
    silence: &[f64],
    tokens: &[usize],
    durations: &[usize],
    gaps: &[usize],
    jitter: f64,
    rng: &mut R,
) -> Result<Matrix<T>> {
    if tokens.len() != durations.len() || gaps.len() != tokens.len() + 1 {
        return Err(Error::shape("durations/gaps do not match the transcript"));
    }
    let dim = silence.len();
    let mut rows: Vec<Vec<T>> = Vec::new();
    let emit = |proto: &[f64], rng: &mut R, rows: &mut Vec<Vec<T>>| {
        let row = proto
            .iter()
            .map(|&p| {
                let n: f64 = StandardNormal.sample(rng);
                T::lit(p + jitter * n)
            })
            .collect();
        rows.push(row);
    };
    for (k, &tok) in tokens.iter().enumerate() {
        for _ in 0..gaps[k] {
            emit(silence, rng, &mut rows);
        }
        for _ in 0..durations[k] {
            emit(&prototypes[tok], rng, &mut rows);
        }
    }
    for _ in 0..gaps[tokens.len()] {
        emit(silence, rng, &mut rows);
    }
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, dim));
    }
    Matrix::from_rows(&rows)
}

/// Deterministic clean-domain corpus. Adjacent characters in a transcript
/// are always distinct.
pub fn generate<T: Scalar>(spec: &GeneratorSpec) -> Result<DomainCorpus<T>> {
    spec.validate()?;
    let protos = sample_prototypes(spec, &mut ChaCha8Rng::seed_from_u64(spec.prototype_seed))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (silence, char_protos) = protos.split_last().expect("at least one prototype");
    let chars: Vec<usize> = spec.charset.characters().collect();
    // prototype lookup by charset index
    let mut by_symbol = vec![Vec::new(); spec.charset.len()];
    for (k, &c) in chars.iter().enumerate() {
        by_symbol[c] = char_protos[k].clone();
    }

    let width = spec.num_utterances.max(1).to_string().len();
    let mut utterances = Vec::with_capacity(spec.num_utterances);
    for i in 0..spec.num_utterances {
        let len = rng.random_range(spec.transcript_len.0..=spec.transcript_len.1);
        let mut tokens: Vec<usize> = Vec::with_capacity(len);
        while tokens.len() < len {
            let c = chars[rng.random_range(0..chars.len())];
            if tokens.last() != Some(&c) {
                tokens.push(c);
            }
        }
        let durations: Vec<usize> = (0..len)
            .map(|_| rng.random_range(spec.frames_per_char.0..=spec.frames_per_char.1))
            .collect();
        let gaps: Vec<usize> = (0..=len)
            .map(|_| rng.random_range(spec.gap_frames.0..=spec.gap_frames.1))
            .collect();
        let frames = render_utterance(&by_symbol, silence, &tokens, &durations, &gaps, spec.jitter, &mut rng)?;
        utterances.push(Utterance::new(format!("utt{i:0width$}"), frames, Some(tokens))?);
    }
    DomainCorpus::new(spec.charset.clone(), "clean", utterances)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> GeneratorSpec {
        GeneratorSpec::new(CharSet::letters(4).unwrap(), 12, 42)
    }

    #[test]
    fn same_seed_same_corpus() {
        let a: DomainCorpus<f64> = generate(&spec()).unwrap();
        let b: DomainCorpus<f64> = generate(&spec()).unwrap();
        assert_eq!(a, b);
        let mut other = spec();
        other.seed = 43;
        let c: DomainCorpus<f64> = generate(&other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn durations_sum_to_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let protos = vec![vec![], vec![1.0, 0.0], vec![0.0, 1.0]];
        let m: Matrix<f64> =
            render_utterance(&protos, &[0.0, 0.0], &[1, 2], &[3, 2], &[0, 0, 0], 0.1, &mut rng).unwrap();
        assert_eq!(m.rows(), 5);
    }

    #[test]
    fn prototypes_are_separated() {
        let s = spec();
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        let p = sample_prototypes(&s, &mut rng).unwrap();
        for i in 0..p.len() {
            for j in 0..i {
                assert!(dist(&p[i], &p[j]) > s.min_prototype_distance);
            }
        }
    }

    #[test]
    fn transcripts_respect_ranges() {
        let s = spec();
        let c: DomainCorpus<f64> = generate(&s).unwrap();
        for u in &c.utterances {
            let t = u.transcript.as_ref().unwrap();
            assert!((2..=5).contains(&t.len()));
            assert!(t.windows(2).all(|w| w[0] != w[1]));
            let min_frames = t.len() * s.frames_per_char.0;
            assert!(u.num_frames() >= min_frames);
        }
    }

    #[test]
    fn prototype_seed_fixes_the_language() {
        let mut a = spec();
        a.jitter = 0.0;
        a.gap_frames = (0, 0);
        let mut b = a.clone();
        b.seed = 7;
        let ca: DomainCorpus<f64> = generate(&a).unwrap();
        let cb: DomainCorpus<f64> = generate(&b).unwrap();
        let first = |c: &DomainCorpus<f64>, sym: usize| {
            c.utterances
                .iter()
                .find(|u| u.transcript.as_ref().unwrap()[0] == sym)
                .map(|u| u.frames.row(0).to_vec())
        };
        for sym in a.charset.characters() {
            if let (Some(x), Some(y)) = (first(&ca, sym), first(&cb, sym)) {
                assert_eq!(x, y);
            }
        }
        assert_ne!(ca, cb);
    }

    #[test]
    fn rejects_empty_ranges() {
        let mut s = spec();
        s.frames_per_char = (3, 2);
        assert!(generate::<f64>(&s).is_err());
        let mut s = spec();
        s.input_dim = 1;
        assert!(generate::<f64>(&s).is_err());
    }
}
