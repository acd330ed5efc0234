//! Brute-force references used by the integration tests.
#![allow(dead_code)]

use cmatch::ctc::{CharSet, LogProbLattice};
use cmatch::numkit::Matrix;
use rand::Rng;

/// Random log-distribution lattice of `frames` rows over `vocab` symbols.
pub fn random_lattice<R: Rng>(frames: usize, vocab: usize, rng: &mut R) -> LogProbLattice<f64> {
    let logits: Vec<Vec<f64>> = (0..frames)
        .map(|_| (0..vocab).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    LogProbLattice::from_logits(&Matrix::from_rows(&logits).unwrap()).unwrap()
}

/// Merge repeats, then drop blanks.
pub fn collapse_ref(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &s in path {
        if Some(s) != prev && s != blank {
            out.push(s);
        }
        prev = Some(s);
    }
    out
}

/// Every path of length `n` over `v` symbols, in lexicographic order.
pub fn all_paths(n: usize, v: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = v.pow(n as u32);
    (0..total).map(move |mut k| {
        let mut p = vec![0; n];
        for slot in p.iter_mut().rev() {
            *slot = k % v;
            k /= v;
        }
        p
    })
}

/// `(ln sum, max)` of path log-probabilities collapsing to `labels`; `None`
/// when no path does.
pub fn brute_force_ctc(lattice: &LogProbLattice<f64>, labels: &[usize], cs: &CharSet) -> Option<(f64, f64)> {
    let scores: Vec<f64> = all_paths(lattice.frames(), lattice.vocab())
        .filter(|p| collapse_ref(p, cs.blank()) == labels)
        .map(|p| p.iter().enumerate().map(|(t, &s)| lattice.at(t, s)).sum())
        .collect();
    if scores.is_empty() {
        return None;
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = scores.iter().map(|s| (s - max).exp()).sum();
    Some((max + sum.ln(), max))
}

/// Squared MMD straight from the three double sums.
pub fn mmd_double_sum(xs: &Matrix<f64>, xt: &Matrix<f64>, k: impl Fn(&[f64], &[f64]) -> f64) -> f64 {
    let mean = |a: &Matrix<f64>, b: &Matrix<f64>| {
        let mut s = 0.0;
        for x in a.iter_rows() {
            for y in b.iter_rows() {
                s += k(x, y);
            }
        }
        s / (a.rows() * b.rows()) as f64
    };
    mean(xs, xs) + mean(xt, xt) - 2.0 * mean(xs, xt)
}

pub fn linear(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn rbf(bandwidth: f64) -> impl Fn(&[f64], &[f64]) -> f64 {
    move |x, y| {
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        (-d2 / (2.0 * bandwidth * bandwidth)).exp()
    }
}

/// `|mean(xs) - mean(xt)|^2`
pub fn squared_mean_difference(xs: &Matrix<f64>, xt: &Matrix<f64>) -> f64 {
    let d = xs.cols();
    (0..d)
        .map(|j| {
            let ms = xs.iter_rows().map(|r| r[j]).sum::<f64>() / xs.rows() as f64;
            let mt = xt.iter_rows().map(|r| r[j]).sum::<f64>() / xt.rows() as f64;
            (ms - mt) * (ms - mt)
        })
        .sum()
}

/// Unit-cost Levenshtein distance by full dynamic programming table.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

pub fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix<f64> {
    let v: Vec<Vec<f64>> = (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    Matrix::from_rows(&v).unwrap()
}
