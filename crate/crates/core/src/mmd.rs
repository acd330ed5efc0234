//! Kernel two-sample discrepancy and its character-conditional average.
//!
//! Feature sets are matrices whose rows are the samples. The loss used for
//! adaptation is the squared, biased empirical MMD:
//!
//! ```text
//! mean k(xs, xs') + mean k(xt, xt') - 2 mean k(xs, xt)
//! ```
//!
//! With the linear kernel this collapses to `|mean(xs) - mean(xt)|^2`, which
//! is evaluated in linear time.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::ctc::CharSet;
use crate::error::{Error, Result};
use crate::numkit::{dot, Matrix, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelSpec {
    Linear,
    Rbf { bandwidth: f64 },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Linear
    }
}

impl KernelSpec {
    pub fn rbf(bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::InvalidArgument(format!("rbf bandwidth {bandwidth}")));
        }
        Ok(KernelSpec::Rbf { bandwidth })
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => f.write_str("linear"),
            KernelSpec::Rbf { bandwidth } => write!(f, "rbf:{bandwidth}"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "linear" {
            return Ok(KernelSpec::Linear);
        }
        if let Some(bw) = s.strip_prefix("rbf:") {
            let bw: f64 = bw
                .parse()
                .map_err(|_| Error::Config(format!("bad rbf bandwidth in {s:?}")))?;
            return KernelSpec::rbf(bw).map_err(|e| Error::Config(e.to_string()));
        }
        Err(Error::Config(format!(
            "unknown kernel {s:?} (expected linear or rbf:<bandwidth>)"
        )))
    }
}

pub fn kernel_eval<T: Scalar>(spec: &KernelSpec, x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("kernel on dims {} and {}", x.len(), y.len())));
    }
    Ok(kernel_unchecked(spec, x, y))
}

fn kernel_unchecked<T: Scalar>(spec: &KernelSpec, x: &[T], y: &[T]) -> T {
    match *spec {
        KernelSpec::Linear => dot(x, y),
        KernelSpec::Rbf { bandwidth } => {
            let h = T::lit(bandwidth);
            let d2: T = x.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum();
            (-d2 / (T::lit(2.0) * h * h)).exp()
        }
    }
}

/// Squared MMD value plus gradients with respect to every source and target row.
#[derive(Clone, Debug)]
pub struct MmdValue<T> {
    pub value: T,
    pub grad_source: Matrix<T>,
    pub grad_target: Matrix<T>,
}

/// Biased empirical squared MMD, clamped below at zero.
pub fn mmd_sq_biased<T: Scalar>(xs: &Matrix<T>, xt: &Matrix<T>, spec: &KernelSpec) -> Result<MmdValue<T>> {
    if xs.rows() == 0 || xt.rows() == 0 {
        return Err(Error::EmptyDomain("MMD needs samples on both sides".into()));
    }
    if xs.cols() != xt.cols() {
        return Err(Error::shape(format!(
            "MMD feature dims {} and {}",
            xs.cols(),
            xt.cols()
        )));
    }
    let out = match spec {
        KernelSpec::Linear => mmd_linear(xs, xt),
        KernelSpec::Rbf { .. } => mmd_double_sum(xs, xt, spec),
    };
    if !out.value.is_finite() {
        return Err(Error::NonFinite("MMD value".into()));
    }
    if out.value < T::zero() {
        return Ok(MmdValue {
            value: T::zero(),
            grad_source: Matrix::zeros(xs.rows(), xs.cols()),
            grad_target: Matrix::zeros(xt.rows(), xt.cols()),
        });
    }
    Ok(out)
}

fn mmd_linear<T: Scalar>(xs: &Matrix<T>, xt: &Matrix<T>) -> MmdValue<T> {
    let diff = xs.mean_rows().zip_map(&xt.mean_rows(), |a, b| a - b);
    let value = diff.frobenius_norm_sq();
    let two = T::lit(2.0);
    let ns = T::from_usize_lossy(xs.rows());
    let nt = T::from_usize_lossy(xt.rows());
    let gs = diff.scale(two / ns);
    let gt = diff.scale(-two / nt);
    MmdValue {
        value,
        grad_source: broadcast_rows(&gs, xs.rows()),
        grad_target: broadcast_rows(&gt, xt.rows()),
    }
}

fn broadcast_rows<T: Scalar>(row: &Matrix<T>, n: usize) -> Matrix<T> {
    Matrix::zeros(n, row.cols())
        .add_row_broadcast(row)
        .expect("row width matches")
}

/// `d k(x, y) / d x`, accumulated into `out` with weight `w`.
fn kernel_grad_x<T: Scalar>(spec: &KernelSpec, x: &[T], y: &[T], w: T, out: &mut [T]) {
    match *spec {
        KernelSpec::Linear => {
            for (o, &yv) in out.iter_mut().zip(y) {
                *o += w * yv;
            }
        }
        KernelSpec::Rbf { bandwidth } => {
            let h2 = T::lit(bandwidth * bandwidth);
            let k = kernel_unchecked(spec, x, y);
            for ((o, &xv), &yv) in out.iter_mut().zip(x).zip(y) {
                *o -= w * k * (xv - yv) / h2;
            }
        }
    }
}

fn mmd_double_sum<T: Scalar>(xs: &Matrix<T>, xt: &Matrix<T>, spec: &KernelSpec) -> MmdValue<T> {
    let ns = T::from_usize_lossy(xs.rows());
    let nt = T::from_usize_lossy(xt.rows());
    let two = T::lit(2.0);
    let mut kss = T::zero();
    let mut ktt = T::zero();
    let mut kst = T::zero();
    let mut gs = Matrix::zeros(xs.rows(), xs.cols());
    let mut gt = Matrix::zeros(xt.rows(), xt.cols());
    for i in 0..xs.rows() {
        for j in 0..xs.rows() {
            kss += kernel_unchecked(spec, xs.row(i), xs.row(j));
            // k(si, sj) depends on si through both arguments; symmetric kernel
            kernel_grad_x(spec, xs.row(i), xs.row(j), two / (ns * ns), gs.row_mut(i));
        }
        for j in 0..xt.rows() {
            kst += kernel_unchecked(spec, xs.row(i), xt.row(j));
            kernel_grad_x(spec, xs.row(i), xt.row(j), -two / (ns * nt), gs.row_mut(i));
        }
    }
    for i in 0..xt.rows() {
        for j in 0..xt.rows() {
            ktt += kernel_unchecked(spec, xt.row(i), xt.row(j));
            kernel_grad_x(spec, xt.row(i), xt.row(j), two / (nt * nt), gt.row_mut(i));
        }
        for j in 0..xs.rows() {
            kernel_grad_x(spec, xt.row(i), xs.row(j), -two / (ns * nt), gt.row_mut(i));
        }
    }
    let value = kss / (ns * ns) + ktt / (nt * nt) - two * kst / (ns * nt);
    MmdValue {
        value,
        grad_source: gs,
        grad_target: gt,
    }
}

/// Feature vectors tagged with character labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFeatureBag<T> {
    features: Matrix<T>,
    labels: Vec<usize>,
}

impl<T: Scalar> LabeledFeatureBag<T> {
    pub fn new(features: Matrix<T>, labels: Vec<usize>, cs: &CharSet) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::shape(format!(
                "{} feature rows with {} labels",
                features.rows(),
                labels.len()
            )));
        }
        cs.validate_transcript(&labels)?;
        if !features.is_finite() {
            return Err(Error::NonFinite("bag features".into()));
        }
        Ok(Self { features, labels })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            features: Matrix::zeros(0, dim),
            labels: Vec::new(),
        }
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Row indices per character, in ascending character order.
    pub fn rows_by_label(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            map.entry(l).or_default().push(i);
        }
        map
    }
}

#[derive(Clone, Debug)]
pub struct CmatchValue<T> {
    pub value: T,
    pub grad_source: Matrix<T>,
    pub grad_target: Matrix<T>,
    /// Characters that appeared in both bags, ascending.
    pub matched: Vec<usize>,
}

/// Mean squared MMD over the characters present in both bags.
pub fn cmatch_loss<T: Scalar>(
    src: &LabeledFeatureBag<T>,
    tgt: &LabeledFeatureBag<T>,
    cs: &CharSet,
    spec: &KernelSpec,
) -> Result<CmatchValue<T>> {
    if src.features.cols() != tgt.features.cols() {
        return Err(Error::shape("bag feature dims differ"));
    }
    let src_rows = src.rows_by_label();
    let tgt_rows = tgt.rows_by_label();
    let matched: Vec<usize> = cs
        .characters()
        .filter(|c| src_rows.contains_key(c) && tgt_rows.contains_key(c))
        .collect();
    if matched.is_empty() {
        return Err(Error::NoOverlap);
    }
    let mut grad_source = Matrix::zeros(src.len(), src.features.cols());
    let mut grad_target = Matrix::zeros(tgt.len(), tgt.features.cols());
    let weight = T::one() / T::from_usize_lossy(matched.len());
    let mut total = T::zero();
    for c in &matched {
        let si = &src_rows[c];
        let ti = &tgt_rows[c];
        let term = mmd_sq_biased(
            &src.features.select_rows(si)?,
            &tgt.features.select_rows(ti)?,
            spec,
        )?;
        total += term.value;
        for (k, &r) in si.iter().enumerate() {
            for (o, &g) in grad_source.row_mut(r).iter_mut().zip(term.grad_source.row(k)) {
                *o += weight * g;
            }
        }
        for (k, &r) in ti.iter().enumerate() {
            for (o, &g) in grad_target.row_mut(r).iter_mut().zip(term.grad_target.row(k)) {
                *o += weight * g;
            }
        }
    }
    Ok(CmatchValue {
        value: total * weight,
        grad_source,
        grad_target,
        matched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(kernel_eval(&KernelSpec::Linear, &[1.0, 2.0], &[1.0, 2.0]).unwrap(), 5.0);
        let rbf = KernelSpec::rbf(1.0).unwrap();
        assert_eq!(kernel_eval(&rbf, &[0.3, 0.1], &[0.3, 0.1]).unwrap(), 1.0);
        let v = kernel_eval(&rbf, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!(kernel_eval(&rbf, &[1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn linear_hand_example() {
        let xs = m(&[&[1.0, 0.0], &[3.0, 0.0]]);
        let xt = m(&[&[0.0, 0.0], &[0.0, 2.0]]);
        let v = mmd_sq_biased(&xs, &xt, &KernelSpec::Linear).unwrap();
        assert!((v.value - 5.0).abs() < 1e-12);
    }

    #[test]
    fn identical_sets_are_zero() {
        let xs = m(&[&[0.2, -1.0], &[0.5, 0.7], &[1.1, 0.0]]);
        for spec in [KernelSpec::Linear, KernelSpec::rbf(0.8).unwrap()] {
            let v = mmd_sq_biased(&xs, &xs, &spec).unwrap();
            assert!(v.value.abs() <= 1e-12);
        }
    }

    #[test]
    fn empty_side_is_an_error() {
        let xs = m(&[&[1.0]]);
        let empty = Matrix::<f64>::zeros(0, 1);
        assert!(matches!(
            mmd_sq_biased(&xs, &empty, &KernelSpec::Linear),
            Err(Error::EmptyDomain(_))
        ));
    }

    #[test]
    fn cmatch_averages_matched_characters() {
        let cs = CharSet::letters(3).unwrap();
        // char 1 contributes 5.0, char 2 contributes 1.0, char 3 is source-only
        let src = LabeledFeatureBag::new(
            m(&[&[1.0, 0.0], &[3.0, 0.0], &[1.0, 1.0], &[9.0, 9.0]]),
            vec![1, 1, 2, 3],
            &cs,
        )
        .unwrap();
        let tgt = LabeledFeatureBag::new(
            m(&[&[0.0, 0.0], &[0.0, 2.0], &[1.0, 0.0]]),
            vec![1, 1, 2],
            &cs,
        )
        .unwrap();
        let v = cmatch_loss(&src, &tgt, &cs, &KernelSpec::Linear).unwrap();
        assert!((v.value - 3.0).abs() < 1e-12);
        assert_eq!(v.matched, vec![1, 2]);
        assert_eq!(v.grad_source.row(3), &[0.0, 0.0]);
    }

    #[test]
    fn cmatch_no_overlap() {
        let cs = CharSet::letters(2).unwrap();
        let src = LabeledFeatureBag::new(m(&[&[1.0]]), vec![1], &cs).unwrap();
        let tgt = LabeledFeatureBag::new(m(&[&[1.0]]), vec![2], &cs).unwrap();
        assert!(matches!(
            cmatch_loss(&src, &tgt, &cs, &KernelSpec::Linear),
            Err(Error::NoOverlap)
        ));
    }

    #[test]
    fn bag_rejects_blank_labels() {
        let cs = CharSet::letters(2).unwrap();
        assert!(LabeledFeatureBag::new(m(&[&[1.0]]), vec![cs.blank()], &cs).is_err());
    }

    #[test]
    fn kernel_strings() {
        assert_eq!("linear".parse::<KernelSpec>().unwrap(), KernelSpec::Linear);
        assert_eq!(
            "rbf:0.5".parse::<KernelSpec>().unwrap(),
            KernelSpec::Rbf { bandwidth: 0.5 }
        );
        assert!("rbf:-1".parse::<KernelSpec>().is_err());
        assert!("poly".parse::<KernelSpec>().is_err());
    }
}
