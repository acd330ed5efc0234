use super::{Matrix, Scalar};
use crate::error::{Error, Result};

/// Compares analytic gradients against central differences.
///
/// `f` returns the loss and its gradient with respect to each parameter.
/// The result is the maximum over all coordinates of
/// `|analytic - numeric| / max(1, |numeric|)`.
pub fn grad_check<T, F>(f: F, params: &[Matrix<T>], eps: T) -> Result<T>
where
    T: Scalar,
    F: Fn(&[Matrix<T>]) -> Result<(T, Vec<Matrix<T>>)>,
{
    if !(eps > T::zero() && eps <= T::lit(1e-2)) {
        return Err(Error::InvalidArgument(format!("eps {eps} outside (0, 1e-2]")));
    }
    let (value, analytic) = f(params)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    if analytic.len() != params.len() {
        return Err(Error::shape("one gradient per parameter expected"));
    }
    let mut work = params.to_vec();
    let mut worst = T::zero();
    for (p, grad) in analytic.iter().enumerate() {
        if grad.shape() != params[p].shape() {
            return Err(Error::shape(format!("gradient {p} has the wrong shape")));
        }
        for k in 0..params[p].data().len() {
            let orig = params[p].data()[k];
            work[p].data_mut()[k] = orig + eps;
            let (plus, _) = f(&work)?;
            work[p].data_mut()[k] = orig - eps;
            let (minus, _) = f(&work)?;
            work[p].data_mut()[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite("perturbed loss".into()));
            }
            let numeric = (plus - minus) / (eps + eps);
            let err = (grad.data()[k] - numeric).abs() / numeric.abs().max(T::one());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
