//! Dense matrices, a reverse-mode tape, and gradient checking.

mod gradcheck;
mod matrix;
mod scalar;
mod tape;

pub use gradcheck::grad_check;
pub use matrix::{dot, Matrix};
pub use scalar::{log_sum_exp, Scalar};
pub use tape::{Gradients, Tape, Var};

use rand::Rng;

/// Seeded fan-in initialization: uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn init_uniform<T: Scalar, R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    fan_in: usize,
    rng: &mut R,
) -> Matrix<T> {
    let scale = T::one() / T::from_usize_lossy(fan_in.max(1)).sqrt();
    Matrix::random_uniform(rows, cols, scale, rng)
}
