//! Reverse-mode gradient tape over a fixed set of matrix primitives.
//!
//! Values are recorded in evaluation order; [`Tape::backward`] walks the
//! records in reverse and accumulates vector-Jacobian products. Losses
//! computed outside the tape (CTC, MMD) enter through [`Tape::custom_scalar`]
//! together with their precomputed partial derivatives.

use super::{Matrix, Scalar};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Add(Var, Var),
    /// Matrix plus a broadcast `1 x cols` row.
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Tanh(Var),
    Log(Var),
    LogSoftmaxRows(Var),
    SoftmaxRows(Var),
    GatherRows(Var, Vec<usize>),
    MeanRows(Var),
    /// Sum of the listed entries, as a 1x1 value.
    Pick(Var, Vec<(usize, usize)>),
    Sum(Var),
    /// 1x1 value with known partials with respect to each input.
    Custom(Vec<(Var, Matrix<T>)>),
}

#[derive(Debug)]
struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by one backward pass.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `v`; exactly zero when `v` did not influence the output.
    pub fn get(&self, v: Var) -> Matrix<T> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Matrix<T> {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    /// Records an input (parameter or constant).
    pub fn leaf(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul_t(self.value(b))?;
        Ok(self.push(v, Op::MatMulT(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn add_row(&mut self, m: Var, row: Var) -> Result<Var> {
        let v = self.value(m).add_row_broadcast(self.value(row))?;
        Ok(self.push(v, Op::AddRow(m, row)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let v = self.value(a).scale(k);
        self.push(v, Op::Scale(a, k))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(T::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(T::ln);
        self.push(v, Op::Log(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).log_softmax_rows();
        self.push(v, Op::LogSoftmaxRows(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).softmax_rows();
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn gather_rows(&mut self, a: Var, indices: Vec<usize>) -> Result<Var> {
        let v = self.value(a).select_rows(&indices)?;
        Ok(self.push(v, Op::GatherRows(a, indices)))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).mean_rows();
        self.push(v, Op::MeanRows(a))
    }

    pub fn pick(&mut self, a: Var, entries: Vec<(usize, usize)>) -> Result<Var> {
        let m = self.value(a);
        let mut s = T::zero();
        for &(r, c) in &entries {
            if r >= m.rows() || c >= m.cols() {
                return Err(Error::shape(format!("pick ({r},{c}) of {:?}", m.shape())));
            }
            s += m[(r, c)];
        }
        Ok(self.push(Matrix::scalar(s), Op::Pick(a, entries)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Matrix::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    /// Weighted sum of 1x1 values.
    pub fn weighted_sum(&mut self, terms: &[(T, Var)]) -> Result<Var> {
        let mut inputs = Vec::with_capacity(terms.len());
        let mut total = T::zero();
        for &(w, v) in terms {
            if self.value(v).shape() != (1, 1) {
                return Err(Error::shape("weighted_sum expects 1x1 terms"));
            }
            total += w * self.value(v).item();
            inputs.push((v, Matrix::scalar(w)));
        }
        Ok(self.push(Matrix::scalar(total), Op::Custom(inputs)))
    }

    /// Records a scalar computed outside the tape, given its partial
    /// derivatives with respect to each input.
    pub fn custom_scalar(&mut self, value: T, partials: Vec<(Var, Matrix<T>)>) -> Result<Var> {
        for (v, g) in &partials {
            if self.value(*v).shape() != g.shape() {
                return Err(Error::shape(format!(
                    "partial {:?} for input {:?}",
                    g.shape(),
                    self.value(*v).shape()
                )));
            }
        }
        Ok(self.push(Matrix::scalar(value), Op::Custom(partials)))
    }

    /// Backpropagates from a 1x1 output.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        if self.value(output).shape() != (1, 1) {
            return Err(Error::shape("backward from a non-scalar output"));
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Matrix::scalar(T::one()));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let y = &node.value;
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b))?;
                    let gb = self.value(*a).t_matmul(&g)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.matmul(self.value(*b))?;
                    let gb = g.t_matmul(self.value(*a))?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::AddRow(m, row) => {
                    accumulate(&mut grads, *row, g.sum_rows());
                    accumulate(&mut grads, *m, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.hadamard(self.value(*b))?;
                    let gb = g.hadamard(self.value(*a))?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, k) => accumulate(&mut grads, *a, g.scale(*k)),
                Op::Tanh(a) => {
                    let ga = g.zip_map(y, |gv, yv| gv * (T::one() - yv * yv));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Log(a) => {
                    let ga = g.zip_map(self.value(*a), |gv, xv| gv / xv);
                    accumulate(&mut grads, *a, ga);
                }
                Op::LogSoftmaxRows(a) => {
                    let mut ga = g.clone();
                    for r in 0..ga.rows() {
                        let gsum: T = g.row(r).iter().copied().sum();
                        for (o, &yv) in ga.row_mut(r).iter_mut().zip(y.row(r)) {
                            *o -= yv.exp() * gsum;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let mut ga = g.clone();
                    for r in 0..ga.rows() {
                        let inner: T = g.row(r).iter().zip(y.row(r)).map(|(&gv, &yv)| gv * yv).sum();
                        for (o, &yv) in ga.row_mut(r).iter_mut().zip(y.row(r)) {
                            *o = yv * (*o - inner);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::GatherRows(a, indices) => {
                    let src = self.value(*a);
                    let mut ga = Matrix::zeros(src.rows(), src.cols());
                    for (k, &i) in indices.iter().enumerate() {
                        for (o, &gv) in ga.row_mut(i).iter_mut().zip(g.row(k)) {
                            *o += gv;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::MeanRows(a) => {
                    let src = self.value(*a);
                    let n = T::from_usize_lossy(src.rows().max(1));
                    let mut ga = Matrix::zeros(src.rows(), src.cols());
                    for r in 0..src.rows() {
                        for (o, &gv) in ga.row_mut(r).iter_mut().zip(g.row(0)) {
                            *o = gv / n;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Pick(a, entries) => {
                    let src = self.value(*a);
                    let mut ga = Matrix::zeros(src.rows(), src.cols());
                    let gv = g.item();
                    for &(r, c) in entries {
                        ga[(r, c)] += gv;
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut grads, *a, Matrix::filled(r, c, g.item()));
                }
                Op::Custom(partials) => {
                    let gv = g.item();
                    for (v, p) in partials {
                        accumulate(&mut grads, *v, p.scale(gv));
                    }
                }
            }
        }
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Matrix<T>>], v: Var, g: Matrix<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing
            .add_assign(&g)
            .expect("gradient shape matches its value"),
        slot @ None => *slot = Some(g),
    }
}
