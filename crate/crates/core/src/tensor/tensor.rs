use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{Error, Result};

/// Dense row-major array with an optional gradient accumulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor<R> {
    shape: Vec<usize>,
    data: Vec<R>,
    #[serde(skip)]
    grad: Option<Vec<R>>,
}

impl<R: Real> Tensor<R> {
    pub fn new(shape: Vec<usize>, data: Vec<R>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape("tensor", &shape, &[data.len()]));
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![R::zero(); n],
            grad: None,
        }
    }

    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| R::from_f64(v)).collect())
    }

    /// Marks the tensor trainable by attaching a zeroed gradient buffer.
    pub fn trainable(mut self) -> Self {
        self.grad = Some(vec![R::zero(); self.data.len()]);
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn grad(&self) -> Option<&[R]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [R]> {
        self.grad.as_deref_mut()
    }

    pub fn is_trainable(&self) -> bool {
        self.grad.is_some()
    }

    /// `(rows, cols)` of the tensor viewed as a matrix; vectors are rows.
    pub fn matrix_dims(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [r, c] => (*r, *c),
            [r, rest @ ..] => (*r, rest.iter().product()),
        }
    }

    /// Row `i` of the tensor viewed as a matrix.
    pub fn row(&self, i: usize) -> &[R] {
        let (_, c) = self.matrix_dims();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn accumulate_grad(&mut self, g: &[R]) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(Error::shape("accumulate_grad", &self.shape, &[g.len()]));
        }
        let acc = self
            .grad
            .get_or_insert_with(|| vec![R::zero(); g.len()]);
        for (a, &b) in acc.iter_mut().zip(g) {
            *a += b;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = R::zero());
        }
    }

    pub fn cast<S: Real>(&self) -> Tensor<S> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| S::from_f64(v.as_f64())).collect(),
            grad: self
                .grad
                .as_ref()
                .map(|g| g.iter().map(|v| S::from_f64(v.as_f64())).collect()),
        }
    }
}

/// `c (m×n) = beta*c + op(a) op(b)` where `op` optionally transposes.
///
/// `a` is stored as `m×k` (or `k×m` when `ta`), `b` as `k×n` (or `n×k` when `tb`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<R: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[R],
    ta: bool,
    b: &[R],
    tb: bool,
    beta: R,
    c: &mut [R],
) {
    assert_eq!(a.len(), m * k, "gemm: lhs size");
    assert_eq!(b.len(), k * n, "gemm: rhs size");
    assert_eq!(c.len(), m * n, "gemm: out size");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: sizes are asserted above and the strides describe exactly those
    // row-major (or transposed row-major) layouts.
    unsafe {
        R::gemm(
            m,
            k,
            n,
            R::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
