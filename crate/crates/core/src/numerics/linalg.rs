use super::Real;
use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[T]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("ragged rows"));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Ok(Matrix { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| U::from_f64_lossy(x.to_f64().unwrap_or(f64::NAN))).collect(),
        }
    }
}

/// `m · v`, checked.
pub fn matvec<T: Real>(m: &Matrix<T>, v: &[T]) -> Result<Vec<T>> {
    if m.cols != v.len() {
        return Err(Error::shape(format!(
            "matvec: {}x{} matrix against length-{} vector",
            m.rows,
            m.cols,
            v.len()
        )));
    }
    let mut out = vec![T::zero(); m.rows];
    matvec_into(m, v, &mut out);
    Ok(out)
}

/// `out = m · v`. Shapes are the caller's responsibility.
#[inline]
pub fn matvec_into<T: Real>(m: &Matrix<T>, v: &[T], out: &mut [T]) {
    debug_assert_eq!(m.cols, v.len());
    debug_assert_eq!(m.rows, out.len());
    for (o, row) in out.iter_mut().zip(m.data.chunks_exact(m.cols.max(1))) {
        *o = dot(row, v);
    }
}

/// `out += mᵀ · v`.
#[inline]
pub fn matvec_t_acc<T: Real>(m: &Matrix<T>, v: &[T], out: &mut [T]) {
    debug_assert_eq!(m.rows, v.len());
    debug_assert_eq!(m.cols, out.len());
    if m.cols == 0 {
        return;
    }
    for (&vi, row) in v.iter().zip(m.data.chunks_exact(m.cols)) {
        if vi == T::zero() {
            continue;
        }
        for (o, &mij) in out.iter_mut().zip(row) {
            *o = *o + mij * vi;
        }
    }
}

/// `m += a · bᵀ`.
#[inline]
pub fn add_outer<T: Real>(m: &mut Matrix<T>, a: &[T], b: &[T]) {
    debug_assert_eq!(m.rows, a.len());
    debug_assert_eq!(m.cols, b.len());
    if m.cols == 0 {
        return;
    }
    for (&ai, row) in a.iter().zip(m.data.chunks_exact_mut(m.cols)) {
        if ai == T::zero() {
            continue;
        }
        for (r, &bj) in row.iter_mut().zip(b) {
            *r = *r + ai * bj;
        }
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc = acc + x * y;
    }
    acc
}

#[inline]
pub fn add_assign<T: Real>(dst: &mut [T], src: &[T]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReluOutput<T> {
    pub values: Vec<T>,
    /// `true` where the input was strictly positive.
    pub mask: Vec<bool>,
}

pub fn relu<T: Real>(v: &[T]) -> ReluOutput<T> {
    let mask: Vec<bool> = v.iter().map(|&x| x > T::zero()).collect();
    let values = v.iter().zip(&mask).map(|(&x, &m)| if m { x } else { T::zero() }).collect();
    ReluOutput { values, mask }
}

pub fn relu_backward<T: Real>(grad_out: &[T], mask: &[bool]) -> Vec<T> {
    grad_out.iter().zip(mask).map(|(&g, &m)| if m { g } else { T::zero() }).collect()
}

/// Max-subtracted softmax. Panics on an empty input.
pub fn softmax<T: Real>(v: &[T]) -> Vec<T> {
    assert!(!v.is_empty(), "softmax of an empty vector");
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = v.iter().map(|&x| (x - max).exp()).collect();
    let mut total = T::zero();
    for &e in &exps {
        total = total + e;
    }
    exps.into_iter().map(|e| e / total).collect()
}

/// Gradient w.r.t. softmax inputs given the softmax output and the gradient
/// w.r.t. that output.
pub fn softmax_backward<T: Real>(probs: &[T], grad_out: &[T]) -> Vec<T> {
    let inner = dot(probs, grad_out);
    probs.iter().zip(grad_out).map(|(&p, &g)| p * (g - inner)).collect()
}

/// Loss `-ln probs[label]` and its gradient w.r.t. the pre-softmax logits.
pub fn cross_entropy<T: Real>(probs: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if label >= probs.len() {
        return Err(Error::invalid(format!(
            "label {label} out of range for {} classes",
            probs.len()
        )));
    }
    let loss = -probs[label].ln();
    let mut grad = probs.to_vec();
    grad[label] = grad[label] - T::one();
    Ok((loss, grad))
}

/// Same loss and gradient as [`cross_entropy`] applied to `softmax(logits)`,
/// evaluated as `logsumexp(logits) - logits[label]` so that a vanishing
/// probability still yields a finite loss.
pub fn cross_entropy_logits<T: Real>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if label >= logits.len() {
        return Err(Error::invalid(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let sum = logits.iter().fold(T::zero(), |acc, &z| acc + (z - max).exp());
    let loss = max + sum.ln() - logits[label];
    let mut grad: Vec<T> = logits.iter().map(|&z| (z - max).exp() / sum).collect();
    grad[label] = grad[label] - T::one();
    Ok((loss, grad))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}
