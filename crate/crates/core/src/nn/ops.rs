//! Layer primitives and their reverse-mode rules.
//!
//! Every forward function is pure. Reductions run in a fixed order (rows top
//! to bottom, columns left to right), so equal inputs give bit-identical
//! outputs.

use crate::error::{GdnnError, Result};
use crate::nn::Matrix;
use crate::scalar::Scalar;

/// `X·W + b`, with `b` broadcast over rows.
pub fn affine_forward<T: Scalar>(x: &Matrix<T>, w: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if b.rows() != 1 || b.cols() != w.cols() {
        return Err(GdnnError::shape(
            "affine_forward",
            format!("bias {:?} for weight {:?}", b.shape(), w.shape()),
        ));
    }
    if x.cols() != w.rows() {
        return Err(GdnnError::shape(
            "affine_forward",
            format!("input {:?} for weight {:?}", x.shape(), w.shape()),
        ));
    }
    let mut y = x.matmul(w)?;
    for r in 0..y.rows() {
        for (v, &bias) in y.row_mut(r).iter_mut().zip(b.data()) {
            *v += bias;
        }
    }
    y.ensure_finite("affine_forward")?;
    Ok(y)
}

pub struct AffineGrads<T> {
    pub input: Matrix<T>,
    pub weight: Matrix<T>,
    pub bias: Matrix<T>,
}

pub fn affine_backward<T: Scalar>(
    x: &Matrix<T>,
    w: &Matrix<T>,
    upstream: &Matrix<T>,
) -> Result<AffineGrads<T>> {
    if x.cols() != w.rows() || upstream.shape() != (x.rows(), w.cols()) {
        return Err(GdnnError::shape(
            "affine_backward",
            format!(
                "input {:?}, weight {:?}, upstream {:?}",
                x.shape(),
                w.shape(),
                upstream.shape()
            ),
        ));
    }
    Ok(AffineGrads {
        input: upstream.matmul_t(w)?,
        weight: x.t_matmul(upstream)?,
        bias: upstream.column_sums(),
    })
}

pub fn relu_forward<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient through ReLU given the pre-activation; the kink at 0 takes slope 0.
pub fn relu_backward<T: Scalar>(pre: &Matrix<T>, upstream: &Matrix<T>) -> Result<Matrix<T>> {
    if pre.shape() != upstream.shape() {
        return Err(GdnnError::shape(
            "relu_backward",
            format!("{:?} vs {:?}", pre.shape(), upstream.shape()),
        ));
    }
    let data = pre
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&p, &g)| if p > T::zero() { g } else { T::zero() })
        .collect();
    Matrix::from_vec(pre.rows(), pre.cols(), data)
}

/// Logistic function, branching on sign so neither tail overflows.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid_forward<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    x.map(sigmoid)
}

/// Gradient through the logistic function given its output `y = σ(x)`.
pub fn sigmoid_backward<T: Scalar>(output: &Matrix<T>, upstream: &Matrix<T>) -> Result<Matrix<T>> {
    if output.shape() != upstream.shape() {
        return Err(GdnnError::shape(
            "sigmoid_backward",
            format!("{:?} vs {:?}", output.shape(), upstream.shape()),
        ));
    }
    let data = output
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&y, &g)| g * y * (T::one() - y))
        .collect();
    Matrix::from_vec(output.rows(), output.cols(), data)
}

pub fn hadamard_forward<T: Scalar>(a: &[T], b: &[T]) -> Result<Vec<T>> {
    if a.len() != b.len() {
        return Err(GdnnError::shape(
            "hadamard_forward",
            format!("{} vs {}", a.len(), b.len()),
        ));
    }
    Ok(a.iter().zip(b).map(|(&x, &y)| x * y).collect())
}

/// Returns `(dL/da, dL/db)`.
pub fn hadamard_backward<T: Scalar>(a: &[T], b: &[T], upstream: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    if a.len() != b.len() || a.len() != upstream.len() {
        return Err(GdnnError::shape(
            "hadamard_backward",
            format!("{} / {} / {}", a.len(), b.len(), upstream.len()),
        ));
    }
    let da = upstream.iter().zip(b).map(|(&g, &y)| g * y).collect();
    let db = upstream.iter().zip(a).map(|(&g, &x)| g * x).collect();
    Ok((da, db))
}

/// Mean binary cross-entropy on raw logits and its gradient w.r.t. the logits.
///
/// Each term is `softplus(-(2y-1)·s)` evaluated as `max(-z, 0) + ln(1 + e^{-|z|})`.
pub fn bce_with_logits<T: Scalar>(scores: &[T], labels: &[T]) -> Result<(T, Vec<T>)> {
    if scores.is_empty() {
        return Err(GdnnError::EmptyInput("bce_with_logits"));
    }
    if scores.len() != labels.len() {
        return Err(GdnnError::shape(
            "bce_with_logits",
            format!("{} scores, {} labels", scores.len(), labels.len()),
        ));
    }
    let m = T::from_usize(scores.len()).unwrap();
    let two = T::lit(2.0);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(scores.len());
    for (&s, &y) in scores.iter().zip(labels) {
        if y != T::zero() && y != T::one() {
            return Err(GdnnError::InvalidData(format!("label {y} is not binary")));
        }
        let z = (two * y - T::one()) * s;
        total += (-z).max(T::zero()) + (-z.abs()).exp().ln_1p();
        grad.push((sigmoid(s) - y) / m);
    }
    let loss = total / m;
    if !loss.is_finite() {
        return Err(GdnnError::NonFinite("bce_with_logits".into()));
    }
    Ok((loss, grad))
}
