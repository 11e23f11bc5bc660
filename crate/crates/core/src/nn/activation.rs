use super::{mismatch, NnError, Tensor};
use crate::real::Real;

pub fn leaky_relu<T: Real>(x: &Tensor<T>, slope: T) -> Tensor<T> {
    x.map(|v| if v >= T::zero() { v } else { slope * v })
}

/// `dL/dx` given the forward input `x` and `dL/dy`.
pub fn leaky_relu_backward<T: Real>(
    x: &Tensor<T>,
    grad_out: &Tensor<T>,
    slope: T,
) -> Result<Tensor<T>, NnError> {
    if x.shape() != grad_out.shape() {
        return Err(mismatch(format!(
            "leaky_relu grad {:?} vs input {:?}",
            grad_out.shape(),
            x.shape()
        )));
    }
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v >= T::zero() { g } else { slope * g })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

#[inline]
pub fn sigmoid_scalar<T: Real>(x: T) -> T {
    // split on sign so exp never overflows
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

/// `dL/dx` given the forward output `y = σ(x)` and `dL/dy`.
pub fn sigmoid_backward<T: Real>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    if y.shape() != grad_out.shape() {
        return Err(mismatch(format!(
            "sigmoid grad {:?} vs output {:?}",
            grad_out.shape(),
            y.shape()
        )));
    }
    let data = y
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&s, &g)| g * s * (T::one() - s))
        .collect();
    Tensor::from_vec(y.shape(), data)
}
