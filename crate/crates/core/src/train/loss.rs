//! Per-sample losses on plain scalars and on the tape.

use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError, Var};

pub use crate::tensor::bce_with_logits;

pub fn squared_error<T: Scalar>(pred: T, label: T) -> T {
    (pred - label) * (pred - label)
}

/// BCE-with-logits of a 1x1 logit against `label`.
pub fn bce_var<'t, T: Scalar>(logit: Var<'t, T>, label: T) -> Result<Var<'t, T>, TensorError> {
    logit.bce_with_logits(&Tensor::scalar(label))?.sum()
}

/// Squared error of a 1x1 prediction against `label`.
pub fn squared_error_var<'t, T: Scalar>(
    pred: Var<'t, T>,
    label: T,
) -> Result<Var<'t, T>, TensorError> {
    let diff = pred.add_scalar(-label)?;
    diff.mul(diff)?.sum()
}
