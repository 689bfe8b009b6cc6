use ndarray::{Array2, ArrayView2};

use super::Scalar;
use crate::error::{Error, Result};

/// Row-wise softmax, evaluated in double precision.
pub fn softmax_rows<T: Scalar>(logits: ArrayView2<T>) -> Array2<f64> {
    let mut out = logits.mapv(|v| v.f64());
    for mut row in out.rows_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s: f64 = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy<T: Scalar>(logits: ArrayView2<T>, labels: &[usize]) -> Result<(f64, Array2<T>)> {
    let (b, c) = logits.dim();
    if b == 0 {
        return Err(Error::Empty("cross-entropy of an empty batch".into()));
    }
    if labels.len() != b {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for a batch of {b}",
            labels.len()
        )));
    }
    if let Some(&label) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::LabelOutOfRange { label, classes: c });
    }
    let probs = softmax_rows(logits);
    let inv_b = 1.0 / b as f64;
    let mut loss = 0.0;
    let mut grad = Array2::<T>::zeros((b, c));
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let m = row.iter().fold(f64::NEG_INFINITY, |a, v| a.max(v.f64()));
        let lse = m + row.iter().map(|v| (v.f64() - m).exp()).sum::<f64>().ln();
        loss += lse - row[y].f64();
        for k in 0..c {
            let onehot = if k == y { 1.0 } else { 0.0 };
            grad[[r, k]] = T::of((probs[[r, k]] - onehot) * inv_b);
        }
    }
    Ok((loss * inv_b, grad))
}
