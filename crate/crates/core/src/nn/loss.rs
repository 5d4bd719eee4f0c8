use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-wise softmax of a `[batch, classes]` tensor.
pub fn softmax_rows(logits: &Tensor) -> Vec<f64> {
    let c = logits.row_len();
    let mut out = Vec::with_capacity(logits.len());
    for r in 0..logits.batch() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / z));
    }
    debug_assert_eq!(out.len(), logits.batch() * c);
    out
}

pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    (0..logits.batch())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Mean negative log-likelihood of the softmax and its gradient
/// `(softmax - onehot) / batch`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.rank() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "logits must be [batch, classes], got {:?}",
            logits.shape()
        )));
    }
    let (batch, classes) = (logits.batch(), logits.row_len());
    if labels.len() != batch {
        return Err(Error::data(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::data(format!("label {bad} outside [0, {classes})")));
    }
    let inv = 1.0 / batch as f64;
    let mut grad = Vec::with_capacity(batch * classes);
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + z.ln();
        loss += log_z - row[label];
        for (c, &v) in row.iter().enumerate() {
            let p = (v - log_z).exp();
            let onehot = if c == label { 1.0 } else { 0.0 };
            grad.push((p - onehot) * inv);
        }
    }
    let loss = loss * inv;
    if !loss.is_finite() {
        return Err(Error::Numeric {
            epoch: None,
            msg: "non-finite loss".into(),
        });
    }
    Ok((loss, Tensor::new(vec![batch, classes], grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_c() {
        let logits = Tensor::zeros(vec![3, 10]);
        let (loss, _) = cross_entropy(&logits, &[0, 4, 9]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_is_near_zero() {
        let logits = Tensor::from_rows(&[vec![0.0, 1e6, 0.0]]).unwrap();
        let (loss, _) = cross_entropy(&logits, &[1]).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn two_by_two_closed_form() {
        let logits = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let (loss, grad) = cross_entropy(&logits, &[0, 1]).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((loss - expected).abs() < 1e-15);
        assert!((loss - 0.313262).abs() < 1e-6);
        for r in 0..2 {
            let s: f64 = grad.row(r).iter().sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_label_is_data_error() {
        let logits = Tensor::zeros(vec![1, 3]);
        assert!(matches!(cross_entropy(&logits, &[3]), Err(Error::Data(_))));
    }
}
