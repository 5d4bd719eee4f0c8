use crate::error::{Error, Result};
use crate::nn::ParamSet;

/// Plain SGD: unfrozen tensors move by `-eta * grad`, frozen ones are
/// returned untouched.
pub fn sgd_step(mut params: ParamSet, grads: &ParamSet, eta: f64, frozen: &[bool]) -> Result<ParamSet> {
    if params.len() != grads.len() || params.len() != frozen.len() {
        return Err(Error::ShapeMismatch(format!(
            "sgd_step: {} params, {} grads, {} mask entries",
            params.len(),
            grads.len(),
            frozen.len()
        )));
    }
    for (i, (tensors, &is_frozen)) in params.layers_mut().iter_mut().zip(frozen).enumerate() {
        if is_frozen || tensors.is_empty() {
            continue;
        }
        let g = &grads[i];
        if g.len() != tensors.len() {
            return Err(Error::shape(i, "missing gradient for unfrozen layer"));
        }
        for (p, dp) in tensors.iter_mut().zip(g) {
            if p.shape() != dp.shape() {
                return Err(Error::shape(
                    i,
                    format!("gradient {:?} vs parameter {:?}", dp.shape(), p.shape()),
                ));
            }
            for (v, d) in p.data_mut().iter_mut().zip(dp.data()) {
                *v -= eta * d;
            }
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar(v: f64) -> ParamSet {
        ParamSet::new(vec![vec![Tensor::new(vec![1], vec![v]).unwrap()]])
    }

    #[test]
    fn arithmetic() {
        let p = sgd_step(scalar(1.0), &scalar(2.0), 0.5, &[false]).unwrap();
        assert_eq!(p[0][0].data(), &[0.0]);
    }

    #[test]
    fn zero_rate_is_identity() {
        let p = sgd_step(scalar(0.3), &scalar(7.0), 0.0, &[false]).unwrap();
        assert!(p.bit_eq(&scalar(0.3)));
    }

    #[test]
    fn frozen_untouched() {
        let p = sgd_step(scalar(0.3), &ParamSet::empty(1), 1.0, &[true]).unwrap();
        assert!(p.bit_eq(&scalar(0.3)));
    }

    #[test]
    fn mismatched_lengths_rejected() {
        assert!(sgd_step(scalar(0.3), &ParamSet::empty(2), 1.0, &[false]).is_err());
    }
}
