use crate::error::{Error, Result};
use crate::nn::{self, frozen_mask, sgd_step, ForwardCache, LayerSpec, ParamSet};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreezeMode {
    All,
    /// First `k` layers frozen, the rest trainable.
    Prefix(usize),
    None,
}

/// A contiguous slice of a model: its layer specs and their parameters.
#[derive(Debug, Clone)]
pub struct Part {
    specs: Vec<LayerSpec>,
    params: ParamSet,
}

impl Part {
    pub fn new(specs: Vec<LayerSpec>, params: ParamSet) -> Result<Self> {
        params.check_against(&specs)?;
        Ok(Part { specs, params })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn frozen_mask(&self) -> Vec<bool> {
        frozen_mask(&self.specs)
    }

    pub fn is_fully_frozen(&self) -> bool {
        self.specs.iter().all(|s| s.frozen)
    }

    /// Replaces the parameters, keeping frozen layers as they are.  Fails if
    /// shapes differ or a frozen layer would change.
    pub fn set_params(&mut self, params: ParamSet) -> Result<()> {
        params.check_against(&self.specs)?;
        for (i, spec) in self.specs.iter().enumerate() {
            if spec.frozen {
                let same = params[i].iter().zip(&self.params[i]).all(|(a, b)| a.bit_eq(b));
                if !same {
                    return Err(Error::protocol(format!(
                        "attempt to overwrite frozen layer {i}"
                    )));
                }
            }
        }
        self.params = params;
        Ok(())
    }

    /// Replaces the parameters regardless of frozen flags (used when loading
    /// or reinitialising a replica, never during training).
    pub fn load_params(&mut self, params: ParamSet) -> Result<()> {
        params.check_against(&self.specs)?;
        self.params = params;
        Ok(())
    }

    pub fn freeze(mut self, mode: FreezeMode) -> Result<Self> {
        self.freeze_in_place(mode)?;
        Ok(self)
    }

    pub fn freeze_in_place(&mut self, mode: FreezeMode) -> Result<()> {
        let k = match mode {
            FreezeMode::All => self.specs.len(),
            FreezeMode::None => 0,
            FreezeMode::Prefix(k) => {
                if k > self.specs.len() {
                    return Err(Error::config(format!(
                        "cannot freeze {k} of {} layers",
                        self.specs.len()
                    )));
                }
                k
            }
        };
        for (i, s) in self.specs.iter_mut().enumerate() {
            s.frozen = i < k;
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ForwardCache)> {
        nn::forward(&self.specs, &self.params, x)
    }

    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        nn::predict(&self.specs, &self.params, x)
    }

    pub fn backward(&self, cache: &ForwardCache, grad_out: &Tensor) -> Result<(ParamSet, Tensor)> {
        nn::backward(&self.specs, &self.params, cache, grad_out)
    }

    pub fn apply_sgd(&mut self, grads: &ParamSet, eta: f64) -> Result<()> {
        let mask = self.frozen_mask();
        let params = std::mem::replace(&mut self.params, ParamSet::empty(0));
        self.params = sgd_step(params, grads, eta, &mask)?;
        Ok(())
    }

    /// Digest over the parameters of frozen layers only.
    pub fn frozen_digest(&self) -> u64 {
        let frozen: Vec<_> = self
            .specs
            .iter()
            .zip(self.params.layers())
            .filter(|(s, _)| s.frozen)
            .map(|(_, p)| p.clone())
            .collect();
        ParamSet::new(frozen).digest()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{cross_entropy, init_params};

    fn part() -> Part {
        let specs = vec![
            LayerSpec::dense(3, 4),
            LayerSpec::relu(),
            LayerSpec::dense(4, 4),
            LayerSpec::relu(),
            LayerSpec::dense(4, 3),
        ];
        let params = init_params(&specs, 2).unwrap();
        Part::new(specs, params).unwrap()
    }

    #[test]
    fn freeze_is_idempotent_and_prefix_zero_is_none() {
        let once = part().freeze(FreezeMode::All).unwrap();
        let twice = once.clone().freeze(FreezeMode::All).unwrap();
        assert_eq!(once.specs(), twice.specs());
        let p0 = part().freeze(FreezeMode::Prefix(0)).unwrap();
        let none = part().freeze(FreezeMode::None).unwrap();
        assert_eq!(p0.specs(), none.specs());
        assert!(part().freeze(FreezeMode::Prefix(6)).is_err());
    }

    #[test]
    fn prefix_layers_stay_put_rest_moves() {
        let mut p = part().freeze(FreezeMode::Prefix(2)).unwrap();
        let before = p.params().clone();
        let x = Tensor::from_rows(&[vec![1.0, -0.5, 0.25], vec![0.1, 0.2, 0.3]]).unwrap();
        let (y, cache) = p.forward(&x).unwrap();
        let (_, g) = cross_entropy(&y, &[0, 2]).unwrap();
        let (grads, _) = p.backward(&cache, &g).unwrap();
        p.apply_sgd(&grads, 0.5).unwrap();
        for i in 0..2 {
            assert!(before[i].iter().zip(&p.params()[i]).all(|(a, b)| a.bit_eq(b)));
        }
        let moved = (2..5).any(|i| !before[i].iter().zip(&p.params()[i]).all(|(a, b)| a.bit_eq(b)));
        assert!(moved);
    }

    #[test]
    fn set_params_refuses_frozen_change() {
        let mut p = part().freeze(FreezeMode::Prefix(1)).unwrap();
        let other = init_params(p.specs(), 99).unwrap();
        assert!(matches!(p.set_params(other), Err(Error::Protocol(_))));
    }
}
