use std::ops::Index;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::nn::LayerSpec;
use crate::rng::{self, Rng};
use crate::tensor::Tensor;

/// Per-layer parameter tensors.  Parameter-less layers hold an empty entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    layers: Vec<Vec<Tensor>>,
}

impl ParamSet {
    pub fn new(layers: Vec<Vec<Tensor>>) -> Self {
        ParamSet { layers }
    }

    pub fn empty(layer_count: usize) -> Self {
        ParamSet {
            layers: vec![Vec::new(); layer_count],
        }
    }

    pub fn zeros_for(specs: &[LayerSpec]) -> Self {
        ParamSet {
            layers: specs
                .iter()
                .map(|s| s.param_shapes().into_iter().map(Tensor::zeros).collect())
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Vec<Tensor>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Vec<Tensor>] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Vec<Tensor>> {
        self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.layers.iter().flatten().map(Tensor::len).sum()
    }

    /// Iterates all scalars in layer/tensor/element order.
    pub fn scalars(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flatten().flat_map(|t| t.data().iter().copied())
    }

    pub fn split_off(&mut self, at: usize) -> ParamSet {
        ParamSet {
            layers: self.layers.split_off(at),
        }
    }

    pub fn append(&mut self, mut other: ParamSet) {
        self.layers.append(&mut other.layers);
    }

    pub fn bit_eq(&self, other: &ParamSet) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.bit_eq(y))
            })
    }

    pub fn same_shapes(&self, other: &ParamSet) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.shape() == y.shape())
            })
    }

    pub fn max_abs_diff(&self, other: &ParamSet) -> f64 {
        assert!(self.same_shapes(other), "max_abs_diff on mismatched param sets");
        self.scalars()
            .zip(other.scalars())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// FNV-1a over the raw bytes of every scalar.
    pub fn digest(&self) -> u64 {
        self.scalars().fold(0xcbf2_9ce4_8422_2325, |h, v| {
            v.to_bits().to_le_bytes().iter().fold(h, |h, &b| {
                (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
            })
        })
    }

    /// Checks that the set matches the parameter shapes of `specs`.
    pub fn check_against(&self, specs: &[LayerSpec]) -> Result<()> {
        if self.layers.len() != specs.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter entries for {} layers",
                self.layers.len(),
                specs.len()
            )));
        }
        for (i, (spec, tensors)) in specs.iter().zip(&self.layers).enumerate() {
            let want = spec.param_shapes();
            let got: Vec<&[usize]> = tensors.iter().map(Tensor::shape).collect();
            if want.len() != got.len() || want.iter().zip(&got).any(|(w, g)| w.as_slice() != *g) {
                return Err(Error::shape(
                    i,
                    format!("parameter shapes {got:?} do not match {want:?}"),
                ));
            }
        }
        Ok(())
    }
}

impl Index<usize> for ParamSet {
    type Output = Vec<Tensor>;

    fn index(&self, i: usize) -> &Vec<Tensor> {
        &self.layers[i]
    }
}

/// Weights uniform in `(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero.
pub fn init_params(specs: &[LayerSpec], seed: u64) -> Result<ParamSet> {
    let mut rng = rng::stream(seed, rng::LABEL_INIT, 0);
    init_with(specs, &mut rng)
}

fn init_with(specs: &[LayerSpec], rng: &mut Rng) -> Result<ParamSet> {
    let mut layers = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        spec.validate(i)?;
        let mut tensors = Vec::new();
        if spec.has_params() {
            let bound = 1.0 / (spec.fan_in() as f64).sqrt();
            let shapes = spec.param_shapes();
            let n: usize = shapes[0].iter().product();
            let weights = (0..n)
                .map(|_| {
                    // open interval: resample the (measure-zero) lower endpoint
                    loop {
                        let v = rng.random_range(-bound..bound);
                        if v != -bound {
                            break v;
                        }
                    }
                })
                .collect();
            tensors.push(Tensor::new(shapes[0].clone(), weights)?);
            tensors.push(Tensor::zeros(shapes[1].clone()));
        }
        layers.push(tensors);
    }
    Ok(ParamSet { layers })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_has_empty_entry() {
        let p = init_params(&[LayerSpec::relu()], 3).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p[0].is_empty());
    }

    #[test]
    fn deterministic_given_seed() {
        let specs = [LayerSpec::dense(5, 4), LayerSpec::relu(), LayerSpec::conv2d(2, 3, 3, 1, 1)];
        let a = init_params(&specs, 11).unwrap();
        let b = init_params(&specs, 11).unwrap();
        let c = init_params(&specs, 12).unwrap();
        assert!(a.bit_eq(&b));
        assert!(!a.bit_eq(&c));
    }

    #[test]
    fn dense_4x3_weights_within_half() {
        let p = init_params(&[LayerSpec::dense(4, 3)], 7).unwrap();
        let w = &p[0][0];
        assert_eq!(w.shape(), &[3, 4]);
        assert!(w.data().iter().all(|&v| v > -0.5 && v < 0.5));
        assert!(p[0][1].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_dims_are_config_errors() {
        assert!(matches!(
            init_params(&[LayerSpec::dense(0, 2)], 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn check_against_names_layer() {
        let specs = [LayerSpec::relu(), LayerSpec::dense(2, 2)];
        let p = init_params(&[LayerSpec::relu(), LayerSpec::dense(3, 2)], 1).unwrap();
        match p.check_against(&specs) {
            Err(Error::Shape { layer, .. }) => assert_eq!(layer, 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
