use crate::error::{Error, Result};
use crate::nn::kernels::{backward_layer, forward_layer};
use crate::nn::{LayerSpec, ParamSet};
use crate::tensor::Tensor;

/// Inputs saved by [`forward`], one per traversed layer.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Tensor>,
    output_shape: Vec<usize>,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }
}

fn check_stack(specs: &[LayerSpec], params: &ParamSet) -> Result<()> {
    if specs.len() != params.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} layers but {} parameter entries",
            specs.len(),
            params.len()
        )));
    }
    Ok(())
}

fn ensure_finite(t: &Tensor, layer: usize, what: &str) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric {
            epoch: None,
            msg: format!("non-finite {what} at layer {layer}"),
        })
    }
}

/// Runs the stack and keeps what [`backward`] needs.  An empty stack is the
/// identity.
pub fn forward(specs: &[LayerSpec], params: &ParamSet, input: &Tensor) -> Result<(Tensor, ForwardCache)> {
    check_stack(specs, params)?;
    let mut inputs = Vec::with_capacity(specs.len());
    let mut x = input.clone();
    for (i, spec) in specs.iter().enumerate() {
        let y = forward_layer(spec, i, &params[i], &x)?;
        ensure_finite(&y, i, "activation")?;
        inputs.push(x);
        x = y;
    }
    let output_shape = x.shape().to_vec();
    Ok((x, ForwardCache { inputs, output_shape }))
}

/// Forward pass without a cache.
pub fn predict(specs: &[LayerSpec], params: &ParamSet, input: &Tensor) -> Result<Tensor> {
    check_stack(specs, params)?;
    let mut x = input.clone();
    for (i, spec) in specs.iter().enumerate() {
        x = forward_layer(spec, i, &params[i], &x)?;
        ensure_finite(&x, i, "activation")?;
    }
    Ok(x)
}

/// Per-sample output shape of a stack.
pub fn output_shape(specs: &[LayerSpec], sample_shape: &[usize]) -> Result<Vec<usize>> {
    specs
        .iter()
        .enumerate()
        .try_fold(sample_shape.to_vec(), |s, (i, spec)| spec.output_shape(i, &s))
}

/// Reverse pass.  Frozen layers get an empty gradient entry but still pass
/// the gradient through to their input.
pub fn backward(
    specs: &[LayerSpec],
    params: &ParamSet,
    cache: &ForwardCache,
    grad_out: &Tensor,
) -> Result<(ParamSet, Tensor)> {
    check_stack(specs, params)?;
    if cache.inputs.len() != specs.len() {
        return Err(Error::protocol(format!(
            "forward cache covers {} layers, stack has {}",
            cache.inputs.len(),
            specs.len()
        )));
    }
    if grad_out.shape() != cache.output_shape.as_slice() {
        return Err(Error::protocol(format!(
            "gradient shape {:?} does not match cached output {:?}",
            grad_out.shape(),
            cache.output_shape
        )));
    }
    let mut grads = vec![Vec::new(); specs.len()];
    let mut g = grad_out.clone();
    for i in (0..specs.len()).rev() {
        let spec = &specs[i];
        let (pg, gi) = backward_layer(spec, &params[i], &cache.inputs[i], &g, !spec.frozen)?;
        ensure_finite(&gi, i, "gradient")?;
        grads[i] = pg;
        g = gi;
    }
    Ok((ParamSet::new(grads), g))
}
