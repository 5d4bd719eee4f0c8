//! Analytic FLOP counts.  A multiply-add is two FLOPs; the backward pass of a
//! parameterised layer costs twice its forward pass, ReLU backward costs the
//! same as its forward pass and flatten is free.

use crate::error::Result;
use crate::nn::{LayerKind, LayerSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// FLOPs of one layer for a batch; `input` is the per-sample input shape.
pub fn flops_layer(layer: &LayerSpec, input: &[usize], batch: usize, direction: Direction) -> Result<u64> {
    let out = layer.output_shape(0, input)?;
    let batch = batch as u64;
    let forward = match layer.kind {
        LayerKind::Dense { input, output } => 2 * input as u64 * output as u64 * batch,
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            ..
        } => {
            2 * (kernel * kernel) as u64
                * in_channels as u64
                * out_channels as u64
                * out[1] as u64
                * out[2] as u64
                * batch
        }
        LayerKind::Relu => batch * input.iter().product::<usize>() as u64,
        LayerKind::Flatten => 0,
    };
    Ok(match direction {
        Direction::Forward => forward,
        Direction::Backward if layer.has_params() => 2 * forward,
        Direction::Backward => forward,
    })
}

/// Sum over a stack, propagating shapes from `input`.
pub fn stack_flops(specs: &[LayerSpec], input: &[usize], batch: usize, direction: Direction) -> Result<u64> {
    let mut shape = input.to_vec();
    let mut total = 0;
    for (i, s) in specs.iter().enumerate() {
        total += flops_layer(s, &shape, batch, direction)?;
        shape = s.output_shape(i, &shape)?;
    }
    Ok(total)
}

/// Forward pass plus a backward pass that stops at the first trainable layer
/// (nothing upstream of it needs a gradient).
pub fn training_flops(specs: &[LayerSpec], input: &[usize], batch: usize) -> Result<u64> {
    let forward = stack_flops(specs, input, batch, Direction::Forward)?;
    let Some(first) = specs.iter().position(|s| !s.frozen) else {
        return Ok(forward);
    };
    let mut shape = input.to_vec();
    for (i, s) in specs[..first].iter().enumerate() {
        shape = s.output_shape(i, &shape)?;
    }
    Ok(forward + stack_flops(&specs[first..], &shape, batch, Direction::Backward)?)
}

/// Client cost per iteration: front forward only, back forward and backward.
pub fn client_compute_per_iter(
    front: &[LayerSpec],
    front_input: &[usize],
    back: &[LayerSpec],
    back_input: &[usize],
    batch: usize,
) -> Result<u64> {
    Ok(stack_flops(front, front_input, batch, Direction::Forward)?
        + stack_flops(back, back_input, batch, Direction::Forward)?
        + stack_flops(back, back_input, batch, Direction::Backward)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_forward() {
        assert_eq!(flops_layer(&LayerSpec::dense(3, 4), &[3], 2, Direction::Forward).unwrap(), 48);
        assert_eq!(flops_layer(&LayerSpec::dense(3, 4), &[3], 2, Direction::Backward).unwrap(), 96);
    }

    #[test]
    fn flatten_free_relu_elementwise() {
        assert_eq!(flops_layer(&LayerSpec::flatten(), &[2, 3, 3], 5, Direction::Forward).unwrap(), 0);
        assert_eq!(flops_layer(&LayerSpec::relu(), &[2, 3, 3], 5, Direction::Forward).unwrap(), 90);
        assert_eq!(flops_layer(&LayerSpec::relu(), &[2, 3, 3], 5, Direction::Backward).unwrap(), 90);
    }

    #[test]
    fn conv_matches_enumerated_multiply_adds() {
        let layer = LayerSpec::conv2d(1, 2, 3, 1, 0);
        // enumerate every multiply-add of a valid 3x3 conv on 4x4 -> 2x2
        let mut mac = 0u64;
        for _oc in 0..2 {
            for oy in 0..2 {
                for ox in 0..2 {
                    for _ic in 0..1 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                if oy + ky < 4 && ox + kx < 4 {
                                    mac += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(2 * mac, 144);
        assert_eq!(flops_layer(&layer, &[1, 4, 4], 1, Direction::Forward).unwrap(), 144);
    }

    #[test]
    fn client_cost_decomposes() {
        let front = vec![LayerSpec::dense(4, 6), LayerSpec::relu()];
        let back = vec![LayerSpec::relu(), LayerSpec::dense(6, 3)];
        let c = client_compute_per_iter(&front, &[4], &back, &[6], 8).unwrap();
        let by_hand = flops_layer(&front[0], &[4], 8, Direction::Forward).unwrap()
            + flops_layer(&front[1], &[6], 8, Direction::Forward).unwrap()
            + flops_layer(&back[0], &[6], 8, Direction::Forward).unwrap()
            + flops_layer(&back[1], &[6], 8, Direction::Forward).unwrap()
            + flops_layer(&back[0], &[6], 8, Direction::Backward).unwrap()
            + flops_layer(&back[1], &[6], 8, Direction::Backward).unwrap();
        assert_eq!(c, by_hand);
        assert_eq!(client_compute_per_iter(&front, &[4], &[], &[6], 8).unwrap(),
                   stack_flops(&front, &[4], 8, Direction::Forward).unwrap());
        assert_eq!(client_compute_per_iter(&front, &[4], &back, &[6], 16).unwrap(), 2 * c);
    }

    #[test]
    fn training_flops_skips_frozen_prefix_backward() {
        let specs = vec![LayerSpec::dense(4, 4).frozen(true), LayerSpec::relu(), LayerSpec::dense(4, 2)];
        let fwd = stack_flops(&specs, &[4], 1, Direction::Forward).unwrap();
        let t = training_flops(&specs, &[4], 1).unwrap();
        assert_eq!(t, fwd + 4 + 2 * 16);
    }
}
