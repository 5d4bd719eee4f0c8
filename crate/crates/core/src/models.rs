//! Desk-scale model stacks.

use crate::nn::{output_shape, LayerSpec};

/// Fully connected ReLU network with four hidden layers.  Rank > 1 inputs
/// are flattened first.
///
/// With the default split this puts `dense, relu` on the client front,
/// `relu, dense` on the client back and the rest on the server.
pub fn desk_mlp(sample_shape: &[usize], hidden: usize, classes: usize) -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    let input: usize = sample_shape.iter().product();
    if sample_shape.len() > 1 {
        specs.push(LayerSpec::flatten());
    }
    specs.push(LayerSpec::dense(input, hidden));
    for _ in 0..3 {
        specs.push(LayerSpec::relu());
        specs.push(LayerSpec::dense(hidden, hidden));
    }
    specs.push(LayerSpec::relu());
    specs.push(LayerSpec::dense(hidden, classes));
    specs
}

/// 18-layer convolutional stack: seven conv/relu pairs, flatten and a
/// two-layer classifier head.
pub fn desk_cnn(channels: usize, size: usize, classes: usize) -> Vec<LayerSpec> {
    let convs = [
        (channels, 8, 1),
        (8, 8, 1),
        (8, 8, 2),
        (8, 8, 1),
        (8, 16, 2),
        (16, 16, 1),
        (16, 16, 1),
    ];
    let mut specs = Vec::new();
    for (cin, cout, stride) in convs {
        specs.push(LayerSpec::conv2d(cin, cout, 3, stride, 1));
        specs.push(LayerSpec::relu());
    }
    let features: usize = output_shape(&specs, &[channels, size, size])
        .expect("conv stack fits the input")
        .iter()
        .product();
    specs.push(LayerSpec::flatten());
    specs.push(LayerSpec::dense(features, 32));
    specs.push(LayerSpec::relu());
    specs.push(LayerSpec::dense(32, classes));
    specs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_line_up() {
        assert_eq!(output_shape(&desk_mlp(&[8], 16, 10), &[8]).unwrap(), vec![10]);
        assert_eq!(output_shape(&desk_mlp(&[1, 4, 4], 16, 3), &[1, 4, 4]).unwrap(), vec![3]);
        assert_eq!(output_shape(&desk_cnn(1, 8, 10), &[1, 8, 8]).unwrap(), vec![10]);
    }
}
