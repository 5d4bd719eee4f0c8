//! Minimal dense neural-network substrate with hand-written reverse-mode
//! gradients.  Everything is `f64`; all functions are pure over their inputs.

mod kernels;
mod layer;
mod loss;
mod network;
mod optim;
mod params;

pub use layer::{LayerKind, LayerSpec};
pub use loss::{argmax_rows, cross_entropy, softmax_rows};
pub use network::{backward, forward, output_shape, predict, ForwardCache};
pub use optim::sgd_step;
pub use params::{init_params, ParamSet};

/// Frozen flags of a layer stack, in order.
pub fn frozen_mask(specs: &[LayerSpec]) -> Vec<bool> {
    specs.iter().map(|s| s.frozen).collect()
}
