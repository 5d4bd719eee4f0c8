use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{BatchCursor, Dataset};
use crate::error::{Error, Result};
use crate::nn::{cross_entropy, init_params, output_shape, LayerSpec};
use crate::rng;
use crate::split::Part;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub eta: f64,
    pub batch_size: usize,
    pub seed: u64,
}

/// One monolithic SGD step on a whole stack; returns the batch loss.
pub fn train_step(part: &mut Part, x: &Tensor, labels: &[usize], eta: f64) -> Result<f64> {
    let (logits, cache) = part.forward(x)?;
    let (loss, grad) = cross_entropy(&logits, labels)?;
    let (grads, _) = part.backward(&cache, &grad)?;
    part.apply_sgd(&grads, eta)?;
    Ok(loss)
}

/// `iters` consecutive batches from `cursor`; returns the mean batch loss.
pub fn train_epoch(
    part: &mut Part,
    dataset: &Dataset,
    cursor: &mut BatchCursor,
    iters: usize,
    batch_size: usize,
    eta: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for _ in 0..iters {
        let idx = cursor.next_batch(batch_size);
        let (x, y) = dataset.batch(&idx)?;
        total += train_step(part, &x, &y, eta)?;
    }
    Ok(if iters == 0 { 0.0 } else { total / iters as f64 })
}

/// Trains a freshly initialised stack on a pretext dataset.  Stands in for
/// starting from published pretrained weights.
pub fn pretrain(specs: &[LayerSpec], pretext: &Dataset, cfg: &TrainConfig) -> Result<Part> {
    let out = output_shape(specs, pretext.sample_shape())?;
    if out != [pretext.classes()] {
        return Err(Error::config(format!(
            "model emits {out:?} but the pretext set has {} classes",
            pretext.classes()
        )));
    }
    if cfg.batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    let mut part = Part::new(specs.to_vec(), init_params(specs, cfg.seed)?)?;
    let mut r = rng::stream(cfg.seed, rng::LABEL_PRETRAIN, 0);
    let mut order: Vec<usize> = (0..pretext.len()).collect();
    order.shuffle(&mut r);
    let mut cursor = BatchCursor::new(order, r);
    let iters = pretext.len().div_ceil(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        let loss = train_epoch(&mut part, pretext, &mut cursor, iters, cfg.batch_size, cfg.eta)
            .map_err(|e| match e {
                Error::Numeric { msg, .. } => Error::Numeric {
                    epoch: Some(epoch),
                    msg,
                },
                other => other,
            })?;
        if !loss.is_finite() {
            return Err(Error::Numeric {
                epoch: Some(epoch),
                msg: "pretraining loss diverged".into(),
            });
        }
    }
    Ok(part)
}
