//! Front / central / back partitioning of a layer stack.

mod part;
mod pretrain;
mod weights;

pub use part::{FreezeMode, Part};
pub use pretrain::{pretrain, train_epoch, train_step, TrainConfig};
pub use weights::{decode_weights, encode_weights, load_weights, load_weights_for, save_weights, MAGIC};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LayerSpec, ParamSet};

/// Cut points: layers `[0, cut1)` are the front, `[cut1, cut2)` the central
/// part, `[cut2, len)` the back.  The first `central_frozen_prefix` central
/// layers never train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub cut1: usize,
    pub cut2: usize,
    pub central_frozen_prefix: usize,
}

impl SplitConfig {
    pub const DEFAULT_FRONT: usize = 2;
    pub const DEFAULT_BACK: usize = 2;

    /// Two front layers, two back layers, half of the central part frozen
    /// (rounded down).
    pub fn default_for(layer_count: usize) -> Self {
        let cut1 = Self::DEFAULT_FRONT;
        let cut2 = layer_count.saturating_sub(Self::DEFAULT_BACK);
        SplitConfig {
            cut1,
            cut2,
            central_frozen_prefix: cut2.saturating_sub(cut1) / 2,
        }
    }

    pub fn validate(&self, layer_count: usize) -> Result<()> {
        if !(0 < self.cut1 && self.cut1 < self.cut2 && self.cut2 < layer_count) {
            return Err(Error::config(format!(
                "cuts must satisfy 0 < cut1 < cut2 < {layer_count}, got {} and {}",
                self.cut1, self.cut2
            )));
        }
        if self.central_frozen_prefix > self.cut2 - self.cut1 {
            return Err(Error::config(format!(
                "frozen prefix {} exceeds central size {}",
                self.central_frozen_prefix,
                self.cut2 - self.cut1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SplitModel {
    pub front: Part,
    pub central: Part,
    pub back: Part,
}

/// Splits a stack at the configured cuts.  Frozen flags are copied as-is;
/// protocol roles apply their own freezing.
pub fn split(specs: &[LayerSpec], params: ParamSet, cfg: &SplitConfig) -> Result<SplitModel> {
    cfg.validate(specs.len())?;
    params.check_against(specs)?;
    let mut rest = params;
    let mut central = rest.split_off(cfg.cut1);
    let back = central.split_off(cfg.cut2 - cfg.cut1);
    Ok(SplitModel {
        front: Part::new(specs[..cfg.cut1].to_vec(), rest)?,
        central: Part::new(specs[cfg.cut1..cfg.cut2].to_vec(), central)?,
        back: Part::new(specs[cfg.cut2..].to_vec(), back)?,
    })
}

impl SplitModel {
    /// Concatenates the three parts back into one stack.
    pub fn reassemble(&self) -> Part {
        let mut specs = self.front.specs().to_vec();
        specs.extend_from_slice(self.central.specs());
        specs.extend_from_slice(self.back.specs());
        let mut params = self.front.params().clone();
        params.append(self.central.params().clone());
        params.append(self.back.params().clone());
        Part::new(specs, params).expect("parts are individually consistent")
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.front.len(), self.central.len(), self.back.len())
    }
}
