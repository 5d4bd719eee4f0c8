//! Three-part ("U-shaped") split learning.
//!
//! Clients keep a frozen front part and a trainable back part of the model; an
//! offloading server trains the central part on one replica per client.  Both
//! sides average weights at a timeout barrier after every global epoch, and a
//! personalization phase lets every client fine-tune its back part alone.
//!
//! The crate is organised bottom-up:
//!
//! * [`nn`] – dense tensors, layers, reverse-mode gradients, loss and SGD.
//! * [`split`] – front/central/back partitioning, freezing, pretraining and
//!   the binary weight file.
//! * [`data`] – synthetic blob datasets, the IDX reader and the per-setting
//!   partitioners.
//! * [`protocol`] – client and offloading-server procedures, merge barriers
//!   and the two-phase schedule.
//! * [`sim`] – logical-time rounds, client pools and dropout sampling.
//! * [`metrics`] – FLOP model, work ledger and classification metrics.
//! * [`baselines`] – FL, SL, SFLv1 and SFLv2 on the same substrate.

pub mod baselines;
pub mod data;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod protocol;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod split;
pub mod tensor;

pub use error::{Error, Result};
pub use exec::ExecMode;
pub use tensor::Tensor;
