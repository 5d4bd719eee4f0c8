use serde::Serialize;

use crate::data::{BatchCursor, ClientSplit, Dataset};
use crate::error::{Error, Result};
use crate::nn::{cross_entropy, ParamSet};
use crate::protocol::Submission;
use crate::rng;
use crate::split::{FreezeMode, Part};
use crate::tensor::Tensor;

use rand::seq::SliceRandom;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Generalization,
    Personalization,
    Departed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientSettings {
    pub eta: f64,
    pub batch_size: usize,
    /// Master seed; the client's shuffle stream is derived from it and the
    /// client id.
    pub seed: u64,
}

/// What the back part hands back after a batch.
#[derive(Debug, Clone, PartialEq)]
pub enum BackOutcome {
    /// Phase 1: gradient of the loss with respect to the server's output.
    Gradient(Tensor),
    /// Phase 2: the batch is finished client-side; nothing goes to the server.
    Complete,
}

#[derive(Debug, Clone)]
pub struct ClientSession {
    id: usize,
    phase: Phase,
    split: ClientSplit,
    test: Vec<usize>,
    front: Part,
    back: Part,
    eta: f64,
    batch_size: usize,
    cursor: BatchCursor,
    pending_labels: Option<Vec<usize>>,
    val_acc: Option<f64>,
    last_loss: Option<f64>,
    batch_ops: u64,
    front_digest: u64,
}

impl ClientSession {
    pub fn new(
        id: usize,
        split: ClientSplit,
        test: Vec<usize>,
        front: Part,
        back: Part,
        settings: &ClientSettings,
    ) -> Result<Self> {
        if split.train.is_empty() {
            return Err(Error::data(format!("client {id} has no training data")));
        }
        if settings.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if !(settings.eta.is_finite() && settings.eta >= 0.0) {
            return Err(Error::config(format!("invalid learning rate {}", settings.eta)));
        }
        let front = front.freeze(FreezeMode::All)?;
        let back = back.freeze(FreezeMode::None)?;
        let mut r = rng::stream(settings.seed, rng::LABEL_SHUFFLE, id as u64);
        let mut order = split.train.clone();
        order.shuffle(&mut r);
        Ok(ClientSession {
            id,
            phase: Phase::Generalization,
            front_digest: front.frozen_digest(),
            split,
            test,
            front,
            back,
            eta: settings.eta,
            batch_size: settings.batch_size,
            cursor: BatchCursor::new(order, r),
            pending_labels: None,
            val_acc: None,
            last_loss: None,
            batch_ops: 0,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn split(&self) -> &ClientSplit {
        &self.split
    }

    pub fn train_len(&self) -> usize {
        self.split.train.len()
    }

    pub fn test(&self) -> &[usize] {
        &self.test
    }

    pub fn front(&self) -> &Part {
        &self.front
    }

    pub fn back(&self) -> &Part {
        &self.back
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn cursor(&self) -> &BatchCursor {
        &self.cursor
    }

    /// Validation accuracy measured at the end of the last phase-1 epoch.
    pub fn val_acc(&self) -> Option<f64> {
        self.val_acc
    }

    pub(crate) fn set_val_acc(&mut self, v: f64) {
        self.val_acc = Some(v);
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    /// Batches pushed through the back part so far.
    pub fn batch_ops(&self) -> u64 {
        self.batch_ops
    }

    /// Moves to another phase.  Only forward transitions are allowed:
    /// generalization to personalization or departure, personalization to
    /// departure.
    pub fn transition(&mut self, to: Phase) -> Result<()> {
        let ok = matches!(
            (self.phase, to),
            (Phase::Generalization, Phase::Personalization)
                | (Phase::Generalization, Phase::Departed)
                | (Phase::Personalization, Phase::Departed)
        );
        if !ok {
            return Err(Error::protocol(format!(
                "client {}: illegal transition {:?} -> {:?}",
                self.id, self.phase, to
            )));
        }
        self.phase = to;
        Ok(())
    }

    pub fn next_batch(&mut self, dataset: &Dataset) -> Result<(Tensor, Vec<usize>)> {
        let idx = self.cursor.next_batch(self.batch_size);
        dataset.batch(&idx)
    }

    /// Runs the frozen front part.  The labels stay on the client until the
    /// server's activations come back.
    pub fn client_front(&mut self, x: &Tensor, labels: Vec<usize>) -> Result<Tensor> {
        self.ensure_active()?;
        if self.pending_labels.is_some() {
            return Err(Error::protocol(format!(
                "client {}: previous batch still awaiting the server",
                self.id
            )));
        }
        let out = self.front.predict(x)?;
        self.pending_labels = Some(labels);
        Ok(out)
    }

    /// Runs the back part on the server's output, takes one SGD step on the
    /// back parameters and, in phase 1, returns the gradient for the server.
    pub fn client_back(&mut self, a_s: &Tensor) -> Result<BackOutcome> {
        self.ensure_active()?;
        let labels = self
            .pending_labels
            .take()
            .ok_or_else(|| Error::data(format!("client {}: no labels for this batch", self.id)))?;
        let (logits, cache) = self.back.forward(a_s)?;
        let (loss, grad) = cross_entropy(&logits, &labels)?;
        let (grads, grad_in) = self.back.backward(&cache, &grad)?;
        self.back.apply_sgd(&grads, self.eta)?;
        self.last_loss = Some(loss);
        self.batch_ops += 1;
        Ok(match self.phase {
            Phase::Generalization => BackOutcome::Gradient(grad_in),
            _ => BackOutcome::Complete,
        })
    }

    /// Back weights and validation vote for the averaging server.
    pub fn merge_submission(&self) -> Result<Submission> {
        if self.phase != Phase::Generalization {
            return Err(Error::protocol(format!(
                "client {}: merge submission outside the generalization phase",
                self.id
            )));
        }
        Ok(Submission {
            client_id: self.id,
            weights: self.back.params().clone(),
            val_acc: self.val_acc,
        })
    }

    pub fn apply_merge(&mut self, weights: ParamSet) -> Result<()> {
        if self.phase != Phase::Generalization {
            return Err(Error::protocol(format!(
                "client {}: merged weights received outside the generalization phase",
                self.id
            )));
        }
        self.back.set_params(weights)
    }

    /// Replaces the back weights directly (early-stopping restore).
    pub(crate) fn restore_back(&mut self, weights: ParamSet) -> Result<()> {
        self.back.set_params(weights)
    }

    pub fn verify_frozen(&self) -> Result<()> {
        if self.front.frozen_digest() != self.front_digest {
            return Err(Error::protocol(format!("client {}: frozen front changed", self.id)));
        }
        Ok(())
    }

    fn ensure_active(&self) -> Result<()> {
        if self.phase == Phase::Departed {
            return Err(Error::protocol(format!("client {} has departed", self.id)));
        }
        Ok(())
    }
}
