use crate::error::{Error, Result};
use crate::nn::{ForwardCache, ParamSet};
use crate::protocol::{Phase, Submission};
use crate::split::{FreezeMode, Part};
use crate::tensor::Tensor;

/// The offloading server's replica of the central part for one client.
#[derive(Debug, Clone)]
pub struct ServerInstance {
    client_id: usize,
    central: Part,
    eta: f64,
    phase: Phase,
    pending: Option<ForwardCache>,
    frozen_digest: u64,
}

impl ServerInstance {
    /// `frozen_prefix` leading layers of `central` never train.
    pub fn new(client_id: usize, central: Part, frozen_prefix: usize, eta: f64) -> Result<Self> {
        let central = central.freeze(FreezeMode::Prefix(frozen_prefix))?;
        Ok(ServerInstance {
            client_id,
            frozen_digest: central.frozen_digest(),
            central,
            eta,
            phase: Phase::Generalization,
            pending: None,
        })
    }

    pub fn client_id(&self) -> usize {
        self.client_id
    }

    pub fn central(&self) -> &Part {
        &self.central
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn has_pending(&self) -> bool {
        self.pending.is_some()
    }

    /// Runs the central part.  In phase 1 the activations are kept for the
    /// gradient that follows; in phase 2 nothing is retained.
    pub fn server_forward(&mut self, client_id: usize, a_cf: &Tensor) -> Result<Tensor> {
        if client_id != self.client_id {
            return Err(Error::protocol(format!(
                "replica of client {} got activations from client {client_id}",
                self.client_id
            )));
        }
        match self.phase {
            Phase::Generalization => {
                let (out, cache) = self.central.forward(a_cf)?;
                self.pending = Some(cache);
                Ok(out)
            }
            Phase::Personalization => self.central.predict(a_cf),
            Phase::Departed => Err(Error::protocol(format!(
                "replica of client {} is closed",
                self.client_id
            ))),
        }
    }

    /// Backpropagates the client's gradient and updates the trainable central
    /// layers.
    pub fn server_backprop(&mut self, grad: &Tensor) -> Result<()> {
        if self.phase != Phase::Generalization {
            return Err(Error::protocol(format!(
                "replica of client {}: gradient received outside the generalization phase",
                self.client_id
            )));
        }
        let cache = self.pending.take().ok_or_else(|| {
            Error::protocol(format!("replica of client {}: no pending forward pass", self.client_id))
        })?;
        let (grads, _) = self.central.backward(&cache, grad)?;
        self.central.apply_sgd(&grads, self.eta)
    }

    pub fn merge_submission(&self) -> Result<Submission> {
        if self.phase != Phase::Generalization {
            return Err(Error::protocol(format!(
                "replica of client {}: merge submission with a frozen replica",
                self.client_id
            )));
        }
        Ok(Submission {
            client_id: self.client_id,
            weights: self.central.params().clone(),
            val_acc: None,
        })
    }

    pub fn apply_merge(&mut self, weights: ParamSet) -> Result<()> {
        if self.phase != Phase::Generalization {
            return Err(Error::protocol(format!(
                "replica of client {}: merged weights received with a frozen replica",
                self.client_id
            )));
        }
        self.central.set_params(weights)
    }

    /// Freezes the whole replica for the personalization phase.
    pub fn freeze_all(&mut self) -> Result<()> {
        if self.phase != Phase::Generalization {
            return Err(Error::protocol(format!(
                "replica of client {} is not in the generalization phase",
                self.client_id
            )));
        }
        self.central.freeze_in_place(FreezeMode::All)?;
        self.pending = None;
        self.phase = Phase::Personalization;
        self.frozen_digest = self.central.frozen_digest();
        Ok(())
    }

    pub fn close(&mut self) {
        self.pending = None;
        self.phase = Phase::Departed;
    }

    pub fn verify_frozen(&self) -> Result<()> {
        if self.central.frozen_digest() != self.frozen_digest {
            return Err(Error::protocol(format!(
                "replica of client {}: frozen layers changed",
                self.client_id
            )));
        }
        Ok(())
    }
}
