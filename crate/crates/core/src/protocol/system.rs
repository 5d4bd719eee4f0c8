use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{ClientSplit, Dataset};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::metrics::{client_compute_per_iter, Evaluation, Score, WorkLedger};
use crate::nn::{argmax_rows, cross_entropy, output_shape};
use crate::protocol::{
    merge_weights_clients, merge_weights_server, BackOutcome, ClientSession, ClientSettings, MergeBarrier,
    Phase, ServerInstance,
};
use crate::split::{Part, SplitModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    /// Cap on phase-1 global epochs.
    pub max_epochs: usize,
    pub v_thres: f64,
    /// Cap on phase-2 epochs per client.
    pub personal_max_epochs: usize,
    /// Phase-2 epochs without local validation improvement before stopping.
    pub patience: usize,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            max_epochs: 10,
            v_thres: 0.9,
            personal_max_epochs: 10,
            patience: 3,
        }
    }
}

impl PhaseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::config("phase 1 needs at least one epoch"));
        }
        // Values above 1 are accepted: they make the vote unreachable.
        if !(self.v_thres >= 0.0 && self.v_thres.is_finite()) {
            return Err(Error::config(format!("invalid validation threshold {}", self.v_thres)));
        }
        if self.patience == 0 {
            return Err(Error::config("patience must be at least 1"));
        }
        Ok(())
    }
}

/// A client session together with its server replica.
#[derive(Debug, Clone)]
pub struct Pair {
    pub client: ClientSession,
    pub server: ServerInstance,
    /// FLOPs per iteration on the client.
    pub c_i: f64,
}

impl Pair {
    pub fn new(client: ClientSession, server: ServerInstance, sample_shape: &[usize]) -> Result<Self> {
        if client.id() != server.client_id() {
            return Err(Error::protocol(format!(
                "client {} paired with replica of client {}",
                client.id(),
                server.client_id()
            )));
        }
        let front_out = output_shape(client.front().specs(), sample_shape)?;
        let back_in = output_shape(server.central().specs(), &front_out)?;
        let c_i = client_compute_per_iter(
            client.front().specs(),
            sample_shape,
            client.back().specs(),
            &back_in,
            client.batch_size(),
        )? as f64;
        Ok(Pair { client, server, c_i })
    }

    pub fn id(&self) -> usize {
        self.client.id()
    }

    /// One batch through front, central and back; phase 1 also sends the
    /// gradient back to the replica.  Returns the batch loss.
    pub fn step(&mut self, dataset: &Dataset) -> Result<f64> {
        let (x, y) = self.client.next_batch(dataset)?;
        let a_cf = self.client.client_front(&x, y)?;
        let a_s = self.server.server_forward(self.client.id(), &a_cf)?;
        match self.client.client_back(&a_s)? {
            BackOutcome::Gradient(g) => self.server.server_backprop(&g)?,
            BackOutcome::Complete => {}
        }
        Ok(self.client.last_loss().unwrap_or(0.0))
    }

    fn steps(&mut self, dataset: &Dataset, iters: usize) -> Result<f64> {
        let mut total = 0.0;
        for _ in 0..iters {
            total += self.step(dataset)?;
        }
        Ok(if iters == 0 { 0.0 } else { total / iters as f64 })
    }

    /// Evaluates the composed model on `indices` in chunks of `chunk`
    /// samples.  Never mutates parameters.
    pub fn evaluate(&self, dataset: &Dataset, indices: &[usize], chunk: usize) -> Result<Evaluation> {
        evaluate_parts(
            [self.client.front(), self.server.central(), self.client.back()],
            dataset,
            indices,
            chunk,
        )
    }
}

/// Chunked evaluation of a chain of parts.
pub fn evaluate_parts(
    parts: [&Part; 3],
    dataset: &Dataset,
    indices: &[usize],
    chunk: usize,
) -> Result<Evaluation> {
    if indices.is_empty() {
        return Err(Error::Evaluation("cannot evaluate on an empty set".into()));
    }
    let chunk = chunk.max(1);
    let mut preds = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    let mut loss = 0.0;
    for idx in indices.chunks(chunk) {
        let (mut x, y) = dataset.batch(idx)?;
        for p in parts {
            x = p.predict(&x)?;
        }
        let (l, _) = cross_entropy(&x, &y)?;
        loss += l * idx.len() as f64;
        preds.extend(argmax_rows(&x));
        labels.extend(y);
    }
    Ok(Evaluation::new(
        preds,
        labels,
        dataset.classes(),
        loss / indices.len() as f64,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochReport {
    /// 1-based within the system's lifetime.
    pub epoch: usize,
    /// Logical tick of the barrier that closed the epoch.
    pub tick: u64,
    pub iters: usize,
    pub active: Vec<usize>,
    pub participants: Vec<usize>,
    pub dropped: Vec<usize>,
    pub train_loss: BTreeMap<usize, f64>,
    /// Scores on the common validation set, before merging.
    pub val: BTreeMap<usize, Score>,
    /// Mean vote of the participants; `None` when nobody made the barrier.
    pub v_avg: Option<f64>,
    pub conv: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralizationReport {
    pub epochs: Vec<EpochReport>,
    pub conv_epoch: Option<usize>,
}

impl GeneralizationReport {
    pub fn epochs_run(&self) -> usize {
        self.epochs.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PersonalEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    /// Score on the client's own validation set; `None` when it has none.
    pub local_val: Option<Score>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PersonalReport {
    pub client_id: usize,
    pub iters: usize,
    /// Local validation accuracy before any phase-2 step.
    pub baseline_val_acc: f64,
    pub epochs: Vec<PersonalEpoch>,
    /// Epoch whose weights were kept; 0 means the phase-1 weights.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// All client/replica pairs of one training system plus the shared data.
#[derive(Debug, Clone)]
pub struct PfslSystem {
    dataset: Arc<Dataset>,
    validation: Arc<Vec<usize>>,
    pairs: Vec<Pair>,
    exec: ExecMode,
    eval_batch: usize,
    tick: u64,
    epoch: usize,
    ledger: WorkLedger,
}

impl PfslSystem {
    /// Pairs are kept in ascending client id order; duplicate ids are
    /// rejected.
    pub fn new(
        dataset: Arc<Dataset>,
        validation: Arc<Vec<usize>>,
        mut pairs: Vec<Pair>,
        exec: ExecMode,
        eval_batch: usize,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::config("a system needs at least one client"));
        }
        if validation.is_empty() {
            return Err(Error::config("the common validation set is empty"));
        }
        pairs.sort_by_key(Pair::id);
        if let Some(w) = pairs.windows(2).find(|w| w[0].id() == w[1].id()) {
            return Err(Error::config(format!("duplicate client id {}", w[0].id())));
        }
        Ok(PfslSystem {
            dataset,
            validation,
            pairs,
            exec,
            eval_batch: eval_batch.max(1),
            tick: 0,
            epoch: 0,
            ledger: WorkLedger::new(),
        })
    }

    /// Builds one pair per client, all starting from the same split model.
    #[allow(clippy::too_many_arguments)]
    pub fn from_model(
        dataset: Arc<Dataset>,
        validation: Arc<Vec<usize>>,
        clients: Vec<(usize, ClientSplit, Vec<usize>)>,
        model: &SplitModel,
        central_frozen_prefix: usize,
        settings: &ClientSettings,
        exec: ExecMode,
        eval_batch: usize,
    ) -> Result<Self> {
        let sample_shape = dataset.sample_shape().to_vec();
        let pairs = clients
            .into_iter()
            .map(|(id, split, test)| {
                let client = ClientSession::new(
                    id,
                    split,
                    test,
                    model.front.clone(),
                    model.back.clone(),
                    settings,
                )?;
                let server = ServerInstance::new(id, model.central.clone(), central_frozen_prefix, settings.eta)?;
                Pair::new(client, server, &sample_shape)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dataset, validation, pairs, exec, eval_batch)
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn validation(&self) -> &Arc<Vec<usize>> {
        &self.validation
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn pair(&self, id: usize) -> Option<&Pair> {
        self.pairs.iter().find(|p| p.id() == id)
    }

    pub fn pairs_mut(&mut self) -> &mut [Pair] {
        &mut self.pairs
    }

    pub fn ledger(&self) -> &WorkLedger {
        &self.ledger
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn epochs_run(&self) -> usize {
        self.epoch
    }

    /// Continues logical time from an earlier system.
    pub fn set_tick(&mut self, tick: u64) {
        self.tick = tick;
    }

    pub fn exec(&self) -> ExecMode {
        self.exec
    }

    pub fn set_exec(&mut self, exec: ExecMode) {
        self.exec = exec;
    }

    pub fn eval_batch(&self) -> usize {
        self.eval_batch
    }

    fn active_ids(&self) -> Vec<usize> {
        self.pairs
            .iter()
            .filter(|p| p.client.phase() == Phase::Generalization)
            .map(Pair::id)
            .collect()
    }

    /// One global epoch: every active client runs the same number of
    /// batches, votes with its pre-merge validation accuracy, then both
    /// averaging servers merge over the clients not in `dropped`.
    pub fn run_global_epoch(&mut self, dropped: &BTreeSet<usize>) -> Result<EpochReport> {
        let active = self.active_ids();
        if active.is_empty() {
            return Err(Error::protocol("no client is in the generalization phase"));
        }
        let (iters, short) = self
            .pairs
            .iter()
            .filter(|p| p.client.phase() == Phase::Generalization)
            .map(|p| (p.client.train_len() / p.client.batch_size(), p))
            .min_by_key(|(n, _)| *n)
            .expect("active is non-empty");
        if iters == 0 {
            return Err(Error::config(format!(
                "client {} has {} samples, fewer than the batch size {}; use a smaller batch",
                short.id(),
                short.client.train_len(),
                short.client.batch_size()
            )));
        }

        let dataset = Arc::clone(&self.dataset);
        let validation = Arc::clone(&self.validation);
        let eval_batch = self.eval_batch;
        let outcomes = self.exec.map_mut(&mut self.pairs, |p| -> Result<Option<(f64, Score)>> {
            if p.client.phase() != Phase::Generalization {
                return Ok(None);
            }
            let loss = p.steps(&dataset, iters)?;
            let v = p.evaluate(&dataset, &validation, eval_batch)?.score();
            p.client.set_val_acc(v.accuracy);
            Ok(Some((loss, v)))
        });
        let mut train_loss = BTreeMap::new();
        let mut val = BTreeMap::new();
        for (p, out) in self.pairs.iter().zip(outcomes) {
            if let Some((l, v)) = out? {
                train_loss.insert(p.id(), l);
                val.insert(p.id(), v);
            }
        }

        self.tick += 1;
        self.epoch += 1;
        let deadline = self.tick;
        let mut client_barrier = MergeBarrier::new(active.iter().copied(), deadline);
        let mut server_barrier = MergeBarrier::new(active.iter().copied(), deadline);
        for p in self.pairs.iter().filter(|p| p.client.phase() == Phase::Generalization) {
            let at = if dropped.contains(&p.id()) { deadline + 1 } else { deadline };
            client_barrier.submit(p.client.merge_submission()?, at)?;
            server_barrier.submit(p.server.merge_submission()?, at)?;
        }
        let (client_subs, missed) = client_barrier.close();
        let (server_subs, _) = server_barrier.close();

        let client_merge = merge_weights_clients(&client_subs, f64::INFINITY)?;
        let server_merge = merge_weights_server(&server_subs)?;
        let mut participants = Vec::new();
        let mut v_avg = None;
        if let (Some(cm), Some(sm)) = (client_merge, server_merge) {
            for p in self.pairs.iter_mut().filter(|p| cm.participants.contains(&p.id())) {
                p.client.apply_merge(cm.weights.clone())?;
                p.server.apply_merge(sm.weights.clone())?;
            }
            participants = cm.participants;
            v_avg = Some(cm.v_avg);
        }
        for p in &self.pairs {
            p.client.verify_frozen()?;
            p.server.verify_frozen()?;
            if p.client.phase() == Phase::Generalization {
                self.ledger.record_epoch(p.id(), p.c_i, iters as u64);
            }
        }
        Ok(EpochReport {
            epoch: self.epoch,
            tick: self.tick,
            iters,
            active,
            participants,
            dropped: missed,
            train_loss,
            val,
            v_avg,
            conv: false,
        })
    }

    /// Phase 1: global epochs until `max_epochs` or until the participants'
    /// mean validation accuracy reaches `v_thres`.  `dropout` picks, per
    /// epoch, the clients that miss the barrier; `on_epoch` sees every
    /// report as soon as it exists.  Ends by freezing every replica.
    pub fn run_generalization(
        &mut self,
        cfg: &PhaseConfig,
        mut dropout: impl FnMut(usize, &[usize]) -> BTreeSet<usize>,
        mut on_epoch: impl FnMut(&EpochReport),
    ) -> Result<GeneralizationReport> {
        cfg.validate()?;
        let mut epochs = Vec::new();
        let mut conv_epoch = None;
        for e in 1..=cfg.max_epochs {
            let dropped = dropout(e, &self.active_ids());
            let mut report = self.run_global_epoch(&dropped)?;
            report.conv = report.v_avg.is_some_and(|v| v >= cfg.v_thres);
            on_epoch(&report);
            let conv = report.conv;
            epochs.push(report);
            if conv {
                conv_epoch = Some(e);
                break;
            }
        }
        self.begin_personalization()?;
        Ok(GeneralizationReport { epochs, conv_epoch })
    }

    /// Moves every phase-1 client to phase 2 and freezes its replica.
    pub fn begin_personalization(&mut self) -> Result<()> {
        for p in self.pairs.iter_mut().filter(|p| p.client.phase() == Phase::Generalization) {
            p.client.transition(Phase::Personalization)?;
            p.server.freeze_all()?;
        }
        Ok(())
    }

    /// Phase 2 for every client, independently.
    pub fn run_personalization(&mut self, cfg: &PhaseConfig) -> Result<Vec<PersonalReport>> {
        cfg.validate()?;
        let dataset = Arc::clone(&self.dataset);
        let eval_batch = self.eval_batch;
        self.exec
            .map_mut(&mut self.pairs, |p| personalize(p, &dataset, cfg, eval_batch))
            .into_iter()
            .collect()
    }

    pub fn depart(&mut self, id: usize) -> Result<()> {
        let p = self
            .pairs
            .iter_mut()
            .find(|p| p.id() == id)
            .ok_or_else(|| Error::protocol(format!("unknown client {id}")))?;
        p.client.transition(Phase::Departed)?;
        p.server.close();
        Ok(())
    }
}

/// Fine-tunes one client's back part on its own data with the central
/// replica frozen, early-stopping on local validation accuracy and keeping
/// the best weights seen (the phase-1 weights count as a candidate).
pub fn personalize(pair: &mut Pair, dataset: &Dataset, cfg: &PhaseConfig, eval_batch: usize) -> Result<PersonalReport> {
    if pair.client.phase() != Phase::Personalization || pair.server.phase() != Phase::Personalization {
        return Err(Error::protocol(format!(
            "client {} is not ready for personalization",
            pair.id()
        )));
    }
    let iters = pair.client.train_len() / pair.client.batch_size();
    if iters == 0 && cfg.personal_max_epochs > 0 {
        return Err(Error::config(format!(
            "client {} has fewer samples than the batch size",
            pair.id()
        )));
    }
    let local_val = pair.client.split().local_val.clone();
    let score = |p: &Pair| -> Result<Option<Score>> {
        if local_val.is_empty() {
            return Ok(None);
        }
        Ok(Some(p.evaluate(dataset, &local_val, eval_batch)?.score()))
    };
    // Without a local validation set the latest weights always win.
    let acc_of = |s: &Option<Score>| s.map_or(f64::NEG_INFINITY, |s| s.accuracy);
    let baseline = acc_of(&score(pair)?);
    let mut best = (baseline, 0usize, pair.client.back().params().clone());
    let mut epochs = Vec::new();
    let mut wait = 0;
    let mut stopped_early = false;
    for e in 1..=cfg.personal_max_epochs {
        let loss = pair.steps(dataset, iters)?;
        let local = score(pair)?;
        let acc = acc_of(&local);
        epochs.push(PersonalEpoch {
            epoch: e,
            train_loss: loss,
            local_val: local,
        });
        if acc > best.0 || local_val.is_empty() {
            best = (acc, e, pair.client.back().params().clone());
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.patience {
                stopped_early = e < cfg.personal_max_epochs;
                break;
            }
        }
    }
    pair.client.restore_back(best.2)?;
    pair.client.verify_frozen()?;
    pair.server.verify_frozen()?;
    Ok(PersonalReport {
        client_id: pair.id(),
        iters,
        baseline_val_acc: baseline,
        epochs,
        best_epoch: best.1,
        stopped_early,
    })
}
