//! Federated and split-learning baselines on the same substrate: FL (with an
//! optional frozen pretrained prefix), sequential SL, SFLv1 and SFLv2.
//!
//! The split variants place the front part on the client and everything
//! after the first cut on the server, labels included.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{BatchCursor, ClientSplit, Dataset};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::metrics::{training_flops, Score, WorkLedger};
use crate::nn::{cross_entropy, output_shape, ParamSet};
use crate::protocol::{evaluate_parts, mean_params, ClientSettings};
use crate::rng;
use crate::split::{train_epoch, FreezeMode, Part, SplitConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Fl,
    /// FL with the pretrained front and frozen central prefix kept fixed.
    FlTl,
    Sl,
    Sflv1,
    Sflv2,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::Fl,
        BaselineKind::FlTl,
        BaselineKind::Sl,
        BaselineKind::Sflv1,
        BaselineKind::Sflv2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Fl => "fl",
            BaselineKind::FlTl => "fl_tl",
            BaselineKind::Sl => "sl",
            BaselineKind::Sflv1 => "sflv1",
            BaselineKind::Sflv2 => "sflv2",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown baseline {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub epochs: usize,
    pub settings: ClientSettings,
    pub split: SplitConfig,
    pub exec: ExecMode,
    pub eval_batch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineEpoch {
    pub epoch: usize,
    pub train_loss: BTreeMap<usize, f64>,
    /// Score of the model shared at the end of the epoch on the common
    /// validation set (for SL, the relayed model after the last client).
    pub val: Score,
}

#[derive(Debug, Clone)]
pub struct BaselineReport {
    pub kind: BaselineKind,
    pub epochs: Vec<BaselineEpoch>,
    pub ledger: WorkLedger,
    /// Final full-stack model of every client, ascending id.
    pub models: Vec<(usize, Part)>,
}

/// A client's data stream, seeded exactly like a protocol session.
#[derive(Debug, Clone)]
struct Worker {
    id: usize,
    cursor: BatchCursor,
    iters: usize,
}

impl Worker {
    fn new(id: usize, split: &ClientSplit, settings: &ClientSettings) -> Result<Self> {
        let iters = split.train.len() / settings.batch_size;
        if iters == 0 {
            return Err(Error::config(format!(
                "client {id} has {} samples, fewer than the batch size {}",
                split.train.len(),
                settings.batch_size
            )));
        }
        let mut r = rng::stream(settings.seed, rng::LABEL_SHUFFLE, id as u64);
        let mut order = split.train.clone();
        order.shuffle(&mut r);
        Ok(Worker {
            id,
            cursor: BatchCursor::new(order, r),
            iters,
        })
    }
}

fn workers(clients: &[(usize, ClientSplit, Vec<usize>)], settings: &ClientSettings) -> Result<Vec<Worker>> {
    if clients.is_empty() {
        return Err(Error::config("a baseline needs at least one client"));
    }
    let mut w = clients
        .iter()
        .map(|(id, split, _)| Worker::new(*id, split, settings))
        .collect::<Result<Vec<_>>>()?;
    w.sort_by_key(|w| w.id);
    Ok(w)
}

fn empty_part() -> Part {
    Part::new(Vec::new(), ParamSet::new(Vec::new())).expect("empty part is consistent")
}

fn score(parts: [&Part; 2], dataset: &Dataset, indices: &[usize], chunk: usize) -> Result<Score> {
    let e = empty_part();
    Ok(evaluate_parts([parts[0], parts[1], &e], dataset, indices, chunk)?.score())
}

fn join(front: &Part, rest: &Part) -> Result<Part> {
    let mut specs = front.specs().to_vec();
    specs.extend_from_slice(rest.specs());
    let mut params = front.params().clone();
    params.append(rest.params().clone());
    Part::new(specs, params)
}

fn mean_of(parts: &[&Part]) -> Result<ParamSet> {
    mean_params(&parts.iter().map(|p| p.params()).collect::<Vec<_>>())
}

pub fn run_baseline(
    dataset: Arc<Dataset>,
    validation: &[usize],
    clients: &[(usize, ClientSplit, Vec<usize>)],
    pretrained: &Part,
    cfg: &BaselineConfig,
) -> Result<BaselineReport> {
    cfg.split.validate(pretrained.len())?;
    match cfg.kind {
        BaselineKind::Fl | BaselineKind::FlTl => run_fl(&dataset, validation, clients, pretrained, cfg),
        BaselineKind::Sl => run_sl(&dataset, validation, clients, pretrained, cfg),
        BaselineKind::Sflv1 => run_sflv1(&dataset, validation, clients, pretrained, cfg),
        BaselineKind::Sflv2 => run_sflv2(&dataset, validation, clients, pretrained, cfg),
    }
}

/// Each client trains the whole stack for `floor(d_i / b)` batches, then
/// every client receives the unweighted mean.
pub fn run_fl(
    dataset: &Dataset,
    validation: &[usize],
    clients: &[(usize, ClientSplit, Vec<usize>)],
    pretrained: &Part,
    cfg: &BaselineConfig,
) -> Result<BaselineReport> {
    let s = &cfg.settings;
    let frozen = match cfg.kind {
        BaselineKind::FlTl => FreezeMode::Prefix(cfg.split.cut1 + cfg.split.central_frozen_prefix),
        _ => FreezeMode::None,
    };
    let mut global = pretrained.clone().freeze(frozen)?;
    let mut ws = workers(clients, s)?;
    let c_i = training_flops(global.specs(), dataset.sample_shape(), s.batch_size)? as f64;
    let mut ledger = WorkLedger::new();
    let mut epochs = Vec::new();
    for epoch in 1..=cfg.epochs {
        let start = &global;
        let results = cfg.exec.map_mut(&mut ws, |w| -> Result<(usize, f64, Part)> {
            let mut local = start.clone();
            let loss = train_epoch(&mut local, dataset, &mut w.cursor, w.iters, s.batch_size, s.eta)?;
            Ok((w.id, loss, local))
        });
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;
        let avg = mean_of(&results.iter().map(|r| &r.2).collect::<Vec<_>>())?;
        global.set_params(avg)?;
        for w in &ws {
            ledger.record_epoch(w.id, c_i, w.iters as u64);
        }
        epochs.push(BaselineEpoch {
            epoch,
            train_loss: results.iter().map(|r| (r.0, r.1)).collect(),
            val: score([&global, &empty_part()], dataset, validation, cfg.eval_batch)?,
        });
    }
    Ok(BaselineReport {
        kind: cfg.kind,
        epochs,
        ledger,
        models: ws.iter().map(|w| (w.id, global.clone())).collect(),
    })
}

/// One batch of two-part split training: the client front and the server
/// part both take an SGD step.
fn split_step(front: &mut Part, server: &mut Part, dataset: &Dataset, w: &mut Worker, s: &ClientSettings) -> Result<f64> {
    let idx = w.cursor.next_batch(s.batch_size);
    let (x, y) = dataset.batch(&idx)?;
    let (a, front_cache) = front.forward(&x)?;
    let (logits, server_cache) = server.forward(&a)?;
    let (loss, grad) = cross_entropy(&logits, &y)?;
    let (server_grads, grad_a) = server.backward(&server_cache, &grad)?;
    server.apply_sgd(&server_grads, s.eta)?;
    let (front_grads, _) = front.backward(&front_cache, &grad_a)?;
    front.apply_sgd(&front_grads, s.eta)?;
    Ok(loss)
}

fn split_steps(front: &mut Part, server: &mut Part, dataset: &Dataset, w: &mut Worker, s: &ClientSettings) -> Result<f64> {
    let mut total = 0.0;
    for _ in 0..w.iters {
        total += split_step(front, server, dataset, w, s)?;
    }
    Ok(total / w.iters as f64)
}

fn split_parts(pretrained: &Part, cut: usize) -> Result<(Part, Part)> {
    let mut params = pretrained.params().clone();
    let rest = params.split_off(cut);
    let specs = pretrained.specs();
    Ok((
        Part::new(specs[..cut].to_vec(), params)?.freeze(FreezeMode::None)?,
        Part::new(specs[cut..].to_vec(), rest)?.freeze(FreezeMode::None)?,
    ))
}

fn split_ledger_cost(front: &Part, dataset: &Dataset, batch: usize) -> Result<f64> {
    output_shape(front.specs(), dataset.sample_shape())?;
    Ok(training_flops(front.specs(), dataset.sample_shape(), batch)? as f64)
}

/// Clients take turns in id order against a single server part; each
/// starts from the front weights the previous client left.
pub fn run_sl(
    dataset: &Dataset,
    validation: &[usize],
    clients: &[(usize, ClientSplit, Vec<usize>)],
    pretrained: &Part,
    cfg: &BaselineConfig,
) -> Result<BaselineReport> {
    let s = &cfg.settings;
    let (mut front, mut server) = split_parts(pretrained, cfg.split.cut1)?;
    let mut ws = workers(clients, s)?;
    let c_i = split_ledger_cost(&front, dataset, s.batch_size)?;
    let mut ledger = WorkLedger::new();
    let mut epochs = Vec::new();
    for epoch in 1..=cfg.epochs {
        let mut train_loss = BTreeMap::new();
        for w in ws.iter_mut() {
            train_loss.insert(w.id, split_steps(&mut front, &mut server, dataset, w, s)?);
            ledger.record_epoch(w.id, c_i, w.iters as u64);
        }
        epochs.push(BaselineEpoch {
            epoch,
            train_loss,
            val: score([&front, &server], dataset, validation, cfg.eval_batch)?,
        });
    }
    let model = join(&front, &server)?;
    Ok(BaselineReport {
        kind: cfg.kind,
        epochs,
        ledger,
        models: ws.iter().map(|w| (w.id, model.clone())).collect(),
    })
}

/// Clients run in parallel, each against its own server replica; fronts and
/// replicas are averaged at the end of every epoch.
pub fn run_sflv1(
    dataset: &Dataset,
    validation: &[usize],
    clients: &[(usize, ClientSplit, Vec<usize>)],
    pretrained: &Part,
    cfg: &BaselineConfig,
) -> Result<BaselineReport> {
    let s = &cfg.settings;
    let (mut front, mut server) = split_parts(pretrained, cfg.split.cut1)?;
    let mut ws = workers(clients, s)?;
    let c_i = split_ledger_cost(&front, dataset, s.batch_size)?;
    let mut ledger = WorkLedger::new();
    let mut epochs = Vec::new();
    for epoch in 1..=cfg.epochs {
        let (f0, s0) = (&front, &server);
        let results = cfg.exec.map_mut(&mut ws, |w| -> Result<(usize, f64, Part, Part)> {
            let (mut f, mut r) = (f0.clone(), s0.clone());
            let loss = split_steps(&mut f, &mut r, dataset, w, s)?;
            Ok((w.id, loss, f, r))
        });
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;
        let fronts = mean_of(&results.iter().map(|r| &r.2).collect::<Vec<_>>())?;
        let replicas = mean_of(&results.iter().map(|r| &r.3).collect::<Vec<_>>())?;
        front.set_params(fronts)?;
        server.set_params(replicas)?;
        for w in &ws {
            ledger.record_epoch(w.id, c_i, w.iters as u64);
        }
        epochs.push(BaselineEpoch {
            epoch,
            train_loss: results.iter().map(|r| (r.0, r.1)).collect(),
            val: score([&front, &server], dataset, validation, cfg.eval_batch)?,
        });
    }
    let model = join(&front, &server)?;
    Ok(BaselineReport {
        kind: cfg.kind,
        epochs,
        ledger,
        models: ws.iter().map(|w| (w.id, model.clone())).collect(),
    })
}

/// One server part updated by each client in id order; client fronts start
/// each epoch from the shared front and are averaged at its end.
pub fn run_sflv2(
    dataset: &Dataset,
    validation: &[usize],
    clients: &[(usize, ClientSplit, Vec<usize>)],
    pretrained: &Part,
    cfg: &BaselineConfig,
) -> Result<BaselineReport> {
    let s = &cfg.settings;
    let (mut front, mut server) = split_parts(pretrained, cfg.split.cut1)?;
    let mut ws = workers(clients, s)?;
    let c_i = split_ledger_cost(&front, dataset, s.batch_size)?;
    let mut ledger = WorkLedger::new();
    let mut epochs = Vec::new();
    for epoch in 1..=cfg.epochs {
        let mut train_loss = BTreeMap::new();
        let mut fronts = Vec::with_capacity(ws.len());
        for w in ws.iter_mut() {
            let mut f = front.clone();
            train_loss.insert(w.id, split_steps(&mut f, &mut server, dataset, w, s)?);
            fronts.push(f);
            ledger.record_epoch(w.id, c_i, w.iters as u64);
        }
        front.set_params(mean_of(&fronts.iter().collect::<Vec<_>>())?)?;
        epochs.push(BaselineEpoch {
            epoch,
            train_loss,
            val: score([&front, &server], dataset, validation, cfg.eval_batch)?,
        });
    }
    let model = join(&front, &server)?;
    Ok(BaselineReport {
        kind: cfg.kind,
        epochs,
        ledger,
        models: ws.iter().map(|w| (w.id, model.clone())).collect(),
    })
}
