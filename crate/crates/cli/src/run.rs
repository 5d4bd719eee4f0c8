use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use pfsl_core::baselines::{run_baseline, BaselineConfig, BaselineKind};
use pfsl_core::metrics::{client_compute_per_iter, performance_fairness, MetricRow, MetricsSink, Score, Split, WorkLedger};
use pfsl_core::protocol::{evaluate_parts, ClientSettings, PfslSystem, PhaseConfig};
use pfsl_core::scenario::{build_scenario, Scenario, Setting};
use pfsl_core::sim::{run_simulation, SelectionMode, SimConfig};
use pfsl_core::nn::{output_shape, ParamSet};
use pfsl_core::split::{load_weights_for, split, Part, SplitModel};
use pfsl_core::{exec, ExecMode};
use serde::{Deserialize, Serialize};

use crate::config::{Algo, RunConfig};

pub const PHASE_1: &str = "p1";
pub const PHASE_2: &str = "p2";
pub const PHASE_FINAL: &str = "final";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSummary {
    pub client_id: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Headline results; every field is derived from `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub run_id: String,
    pub phase1_epochs: usize,
    /// Phase-1 epoch at which the mean validation vote reached the
    /// threshold, if it did.
    pub conv_epoch: Option<usize>,
    pub clients: Vec<ClientSummary>,
    pub mean_accuracy: Option<f64>,
    pub mean_macro_f1: Option<f64>,
    /// Population standard deviation of per-client test accuracy.
    pub fairness_std: Option<f64>,
    /// Final global-model test accuracy (round-based runs).
    pub global_accuracy: Option<f64>,
}

/// Recomputes the summary from metric rows.  `v_thres` is the vote
/// threshold of the run (`None` when no vote took place).
pub fn summarize(run_id: &str, rows: &[MetricRow], v_thres: Option<f64>) -> Summary {
    let p1_client_val: Vec<&MetricRow> = rows
        .iter()
        .filter(|r| r.phase == PHASE_1 && r.split == Split::Val && r.client_id.is_some())
        .collect();
    let phase1_epochs = rows
        .iter()
        .filter(|r| r.phase == PHASE_1)
        .map(|r| r.epoch)
        .max()
        .unwrap_or(0);
    let conv_epoch = v_thres.and_then(|t| {
        let last: Vec<f64> = p1_client_val
            .iter()
            .filter(|r| r.epoch == phase1_epochs)
            .map(|r| r.accuracy)
            .collect();
        if last.is_empty() {
            return None;
        }
        let mut sum = 0.0;
        for v in &last {
            sum += v;
        }
        (sum / last.len() as f64 >= t).then_some(phase1_epochs)
    });
    let clients: Vec<ClientSummary> = rows
        .iter()
        .filter(|r| r.phase == PHASE_FINAL && r.split == Split::Test)
        .filter_map(|r| {
            r.client_id.map(|id| ClientSummary {
                client_id: id,
                accuracy: r.accuracy,
                macro_f1: r.macro_f1,
            })
        })
        .collect();
    let mean = |f: fn(&ClientSummary) -> f64| {
        (!clients.is_empty()).then(|| clients.iter().map(f).sum::<f64>() / clients.len() as f64)
    };
    let accs: Vec<f64> = clients.iter().map(|c| c.accuracy).collect();
    let global_accuracy = rows
        .iter()
        .filter(|r| r.phase == PHASE_FINAL && r.split == Split::Test && r.client_id.is_none())
        .map(|r| r.accuracy)
        .next_back();
    Summary {
        run_id: run_id.to_string(),
        phase1_epochs,
        conv_epoch,
        mean_accuracy: mean(|c| c.accuracy),
        mean_macro_f1: mean(|c| c.macro_f1),
        fairness_std: (!accs.is_empty()).then(|| performance_fairness(&accs)),
        global_accuracy,
        clients,
    }
}

struct Rows<'a> {
    sink: &'a MetricsSink,
}

impl Rows<'_> {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &self,
        phase: &str,
        round: usize,
        epoch: usize,
        client_id: Option<usize>,
        split: Split,
        score: Score,
        c_i: f64,
        o_i: f64,
    ) {
        self.sink.append(MetricRow {
            run_id: String::new(),
            phase: phase.to_string(),
            round,
            epoch,
            client_id,
            split,
            accuracy: score.accuracy,
            macro_f1: score.macro_f1,
            loss: score.loss,
            c_i_flops: c_i,
            o_i_flops: o_i,
        });
    }
}

/// Creates `out/run_<id>/`, writes the resolved config and, unless
/// `dry_run`, trains and writes metrics, ledger and summary.  Metrics
/// gathered before a failure are still written.
pub fn execute(cfg: &RunConfig, dry_run: bool) -> Result<PathBuf> {
    cfg.validate()?;
    let id = cfg.run_id();
    let dir = cfg.out.join(format!("run_{id}"));
    if dir.exists() {
        bail!("{} already exists; runs are never overwritten", dir.display());
    }
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)? + "\n")?;
    if dry_run {
        return Ok(dir);
    }
    let sink = MetricsSink::new(id.clone());
    let workers = if cfg.exec == ExecMode::Parallel { cfg.workers } else { 0 };
    let result = exec::with_workers(workers, || train(cfg, &sink));
    let rows = sink.snapshot();
    write_metrics(&dir.join("metrics.csv"), &rows)?;
    let (ledger, v_thres) = result?;
    write_ledger(&dir.join("work_ledger.csv"), &ledger)?;
    let summary = summarize(&id, &rows, v_thres);
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(dir)
}

pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record([
            "run_id", "phase", "round", "epoch", "client_id", "split", "accuracy", "macro_f1", "loss", "c_i_flops",
            "o_i_flops",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).unwrap_or_default().to_string();
        let num = |i: usize| -> Result<f64> { Ok(f(i).parse()?) };
        rows.push(MetricRow {
            run_id: f(0),
            phase: f(1),
            round: f(2).parse()?,
            epoch: f(3).parse()?,
            client_id: match f(4).as_str() {
                "" => None,
                s => Some(s.parse()?),
            },
            split: match f(5).as_str() {
                "train" => Split::Train,
                "val" => Split::Val,
                "test" => Split::Test,
                s => bail!("unknown split {s:?}"),
            },
            accuracy: num(6)?,
            macro_f1: num(7)?,
            loss: num(8)?,
            c_i_flops: num(9)?,
            o_i_flops: num(10)?,
        });
    }
    Ok(rows)
}

fn write_ledger(path: &Path, ledger: &WorkLedger) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["client_id", "c_i", "iters_per_epoch", "e_gc", "o_i"])?;
    for (id, e) in ledger.iter() {
        w.write_record([
            id.to_string(),
            e.c_i.to_string(),
            e.iters_per_epoch.to_string(),
            e.e_gc.to_string(),
            e.o_i.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn pretrained(cfg: &RunConfig, sc: &Scenario) -> Result<Part> {
    match &cfg.pretrained {
        Some(path) => {
            let params = load_weights_for(path, &sc.specs).with_context(|| format!("loading {}", path.display()))?;
            Ok(Part::new(sc.specs.clone(), params)?)
        }
        None => Ok(sc.pretrain(cfg.seed)?),
    }
}

fn settings(cfg: &RunConfig) -> ClientSettings {
    ClientSettings {
        eta: cfg.lr,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
    }
}

/// Returns the work ledger and the vote threshold used, if any.
fn train(cfg: &RunConfig, sink: &MetricsSink) -> Result<(WorkLedger, Option<f64>)> {
    let sc = build_scenario(&cfg.scenario, cfg.seed)?;
    let model = pretrained(cfg, &sc)?;
    let rows = Rows { sink };
    match (cfg.algo, cfg.scenario.setting) {
        (Algo::Pfsl, Setting::S5) => train_rounds(cfg, &sc, model, &rows).map(|l| (l, None)),
        (Algo::Pfsl, _) => train_pfsl(cfg, &sc, model, &rows).map(|l| (l, Some(cfg.v_thres))),
        (algo, _) => {
            let kind = algo.baseline().expect("non-pfsl algorithms are baselines");
            train_baseline(cfg, &sc, model, kind, &rows).map(|l| (l, None))
        }
    }
}

fn train_pfsl(cfg: &RunConfig, sc: &Scenario, model: Part, rows: &Rows<'_>) -> Result<WorkLedger> {
    let split_model = split(&sc.specs, model.into_params(), &sc.split)?;
    let mut system = PfslSystem::from_model(
        Arc::clone(&sc.dataset),
        Arc::clone(sc.partition.validation()),
        sc.clients(),
        &split_model,
        sc.split.central_frozen_prefix,
        &settings(cfg),
        cfg.exec,
        cfg.test_batch_size,
    )?;
    let c_i: BTreeMap<usize, f64> = system.pairs().iter().map(|p| (p.id(), p.c_i)).collect();
    let mut o_i: BTreeMap<usize, f64> = BTreeMap::new();
    let phase1 = PhaseConfig {
        max_epochs: cfg.checkpoint.min(cfg.epochs),
        v_thres: cfg.v_thres,
        personal_max_epochs: 0,
        patience: cfg.patience,
    };
    let report = system.run_generalization(
        &phase1,
        |_, _| Default::default(),
        |e| {
            for (&id, s) in &e.val {
                let o = o_i.entry(id).or_default();
                *o += e.iters as f64 * c_i[&id];
                rows.push(PHASE_1, 0, e.epoch, Some(id), Split::Val, *s, c_i[&id], *o);
            }
        },
    )?;
    let ran = report.epochs_run();
    let phase2 = PhaseConfig {
        personal_max_epochs: cfg.epochs - ran,
        ..phase1
    };
    let personal = system.run_personalization(&phase2)?;
    let mut p2_epochs = BTreeMap::new();
    for r in &personal {
        let id = r.client_id;
        for e in &r.epochs {
            if let Some(s) = e.local_val {
                rows.push(PHASE_2, 0, ran + e.epoch, Some(id), Split::Val, s, c_i[&id], o_i[&id]);
            }
        }
        p2_epochs.insert(id, r.epochs.len());
    }
    for p in system.pairs() {
        let id = p.id();
        let epoch = ran + p2_epochs.get(&id).copied().unwrap_or(0);
        let train = p.evaluate(&sc.dataset, &p.client.split().train, cfg.test_batch_size)?;
        rows.push(PHASE_FINAL, 0, epoch, Some(id), Split::Train, train.score(), c_i[&id], o_i[&id]);
        let test = p.evaluate(&sc.dataset, p.client.test(), cfg.test_batch_size)?;
        rows.push(PHASE_FINAL, 0, epoch, Some(id), Split::Test, test.score(), c_i[&id], o_i[&id]);
    }
    Ok(system.ledger().clone())
}

fn train_rounds(cfg: &RunConfig, sc: &Scenario, model: Part, rows: &Rows<'_>) -> Result<WorkLedger> {
    let split_model = split(&sc.specs, model.into_params(), &sc.split)?;
    let concurrent = cfg.scenario.clients;
    let sim = SimConfig {
        concurrent,
        rounds: cfg.rounds.unwrap_or(sc.partition.len().div_ceil(concurrent)),
        epochs_per_round: 1,
        dropout: cfg.rate,
        seed: cfg.seed,
        selection: SelectionMode::Exhaustive,
        phase: PhaseConfig::default(),
        personalize: false,
        settings: settings(cfg),
        central_frozen_prefix: sc.split.central_frozen_prefix,
        exec: cfg.exec,
        eval_batch: cfg.test_batch_size,
    };
    let mut epoch = 0;
    let mut o_i: BTreeMap<usize, f64> = BTreeMap::new();
    let c = round_c_i(&split_model, sc, cfg)?;
    let report = run_simulation(Arc::clone(&sc.dataset), &sc.partition, &split_model, &sim, |r| {
        for e in &r.epochs {
            epoch += 1;
            for (&id, s) in &e.val {
                let o = o_i.entry(id).or_default();
                *o += e.iters as f64 * c;
                rows.push(PHASE_1, r.round, epoch, Some(id), Split::Val, *s, c, *o);
            }
        }
        if r.epochs.is_empty() {
            epoch += 1;
        }
        rows.push(PHASE_1, r.round, epoch, None, Split::Test, r.global_test, 0.0, 0.0);
    })?;
    if let Some(r) = report.rounds.iter().find_map(|r| r.error.as_ref()) {
        bail!("a round failed: {r}");
    }
    rows.push(PHASE_FINAL, report.rounds.len(), epoch, None, Split::Test, report.final_score, 0.0, 0.0);
    Ok(report.ledger)
}

fn round_c_i(model: &SplitModel, sc: &Scenario, cfg: &RunConfig) -> Result<f64> {
    let sample = sc.dataset.sample_shape();
    let front_out = output_shape(model.front.specs(), sample)?;
    let back_in = output_shape(model.central.specs(), &front_out)?;
    Ok(client_compute_per_iter(model.front.specs(), sample, model.back.specs(), &back_in, cfg.batch_size)? as f64)
}

fn train_baseline(
    cfg: &RunConfig,
    sc: &Scenario,
    model: Part,
    kind: BaselineKind,
    rows: &Rows<'_>,
) -> Result<WorkLedger> {
    let bcfg = BaselineConfig {
        kind,
        epochs: cfg.epochs,
        settings: settings(cfg),
        split: sc.split,
        exec: cfg.exec,
        eval_batch: cfg.test_batch_size,
    };
    let clients = sc.clients();
    let report = run_baseline(Arc::clone(&sc.dataset), sc.partition.validation(), &clients, &model, &bcfg)?;
    for e in &report.epochs {
        rows.push(PHASE_1, 0, e.epoch, None, Split::Val, e.val, 0.0, 0.0);
    }
    let empty = Part::new(Vec::new(), ParamSet::new(Vec::new()))?;
    for ((id, split, test), (mid, m)) in clients.iter().zip(&report.models) {
        debug_assert_eq!(id, mid);
        let entry = report.ledger.get(*id);
        let (c, o) = entry.map_or((0.0, 0.0), |e| (e.c_i, e.o_i));
        let train = evaluate_parts([m, &empty, &empty], &sc.dataset, &split.train, cfg.test_batch_size)?;
        rows.push(PHASE_FINAL, 0, cfg.epochs, Some(*id), Split::Train, train.score(), c, o);
        let t = evaluate_parts([m, &empty, &empty], &sc.dataset, test, cfg.test_batch_size)?;
        rows.push(PHASE_FINAL, 0, cfg.epochs, Some(*id), Split::Test, t.score(), c, o);
    }
    Ok(report.ledger)
}
