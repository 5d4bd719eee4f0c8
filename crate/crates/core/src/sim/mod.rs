//! Logical-time rounds over a client pool: client selection, dropout at the
//! barrier and a global model carried from round to round.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Partition};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::metrics::{Score, WorkLedger};
use crate::protocol::{ClientSettings, EpochReport, PfslSystem, PhaseConfig};
use crate::rng::{self, Rng};
use crate::split::{Part, SplitModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Every pool member is visited exactly once, in a seeded order.
    #[default]
    Exhaustive,
    /// Each round draws `n` distinct clients from the whole pool.
    WithReplacement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub concurrent: usize,
    pub rounds: usize,
    pub epochs_per_round: usize,
    pub dropout: f64,
    pub seed: u64,
    pub selection: SelectionMode,
    pub phase: PhaseConfig,
    /// Run a personalization phase for each round's clients after the round.
    pub personalize: bool,
    pub settings: ClientSettings,
    pub central_frozen_prefix: usize,
    pub exec: ExecMode,
    pub eval_batch: usize,
}

impl SimConfig {
    pub fn validate(&self, pool: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout probability {} not in [0, 1)", self.dropout)));
        }
        if self.concurrent == 0 || self.concurrent > pool {
            return Err(Error::config(format!(
                "concurrent clients must be in [1, {pool}], got {}",
                self.concurrent
            )));
        }
        if self.epochs_per_round == 0 {
            return Err(Error::config("a round needs at least one epoch"));
        }
        if self.personalize {
            self.phase.validate()?;
        }
        Ok(())
    }
}

/// Picks the clients of successive rounds.
#[derive(Debug, Clone)]
pub struct ClientSelector {
    mode: SelectionMode,
    pool: Vec<usize>,
    next: usize,
    rng: Rng,
}

impl ClientSelector {
    pub fn new(pool: Vec<usize>, mode: SelectionMode, mut rng: Rng) -> Self {
        let mut pool = pool;
        if mode == SelectionMode::Exhaustive {
            pool.shuffle(&mut rng);
        }
        ClientSelector { mode, pool, next: 0, rng }
    }

    /// Clients for the next round, ascending; `None` once an exhaustive pool
    /// is used up.  The last exhaustive round may be short.
    pub fn select(&mut self, n: usize) -> Option<Vec<usize>> {
        let mut chosen = match self.mode {
            SelectionMode::Exhaustive => {
                if self.next >= self.pool.len() {
                    return None;
                }
                let end = (self.next + n).min(self.pool.len());
                let c = self.pool[self.next..end].to_vec();
                self.next = end;
                c
            }
            SelectionMode::WithReplacement => self.pool.choose_multiple(&mut self.rng, n).copied().collect(),
        };
        chosen.sort_unstable();
        Some(chosen)
    }
}

/// One-shot form of [`ClientSelector`] for a single round.
pub fn select_round_clients(pool: &[usize], n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut c: Vec<usize> = pool.choose_multiple(rng, n).copied().collect();
    c.sort_unstable();
    c
}

/// Each client independently survives with probability `1 - p`.
pub fn sample_dropout(selected: &[usize], p: f64, rng: &mut Rng) -> Vec<usize> {
    selected.iter().copied().filter(|_| !rng.random_bool(p)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundReport {
    pub round: usize,
    /// Logical tick at the end of the round.
    pub tick: u64,
    pub selected: Vec<usize>,
    /// Clients that made the last barrier of the round.
    pub survivors: Vec<usize>,
    /// Participants of each epoch's merges.
    pub merge_counts: Vec<usize>,
    pub epochs: Vec<EpochReport>,
    /// Global model on the held-out test set after the round.
    pub global_test: Score,
    /// Whether the survivors of every epoch ended up bit-identical.
    pub survivors_identical: bool,
    /// Phase-2 test accuracy per client when personalization ran.
    pub personalized: Vec<(usize, f64)>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub initial: Score,
    pub rounds: Vec<RoundReport>,
    pub final_score: Score,
    #[serde(skip)]
    pub ledger: WorkLedger,
}

/// The shared model state between rounds.
#[derive(Debug, Clone)]
pub struct GlobalModel {
    pub front: Part,
    pub central: Part,
    pub back: Part,
}

impl GlobalModel {
    fn split_model(&self) -> SplitModel {
        SplitModel {
            front: self.front.clone(),
            central: self.central.clone(),
            back: self.back.clone(),
        }
    }

    pub fn test_score(&self, dataset: &Dataset, test: &[usize], chunk: usize) -> Result<Score> {
        Ok(crate::protocol::evaluate_parts([&self.front, &self.central, &self.back], dataset, test, chunk)?
            .score())
    }
}

/// Runs `cfg.rounds` rounds (fewer if an exhaustive pool runs out).
pub fn run_simulation(
    dataset: Arc<Dataset>,
    partition: &Partition,
    model: &SplitModel,
    cfg: &SimConfig,
    mut on_round: impl FnMut(&RoundReport),
) -> Result<SimReport> {
    cfg.validate(partition.len())?;
    let test = partition.global_test();
    let mut global = GlobalModel {
        front: model.front.clone(),
        central: model.central.clone(),
        back: model.back.clone(),
    };
    let initial = global.test_score(&dataset, &test, cfg.eval_batch)?;
    let mut selector = ClientSelector::new(
        (0..partition.len()).collect(),
        cfg.selection,
        rng::stream(cfg.seed, rng::LABEL_SELECTION, 0),
    );
    let mut dropout_rng = rng::stream(cfg.seed, rng::LABEL_DROPOUT, 0);
    let mut tick = 0;
    let mut rounds = Vec::new();
    let mut ledger = WorkLedger::new();
    for round in 1..=cfg.rounds {
        let Some(selected) = selector.select(cfg.concurrent) else {
            break;
        };
        let drops: Vec<BTreeSet<usize>> = (0..cfg.epochs_per_round)
            .map(|_| {
                let survivors = sample_dropout(&selected, cfg.dropout, &mut dropout_rng);
                selected.iter().copied().filter(|c| !survivors.contains(c)).collect()
            })
            .collect();
        let report = match run_round(&dataset, partition, &global, &selected, &drops, tick, cfg) {
            Ok((next, round_ledger, mut report)) => {
                ledger.merge(round_ledger);
                if let Some(next) = next {
                    global = next;
                }
                tick = report.tick;
                report.round = round;
                report.global_test = global.test_score(&dataset, &test, cfg.eval_batch)?;
                report
            }
            Err(e) => {
                // A failed round leaves the global model as it was.
                tick += 1;
                RoundReport {
                    round,
                    tick,
                    selected: selected.clone(),
                    survivors: Vec::new(),
                    merge_counts: Vec::new(),
                    epochs: Vec::new(),
                    global_test: global.test_score(&dataset, &test, cfg.eval_batch)?,
                    survivors_identical: true,
                    personalized: Vec::new(),
                    error: Some(e.to_string()),
                }
            }
        };
        on_round(&report);
        rounds.push(report);
    }
    let final_score = rounds.last().map_or(initial, |r| r.global_test);
    Ok(SimReport {
        initial,
        rounds,
        final_score,
        ledger,
    })
}

fn run_round(
    dataset: &Arc<Dataset>,
    partition: &Partition,
    global: &GlobalModel,
    selected: &[usize],
    drops: &[BTreeSet<usize>],
    start_tick: u64,
    cfg: &SimConfig,
) -> Result<(Option<GlobalModel>, WorkLedger, RoundReport)> {
    let clients = selected
        .iter()
        .map(|&i| (i, partition.clients[i].clone(), partition.test_for(i).to_vec()))
        .collect();
    let mut system = PfslSystem::from_model(
        Arc::clone(dataset),
        Arc::clone(partition.validation()),
        clients,
        &global.split_model(),
        cfg.central_frozen_prefix,
        &cfg.settings,
        cfg.exec,
        cfg.eval_batch,
    )?;
    system.set_tick(start_tick);
    let mut epochs = Vec::new();
    let mut next = None;
    let mut survivors_identical = true;
    for dropped in drops {
        let report = system.run_global_epoch(dropped)?;
        if let Some((&first, rest)) = report.participants.split_first() {
            let a = system.pair(first).expect("participant exists");
            for &id in rest {
                let b = system.pair(id).expect("participant exists");
                survivors_identical &= a.client.back().params().bit_eq(b.client.back().params())
                    && a.server.central().params().bit_eq(b.server.central().params());
            }
            next = Some(GlobalModel {
                front: global.front.clone(),
                central: a.server.central().clone(),
                back: a.client.back().clone(),
            });
        }
        epochs.push(report);
    }
    let mut personalized = Vec::new();
    if cfg.personalize {
        system.begin_personalization()?;
        system.run_personalization(&cfg.phase)?;
        for p in system.pairs() {
            let acc = p.evaluate(dataset, p.client.test(), cfg.eval_batch)?.accuracy;
            personalized.push((p.id(), acc));
        }
    }
    let survivors = epochs.last().map(|e| e.participants.clone()).unwrap_or_default();
    Ok((
        next,
        system.ledger().clone(),
        RoundReport {
            round: 0,
            tick: system.tick(),
            selected: selected.to_vec(),
            survivors,
            merge_counts: epochs.iter().map(|e| e.participants.len()).collect(),
            epochs,
            global_test: Score {
                accuracy: 0.0,
                macro_f1: 0.0,
                loss: 0.0,
            },
            survivors_identical,
            personalized,
            error: None,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exhaustive_covers_pool_once() {
        let mut s = ClientSelector::new((0..1000).collect(), SelectionMode::Exhaustive, rng::stream(1, "t", 0));
        let mut seen = BTreeSet::new();
        let mut rounds = 0;
        while let Some(c) = s.select(10) {
            assert_eq!(c.len(), 10);
            seen.extend(c);
            rounds += 1;
        }
        assert_eq!(rounds, 100);
        assert_eq!(seen.len(), 1000);
    }

    #[test]
    fn full_pool_is_one_round() {
        let mut s = ClientSelector::new((0..7).collect(), SelectionMode::Exhaustive, rng::stream(1, "t", 0));
        assert_eq!(s.select(7).unwrap(), (0..7).collect::<Vec<_>>());
        assert!(s.select(7).is_none());
    }

    #[test]
    fn selection_is_seeded() {
        let pool: Vec<usize> = (0..50).collect();
        let a = select_round_clients(&pool, 5, &mut rng::stream(4, "t", 0));
        let b = select_round_clients(&pool, 5, &mut rng::stream(4, "t", 0));
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_extremes_and_rate() {
        let sel: Vec<usize> = (0..10).collect();
        let mut r = rng::stream(5, rng::LABEL_DROPOUT, 0);
        assert_eq!(sample_dropout(&sel, 0.0, &mut r), sel);
        let many: Vec<usize> = (0..10_000).collect();
        let frac = sample_dropout(&many, 0.5, &mut r).len() as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&frac), "survivor fraction {frac}");
    }
}
