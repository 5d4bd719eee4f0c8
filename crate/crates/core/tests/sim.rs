use std::sync::Arc;

use pfsl_core::protocol::{ClientSettings, PhaseConfig};
use pfsl_core::scenario::{build_scenario, Scenario, ScenarioSpec, Setting};
use pfsl_core::sim::{run_simulation, SelectionMode, SimConfig, SimReport};
use pfsl_core::split::{split, SplitModel};
use pfsl_core::ExecMode;

fn scenario() -> (Scenario, SplitModel) {
    let mut spec = ScenarioSpec {
        setting: Setting::S5,
        clients: 5,
        pool: 40,
        datapoints: 20,
        ..Default::default()
    };
    spec.sizes.shared_test = 300;
    spec.pretext.per_class = 60;
    spec.pretext.epochs = 5;
    let sc = build_scenario(&spec, 77).unwrap();
    let model = split(&sc.specs, sc.pretrain(77).unwrap().into_params(), &sc.split).unwrap();
    (sc, model)
}

fn config(dropout: f64, rounds: usize, exec: ExecMode) -> SimConfig {
    SimConfig {
        concurrent: 5,
        rounds,
        epochs_per_round: 1,
        dropout,
        seed: 5,
        selection: SelectionMode::Exhaustive,
        phase: PhaseConfig::default(),
        personalize: false,
        settings: ClientSettings {
            eta: 0.1,
            batch_size: 10,
            seed: 5,
        },
        central_frozen_prefix: 0,
        exec,
        eval_batch: 128,
    }
}

fn simulate(sc: &Scenario, model: &SplitModel, cfg: &SimConfig) -> SimReport {
    run_simulation(Arc::clone(&sc.dataset), &sc.partition, model, cfg, |_| {}).unwrap()
}

fn fingerprint(r: &SimReport) -> Vec<(Vec<usize>, Vec<usize>, u64)> {
    r.rounds
        .iter()
        .map(|x| (x.selected.clone(), x.survivors.clone(), x.global_test.accuracy.to_bits()))
        .collect()
}

#[test]
fn zero_rounds_keep_the_initial_model() {
    let (sc, m) = scenario();
    let r = simulate(&sc, &m, &config(0.5, 0, ExecMode::Sequential));
    assert!(r.rounds.is_empty());
    assert_eq!(r.final_score, r.initial);
}

#[test]
fn exhaustive_rounds_visit_every_client_once() {
    let (sc, m) = scenario();
    let r = simulate(&sc, &m, &config(0.0, 8, ExecMode::Sequential));
    let mut seen: Vec<usize> = r.rounds.iter().flat_map(|x| x.selected.clone()).collect();
    seen.sort();
    assert_eq!(seen, (0..40).collect::<Vec<_>>());
    assert!(r.rounds.iter().all(|x| x.error.is_none()));
}

#[test]
fn dropout_runs_keep_survivors_identical() {
    let (sc, m) = scenario();
    let r = simulate(&sc, &m, &config(0.5, 8, ExecMode::Sequential));
    assert!(r.rounds.iter().all(|x| x.survivors_identical));
    let dropped: usize = r.rounds.iter().map(|x| x.selected.len() - x.survivors.len()).sum();
    assert!(dropped > 0 && dropped < 40, "{dropped} of 40 dropped");
}

#[test]
fn reruns_and_worker_counts_are_deterministic() {
    let (sc, m) = scenario();
    let a = simulate(&sc, &m, &config(0.5, 6, ExecMode::Sequential));
    let b = simulate(&sc, &m, &config(0.5, 6, ExecMode::Sequential));
    let c = pfsl_core::exec::with_workers(4, || simulate(&sc, &m, &config(0.5, 6, ExecMode::Parallel)));
    assert_eq!(fingerprint(&a), fingerprint(&b));
    assert_eq!(fingerprint(&a), fingerprint(&c));
    assert_eq!(a.ledger, c.ledger);
}

#[test]
fn dropout_probability_out_of_range_is_rejected() {
    let (sc, m) = scenario();
    let cfg = config(1.0, 1, ExecMode::Sequential);
    assert!(run_simulation(Arc::clone(&sc.dataset), &sc.partition, &m, &cfg, |_| {}).is_err());
}
