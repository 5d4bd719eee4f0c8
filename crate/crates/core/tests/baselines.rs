mod common;

use std::collections::BTreeSet;

use common::*;
use pfsl_core::baselines::{run_baseline, BaselineConfig, BaselineKind};
use pfsl_core::data::{BatchCursor, ClientSplit, Dataset};
use pfsl_core::metrics::work_done;
use pfsl_core::models::desk_mlp;
use pfsl_core::nn::init_params;
use pfsl_core::protocol::ClientSettings;
use pfsl_core::rng;
use pfsl_core::split::{train_epoch, FreezeMode, Part, SplitConfig};
use pfsl_core::ExecMode;
use rand::seq::SliceRandom;

type Clients = Vec<(usize, ClientSplit, Vec<usize>)>;

fn pretrained() -> Part {
    let specs = desk_mlp(&[DIM], HIDDEN, CLASSES);
    let params = init_params(&specs, 31).unwrap();
    Part::new(specs, params).unwrap()
}

fn config(kind: BaselineKind, epochs: usize, s: ClientSettings) -> BaselineConfig {
    BaselineConfig {
        kind,
        epochs,
        settings: s,
        split: SplitConfig::default_for(pretrained().len()),
        exec: ExecMode::Sequential,
        eval_batch: 64,
    }
}

fn run(kind: BaselineKind, ds: &std::sync::Arc<Dataset>, clients: &Clients, epochs: usize, s: ClientSettings) -> Part {
    let rep = run_baseline(ds.clone(), &[0, 1, 2], clients, &pretrained(), &config(kind, epochs, s)).unwrap();
    rep.models[0].1.clone()
}

/// Monolithic training on one client's stream, seeded like a protocol client.
fn monolithic(ds: &Dataset, id: usize, train: &[usize], epochs: usize, s: &ClientSettings, start: &Part) -> Part {
    let mut part = start.clone();
    let mut r = rng::stream(s.seed, rng::LABEL_SHUFFLE, id as u64);
    let mut order = train.to_vec();
    order.shuffle(&mut r);
    let mut cursor = BatchCursor::new(order, r);
    for _ in 0..epochs {
        train_epoch(&mut part, ds, &mut cursor, train.len() / s.batch_size, s.batch_size, s.eta).unwrap();
    }
    part
}

#[test]
fn single_client_sl_equals_sflv2() {
    let ds = blobs(60, 1);
    let c = clients(&[120], 0);
    let s = settings(0.05, 16);
    let sl = run(BaselineKind::Sl, &ds, &c, 3, s);
    let v2 = run(BaselineKind::Sflv2, &ds, &c, 3, s);
    assert!(sl.params().bit_eq(v2.params()));
}

#[test]
fn single_client_split_and_fl_runs_equal_monolithic_training() {
    let ds = blobs(60, 2);
    let c = clients(&[120], 0);
    let s = settings(0.05, 16);
    let mono = monolithic(&ds, 0, &c[0].1.train, 3, &s, &pretrained());
    for kind in [BaselineKind::Fl, BaselineKind::Sl, BaselineKind::Sflv1] {
        let got = run(kind, &ds, &c, 3, s);
        let diff = got.params().max_abs_diff(mono.params());
        assert!(diff < 1e-12, "{kind:?}: {diff:e}");
    }
}

#[test]
fn fl_round_is_the_mean_of_local_runs() {
    let ds = blobs(80, 3);
    let c = clients(&[100, 140], 0);
    let s = settings(0.05, 16);
    let got = run(BaselineKind::Fl, &ds, &c, 1, s);
    let a = monolithic(&ds, 0, &c[0].1.train, 1, &s, &pretrained());
    let b = monolithic(&ds, 1, &c[1].1.train, 1, &s, &pretrained());
    for ((g, x), y) in got.params().scalars().zip(a.params().scalars()).zip(b.params().scalars()) {
        assert!((g - (x + y) / 2.0).abs() < 1e-12);
    }
}

#[test]
fn fl_tl_keeps_the_frozen_prefix() {
    let ds = blobs(60, 4);
    let c = clients(&[90, 90], 0);
    let s = settings(0.1, 16);
    let got = run(BaselineKind::FlTl, &ds, &c, 2, s);
    let cfg = SplitConfig::default_for(pretrained().len());
    let k = cfg.cut1 + cfg.central_frozen_prefix;
    let before = pretrained().freeze(FreezeMode::Prefix(k)).unwrap();
    for l in 0..k {
        for (a, b) in got.params()[l].iter().zip(&before.params()[l]) {
            assert!(a.bit_eq(b));
        }
    }
    assert!(!got.params().bit_eq(before.params()));
}

#[test]
fn sequential_split_learning_depends_on_visit_order() {
    let ds = blobs(80, 5);
    let s = settings(0.1, 16);
    let forward = clients(&[100, 100], 0);
    let mut swapped = forward.clone();
    swapped[0].1.train = forward[1].1.train.clone();
    swapped[1].1.train = forward[0].1.train.clone();
    let a = run(BaselineKind::Sl, &ds, &forward, 1, s);
    let b = run(BaselineKind::Sl, &ds, &swapped, 1, s);
    assert!(!a.params().bit_eq(b.params()));
}

#[test]
fn fl_ledger_scales_with_local_data_while_pfsl_is_flat() {
    let ds = blobs(800, 6);
    let c = clients(&[2000, 150, 150], 0);
    let s = settings(0.01, 64);
    let rep = run_baseline(ds.clone(), &[0, 1], &c, &pretrained(), &config(BaselineKind::Fl, 2, s)).unwrap();
    let big = rep.ledger.get(0).unwrap();
    let small = rep.ledger.get(1).unwrap();
    assert_eq!((big.iters_per_epoch, small.iters_per_epoch), (31, 2));
    assert_eq!(big.o_i / small.o_i, 15.5);
    assert_eq!(big.c_i, small.c_i);

    let m = model(7);
    let mut sys = system(&ds, (0..40).collect(), c, &m, &s, ExecMode::Sequential);
    for _ in 0..2 {
        sys.run_global_epoch(&BTreeSet::new()).unwrap();
    }
    let entries: Vec<_> = sys.ledger().iter().map(|(_, e)| (e.iters_per_epoch, e.o_i, e.batch_ops)).collect();
    assert_eq!(entries.len(), 3);
    assert!(entries.windows(2).all(|w| w[0] == w[1]));
    let p = &sys.pairs()[0];
    assert_eq!(entries[0].1, work_done(2, 2, p.c_i));
}

#[test]
fn work_done_spot_value() {
    assert_eq!(work_done(25, 2, 15.5), 775.0);
}
