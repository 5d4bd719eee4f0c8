#![allow(dead_code)]

use std::sync::Arc;

use pfsl_core::data::{make_blobs, ClientSplit, Dataset, DomainSpec};
use pfsl_core::models::desk_mlp;
use pfsl_core::nn::init_params;
use pfsl_core::protocol::{ClientSettings, PfslSystem};
use pfsl_core::split::{split, SplitConfig, SplitModel};
use pfsl_core::ExecMode;

pub const DIM: usize = 4;
pub const CLASSES: usize = 3;
pub const HIDDEN: usize = 6;

/// Class-major blobs with `per_class` samples of every class.
pub fn blobs(per_class: usize, seed: u64) -> Arc<Dataset> {
    let spec = DomainSpec::random(DIM, CLASSES, 3.0, 1.0, seed);
    Arc::new(make_blobs(&spec, &[per_class; CLASSES], seed).unwrap())
}

pub fn model(seed: u64) -> SplitModel {
    let specs = desk_mlp(&[DIM], HIDDEN, CLASSES);
    let cfg = SplitConfig::default_for(specs.len());
    let params = init_params(&specs, seed).unwrap();
    split(&specs, params, &cfg).unwrap()
}

pub fn frozen_prefix() -> usize {
    SplitConfig::default_for(desk_mlp(&[DIM], HIDDEN, CLASSES).len()).central_frozen_prefix
}

pub fn client(train: Vec<usize>, local_val: Vec<usize>) -> ClientSplit {
    ClientSplit {
        train,
        local_val,
        test: None,
        histogram: Vec::new(),
        prominent: Vec::new(),
        domain: 0,
    }
}

/// Clients over consecutive, disjoint index ranges of the given sizes.
/// Every client's ids follow its position.
pub fn clients(sizes: &[usize], start: usize) -> Vec<(usize, ClientSplit, Vec<usize>)> {
    let mut at = start;
    sizes
        .iter()
        .enumerate()
        .map(|(id, &n)| {
            let train: Vec<usize> = (at..at + n).collect();
            at += n;
            (id, client(train, Vec::new()), Vec::new())
        })
        .collect()
}

pub fn settings(eta: f64, batch_size: usize) -> ClientSettings {
    ClientSettings {
        eta,
        batch_size,
        seed: 99,
    }
}

pub fn system(
    dataset: &Arc<Dataset>,
    validation: Vec<usize>,
    clients: Vec<(usize, ClientSplit, Vec<usize>)>,
    model: &SplitModel,
    settings: &ClientSettings,
    exec: ExecMode,
) -> PfslSystem {
    PfslSystem::from_model(
        Arc::clone(dataset),
        Arc::new(validation),
        clients,
        model,
        frozen_prefix(),
        settings,
        exec,
        64,
    )
    .unwrap()
}
