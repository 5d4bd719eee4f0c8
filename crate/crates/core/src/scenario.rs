//! Desk-scale experiment settings: synthetic target and pretext domains, the
//! per-setting partition and the default model stack.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{
    make_blobs, partition_s1, partition_s2, partition_s3, partition_s5, partition_two_domains, ClientSplit,
    Dataset, DomainSpec, Partition, PartitionSizes, SkewSpec,
};
use crate::error::{Error, Result};
use crate::models::desk_mlp;
use crate::nn::LayerSpec;
use crate::rng;
use crate::split::{pretrain, Part, SplitConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// Equal, small i.i.d. client datasets.
    S1,
    /// Label-skewed clients with per-client test sets.
    S2,
    /// One large client among small ones.
    S3,
    /// Equal, large i.i.d. client datasets.
    S4,
    /// Large client pool with few samples each, visited in rounds.
    S5,
    /// Two domains with shifted means and spreads.
    S6,
}

impl Setting {
    pub const ALL: [Setting; 6] = [Setting::S1, Setting::S2, Setting::S3, Setting::S4, Setting::S5, Setting::S6];

    pub fn as_str(self) -> &'static str {
        match self {
            Setting::S1 => "s1",
            Setting::S2 => "s2",
            Setting::S3 => "s3",
            Setting::S4 => "s4",
            Setting::S5 => "s5",
            Setting::S6 => "s6",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Setting::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown setting {s:?}, expected s1..s6")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretextSpec {
    pub per_class: usize,
    /// Standard deviation of the perturbation applied to every target class
    /// mean to obtain the pretext means.
    pub mean_shift: f64,
    pub epochs: usize,
    pub eta: f64,
    pub batch_size: usize,
}

impl Default for PretextSpec {
    fn default() -> Self {
        PretextSpec {
            per_class: 300,
            mean_shift: 1.0,
            epochs: 20,
            eta: 0.05,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSpec {
    pub setting: Setting,
    /// Client count; in S5 the number of concurrent clients per round, in
    /// S6 the total over both domains.
    pub clients: usize,
    /// Training samples per (small) client.
    pub datapoints: usize,
    /// Training samples of the large client in S3.
    pub large_datapoints: usize,
    /// Client pool size in S5.
    pub pool: usize,
    pub dim: usize,
    pub classes: usize,
    pub separation: f64,
    pub std: f64,
    pub hidden: usize,
    /// Second-domain mean offset and spread scale in S6.
    pub domain_shift: f64,
    pub domain_std_scale: f64,
    pub sizes: PartitionSizes,
    pub skew: SkewSpec,
    pub pretext: PretextSpec,
    /// Cut points; `None` uses the default for the model depth.
    pub split: Option<SplitConfig>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            setting: Setting::S1,
            clients: 10,
            datapoints: 500,
            large_datapoints: 2000,
            pool: 1000,
            dim: 8,
            classes: 10,
            separation: 4.0,
            std: 1.0,
            hidden: 32,
            domain_shift: 1.5,
            domain_std_scale: 1.5,
            sizes: PartitionSizes::default(),
            skew: SkewSpec::default(),
            pretext: PretextSpec::default(),
            split: None,
        }
    }
}

/// A built setting: data, partition and model stack.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub dataset: Arc<Dataset>,
    pub partition: Partition,
    pub pretext: Dataset,
    pub specs: Vec<LayerSpec>,
    pub split: SplitConfig,
}

impl Scenario {
    /// `(id, split, test indices)` for every client in the partition.
    pub fn clients(&self) -> Vec<(usize, ClientSplit, Vec<usize>)> {
        self.partition
            .clients
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.clone(), self.partition.test_for(i).to_vec()))
            .collect()
    }

    /// Trains the full stack on the pretext domain.
    pub fn pretrain(&self, seed: u64) -> Result<Part> {
        let p = &self.spec.pretext;
        pretrain(
            &self.specs,
            &self.pretext,
            &TrainConfig {
                epochs: p.epochs,
                eta: p.eta,
                batch_size: p.batch_size,
                seed: rng::derive_seed(seed, rng::LABEL_PRETRAIN, 0),
            },
        )
    }
}

fn uniform_demand(n: usize, classes: usize) -> usize {
    n / classes + 1
}

fn skew_demand(n: usize, prominent: bool, skew: &SkewSpec, classes: usize) -> usize {
    let prom = ((n as f64) * skew.prominent_fraction).round() as usize;
    if prominent {
        prom.min(n) / skew.prominent_classes + 1
    } else {
        (n - prom.min(n)) / (classes - skew.prominent_classes).max(1) + 1
    }
}

/// Upper bound on the samples the partitioner draws from each class, plus
/// slack.
fn per_class_demand(spec: &ScenarioSpec, val: usize) -> Vec<usize> {
    let c = spec.classes;
    let s = &spec.sizes;
    let mut demand = vec![uniform_demand(val, c); c];
    let add_uniform = |demand: &mut Vec<usize>, n: usize| {
        for d in demand.iter_mut() {
            *d += uniform_demand(n, c);
        }
    };
    match spec.setting {
        Setting::S1 | Setting::S4 => {
            add_uniform(&mut demand, s.shared_test);
            for _ in 0..spec.clients {
                add_uniform(&mut demand, spec.datapoints);
                add_uniform(&mut demand, s.local_val);
            }
        }
        Setting::S3 => {
            add_uniform(&mut demand, s.shared_test);
            add_uniform(&mut demand, spec.large_datapoints);
            add_uniform(&mut demand, s.local_val);
            for _ in 0..spec.clients {
                add_uniform(&mut demand, spec.datapoints);
                add_uniform(&mut demand, s.local_val);
            }
        }
        Setting::S5 => {
            add_uniform(&mut demand, s.shared_test);
            let rest = spec.pool * (spec.datapoints + s.local_val);
            add_uniform(&mut demand, rest + rest / 10);
        }
        Setting::S2 => {
            let k = spec.skew.prominent_classes;
            for i in 0..spec.clients {
                for (cls, d) in demand.iter_mut().enumerate() {
                    let prominent = (0..k).any(|j| (i * k + j) % c == cls);
                    for n in [spec.datapoints, s.local_val, s.client_test] {
                        *d += skew_demand(n, prominent, &spec.skew, c);
                    }
                }
            }
        }
        Setting::S6 => unreachable!("two-domain data is sized by its partitioner"),
    }
    demand.iter().map(|d| d + d / 20 + 5).collect()
}

fn target_domain(spec: &ScenarioSpec, seed: u64) -> DomainSpec {
    DomainSpec::random(
        spec.dim,
        spec.classes,
        spec.separation,
        spec.std,
        rng::derive_seed(seed, rng::LABEL_DATA, 0),
    )
}

/// Pretext domain: the target's class means, each moved by Gaussian noise.
/// Related to the target but not identical, like a public pretraining set.
fn pretext_domain(target: &DomainSpec, shift: f64, seed: u64) -> DomainSpec {
    let noise = DomainSpec::random(
        target.dim,
        target.classes,
        shift,
        target.std,
        rng::derive_seed(seed, rng::LABEL_PRETEXT, 0),
    );
    DomainSpec {
        means: target
            .means
            .iter()
            .zip(&noise.means)
            .map(|(m, n)| m.iter().zip(n).map(|(a, b)| a + b).collect())
            .collect(),
        ..target.clone()
    }
}

pub fn build_scenario(spec: &ScenarioSpec, seed: u64) -> Result<Scenario> {
    if spec.classes < 2 || spec.dim == 0 || spec.hidden == 0 {
        return Err(Error::config("need at least two classes, one input dimension and one hidden unit"));
    }
    if spec.setting == Setting::S2 && spec.skew.prominent_classes >= spec.classes {
        return Err(Error::config("prominent classes must be fewer than all classes"));
    }
    let target = target_domain(spec, seed);
    let sizes = &spec.sizes;
    let (dataset, partition) = match spec.setting {
        Setting::S6 => {
            if spec.clients < 2 {
                return Err(Error::config("the two-domain setting needs at least two clients"));
            }
            let b = target.shifted(spec.domain_shift, spec.domain_std_scale);
            partition_two_domains(&target, &b, spec.clients / 2, spec.datapoints, seed, sizes)?
        }
        setting => {
            let total_train = match setting {
                Setting::S3 => spec.large_datapoints + spec.clients * spec.datapoints,
                Setting::S5 => spec.pool * spec.datapoints,
                _ => spec.clients * spec.datapoints,
            };
            let val = ((total_train as f64) * sizes.val_fraction).round().max(1.0) as usize;
            let counts = per_class_demand(spec, val);
            let ds = make_blobs(&target, &counts, rng::derive_seed(seed, rng::LABEL_DATA, 1))?;
            let p = match setting {
                Setting::S1 | Setting::S4 => partition_s1(&ds, spec.clients, spec.datapoints, seed, sizes)?,
                Setting::S2 => partition_s2(&ds, spec.clients, spec.datapoints, &spec.skew, seed, sizes)?,
                Setting::S3 => {
                    partition_s3(&ds, spec.clients, spec.datapoints, spec.large_datapoints, seed, sizes)?
                }
                Setting::S5 => partition_s5(&ds, spec.pool, spec.datapoints, seed, sizes)?,
                Setting::S6 => unreachable!(),
            };
            (ds, p)
        }
    };
    let pretext = make_blobs(
        &pretext_domain(&target, spec.pretext.mean_shift, seed),
        &vec![spec.pretext.per_class; spec.classes],
        rng::derive_seed(seed, rng::LABEL_PRETEXT, 1),
    )?;
    let specs = desk_mlp(dataset.sample_shape(), spec.hidden, spec.classes);
    let split = spec.split.unwrap_or_else(|| SplitConfig::default_for(specs.len()));
    split.validate(specs.len())?;
    Ok(Scenario {
        spec: spec.clone(),
        dataset: Arc::new(dataset),
        partition,
        pretext,
        specs,
        split,
    })
}
