//! Per-client index sets.  Every partitioner draws without replacement from
//! per-class pools, so train, validation and test sets are disjoint by
//! construction and sizes are exact.

use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::data::{make_blobs, Dataset, DomainSpec};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSizes {
    /// Shared validation size as a fraction of all client training samples.
    pub val_fraction: f64,
    /// Common test set size for settings that share one.
    pub shared_test: usize,
    /// Per-client test size for settings where each client is judged on its
    /// own distribution.
    pub client_test: usize,
    /// Per-client validation size used for early stopping.
    pub local_val: usize,
}

impl Default for PartitionSizes {
    fn default() -> Self {
        PartitionSizes {
            val_fraction: 0.1,
            shared_test: 2000,
            client_test: 200,
            local_val: 100,
        }
    }
}

/// Label skew: each client over-represents `prominent_classes` classes, which
/// together hold `prominent_fraction` of its samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkewSpec {
    pub prominent_classes: usize,
    pub prominent_fraction: f64,
}

impl Default for SkewSpec {
    fn default() -> Self {
        SkewSpec {
            prominent_classes: 3,
            prominent_fraction: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientSplit {
    pub train: Vec<usize>,
    pub local_val: Vec<usize>,
    /// Own test set; `None` means the partition's shared test set applies.
    pub test: Option<Vec<usize>>,
    /// Class histogram of `train`.
    pub histogram: Vec<usize>,
    pub prominent: Vec<usize>,
    pub domain: usize,
}

#[derive(Debug, Clone)]
pub struct Partition {
    pub clients: Vec<ClientSplit>,
    validation: Arc<Vec<usize>>,
    shared_test: Option<Vec<usize>>,
    classes: usize,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// The common validation set; every client sees the same list.
    pub fn validation(&self) -> &Arc<Vec<usize>> {
        &self.validation
    }

    pub fn shared_test(&self) -> Option<&[usize]> {
        self.shared_test.as_deref()
    }

    pub fn test_for(&self, client: usize) -> &[usize] {
        self.clients[client]
            .test
            .as_deref()
            .or(self.shared_test.as_deref())
            .unwrap_or(&[])
    }

    /// Test set for a model not tied to a client: the shared one, or the
    /// union of per-client tests.
    pub fn global_test(&self) -> Vec<usize> {
        match &self.shared_test {
            Some(t) => t.clone(),
            None => self
                .clients
                .iter()
                .flat_map(|c| c.test.clone().unwrap_or_default())
                .collect(),
        }
    }

    /// `true` when no index appears in two sets.
    pub fn is_disjoint(&self, dataset_len: usize) -> bool {
        let mut seen = vec![false; dataset_len];
        let mut mark = |set: &[usize]| {
            set.iter().all(|&i| {
                let fresh = !seen[i];
                seen[i] = true;
                fresh
            })
        };
        let mut ok = mark(&self.validation);
        if let Some(t) = &self.shared_test {
            ok &= mark(t);
        }
        for c in &self.clients {
            ok &= mark(&c.train);
            ok &= mark(&c.local_val);
            if let Some(t) = &c.test {
                ok &= mark(t);
            }
        }
        ok
    }
}

struct Pools {
    per_class: Vec<Vec<usize>>,
}

impl Pools {
    fn new(dataset: &Dataset, filter: impl Fn(usize) -> bool, rng: &mut Rng) -> Self {
        let mut per_class = vec![Vec::new(); dataset.classes()];
        for (i, &l) in dataset.labels().iter().enumerate() {
            if filter(i) {
                per_class[l].push(i);
            }
        }
        for p in &mut per_class {
            p.shuffle(rng);
        }
        Pools { per_class }
    }

    fn take(&mut self, class: usize, n: usize) -> Result<Vec<usize>> {
        let pool = &mut self.per_class[class];
        if pool.len() < n {
            return Err(Error::config(format!(
                "class {class} exhausted: need {n}, {} left",
                pool.len()
            )));
        }
        Ok(pool.split_off(pool.len() - n))
    }

    fn take_counts(&mut self, counts: &[usize], rng: &mut Rng) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(counts.iter().sum());
        for (c, &n) in counts.iter().enumerate() {
            out.extend(self.take(c, n)?);
        }
        out.shuffle(rng);
        Ok(out)
    }

    fn drain_shuffled(&mut self, rng: &mut Rng) -> Vec<usize> {
        let mut all: Vec<usize> = self.per_class.iter_mut().flat_map(std::mem::take).collect();
        all.sort_unstable();
        all.shuffle(rng);
        all
    }
}

/// Spreads `n` over `classes` as evenly as possible; leftover units go to
/// randomly chosen classes.
fn spread(n: usize, classes: &[usize], total_classes: usize, rng: &mut Rng) -> Vec<usize> {
    let mut counts = vec![0; total_classes];
    if classes.is_empty() {
        return counts;
    }
    let base = n / classes.len();
    for &c in classes {
        counts[c] = base;
    }
    for &c in classes.choose_multiple(rng, n % classes.len()) {
        counts[c] += 1;
    }
    counts
}

fn uniform_counts(n: usize, classes: usize, rng: &mut Rng) -> Vec<usize> {
    let all: Vec<usize> = (0..classes).collect();
    spread(n, &all, classes, rng)
}

fn skewed_counts(n: usize, prominent: &[usize], fraction: f64, classes: usize, rng: &mut Rng) -> Vec<usize> {
    let prom_total = ((n as f64) * fraction).round() as usize;
    let others: Vec<usize> = (0..classes).filter(|c| !prominent.contains(c)).collect();
    let (prom_total, rest) = if others.is_empty() {
        (n, 0)
    } else {
        (prom_total.min(n), n - prom_total.min(n))
    };
    let a = spread(prom_total, prominent, classes, rng);
    let b = spread(rest, &others, classes, rng);
    a.iter().zip(&b).map(|(x, y)| x + y).collect()
}

fn validation_size(total_train: usize, sizes: &PartitionSizes) -> Result<usize> {
    if !(0.0..1.0).contains(&sizes.val_fraction) {
        return Err(Error::config("val_fraction must be in [0, 1)"));
    }
    Ok(((total_train as f64) * sizes.val_fraction).round().max(1.0) as usize)
}

fn check_clients(n_clients: usize, d: usize) -> Result<()> {
    if n_clients == 0 || d == 0 {
        return Err(Error::config("need at least one client with at least one sample"));
    }
    Ok(())
}

fn iid_client(
    pools: &mut Pools,
    dataset: &Dataset,
    d: usize,
    sizes: &PartitionSizes,
    own_test: bool,
    domain: usize,
    rng: &mut Rng,
) -> Result<ClientSplit> {
    let c = dataset.classes();
    let train = pools.take_counts(&uniform_counts(d, c, rng), rng)?;
    let local_val = pools.take_counts(&uniform_counts(sizes.local_val, c, rng), rng)?;
    let test = if own_test {
        Some(pools.take_counts(&uniform_counts(sizes.client_test, c, rng), rng)?)
    } else {
        None
    };
    Ok(ClientSplit {
        histogram: dataset.class_histogram(&train),
        train,
        local_val,
        test,
        prominent: Vec::new(),
        domain,
    })
}

/// Equal small `d` per client, stratified uniform class mix, shared test.
pub fn partition_s1(
    dataset: &Dataset,
    n_clients: usize,
    d: usize,
    seed: u64,
    sizes: &PartitionSizes,
) -> Result<Partition> {
    check_clients(n_clients, d)?;
    let mut r = rng::stream(seed, rng::LABEL_PARTITION, 1);
    let mut pools = Pools::new(dataset, |_| true, &mut r);
    let c = dataset.classes();
    let validation = pools.take_counts(&uniform_counts(validation_size(n_clients * d, sizes)?, c, &mut r), &mut r)?;
    let test = pools.take_counts(&uniform_counts(sizes.shared_test, c, &mut r), &mut r)?;
    let clients = (0..n_clients)
        .map(|_| iid_client(&mut pools, dataset, d, sizes, false, 0, &mut r))
        .collect::<Result<_>>()?;
    Ok(Partition {
        clients,
        validation: Arc::new(validation),
        shared_test: Some(test),
        classes: c,
    })
}

/// Label-skewed clients.  Client `i` is prominent in classes
/// `i*k .. i*k+k (mod C)`; its test and local validation sets follow the
/// same skew.
pub fn partition_s2(
    dataset: &Dataset,
    n_clients: usize,
    d: usize,
    skew: &SkewSpec,
    seed: u64,
    sizes: &PartitionSizes,
) -> Result<Partition> {
    check_clients(n_clients, d)?;
    let c = dataset.classes();
    if skew.prominent_classes == 0 || skew.prominent_classes > c {
        return Err(Error::config("prominent class count must be in [1, C]"));
    }
    if !(0.0..=1.0).contains(&skew.prominent_fraction) {
        return Err(Error::config("prominent fraction must be in [0, 1]"));
    }
    let mut r = rng::stream(seed, rng::LABEL_PARTITION, 2);
    let mut pools = Pools::new(dataset, |_| true, &mut r);
    let validation = pools.take_counts(&uniform_counts(validation_size(n_clients * d, sizes)?, c, &mut r), &mut r)?;
    let mut clients = Vec::with_capacity(n_clients);
    for i in 0..n_clients {
        let k = skew.prominent_classes;
        let prominent: Vec<usize> = (0..k).map(|j| (i * k + j) % c).collect();
        let f = skew.prominent_fraction;
        let train = pools.take_counts(&skewed_counts(d, &prominent, f, c, &mut r), &mut r)?;
        let local_val = pools.take_counts(&skewed_counts(sizes.local_val, &prominent, f, c, &mut r), &mut r)?;
        let test = pools.take_counts(&skewed_counts(sizes.client_test, &prominent, f, c, &mut r), &mut r)?;
        clients.push(ClientSplit {
            histogram: dataset.class_histogram(&train),
            train,
            local_val,
            test: Some(test),
            prominent,
            domain: 0,
        });
    }
    Ok(Partition {
        clients,
        validation: Arc::new(validation),
        shared_test: None,
        classes: c,
    })
}

/// One large client (id 0) with `d_large` samples and `n_small` clients with
/// `d_small` each, all i.i.d., shared test.
pub fn partition_s3(
    dataset: &Dataset,
    n_small: usize,
    d_small: usize,
    d_large: usize,
    seed: u64,
    sizes: &PartitionSizes,
) -> Result<Partition> {
    check_clients(n_small + 1, d_small.min(d_large))?;
    let mut r = rng::stream(seed, rng::LABEL_PARTITION, 3);
    let mut pools = Pools::new(dataset, |_| true, &mut r);
    let c = dataset.classes();
    let total = d_large + n_small * d_small;
    let validation = pools.take_counts(&uniform_counts(validation_size(total, sizes)?, c, &mut r), &mut r)?;
    let test = pools.take_counts(&uniform_counts(sizes.shared_test, c, &mut r), &mut r)?;
    let mut clients = vec![iid_client(&mut pools, dataset, d_large, sizes, false, 0, &mut r)?];
    for _ in 0..n_small {
        clients.push(iid_client(&mut pools, dataset, d_small, sizes, false, 0, &mut r)?);
    }
    Ok(Partition {
        clients,
        validation: Arc::new(validation),
        shared_test: Some(test),
        classes: c,
    })
}

/// Large pool of clients, each with `d` samples drawn at random (uniform in
/// expectation) and unique to it.  Shared validation and test sets are
/// carved out first.
pub fn partition_s5(
    dataset: &Dataset,
    pool: usize,
    d: usize,
    seed: u64,
    sizes: &PartitionSizes,
) -> Result<Partition> {
    check_clients(pool, d)?;
    let mut r = rng::stream(seed, rng::LABEL_PARTITION, 5);
    let mut pools = Pools::new(dataset, |_| true, &mut r);
    let c = dataset.classes();
    let validation = pools.take_counts(&uniform_counts(validation_size(pool * d, sizes)?, c, &mut r), &mut r)?;
    let test = pools.take_counts(&uniform_counts(sizes.shared_test, c, &mut r), &mut r)?;
    let rest = pools.drain_shuffled(&mut r);
    let need = pool * (d + sizes.local_val);
    if rest.len() < need {
        return Err(Error::config(format!(
            "{pool} clients x ({d} train + {} validation) need {need} samples, only {} remain",
            sizes.local_val,
            rest.len()
        )));
    }
    let clients = rest
        .chunks_exact(d + sizes.local_val)
        .take(pool)
        .map(|chunk| {
            let train = chunk[..d].to_vec();
            ClientSplit {
                histogram: dataset.class_histogram(&train),
                train,
                local_val: chunk[d..].to_vec(),
                test: None,
                prominent: Vec::new(),
                domain: 0,
            }
        })
        .collect();
    Ok(Partition {
        clients,
        validation: Arc::new(validation),
        shared_test: Some(test),
        classes: c,
    })
}

/// Two synthetic domains: clients `0..n` sample domain A, `n..2n` domain B.
/// Each client is tested on its own domain; the shared validation set is
/// split evenly between the two.
pub fn partition_two_domains(
    spec_a: &DomainSpec,
    spec_b: &DomainSpec,
    n_per_domain: usize,
    d: usize,
    seed: u64,
    sizes: &PartitionSizes,
) -> Result<(Dataset, Partition)> {
    check_clients(n_per_domain, d)?;
    if spec_a.classes != spec_b.classes || spec_a.dim != spec_b.dim {
        return Err(Error::config("domains must share classes and dimensionality"));
    }
    let c = spec_a.classes;
    let val = validation_size(2 * n_per_domain * d, sizes)?;
    let per_domain = n_per_domain * (d + sizes.local_val + sizes.client_test) + val.div_ceil(2);
    let per_class = (per_domain.div_ceil(c) * 6) / 5 + 10;
    let a = make_blobs(spec_a, &vec![per_class; c], rng::derive_seed(seed, "domain", 0))?;
    let split_at = a.len();
    let b = make_blobs(spec_b, &vec![per_class; c], rng::derive_seed(seed, "domain", 1))?;
    let dataset = a.concat(b)?;

    let mut r = rng::stream(seed, rng::LABEL_PARTITION, 6);
    let mut pools = [
        Pools::new(&dataset, |i| i < split_at, &mut r),
        Pools::new(&dataset, |i| i >= split_at, &mut r),
    ];
    let mut validation = pools[0].take_counts(&uniform_counts(val / 2, c, &mut r), &mut r)?;
    validation.extend(pools[1].take_counts(&uniform_counts(val - val / 2, c, &mut r), &mut r)?);
    let mut clients = Vec::with_capacity(2 * n_per_domain);
    for i in 0..2 * n_per_domain {
        let domain = i / n_per_domain;
        clients.push(iid_client(&mut pools[domain], &dataset, d, sizes, true, domain, &mut r)?);
    }
    let partition = Partition {
        clients,
        validation: Arc::new(validation),
        shared_test: None,
        classes: c,
    };
    Ok((dataset, partition))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(per_class: usize) -> Dataset {
        let spec = DomainSpec::random(4, 10, 3.0, 1.0, 2);
        make_blobs(&spec, &[per_class; 10], 3).unwrap()
    }

    fn small_sizes() -> PartitionSizes {
        PartitionSizes {
            val_fraction: 0.1,
            shared_test: 200,
            client_test: 100,
            local_val: 20,
        }
    }

    #[test]
    fn s1_sizes_histograms_and_disjointness() {
        let ds = blobs(300);
        let p = partition_s1(&ds, 10, 150, 7, &small_sizes()).unwrap();
        assert_eq!(p.len(), 10);
        assert!(p.clients.iter().all(|c| c.train.len() == 150));
        assert_eq!(p.validation().len(), 150);
        assert!(p.is_disjoint(ds.len()));
        for c in &p.clients {
            for &h in &c.histogram {
                assert!((12..=18).contains(&h), "histogram {:?}", c.histogram);
            }
        }
    }

    #[test]
    fn s2_prominent_classes_rotate_and_tests_follow_train_skew() {
        let ds = blobs(1000);
        let p = partition_s2(&ds, 10, 500, &SkewSpec::default(), 7, &small_sizes()).unwrap();
        assert!(p.is_disjoint(ds.len()));
        for w in p.clients.windows(2) {
            assert_ne!(w[0].prominent, w[1].prominent);
        }
        for c in &p.clients {
            let th = ds.class_histogram(c.test.as_ref().unwrap());
            for (k, (&tr, &te)) in c.histogram.iter().zip(&th).enumerate() {
                let ftrain = tr as f64 / 500.0;
                let ftest = te as f64 / 100.0;
                assert!((ftrain - ftest).abs() <= 0.1, "class {k}: {ftrain} vs {ftest}");
            }
            let prom: usize = c.prominent.iter().map(|&k| c.histogram[k]).sum();
            assert_eq!(prom, 350);
        }
    }

    #[test]
    fn s2_degenerate_fraction_is_uniform() {
        let ds = blobs(300);
        let skew = SkewSpec {
            prominent_classes: 1,
            prominent_fraction: 0.1,
        };
        let p = partition_s2(&ds, 4, 100, &skew, 1, &small_sizes()).unwrap();
        for c in &p.clients {
            assert!(c.histogram.iter().all(|&h| h == 10), "{:?}", c.histogram);
        }
    }

    #[test]
    fn s3_exact_sizes() {
        let ds = blobs(500);
        let p = partition_s3(&ds, 10, 150, 2000, 3, &small_sizes()).unwrap();
        assert_eq!(p.clients[0].train.len(), 2000);
        assert!(p.clients[1..].iter().all(|c| c.train.len() == 150));
        assert!(p.clients[0].histogram.iter().all(|&h| h == 200));
        assert!(p.is_disjoint(ds.len()));
    }

    #[test]
    fn s5_needs_enough_data() {
        let ds = blobs(100);
        assert!(matches!(
            partition_s5(&ds, 1000, 50, 1, &small_sizes()),
            Err(Error::Config(_))
        ));
        let ds = blobs(200);
        let sizes = PartitionSizes {
            local_val: 5,
            ..small_sizes()
        };
        let p = partition_s5(&ds, 20, 50, 1, &sizes).unwrap();
        assert!(p.is_disjoint(ds.len()));
        assert!(p.clients.iter().all(|c| c.train.len() == 50));
    }

    #[test]
    fn deterministic_under_seed() {
        let ds = blobs(300);
        let a = partition_s1(&ds, 5, 100, 9, &small_sizes()).unwrap();
        let b = partition_s1(&ds, 5, 100, 9, &small_sizes()).unwrap();
        assert_eq!(a.clients, b.clients);
        assert_eq!(a.validation(), b.validation());
    }

    #[test]
    fn two_domains_have_recoverable_domains() {
        let a = DomainSpec::random(4, 3, 2.0, 1.0, 1);
        let b = a.shifted(6.0, 1.5);
        let (ds, p) = partition_two_domains(&a, &b, 3, 60, 4, &small_sizes()).unwrap();
        assert!(p.is_disjoint(ds.len()));
        assert_eq!(p.len(), 6);
        for (i, c) in p.clients.iter().enumerate() {
            assert_eq!(c.train.len(), 60);
            let mean: f64 = c.train.iter().map(|&j| ds.features().row(j).iter().sum::<f64>()).sum::<f64>()
                / (60.0 * 4.0);
            let a_mean: f64 = a.means.iter().flatten().sum::<f64>() / 12.0;
            let guessed = usize::from(mean > a_mean + 3.0);
            assert_eq!(guessed, i / 3);
            assert_eq!(c.domain, i / 3);
        }
    }
}
