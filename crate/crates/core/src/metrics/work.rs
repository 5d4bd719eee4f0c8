use std::collections::BTreeMap;

/// Work done by one client: `epochs * (iterations per epoch * cost per
/// iteration)`.
pub fn work_done(epochs_to_convergence: u64, iters_per_epoch: u64, compute_per_iter: f64) -> f64 {
    epochs_to_convergence as f64 * (iters_per_epoch as f64 * compute_per_iter)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkEntry {
    /// FLOPs per iteration.
    pub c_i: f64,
    pub iters_per_epoch: u64,
    /// Epochs counted towards convergence.
    pub e_gc: u64,
    /// Total FLOPs.
    pub o_i: f64,
    /// Batches actually executed.
    pub batch_ops: u64,
}

/// Per-client work accounting, keyed by client id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorkLedger {
    entries: BTreeMap<usize, WorkEntry>,
}

impl WorkLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one epoch of `iters` batches at `c_i` FLOPs each.
    pub fn record_epoch(&mut self, client: usize, c_i: f64, iters: u64) {
        let e = self.entries.entry(client).or_insert(WorkEntry {
            c_i,
            iters_per_epoch: iters,
            e_gc: 0,
            o_i: 0.0,
            batch_ops: 0,
        });
        e.c_i = c_i;
        e.iters_per_epoch = iters;
        e.e_gc += 1;
        e.batch_ops += iters;
        e.o_i += iters as f64 * c_i;
    }

    pub fn get(&self, client: usize) -> Option<&WorkEntry> {
        self.entries.get(&client)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &WorkEntry)> {
        self.entries.iter().map(|(&k, v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds another ledger's work; clients present in both have their
    /// epochs, batches and FLOPs summed.
    pub fn merge(&mut self, other: WorkLedger) {
        for (id, e) in other.entries {
            match self.entries.get_mut(&id) {
                Some(mine) => {
                    mine.c_i = e.c_i;
                    mine.iters_per_epoch = e.iters_per_epoch;
                    mine.e_gc += e.e_gc;
                    mine.batch_ops += e.batch_ops;
                    mine.o_i += e.o_i;
                }
                None => {
                    self.entries.insert(id, e);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_spot_value() {
        assert_eq!(work_done(25, 2, 15.5), 775.0);
    }

    #[test]
    fn zero_factor_is_zero() {
        assert_eq!(work_done(0, 2, 15.5), 0.0);
        assert_eq!(work_done(25, 0, 15.5), 0.0);
        assert_eq!(work_done(25, 2, 0.0), 0.0);
    }

    #[test]
    fn ledger_matches_formula() {
        let mut l = WorkLedger::new();
        for _ in 0..7 {
            l.record_epoch(3, 1234.0, 2);
        }
        let e = l.get(3).unwrap();
        assert_eq!(e.o_i, work_done(e.e_gc, e.iters_per_epoch, e.c_i));
        assert_eq!(e.o_i, e.batch_ops as f64 * e.c_i);
    }
}
