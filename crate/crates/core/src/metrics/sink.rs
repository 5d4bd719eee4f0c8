use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One row of `metrics.csv`.  `client_id` is empty for rows about the
/// global model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub run_id: String,
    pub phase: String,
    pub round: usize,
    pub epoch: usize,
    pub client_id: Option<usize>,
    pub split: Split,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub loss: f64,
    pub c_i_flops: f64,
    pub o_i_flops: f64,
}

/// Append-only, order-stamped metric store shared by all drivers of a run.
#[derive(Debug)]
pub struct MetricsSink {
    run_id: String,
    seq: AtomicU64,
    rows: Mutex<Vec<(u64, MetricRow)>>,
}

impl MetricsSink {
    pub fn new(run_id: impl Into<String>) -> Self {
        MetricsSink {
            run_id: run_id.into(),
            seq: AtomicU64::new(0),
            rows: Mutex::new(Vec::new()),
        }
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    /// Appends a row, stamping it with this sink's run id.
    pub fn append(&self, mut row: MetricRow) {
        row.run_id.clone_from(&self.run_id);
        let mut rows = self.rows.lock().expect("metrics sink poisoned");
        let stamp = self.seq.fetch_add(1, Ordering::SeqCst);
        rows.push((stamp, row));
    }

    /// Consistent copy of everything appended so far, in append order.
    pub fn snapshot(&self) -> Vec<MetricRow> {
        let rows = self.rows.lock().expect("metrics sink poisoned");
        let mut out: Vec<_> = rows.clone();
        out.sort_by_key(|(s, _)| *s);
        out.into_iter().map(|(_, r)| r).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.lock().expect("metrics sink poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(epoch: usize) -> MetricRow {
        MetricRow {
            run_id: String::new(),
            phase: "p1".into(),
            round: 0,
            epoch,
            client_id: Some(1),
            split: Split::Val,
            accuracy: 0.5,
            macro_f1: 0.5,
            loss: 1.0,
            c_i_flops: 0.0,
            o_i_flops: 0.0,
        }
    }

    #[test]
    fn rows_keep_append_order_and_run_id() {
        let sink = MetricsSink::new("abc");
        for e in 0..5 {
            sink.append(row(e));
        }
        let snap = sink.snapshot();
        assert_eq!(snap.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
        assert!(snap.iter().all(|r| r.run_id == "abc"));
    }
}
