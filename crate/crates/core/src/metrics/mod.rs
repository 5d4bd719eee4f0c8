//! FLOP model, work accounting and classification / fairness metrics.

mod classification;
mod flops;
mod sink;
mod work;

pub use classification::{
    accuracy, confusion_matrix, macro_f1, overfit_gap, per_class_f1, performance_fairness,
    prominent_f1, Evaluation, Score,
};
pub use flops::{client_compute_per_iter, flops_layer, stack_flops, training_flops, Direction};
pub use sink::{MetricRow, MetricsSink, Split};
pub use work::{work_done, WorkEntry, WorkLedger};
