//! Datasets, batching and per-setting partitioners.

mod blobs;
mod cursor;
mod dataset;
mod idx;
mod partition;

pub use blobs::{make_blobs, DomainSpec};
pub use cursor::BatchCursor;
pub use dataset::Dataset;
pub use idx::{encode_idx_images, encode_idx_labels, load_idx, parse_idx_images, parse_idx_labels};
pub use partition::{
    partition_s1, partition_s2, partition_s3, partition_s5, partition_two_domains, ClientSplit,
    Partition, PartitionSizes, SkewSpec,
};
