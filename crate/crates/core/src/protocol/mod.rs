//! Client and offloading-server procedures, weight merging and the two-phase
//! schedule.
//!
//! A client holds a frozen front part and a trainable back part; its server
//! replica holds the central part with a frozen prefix.  One batch flows
//! `client_front -> server_forward -> client_back -> server_backprop`.  After
//! every global epoch the back parts and the central replicas are averaged
//! over the clients that reached the barrier in time.

mod client;
mod merge;
mod server;
mod system;

pub use client::{BackOutcome, ClientSession, ClientSettings, Phase};
pub use merge::{
    mean_params, merge_weights_clients, merge_weights_server, ClientMerge, MergeBarrier, ServerMerge,
    Submission,
};
pub use server::ServerInstance;
pub use system::{
    evaluate_parts, personalize, EpochReport, GeneralizationReport, Pair, PersonalEpoch, PersonalReport, PfslSystem,
    PhaseConfig,
};
