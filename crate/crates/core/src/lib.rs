//! Secrecy-constrained bandwidth allocation for uplink users facing a mobile
//! eavesdropper.
//!
//! The pipeline is: sample channels ([`model`]), schedule users that can meet
//! the secrecy threshold ([`scheduling`]), then split the budget with one of
//! the allocators in [`alloc`] or the graph network in [`gnn`]. [`complexity`]
//! counts what each allocator costs and [`harness`] drives the experiments.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alloc;
pub mod complexity;
pub mod error;
pub mod gnn;
pub mod harness;
pub mod model;
pub mod scheduling;

pub use alloc::{
    allocate_bec, allocate_ivs, brute_force_oracle, sum_secrecy_rate, Allocation, BestChannelRule, Policy,
};
pub use error::{Error, Result};
pub use model::{
    data_rate, perturb_eve_csi, sample_channels, secrecy_rate, secrecy_rate_deriv, secrecy_rate_second_deriv,
    ChannelSample, SystemParams, UserChannel,
};
pub use scheduling::{min_bandwidth_bisect, schedule_users, DropReason, Schedule};
