//! Network-cost-aware planning for parallel GROUP BY aggregation.
//!
//! A query fragment holds a multiset of keys split into partitions; every
//! partition has a designated destination node. A plan is a sequence of
//! communication phases, each a set of concurrent single-partition transfers.
//! The crate provides the cost model, a similarity-driven greedy planner that
//! tracks per-node partition contents with minhash sketches, repartitioning
//! and tree baselines, an exhaustive small-instance optimum, synthetic
//! workload generators, and a config-driven experiment runner.

pub mod baselines;
pub mod error;
pub mod experiment;
pub mod model;
pub mod oracle;
pub mod planner;
pub mod sketch;
pub mod topology;
pub mod workloads;

pub use error::{Error, Result};

/// Node index within a cluster. Dense in `0..node_count`.
pub type NodeId = usize;

/// Partition index. Dense in `0..partition_count`.
pub type PartitionId = usize;
