//! Self-paced multi-task clustering.
//!
//! Several related clustering tasks over a common feature space are fit
//! jointly: each task keeps its own k-means style reconstruction, and all
//! tasks share cluster centers in a learned orthonormal subspace. A
//! self-paced outer loop weights examples by their current reconstruction
//! loss, starting from the easiest half of every task and growing the
//! selection until all examples take part.
//!
//! Module map:
//! - [`linalg`]: eigendecomposition and ridge solve kernels
//! - [`model`]: problem, state, weight and configuration types
//! - [`updates`]: weighted objective and the four alternating updates
//! - [`self_paced`]: hard and soft weights, pace schedule
//! - [`driver`]: the outer loop, assignment, k-means baselines
//! - [`metrics`]: ACC, NMI, Welch t-test
//! - [`io`], [`synth`]: file formats and synthetic benchmarks
//! - [`bench`]: grid/seed benchmark harness behind the `bench` subcommand

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod driver;
pub mod error;
pub mod exec;
pub mod io;
pub mod kmeans;
pub mod kv;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod self_paced;
pub mod synth;
pub mod updates;

pub use driver::{assign_clusters, pooled_baseline, run_method, spmtc_fit, Method, RunResult};
pub use error::{Error, Result};
pub use exec::Execution;
pub use model::{
    FitConfig, ModelState, MultiTaskProblem, ObjectiveTrace, PartitionInit, TraceRecord, WeightMode, WeightState,
};
