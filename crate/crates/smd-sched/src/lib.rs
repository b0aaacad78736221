//! Batch scheduling of distributed deep-learning training jobs on a shared
//! cluster: which jobs to admit, and how many workers and parameter servers
//! to give each admitted job.
//!
//! The scheduler decomposes the joint admission/allocation problem into two
//! stages:
//!
//! 1. **Inner allocation** — for each job independently, minimize its modeled
//!    completion time over worker/PS counts. The completion time is a sum of
//!    linear ratios in `(w, p)`, built from a layer-level timing model of the
//!    training loop ([`timeline`], [`speed`]). The continuous relaxation is
//!    solved by a nonuniform grid search over per-ratio ranges ([`sor`]),
//!    each grid point reducing to a linear-fractional program ([`lp`]), and
//!    the fractional optimum is converted to integers by scaled randomized
//!    rounding ([`rounding`]).
//! 2. **Outer admission** — with per-job utilities fixed, admitting jobs
//!    under cluster capacity is a multi-dimensional knapsack ([`mkp`]).
//!
//! [`smd`] wires the two stages together and provides baseline allocators
//! (equal worker/PS split, gain-greedy) plus an exhaustive oracle for
//! desk-scale verification. [`bench`] generates synthetic workloads, reads
//! and writes the workload JSON format, and runs CSV experiments; the `smd-sched`
//! binary exposes all of it on the command line.
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod bench;
pub mod lp;
pub mod mkp;
pub mod model;
pub mod rounding;
pub mod smd;
pub mod sor;
pub mod speed;
pub mod timeline;

pub use model::{
    Allocation, ClusterSpec, JobSpec, LayerProfile, ResourceVector, Schedule, SgdMode,
    UtilityParams,
};
pub use smd::{SmdParams, Workload};
pub use timeline::{LayerTimes, TrainingMode};
