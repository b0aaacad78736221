//! Domain types shared by every stage: resources, job specifications,
//! allocations, and schedules, plus validation and feasibility predicates.
//!
//! Times are stored in seconds and data sizes in bits throughout; the
//! workload file loader in [`crate::bench::io`] converts from the
//! milliseconds/megabytes/gigabits-per-second units used on disk.

use std::fmt;
use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeline::{LayerTimes, TrainingMode};

/// Nonnegative quantities over the four cluster resource types. GPU and CPU
/// are device counts, memory and storage are gigabytes; fractional values
/// are allowed everywhere since feasibility is pure comparison.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResourceVector {
    pub gpu: f64,
    pub cpu: f64,
    pub memory: f64,
    pub storage: f64,
}

impl ResourceVector {
    pub const fn new(gpu: f64, cpu: f64, memory: f64, storage: f64) -> Self {
        Self {
            gpu,
            cpu,
            memory,
            storage,
        }
    }

    pub const fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.gpu, self.cpu, self.memory, self.storage]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    /// Component-wise `<=`.
    pub fn le(&self, other: &Self) -> bool {
        self.gpu <= other.gpu
            && self.cpu <= other.cpu
            && self.memory <= other.memory
            && self.storage <= other.storage
    }

    pub fn is_nonnegative(&self) -> bool {
        self.gpu >= 0.0 && self.cpu >= 0.0 && self.memory >= 0.0 && self.storage >= 0.0
    }

    pub fn is_positive(&self) -> bool {
        self.gpu > 0.0 && self.cpu > 0.0 && self.memory > 0.0 && self.storage > 0.0
    }

    /// Component-wise maximum.
    pub fn max(&self, other: &Self) -> Self {
        Self::new(
            self.gpu.max(other.gpu),
            self.cpu.max(other.cpu),
            self.memory.max(other.memory),
            self.storage.max(other.storage),
        )
    }
}

impl Add for ResourceVector {
    type Output = ResourceVector;
    fn add(self, rhs: ResourceVector) -> ResourceVector {
        ResourceVector::new(
            self.gpu + rhs.gpu,
            self.cpu + rhs.cpu,
            self.memory + rhs.memory,
            self.storage + rhs.storage,
        )
    }
}

impl Mul<f64> for ResourceVector {
    type Output = ResourceVector;
    fn mul(self, k: f64) -> ResourceVector {
        ResourceVector::new(self.gpu * k, self.cpu * k, self.memory * k, self.storage * k)
    }
}

impl fmt::Display for ResourceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "gpu={} cpu={} mem={}GB storage={}GB",
            self.gpu, self.cpu, self.memory, self.storage
        )
    }
}

/// One layer's timing profile: backward-propagation time, forward-propagation
/// time, one-direction transfer time at the reference configuration (all
/// seconds), and optionally the layer's gradient size in bits from which the
/// transfer time can be re-derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub bp: f64,
    pub fp: f64,
    pub comm: Option<f64>,
    pub grad_bits: Option<f64>,
}

impl LayerProfile {
    pub fn new(bp: f64, fp: f64, comm: f64) -> Self {
        Self {
            bp,
            fp,
            comm: Some(comm),
            grad_bits: None,
        }
    }

    /// Transfer time under the given link bandwidth (bits/second): the stated
    /// time if present, otherwise derived from the gradient size.
    pub fn comm_time(&self, bandwidth: f64) -> Option<f64> {
        self.comm
            .or_else(|| self.grad_bits.map(|g| g / bandwidth))
    }
}

/// Which SGD variant the job runs, with the batch parameter that variant
/// needs: synchronous training fixes the global batch split across workers,
/// asynchronous training fixes each worker's mini-batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SgdMode {
    Sync { global_batch: f64 },
    Async { minibatch: f64 },
}

/// Sigmoid utility over job completion time: `scale / (1 + exp(steepness *
/// (completion - midpoint)))`. Non-increasing in completion, bounded in
/// `(0, scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityParams {
    pub scale: f64,
    pub steepness: f64,
    pub midpoint: f64,
}

/// One training job as submitted: model timing profile, batch and iteration
/// counts, communication parameters, per-process resource demands, the
/// user's resource limit, and the utility of finishing fast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub id: String,
    pub layers: Vec<LayerProfile>,
    /// Number of training iterations to run.
    pub iterations: u64,
    /// Total model/gradient size in bits.
    pub model_bits: f64,
    /// Reserved bandwidth between each worker-PS pair, bits/second.
    pub bandwidth: f64,
    /// Connection-overhead seconds added per worker each iteration.
    pub overhead_worker: f64,
    /// Connection-overhead seconds added per parameter server each iteration.
    pub overhead_ps: f64,
    /// Fraction of workers sending to the same PS concurrently under
    /// asynchronous training, in `(0, 1]`.
    pub alpha: f64,
    pub training_mode: TrainingMode,
    pub sgd: SgdMode,
    /// Resources demanded by one worker.
    pub worker_demand: ResourceVector,
    /// Resources demanded by one parameter server.
    pub ps_demand: ResourceVector,
    /// The user's resource limit for the whole job.
    pub resource_limit: ResourceVector,
    pub utility: UtilityParams,
}

impl JobSpec {
    /// Resolve the per-layer times against this job's bandwidth.
    ///
    /// Panics if a layer has neither a stated transfer time nor a gradient
    /// size; [`validate_job`] reports that case as an error value.
    pub fn layer_times(&self) -> Vec<LayerTimes> {
        self.layers
            .iter()
            .map(|l| {
                LayerTimes::new(
                    l.bp,
                    l.fp,
                    l.comm_time(self.bandwidth)
                        .expect("layer has neither comm time nor gradient size"),
                )
            })
            .collect()
    }
}

/// Shared cluster capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub capacity: ResourceVector,
}

impl ClusterSpec {
    pub fn validate(&self) -> Result<(), JobError> {
        if self.capacity.is_positive() {
            Ok(())
        } else {
            Err(JobError::NonpositiveCapacity)
        }
    }
}

/// Worker and parameter-server counts assigned to one admitted job; both are
/// at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub workers: u32,
    pub ps: u32,
}

impl Allocation {
    pub fn new(workers: u32, ps: u32) -> Self {
        Self { workers, ps }
    }
}

/// Outcome of one scheduling run for one job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobOutcome {
    pub id: String,
    pub admitted: bool,
    pub allocation: Option<Allocation>,
    pub utility: f64,
    pub completion_seconds: Option<f64>,
}

/// A full scheduling decision: admission bit and allocation per job, with
/// run metadata and the aggregate resource picture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub algorithm: String,
    pub seed: u64,
    pub jobs: Vec<JobOutcome>,
    /// Resources actually consumed by admitted allocations.
    pub used: ResourceVector,
    /// Sum of admitted jobs' resource limits (what admission charges against
    /// capacity).
    pub specified: ResourceVector,
    pub capacity: ResourceVector,
}

impl Schedule {
    pub fn admitted_count(&self) -> usize {
        self.jobs.iter().filter(|j| j.admitted).count()
    }
}

/// A violated job invariant, reported as a value.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum JobError {
    #[error("job has no layers")]
    EmptyLayers,
    #[error("negative BP time at layer {0}")]
    NegativeBpTime(usize),
    #[error("negative FP time at layer {0}")]
    NegativeFpTime(usize),
    #[error("negative communication time at layer {0}")]
    NegativeCommTime(usize),
    #[error("negative gradient size at layer {0}")]
    NegativeGradientSize(usize),
    #[error("layer {0} has neither communication time nor gradient size")]
    MissingCommAndGradient(usize),
    #[error("iteration count must be at least 1")]
    NoIterations,
    #[error("synchronous job needs a global batch of at least 1")]
    BadGlobalBatch,
    #[error("asynchronous job needs a mini-batch of at least 1")]
    BadMinibatch,
    #[error("model size must be positive")]
    NonpositiveModelSize,
    #[error("bandwidth must be positive")]
    NonpositiveBandwidth,
    #[error("worker overhead must be nonnegative")]
    NegativeWorkerOverhead,
    #[error("PS overhead must be nonnegative")]
    NegativePsOverhead,
    #[error("alpha must lie in (0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("slice size must be nonnegative")]
    NegativeSlice,
    #[error("worker demand has a negative component")]
    NegativeWorkerDemand,
    #[error("PS demand has a negative component")]
    NegativePsDemand,
    #[error("resource limit has a negative component")]
    NegativeResourceLimit,
    #[error("combined worker+PS demand is zero in every resource")]
    EmptyCombinedDemand,
    #[error("no feasible (1,1) allocation: worker+PS demand exceeds the resource limit")]
    NoUnitAllocation,
    #[error("utility scale must be positive")]
    NonpositiveUtilityScale,
    #[error("utility steepness must be positive")]
    NonpositiveUtilitySteepness,
    #[error("utility midpoint must be nonnegative")]
    NegativeUtilityMidpoint,
    #[error("cluster capacity must be positive in every resource")]
    NonpositiveCapacity,
}

/// Check every job invariant and return the full list of violations; `Ok`
/// iff there are none.
pub fn validate_job(job: &JobSpec) -> Result<(), Vec<JobError>> {
    let mut errors = Vec::new();

    if job.layers.is_empty() {
        errors.push(JobError::EmptyLayers);
    }
    for (i, layer) in job.layers.iter().enumerate() {
        let idx = i + 1;
        if layer.bp < 0.0 {
            errors.push(JobError::NegativeBpTime(idx));
        }
        if layer.fp < 0.0 {
            errors.push(JobError::NegativeFpTime(idx));
        }
        if let Some(c) = layer.comm {
            if c < 0.0 {
                errors.push(JobError::NegativeCommTime(idx));
            }
        }
        if let Some(g) = layer.grad_bits {
            if g < 0.0 {
                errors.push(JobError::NegativeGradientSize(idx));
            }
        }
        if layer.comm.is_none() && layer.grad_bits.is_none() {
            errors.push(JobError::MissingCommAndGradient(idx));
        }
    }

    if job.iterations < 1 {
        errors.push(JobError::NoIterations);
    }
    match job.sgd {
        SgdMode::Sync { global_batch } => {
            if global_batch < 1.0 {
                errors.push(JobError::BadGlobalBatch);
            }
        }
        SgdMode::Async { minibatch } => {
            if minibatch < 1.0 {
                errors.push(JobError::BadMinibatch);
            }
        }
    }
    if job.model_bits <= 0.0 {
        errors.push(JobError::NonpositiveModelSize);
    }
    if job.bandwidth <= 0.0 {
        errors.push(JobError::NonpositiveBandwidth);
    }
    if job.overhead_worker < 0.0 {
        errors.push(JobError::NegativeWorkerOverhead);
    }
    if job.overhead_ps < 0.0 {
        errors.push(JobError::NegativePsOverhead);
    }
    if !(job.alpha > 0.0 && job.alpha <= 1.0) {
        errors.push(JobError::AlphaOutOfRange(job.alpha));
    }
    if let TrainingMode::Priority { slice } = job.training_mode {
        if slice < 0.0 {
            errors.push(JobError::NegativeSlice);
        }
    }

    if !job.worker_demand.is_nonnegative() {
        errors.push(JobError::NegativeWorkerDemand);
    }
    if !job.ps_demand.is_nonnegative() {
        errors.push(JobError::NegativePsDemand);
    }
    if !job.resource_limit.is_nonnegative() {
        errors.push(JobError::NegativeResourceLimit);
    }
    let combined = job.worker_demand + job.ps_demand;
    if combined == ResourceVector::zero() {
        errors.push(JobError::EmptyCombinedDemand);
    }
    if !combined.le(&job.resource_limit) {
        errors.push(JobError::NoUnitAllocation);
    }

    if job.utility.scale <= 0.0 {
        errors.push(JobError::NonpositiveUtilityScale);
    }
    if job.utility.steepness <= 0.0 {
        errors.push(JobError::NonpositiveUtilitySteepness);
    }
    if job.utility.midpoint < 0.0 {
        errors.push(JobError::NegativeUtilityMidpoint);
    }

    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

/// True iff `workers` workers and `ps` parameter servers fit inside the
/// job's resource limit in every resource type.
pub fn resource_feasible(job: &JobSpec, alloc: Allocation) -> bool {
    if alloc.workers < 1 || alloc.ps < 1 {
        return false;
    }
    let used =
        job.worker_demand * f64::from(alloc.workers) + job.ps_demand * f64::from(alloc.ps);
    used.le(&job.resource_limit)
}
