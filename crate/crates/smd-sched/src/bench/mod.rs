//! Synthetic workload generation, workload file I/O, and the experiment
//! runner behind the `smd-sched` binary.
//!
//! Workloads are sampled uniformly from configurable parameter ranges whose
//! defaults follow published measurements of parameter-server training jobs
//! on shared clusters. Quantities that the on-disk format stores in other
//! units (milliseconds, megabytes, gigabits per second) are sampled on
//! integer grids so that save/load round-trips are bit-exact.

pub mod io;

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{ClusterSpec, JobSpec, LayerProfile, ResourceVector, Schedule, UtilityParams};
use crate::smd::{
    schedule_bruteforce, schedule_esw, schedule_optimus_greedy, schedule_smd, total_utility,
    BruteforceCaps, SmdError, SmdParams, Workload,
};
use crate::timeline::TrainingMode;
use crate::model::SgdMode;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed workload file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("workload schema error: {0}")]
    Schema(String),
    #[error("invalid workload: {0}")]
    Validation(String),
    #[error(transparent)]
    Schedule(#[from] SmdError),
}

/// Inclusive uniform sampling ranges for every generated job parameter.
///
/// Integer-grid fields are sampled as integers in the stated unit; `beta`,
/// `alpha`, and the utility parameters are continuous (they are stored
/// unconverted, so any float round-trips).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamRanges {
    pub iterations: (u64, u64),
    pub model_mb: (u64, u64),
    pub minibatch: (u64, u64),
    /// Global batch = multiplier * minibatch for synchronous jobs.
    pub batch_multiplier: (u64, u64),
    pub layers: (usize, usize),
    pub bp_ms: (u64, u64),
    pub fp_ms: (u64, u64),
    pub comm_ms: (u64, u64),
    pub bandwidth_gbps: (u64, u64),
    pub beta1: (f64, f64),
    pub beta2: (f64, f64),
    /// Async concurrency fraction sampled from `(alpha_min, 1]`.
    pub alpha_min: f64,
    pub gamma1: (f64, f64),
    pub gamma2: (f64, f64),
    pub gamma3: (f64, f64),
    /// Per-job resource limit = this many virtual instances.
    pub limit_instances: (u64, u64),
    pub slice_ms: (u64, u64),
    pub worker_gpu: (u64, u64),
    pub worker_cpu: (u64, u64),
    pub worker_memory_gb: (u64, u64),
    pub worker_storage_gb: (u64, u64),
    pub ps_cpu: (u64, u64),
    pub ps_memory_gb: (u64, u64),
    pub ps_storage_gb: (u64, u64),
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            iterations: (50, 200),
            model_mb: (30, 575),
            minibatch: (10, 100),
            batch_multiplier: (1, 100),
            layers: (10, 100),
            bp_ms: (1, 300),
            fp_ms: (1, 500),
            comm_ms: (80, 500),
            bandwidth_gbps: (5, 20),
            beta1: (3.0, 4.0),
            beta2: (0.0, 0.01),
            alpha_min: 0.01,
            gamma1: (1.0, 100.0),
            gamma2: (4.0, 6.0),
            gamma3: (1.0, 15.0),
            limit_instances: (1, 20),
            slice_ms: (1, 50),
            worker_gpu: (0, 4),
            worker_cpu: (1, 10),
            worker_memory_gb: (2, 32),
            worker_storage_gb: (5, 10),
            ps_cpu: (1, 10),
            ps_memory_gb: (2, 32),
            ps_storage_gb: (5, 10),
        }
    }
}

/// Pin every generated job to one overlap model instead of sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModePin {
    Sequential,
    WaitFree,
    Priority,
}

/// Pin every generated job to one SGD variant instead of sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgdPin {
    Sync,
    Async,
}

/// Everything the workload generator needs; construction from
/// [`GeneratorSpec::new`] uses the default ranges and cluster sizing.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub jobs: usize,
    pub seed: u64,
    /// Cluster capacity = `cluster_unit * capacity_scale`.
    pub capacity_scale: f64,
    pub cluster_unit: ResourceVector,
    /// Capacity of one virtual instance; a job's resource limit is an
    /// integer number of instances (lifted to fit one worker plus one PS
    /// when a sampled limit would be too tight).
    pub instance_capacity: ResourceVector,
    pub ranges: ParamRanges,
    pub mode: Option<ModePin>,
    pub sgd: Option<SgdPin>,
}

impl GeneratorSpec {
    pub fn new(jobs: usize, seed: u64) -> Self {
        Self {
            jobs,
            seed,
            capacity_scale: 1.0,
            cluster_unit: ResourceVector::new(600.0, 3400.0, 1400.0, 1200.0),
            instance_capacity: ResourceVector::new(4.0, 36.0, 60.0, 160.0),
            ranges: ParamRanges::default(),
            mode: None,
            sgd: None,
        }
    }
}

fn sample_int(rng: &mut ChaCha8Rng, range: (u64, u64)) -> u64 {
    rng.gen_range(range.0..=range.1)
}

fn sample_f64(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.gen_range(range.0..=range.1)
    }
}

/// Deterministically sample a workload. Field order is fixed, so equal
/// specs produce identical workloads.
pub fn generate_workload(spec: &GeneratorSpec) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let r = &spec.ranges;
    let mut jobs = Vec::with_capacity(spec.jobs);
    for index in 0..spec.jobs {
        let mode_pick = match spec.mode {
            Some(ModePin::Sequential) => 0,
            Some(ModePin::WaitFree) => 1,
            Some(ModePin::Priority) => 2,
            None => rng.gen_range(0..3u8),
        };
        let sync = match spec.sgd {
            Some(SgdPin::Sync) => true,
            Some(SgdPin::Async) => false,
            None => rng.gen_bool(0.5),
        };

        let n_layers = rng.gen_range(r.layers.0..=r.layers.1);
        let layers: Vec<LayerProfile> = (0..n_layers)
            .map(|_| {
                LayerProfile::new(
                    sample_int(&mut rng, r.bp_ms) as f64 * 1e-3,
                    sample_int(&mut rng, r.fp_ms) as f64 * 1e-3,
                    sample_int(&mut rng, r.comm_ms) as f64 * 1e-3,
                )
            })
            .collect();

        let iterations = sample_int(&mut rng, r.iterations);
        let model_bits = sample_int(&mut rng, r.model_mb) as f64 * 8e6;
        let minibatch = sample_int(&mut rng, r.minibatch) as f64;
        let multiplier = sample_int(&mut rng, r.batch_multiplier) as f64;
        let bandwidth = sample_int(&mut rng, r.bandwidth_gbps) as f64 * 1e9;
        let beta1 = sample_f64(&mut rng, r.beta1);
        let beta2 = sample_f64(&mut rng, r.beta2);
        // alpha in (alpha_min, 1]: the unit draw is in [0, 1).
        let alpha = 1.0 - (1.0 - r.alpha_min) * rng.gen::<f64>();
        let gamma1 = sample_f64(&mut rng, r.gamma1);
        let gamma2 = sample_f64(&mut rng, r.gamma2);
        let gamma3 = sample_f64(&mut rng, r.gamma3);
        let instances = sample_int(&mut rng, r.limit_instances) as f64;

        let worker_demand = ResourceVector::new(
            sample_int(&mut rng, r.worker_gpu) as f64,
            sample_int(&mut rng, r.worker_cpu) as f64,
            sample_int(&mut rng, r.worker_memory_gb) as f64,
            sample_int(&mut rng, r.worker_storage_gb) as f64,
        );
        let ps_demand = ResourceVector::new(
            0.0,
            sample_int(&mut rng, r.ps_cpu) as f64,
            sample_int(&mut rng, r.ps_memory_gb) as f64,
            sample_int(&mut rng, r.ps_storage_gb) as f64,
        );

        let training_mode = match mode_pick {
            0 => TrainingMode::Sequential,
            1 => TrainingMode::WaitFree,
            _ => TrainingMode::Priority {
                slice: sample_int(&mut rng, r.slice_ms) as f64 * 1e-3,
            },
        };
        let sgd = if sync {
            SgdMode::Sync {
                global_batch: multiplier * minibatch,
            }
        } else {
            SgdMode::Async { minibatch }
        };

        let resource_limit = (spec.instance_capacity * instances).max(&(worker_demand + ps_demand));

        jobs.push(JobSpec {
            id: format!("job-{index}"),
            layers,
            iterations,
            model_bits,
            bandwidth,
            overhead_worker: beta1,
            overhead_ps: beta2,
            alpha,
            training_mode,
            sgd,
            worker_demand,
            ps_demand,
            resource_limit,
            utility: UtilityParams {
                scale: gamma1,
                steepness: gamma2,
                midpoint: gamma3,
            },
        });
    }

    Workload {
        cluster: ClusterSpec {
            capacity: spec.cluster_unit * spec.capacity_scale,
        },
        jobs,
    }
}

/// Which scheduler an experiment row runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgoKind {
    Smd,
    Esw,
    Optimus,
    Bruteforce,
}

impl AlgoKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AlgoKind::Smd => "smd",
            AlgoKind::Esw => "esw",
            AlgoKind::Optimus => "optimus",
            AlgoKind::Bruteforce => "bruteforce",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "smd" => Some(AlgoKind::Smd),
            "esw" => Some(AlgoKind::Esw),
            "optimus" => Some(AlgoKind::Optimus),
            "bruteforce" => Some(AlgoKind::Bruteforce),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadSource {
    Generate(GeneratorSpec),
    File(PathBuf),
}

/// One experiment: a workload source, the schedulers to run, and how many
/// seeded repetitions.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub source: WorkloadSource,
    pub algorithms: Vec<AlgoKind>,
    pub params: SmdParams,
    pub repetitions: u32,
    pub caps: BruteforceCaps,
    /// When false the wall-clock column is written as 0, making the CSV
    /// byte-reproducible.
    pub record_timing: bool,
    pub output: Option<PathBuf>,
}

/// Fixed column order of the results CSV.
pub const RESULTS_HEADER: &str = "seed,algorithm,jobs,capacity_scale,total_utility,admitted,\
used_gpu_ratio,used_cpu_ratio,used_mem_ratio,used_storage_ratio,wall_ms,status";

fn ratio(used: f64, specified: f64) -> f64 {
    if specified > 0.0 {
        used / specified
    } else {
        0.0
    }
}

fn run_algorithm(
    algo: AlgoKind,
    workload: &Workload,
    params: &SmdParams,
    caps: &BruteforceCaps,
) -> Result<Option<Schedule>, BenchError> {
    let schedule = match algo {
        AlgoKind::Smd => schedule_smd(workload, params)?,
        AlgoKind::Esw => schedule_esw(workload, params.eps_admission)?,
        AlgoKind::Optimus => schedule_optimus_greedy(workload, params.eps_admission)?,
        AlgoKind::Bruteforce => match schedule_bruteforce(workload, caps) {
            Ok(s) => s,
            Err(SmdError::TooManyJobs { .. }) | Err(SmdError::CapsExceeded { .. }) => {
                return Ok(None)
            }
            Err(e) => return Err(e.into()),
        },
    };
    Ok(Some(schedule))
}

/// Run every configured algorithm for every repetition and return the CSV
/// (also written to `config.output` when set). Rows appear in
/// (repetition, algorithm) order; all content except the timing column is
/// deterministic given the seeds.
pub fn run_experiment(config: &ExperimentConfig) -> Result<String, BenchError> {
    let mut csv = String::from(RESULTS_HEADER);
    csv.push('\n');

    for rep in 0..config.repetitions {
        let (workload, seed) = match &config.source {
            WorkloadSource::Generate(spec) => {
                let mut spec_r = spec.clone();
                spec_r.seed = spec.seed.wrapping_add(u64::from(rep));
                (generate_workload(&spec_r), spec_r.seed)
            }
            WorkloadSource::File(path) => (
                io::load_workload(path)?,
                config.params.seed.wrapping_add(u64::from(rep)),
            ),
        };
        let scale = match &config.source {
            WorkloadSource::Generate(spec) => spec.capacity_scale,
            WorkloadSource::File(_) => 0.0,
        };
        let mut params = config.params;
        params.seed = seed;

        for &algo in &config.algorithms {
            let started = Instant::now();
            let result = run_algorithm(algo, &workload, &params, &config.caps)?;
            let wall_ms = if config.record_timing {
                started.elapsed().as_millis() as u64
            } else {
                0
            };
            let row = match result {
                Some(schedule) => {
                    let used = schedule.used.as_array();
                    let specified = schedule.specified.as_array();
                    format!(
                        "{seed},{algo},{jobs},{scale},{utility},{admitted},{g},{c},{m},{s},{wall_ms},ok",
                        algo = algo.as_str(),
                        jobs = workload.jobs.len(),
                        utility = total_utility(&schedule),
                        admitted = schedule.admitted_count(),
                        g = ratio(used[0], specified[0]),
                        c = ratio(used[1], specified[1]),
                        m = ratio(used[2], specified[2]),
                        s = ratio(used[3], specified[3]),
                    )
                }
                None => format!(
                    "{seed},{algo},{jobs},{scale},0,0,0,0,0,0,{wall_ms},skipped",
                    algo = algo.as_str(),
                    jobs = workload.jobs.len(),
                ),
            };
            csv.push_str(&row);
            csv.push('\n');
        }
    }

    if let Some(path) = &config.output {
        std::fs::write(path, &csv)?;
    }
    Ok(csv)
}
