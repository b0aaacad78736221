//! Workload JSON format.
//!
//! On disk, times are milliseconds, sizes megabytes, memory/storage
//! gigabytes, and bandwidth gigabits per second; the loader converts to the
//! crate's internal seconds/bits and validates every job. Unknown fields
//! are rejected, and a `version` tag guards the schema.
//!
//! ```json
//! {
//!   "version": "1",
//!   "cluster": { "capacity": { "gpu": 600, "cpu": 3400, "memory_gb": 1400, "storage_gb": 1200 } },
//!   "jobs": [{
//!     "id": "job-0",
//!     "layers": [{ "bp_ms": 5, "fp_ms": 3, "comm_ms": 120, "grad_mb": 1.5 }],
//!     "iterations": 100,
//!     "sgd": "sync",
//!     "batch": { "global": 320 },
//!     "model_mb": 120,
//!     "bandwidth_gbps": 10,
//!     "beta1": 0.001,
//!     "beta2": 0.0005,
//!     "alpha": 0.9,
//!     "mode": "waitfree",
//!     "worker_demand": { "gpu": 1, "cpu": 4, "memory_gb": 8, "storage_gb": 5 },
//!     "ps_demand": { "gpu": 0, "cpu": 3, "memory_gb": 6, "storage_gb": 5 },
//!     "limit": { "gpu": 4, "cpu": 40, "memory_gb": 80, "storage_gb": 50 },
//!     "utility": { "gamma1": 50, "gamma2": 5, "gamma3": 8 }
//!   }]
//! }
//! ```
//!
//! `batch` carries `global` for synchronous jobs and `mini` for
//! asynchronous ones; `slice_ms` is required exactly when `mode` is
//! `"priority"`; `grad_mb` is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{
    validate_job, ClusterSpec, JobSpec, LayerProfile, ResourceVector, SgdMode, UtilityParams,
};
use crate::smd::Workload;
use crate::timeline::TrainingMode;

use super::BenchError;

pub const SCHEMA_VERSION: &str = "1";

const MS: f64 = 1e-3;
const MB_BITS: f64 = 8e6;
const GBPS: f64 = 1e9;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadFile {
    version: Option<String>,
    cluster: ClusterFile,
    jobs: Vec<JobFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClusterFile {
    capacity: ResFile,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResFile {
    gpu: f64,
    cpu: f64,
    memory_gb: f64,
    storage_gb: f64,
}

impl ResFile {
    fn to_vector(&self) -> ResourceVector {
        ResourceVector::new(self.gpu, self.cpu, self.memory_gb, self.storage_gb)
    }

    fn from_vector(v: &ResourceVector) -> Self {
        Self {
            gpu: v.gpu,
            cpu: v.cpu,
            memory_gb: v.memory,
            storage_gb: v.storage,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    bp_ms: f64,
    fp_ms: f64,
    comm_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    grad_mb: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    global: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mini: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UtilityFile {
    gamma1: f64,
    gamma2: f64,
    gamma3: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JobFile {
    id: String,
    layers: Vec<LayerFile>,
    iterations: u64,
    sgd: String,
    batch: BatchFile,
    model_mb: f64,
    bandwidth_gbps: f64,
    beta1: f64,
    beta2: f64,
    alpha: f64,
    mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    slice_ms: Option<f64>,
    worker_demand: ResFile,
    ps_demand: ResFile,
    limit: ResFile,
    utility: UtilityFile,
}

fn job_to_file(job: &JobSpec) -> Result<JobFile, BenchError> {
    let layers = job
        .layers
        .iter()
        .map(|l| {
            let comm = l.comm_time(job.bandwidth).ok_or_else(|| {
                BenchError::Validation(format!(
                    "job {:?}: layer has neither comm time nor gradient size",
                    job.id
                ))
            })?;
            Ok(LayerFile {
                bp_ms: l.bp / MS,
                fp_ms: l.fp / MS,
                comm_ms: comm / MS,
                grad_mb: l.grad_bits.map(|g| g / MB_BITS),
            })
        })
        .collect::<Result<Vec<_>, BenchError>>()?;
    let (sgd, batch) = match job.sgd {
        SgdMode::Sync { global_batch } => (
            "sync",
            BatchFile {
                global: Some(global_batch),
                mini: None,
            },
        ),
        SgdMode::Async { minibatch } => (
            "async",
            BatchFile {
                global: None,
                mini: Some(minibatch),
            },
        ),
    };
    let (mode, slice_ms) = match job.training_mode {
        TrainingMode::Sequential => ("sequential", None),
        TrainingMode::WaitFree => ("waitfree", None),
        TrainingMode::Priority { slice } => ("priority", Some(slice / MS)),
    };
    Ok(JobFile {
        id: job.id.clone(),
        layers,
        iterations: job.iterations,
        sgd: sgd.to_string(),
        batch,
        model_mb: job.model_bits / MB_BITS,
        bandwidth_gbps: job.bandwidth / GBPS,
        beta1: job.overhead_worker,
        beta2: job.overhead_ps,
        alpha: job.alpha,
        mode: mode.to_string(),
        slice_ms,
        worker_demand: ResFile::from_vector(&job.worker_demand),
        ps_demand: ResFile::from_vector(&job.ps_demand),
        limit: ResFile::from_vector(&job.resource_limit),
        utility: UtilityFile {
            gamma1: job.utility.scale,
            gamma2: job.utility.steepness,
            gamma3: job.utility.midpoint,
        },
    })
}

fn job_from_file(file: &JobFile) -> Result<JobSpec, BenchError> {
    let fail = |msg: String| BenchError::Schema(format!("job {:?}: {msg}", file.id));

    let sgd = match (file.sgd.as_str(), file.batch.global, file.batch.mini) {
        ("sync", Some(global_batch), None) => SgdMode::Sync { global_batch },
        ("async", None, Some(minibatch)) => SgdMode::Async { minibatch },
        ("sync", _, _) => return Err(fail("sync jobs need batch.global only".into())),
        ("async", _, _) => return Err(fail("async jobs need batch.mini only".into())),
        (other, _, _) => return Err(fail(format!("unknown sgd variant {other:?}"))),
    };
    let training_mode = match (file.mode.as_str(), file.slice_ms) {
        ("sequential", None) => TrainingMode::Sequential,
        ("waitfree", None) => TrainingMode::WaitFree,
        ("priority", Some(slice_ms)) => TrainingMode::Priority {
            slice: slice_ms * MS,
        },
        ("priority", None) => return Err(fail("priority mode needs slice_ms".into())),
        (mode @ ("sequential" | "waitfree"), Some(_)) => {
            return Err(fail(format!("{mode} mode takes no slice_ms")))
        }
        (other, _) => return Err(fail(format!("unknown mode {other:?}"))),
    };

    let layers = file
        .layers
        .iter()
        .map(|l| LayerProfile {
            bp: l.bp_ms * MS,
            fp: l.fp_ms * MS,
            comm: Some(l.comm_ms * MS),
            grad_bits: l.grad_mb.map(|g| g * MB_BITS),
        })
        .collect();

    Ok(JobSpec {
        id: file.id.clone(),
        layers,
        iterations: file.iterations,
        model_bits: file.model_mb * MB_BITS,
        bandwidth: file.bandwidth_gbps * GBPS,
        overhead_worker: file.beta1,
        overhead_ps: file.beta2,
        alpha: file.alpha,
        training_mode,
        sgd,
        worker_demand: file.worker_demand.to_vector(),
        ps_demand: file.ps_demand.to_vector(),
        resource_limit: file.limit.to_vector(),
        utility: UtilityParams {
            scale: file.utility.gamma1,
            steepness: file.utility.gamma2,
            midpoint: file.utility.gamma3,
        },
    })
}

/// Serialize a workload to the versioned JSON format.
pub fn workload_to_json(workload: &Workload) -> Result<String, BenchError> {
    let file = WorkloadFile {
        version: Some(SCHEMA_VERSION.to_string()),
        cluster: ClusterFile {
            capacity: ResFile::from_vector(&workload.cluster.capacity),
        },
        jobs: workload
            .jobs
            .iter()
            .map(job_to_file)
            .collect::<Result<Vec<_>, _>>()?,
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    Ok(text)
}

/// Parse and fully validate a workload from JSON text.
pub fn workload_from_json(text: &str) -> Result<Workload, BenchError> {
    let file: WorkloadFile = serde_json::from_str(text)?;
    match file.version.as_deref() {
        Some(SCHEMA_VERSION) => {}
        Some(other) => {
            return Err(BenchError::Schema(format!(
                "unsupported workload version {other:?}, expected {SCHEMA_VERSION:?}"
            )))
        }
        None => return Err(BenchError::Schema("missing version field".into())),
    }
    let jobs = file
        .jobs
        .iter()
        .map(job_from_file)
        .collect::<Result<Vec<_>, _>>()?;
    let workload = Workload {
        cluster: ClusterSpec {
            capacity: file.cluster.capacity.to_vector(),
        },
        jobs,
    };
    // Invariant violations name the job (and layer where applicable).
    for job in &workload.jobs {
        if let Err(errors) = validate_job(job) {
            let lines: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
            return Err(BenchError::Validation(format!(
                "job {:?}: {}",
                job.id,
                lines.join("; ")
            )));
        }
    }
    workload
        .validate()
        .map_err(|e| BenchError::Validation(e.to_string()))?;
    Ok(workload)
}

pub fn save_workload(workload: &Workload, path: &Path) -> Result<(), BenchError> {
    std::fs::write(path, workload_to_json(workload)?)?;
    Ok(())
}

pub fn load_workload(path: &Path) -> Result<Workload, BenchError> {
    workload_from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{generate_workload, GeneratorSpec};

    fn sample_workload() -> Workload {
        let mut spec = GeneratorSpec::new(8, 123);
        spec.ranges.layers = (2, 6);
        generate_workload(&spec)
    }

    #[test]
    fn round_trip_preserves_the_workload() {
        let workload = sample_workload();
        let json = workload_to_json(&workload).unwrap();
        let loaded = workload_from_json(&json).unwrap();
        assert_eq!(loaded, workload);
        // And the serialized form is a fixed point.
        assert_eq!(workload_to_json(&loaded).unwrap(), json);
    }

    #[test]
    fn negative_bp_names_job_and_layer() {
        let mut workload = sample_workload();
        workload.jobs[2].layers[1].bp = -0.001;
        let json = workload_to_json(&workload).unwrap();
        let err = workload_from_json(&json).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("job-2"), "{msg}");
        assert!(msg.contains("layer 2"), "{msg}");
    }

    #[test]
    fn missing_version_is_a_schema_error() {
        let workload = sample_workload();
        let json = workload_to_json(&workload).unwrap();
        let stripped = json.replacen("\"version\": \"1\",", "", 1);
        let err = workload_from_json(&stripped).unwrap_err();
        assert!(matches!(err, BenchError::Schema(_)), "{err}");
    }

    #[test]
    fn wrong_version_rejected() {
        let workload = sample_workload();
        let json = workload_to_json(&workload).unwrap();
        let bumped = json.replacen("\"version\": \"1\"", "\"version\": \"2\"", 1);
        assert!(matches!(
            workload_from_json(&bumped).unwrap_err(),
            BenchError::Schema(_)
        ));
    }

    #[test]
    fn unknown_fields_rejected() {
        let workload = sample_workload();
        let json = workload_to_json(&workload).unwrap();
        let extended = json.replacen("\"version\"", "\"surprise\": 1, \"version\"", 1);
        assert!(matches!(
            workload_from_json(&extended).unwrap_err(),
            BenchError::Parse(_)
        ));
    }

    #[test]
    fn sync_job_requires_global_batch() {
        let workload = sample_workload();
        let json = workload_to_json(&workload).unwrap();
        // Swap a sync job's batch kind without changing the sgd tag.
        let broken = json.replacen("\"global\":", "\"mini\":", 1);
        if broken != json {
            assert!(matches!(
                workload_from_json(&broken).unwrap_err(),
                BenchError::Schema(_)
            ));
        }
    }

    #[test]
    fn gradient_only_layers_resolve_against_bandwidth() {
        let mut workload = sample_workload();
        workload.jobs[0].layers[0].grad_bits = Some(3.0 * MB_BITS);
        let json = workload_to_json(&workload).unwrap();
        let loaded = workload_from_json(&json).unwrap();
        assert_eq!(
            loaded.jobs[0].layers[0].grad_bits,
            Some(3.0 * MB_BITS)
        );
    }
}
