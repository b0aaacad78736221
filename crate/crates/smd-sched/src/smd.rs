//! End-to-end schedulers: the two-stage decomposition scheduler, two
//! baseline allocators, and an exhaustive oracle.
//!
//! Every scheduler produces per-job `(workers, ps)` candidates with their
//! modeled utilities, then runs the same knapsack admission over the jobs'
//! resource-limit vectors, so comparisons isolate allocation quality:
//!
//! * [`schedule_smd`] — grid-search the per-job sum-of-ratios relaxation,
//!   randomize-round to integers, admit with the `(1-eps)` knapsack scheme.
//! * [`schedule_esw`] — equal worker/PS split: the largest `k` with
//!   `k*(worker+ps demand)` inside the job's limit.
//! * [`schedule_optimus_greedy`] — start at `(1,1)` and repeatedly take the
//!   larger positive utility gain of adding one worker or one PS.
//! * [`schedule_bruteforce`] — exhaustive per-job enumeration plus exact
//!   knapsack admission; the desk-scale true optimum.
//!
//! Jobs that cannot fit even a single worker and PS are excluded with zero
//! utility rather than failing the run. Per-job randomness is drawn from a
//! ChaCha8 stream derived from the master seed and the job id, so schedules
//! are reproducible and independent of iteration order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{
    resource_feasible, validate_job, Allocation, ClusterSpec, JobOutcome, JobSpec,
    ResourceVector, Schedule, UtilityParams,
};
use crate::mkp::{solve_mkp_eps, solve_mkp_exact, MkpError, MkpInstance};
use crate::rounding::{
    randomized_round, rounding_cost_factor, rounding_shrink_factor, min_capacity_ratio,
    RoundingError, RoundingParams,
};
use crate::sor::{build_sor_problem, solve_sor, SorError};
use crate::speed::{cost_coefficients, utility_value, CostCoeffs, SpeedError};
use crate::timeline::{overlap_coefficients, TimelineError};

#[derive(Debug, Error)]
pub enum SmdError {
    #[error("invalid workload: {0}")]
    InvalidWorkload(String),
    #[error("job {0} cannot fit one worker and one PS")]
    Unschedulable(String),
    #[error("{jobs} jobs exceed the bruteforce cap of {cap}")]
    TooManyJobs { jobs: usize, cap: usize },
    #[error("job {id} admits allocations beyond the bruteforce search caps")]
    CapsExceeded { id: String },
    #[error(transparent)]
    Timeline(#[from] TimelineError),
    #[error(transparent)]
    Speed(#[from] SpeedError),
    #[error(transparent)]
    Sor(#[from] SorError),
    #[error(transparent)]
    Rounding(#[from] RoundingError),
    #[error(transparent)]
    Mkp(#[from] MkpError),
}

/// Knobs of the two-stage scheduler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmdParams {
    /// Grid precision of the inner sum-of-ratios search, in (0, 1).
    pub eps_inner: f64,
    /// Admission-stage knapsack precision, in (0, 1).
    pub eps_admission: f64,
    /// Rounding failure-probability budget, in (0, 1].
    pub delta: f64,
    /// Rounding retry budget.
    pub retries: u32,
    /// Master seed; per-job streams are derived from it and the job id.
    pub seed: u64,
    /// Optional override of the rounding shrink factor (1.0 disables
    /// shrinking; `None` derives it from `delta` and the job's headroom).
    pub shrink_override: Option<f64>,
}

impl Default for SmdParams {
    fn default() -> Self {
        Self {
            eps_inner: 0.01,
            eps_admission: 0.01,
            delta: 1.0,
            retries: 20,
            seed: 0,
            shrink_override: None,
        }
    }
}

/// A batch of jobs to schedule against one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub cluster: ClusterSpec,
    pub jobs: Vec<JobSpec>,
}

impl Workload {
    /// Cluster positivity, unique job ids, and every job invariant.
    pub fn validate(&self) -> Result<(), SmdError> {
        self.cluster
            .validate()
            .map_err(|e| SmdError::InvalidWorkload(e.to_string()))?;
        let mut seen = std::collections::BTreeSet::new();
        for job in &self.jobs {
            if !seen.insert(job.id.as_str()) {
                return Err(SmdError::InvalidWorkload(format!(
                    "duplicate job id {:?}",
                    job.id
                )));
            }
            if let Err(errors) = validate_job(job) {
                let lines: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
                return Err(SmdError::InvalidWorkload(format!(
                    "job {:?}: {}",
                    job.id,
                    lines.join("; ")
                )));
            }
        }
        Ok(())
    }
}

/// ChaCha8 stream for one job, derived from the master seed and an FNV-1a
/// hash of the job id. Stable across platforms and iteration orders.
pub fn job_rng(master_seed: u64, job_id: &str) -> ChaCha8Rng {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in job_id.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(master_seed ^ hash)
}

/// Inner-stage result for one job.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerAllocation {
    pub allocation: Allocation,
    pub utility: f64,
    pub completion: f64,
    /// Fractional optimum before rounding.
    pub fractional: Vec<f64>,
    /// Grid-search objective value (completion-time bound of the
    /// relaxation).
    pub relaxation_objective: f64,
}

fn job_cost_model(job: &JobSpec) -> Result<CostCoeffs, SmdError> {
    let eta = overlap_coefficients(&job.layer_times(), job.training_mode)?;
    Ok(cost_coefficients(job, &eta))
}

/// Relax, grid-search, and round one job's allocation; utility comes from
/// the rounded allocation's modeled completion time.
pub fn inner_allocate(job: &JobSpec, params: &SmdParams) -> Result<InnerAllocation, SmdError> {
    if !resource_feasible(job, Allocation::new(1, 1)) {
        return Err(SmdError::Unschedulable(job.id.clone()));
    }
    let coeffs = job_cost_model(job)?;
    let problem = build_sor_problem(job, &coeffs)?;
    let relaxed = solve_sor(&problem, params.eps_inner)?;

    let mut rng = job_rng(params.seed, &job.id);
    let rounding = RoundingParams {
        delta: params.delta,
        retries: params.retries,
        shrink_override: params.shrink_override,
    };
    let rounded = match randomized_round(
        &relaxed.x,
        &problem.rows,
        &problem.limits,
        &rounding,
        &mut rng,
        |x| problem.objective(x),
    ) {
        Ok(r) => r,
        Err(RoundingError::Unschedulable) => {
            return Err(SmdError::Unschedulable(job.id.clone()))
        }
        Err(e) => return Err(e.into()),
    };

    let allocation = Allocation::new(rounded.x[0], rounded.x[1]);
    let completion = coeffs.completion(f64::from(allocation.workers), f64::from(allocation.ps));
    Ok(InnerAllocation {
        allocation,
        utility: utility_value(&job.utility, completion),
        completion,
        fractional: relaxed.x,
        relaxation_objective: relaxed.objective,
    })
}

/// Per-job candidate fed into the shared admission stage.
struct Candidate {
    allocation: Option<Allocation>,
    utility: f64,
    completion: Option<f64>,
}

impl Candidate {
    fn unschedulable() -> Self {
        Self {
            allocation: None,
            utility: 0.0,
            completion: None,
        }
    }
}

fn admit_and_assemble(
    workload: &Workload,
    algorithm: &str,
    seed: u64,
    candidates: Vec<Candidate>,
    admission: impl Fn(&MkpInstance) -> Result<Vec<usize>, SmdError>,
) -> Result<Schedule, SmdError> {
    let capacity = workload.cluster.capacity.as_array().to_vec();
    let utilities: Vec<f64> = candidates
        .iter()
        .map(|c| if c.allocation.is_some() { c.utility } else { 0.0 })
        .collect();
    let demands: Vec<Vec<f64>> = workload
        .jobs
        .iter()
        .zip(&candidates)
        .map(|(job, c)| {
            if c.allocation.is_some() {
                job.resource_limit.as_array().to_vec()
            } else {
                // Excluded jobs must never be admitted; oversize the demand
                // (finite, so relaxations stay well posed).
                capacity.iter().map(|&c| 2.0 * c + 1.0).collect()
            }
        })
        .collect();
    let instance = MkpInstance::new(utilities, demands, capacity, 0.5).map_err(SmdError::from)?;
    let selected = admission(&instance)?;

    let mut admitted = vec![false; workload.jobs.len()];
    for &i in &selected {
        admitted[i] = true;
    }
    let mut used = ResourceVector::zero();
    let mut specified = ResourceVector::zero();
    let mut jobs = Vec::with_capacity(workload.jobs.len());
    for (i, (job, cand)) in workload.jobs.iter().zip(&candidates).enumerate() {
        let is_admitted = admitted[i];
        if is_admitted {
            let alloc = cand.allocation.expect("admitted job has an allocation");
            used = used
                + job.worker_demand * f64::from(alloc.workers)
                + job.ps_demand * f64::from(alloc.ps);
            specified = specified + job.resource_limit;
        }
        jobs.push(JobOutcome {
            id: job.id.clone(),
            admitted: is_admitted,
            allocation: if is_admitted { cand.allocation } else { None },
            utility: cand.utility,
            completion_seconds: cand.completion,
        });
    }
    Ok(Schedule {
        algorithm: algorithm.to_string(),
        seed,
        jobs,
        used,
        specified,
        capacity: workload.cluster.capacity,
    })
}

fn eps_admission_fn(
    eps: f64,
) -> impl Fn(&MkpInstance) -> Result<Vec<usize>, SmdError> {
    move |base: &MkpInstance| {
        let mut instance = base.clone();
        instance.eps = eps;
        Ok(solve_mkp_eps(&instance)?.selected)
    }
}

/// Two-stage scheduler: per-job inner allocation, then `(1-eps)` knapsack
/// admission over the jobs' resource limits.
pub fn schedule_smd(workload: &Workload, params: &SmdParams) -> Result<Schedule, SmdError> {
    let mut candidates = Vec::with_capacity(workload.jobs.len());
    for job in &workload.jobs {
        match inner_allocate(job, params) {
            Ok(inner) => candidates.push(Candidate {
                allocation: Some(inner.allocation),
                utility: inner.utility,
                completion: Some(inner.completion),
            }),
            Err(SmdError::Unschedulable(_)) => candidates.push(Candidate::unschedulable()),
            Err(e) => return Err(e),
        }
    }
    admit_and_assemble(
        workload,
        "smd",
        params.seed,
        candidates,
        eps_admission_fn(params.eps_admission),
    )
}

fn candidate_from_alloc(job: &JobSpec, coeffs: &CostCoeffs, alloc: Allocation) -> Candidate {
    let completion = coeffs.completion(f64::from(alloc.workers), f64::from(alloc.ps));
    Candidate {
        allocation: Some(alloc),
        utility: utility_value(&job.utility, completion),
        completion: Some(completion),
    }
}

/// Largest equal worker/PS count that fits the job's resource limit.
fn esw_count(job: &JobSpec) -> u32 {
    let combined = job.worker_demand + job.ps_demand;
    let mut k = f64::INFINITY;
    for (demand, limit) in combined
        .as_array()
        .iter()
        .zip(job.resource_limit.as_array())
    {
        if *demand > 0.0 {
            k = k.min((limit / demand + 1e-9).floor());
        }
    }
    if k.is_finite() && k >= 1.0 {
        k as u32
    } else {
        0
    }
}

/// Equal-split baseline: `k` workers and `k` parameter servers.
pub fn schedule_esw(workload: &Workload, eps_admission: f64) -> Result<Schedule, SmdError> {
    let mut candidates = Vec::with_capacity(workload.jobs.len());
    for job in &workload.jobs {
        let k = esw_count(job);
        if k == 0 {
            candidates.push(Candidate::unschedulable());
            continue;
        }
        let coeffs = job_cost_model(job)?;
        candidates.push(candidate_from_alloc(job, &coeffs, Allocation::new(k, k)));
    }
    admit_and_assemble(
        workload,
        "esw",
        0,
        candidates,
        eps_admission_fn(eps_admission),
    )
}

/// Gain-greedy baseline: from `(1,1)`, repeatedly add the worker or the PS
/// with the larger positive utility gain (ties go to the worker) until no
/// feasible move improves the utility.
pub fn schedule_optimus_greedy(
    workload: &Workload,
    eps_admission: f64,
) -> Result<Schedule, SmdError> {
    let mut candidates = Vec::with_capacity(workload.jobs.len());
    for job in &workload.jobs {
        if !resource_feasible(job, Allocation::new(1, 1)) {
            candidates.push(Candidate::unschedulable());
            continue;
        }
        let coeffs = job_cost_model(job)?;
        let utility_at = |alloc: Allocation| {
            utility_value(
                &job.utility,
                coeffs.completion(f64::from(alloc.workers), f64::from(alloc.ps)),
            )
        };
        let mut current = Allocation::new(1, 1);
        let mut current_utility = utility_at(current);
        loop {
            let more_workers = Allocation::new(current.workers + 1, current.ps);
            let more_ps = Allocation::new(current.workers, current.ps + 1);
            let gain_w = resource_feasible(job, more_workers)
                .then(|| utility_at(more_workers) - current_utility);
            let gain_p = resource_feasible(job, more_ps)
                .then(|| utility_at(more_ps) - current_utility);
            let step = match (gain_w, gain_p) {
                (Some(gw), Some(gp)) if gw > 0.0 && gw >= gp => Some((more_workers, gw)),
                (Some(gw), None) if gw > 0.0 => Some((more_workers, gw)),
                (_, Some(gp)) if gp > 0.0 => Some((more_ps, gp)),
                _ => None,
            };
            match step {
                Some((next, gain)) => {
                    current = next;
                    current_utility += gain;
                }
                None => break,
            }
        }
        candidates.push(candidate_from_alloc(job, &coeffs, current));
    }
    admit_and_assemble(
        workload,
        "optimus",
        0,
        candidates,
        eps_admission_fn(eps_admission),
    )
}

/// Search caps of the exhaustive oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteforceCaps {
    pub max_workers: u32,
    pub max_ps: u32,
    pub max_jobs: usize,
}

impl Default for BruteforceCaps {
    fn default() -> Self {
        Self {
            max_workers: 10,
            max_ps: 10,
            max_jobs: 12,
        }
    }
}

/// Exhaustive per-job allocation search plus exact knapsack admission: the
/// true optimum whenever every job's feasible allocations fit inside the
/// caps.
pub fn schedule_bruteforce(
    workload: &Workload,
    caps: &BruteforceCaps,
) -> Result<Schedule, SmdError> {
    if workload.jobs.len() > caps.max_jobs {
        return Err(SmdError::TooManyJobs {
            jobs: workload.jobs.len(),
            cap: caps.max_jobs,
        });
    }
    let mut candidates = Vec::with_capacity(workload.jobs.len());
    for job in &workload.jobs {
        if !resource_feasible(job, Allocation::new(1, 1)) {
            candidates.push(Candidate::unschedulable());
            continue;
        }
        // The search must cover the whole feasible box to be an oracle.
        if resource_feasible(job, Allocation::new(caps.max_workers + 1, 1))
            || resource_feasible(job, Allocation::new(1, caps.max_ps + 1))
        {
            return Err(SmdError::CapsExceeded { id: job.id.clone() });
        }
        let coeffs = job_cost_model(job)?;
        let mut best: Option<(Allocation, f64)> = None;
        for w in 1..=caps.max_workers {
            for p in 1..=caps.max_ps {
                let alloc = Allocation::new(w, p);
                if !resource_feasible(job, alloc) {
                    continue;
                }
                let u = utility_value(
                    &job.utility,
                    coeffs.completion(f64::from(w), f64::from(p)),
                );
                if best.as_ref().is_none_or(|(_, cur)| u > *cur) {
                    best = Some((alloc, u));
                }
            }
        }
        match best {
            Some((alloc, _)) => candidates.push(candidate_from_alloc(job, &coeffs, alloc)),
            None => candidates.push(Candidate::unschedulable()),
        }
    }
    let max_jobs = caps.max_jobs;
    admit_and_assemble(workload, "bruteforce", 0, candidates, move |instance| {
        Ok(solve_mkp_exact(instance, max_jobs.max(instance.utilities.len()))?.selected)
    })
}

/// Total utility of the admitted jobs.
pub fn total_utility(schedule: &Schedule) -> f64 {
    schedule
        .jobs
        .iter()
        .filter(|j| j.admitted)
        .fold(0.0, |acc, j| acc + j.utility)
}

/// Worst-case guaranteed fraction of the optimal total utility for a run
/// with the given parameters, evaluated on the per-job optimal completion
/// times: the most any job can be worth over the least any job is worth
/// after the relaxation and rounding inflation, times the admission factor.
pub fn approximation_ratio_bound(
    optima: &[(UtilityParams, f64)],
    params: &SmdParams,
    shrink: f64,
) -> f64 {
    let inflation = (1.0 + params.eps_inner) * rounding_cost_factor(3, params.delta, shrink);
    let mut best = f64::NEG_INFINITY;
    let mut worst_inflated = f64::INFINITY;
    for (utility, completion) in optima {
        best = best.max(utility_value(utility, *completion));
        worst_inflated = worst_inflated.min(utility_value(utility, completion * inflation));
    }
    if best <= 0.0 {
        return 0.0;
    }
    worst_inflated * (1.0 - params.eps_admission) / best
}

/// Shrink factor a job's rounding stage would use under `params`.
pub fn job_shrink_factor(job: &JobSpec, params: &SmdParams) -> Result<f64, SmdError> {
    if let Some(s) = params.shrink_override {
        return Ok(s);
    }
    let rows: Vec<Vec<f64>> = (0..4)
        .map(|r| {
            vec![
                job.worker_demand.as_array()[r],
                job.ps_demand.as_array()[r],
            ]
        })
        .collect();
    let headroom = min_capacity_ratio(&rows, &job.resource_limit.as_array())?;
    Ok(rounding_shrink_factor(params.delta, rows.len(), headroom)?)
}
