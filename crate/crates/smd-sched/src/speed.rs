//! Per-iteration time, training speed, completion time, and utility.
//!
//! After overlap, one iteration of a job with `w` workers and `p` parameter
//! servers takes
//!
//! ```text
//! t_m = eta_fp * m * t_f  +  eta_bp * t_b  +  2 * eta_comm * (g/p) / (B/w')
//!       +  beta_1 * w  +  beta_2 * p
//! ```
//!
//! where `t_f`, `t_b` are the per-sample FP/BP sums, `g` the model size, `B`
//! the per-pair bandwidth, and `w'` the number of concurrent senders per PS
//! (all of them under synchronous training, an `alpha` fraction under
//! asynchronous). Parameters are split evenly across PSs with identical
//! reserved bandwidth, so all PSs finish together and no per-PS maximum is
//! needed. Training speed is `1/t_m` iterations per second for synchronous
//! jobs and `w/t_m` for asynchronous ones.
//!
//! Multiplying the per-iteration time by the iteration count and regrouping
//! by powers of `w` and `p` yields a small set of completion-time
//! coefficients ([`CostCoeffs`]) that the sum-of-ratios stage consumes.

use thiserror::Error;

use crate::model::{Allocation, JobSpec, SgdMode, UtilityParams};
use crate::timeline::{overlap_coefficients, OverlapCoefficients, TimelineError};

#[derive(Debug, Error, PartialEq)]
pub enum SpeedError {
    #[error("allocation must have at least one worker and one PS")]
    ZeroAllocation,
    #[error(transparent)]
    Timeline(#[from] TimelineError),
}

/// Completion time of a synchronous job as a function of the allocation:
/// `linear_w*w + linear_p*p + constant + w_over_p*(w/p) + inv_w/w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncCostCoeffs {
    /// Per-worker connection overhead over the whole run.
    pub linear_w: f64,
    /// Per-PS connection overhead over the whole run.
    pub linear_p: f64,
    /// Backward-propagation floor, independent of the allocation.
    pub constant: f64,
    /// Gradient/parameter transfer, growing with `w/p`.
    pub w_over_p: f64,
    /// Forward propagation of the global batch, shrinking with `w`.
    pub inv_w: f64,
}

/// Completion time of an asynchronous job:
/// `constant + p_over_w*(p/w) + inv_w/w + inv_p/p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsyncCostCoeffs {
    /// Per-worker overhead; constant because speed scales with `w`.
    pub constant: f64,
    pub p_over_w: f64,
    /// Per-worker compute (FP of the mini-batch plus BP).
    pub inv_w: f64,
    /// Transfer term, shrinking with `p`.
    pub inv_p: f64,
}

/// Completion-time coefficients of a job, by SGD variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostCoeffs {
    Sync(SyncCostCoeffs),
    Async(AsyncCostCoeffs),
}

impl CostCoeffs {
    /// Completion time at a (possibly fractional) allocation.
    pub fn completion(&self, workers: f64, ps: f64) -> f64 {
        match self {
            CostCoeffs::Sync(c) => {
                c.linear_w * workers
                    + c.linear_p * ps
                    + c.constant
                    + c.w_over_p * workers / ps
                    + c.inv_w / workers
            }
            CostCoeffs::Async(c) => {
                c.constant + c.p_over_w * ps / workers + c.inv_w / workers + c.inv_p / ps
            }
        }
    }
}

/// Per-sample FP, BP, and round-trip communication sums `(t_f, t_b, t_r)`.
pub fn aggregate_times(layers: &[crate::timeline::LayerTimes]) -> (f64, f64, f64) {
    let t_f = layers.iter().map(|l| l.fp).sum();
    let t_b = layers.iter().map(|l| l.bp).sum();
    let t_r = 2.0 * layers.iter().map(|l| l.comm).sum::<f64>();
    (t_f, t_b, t_r)
}

/// Assemble the completion-time coefficients of a job from its overlap
/// coefficients.
pub fn cost_coefficients(job: &JobSpec, eta: &OverlapCoefficients) -> CostCoeffs {
    let layers = job.layer_times();
    let (t_f, t_b, _) = aggregate_times(&layers);
    let e = job.iterations as f64;
    match job.sgd {
        SgdMode::Sync { global_batch } => CostCoeffs::Sync(SyncCostCoeffs {
            linear_w: e * job.overhead_worker,
            linear_p: e * job.overhead_ps,
            constant: e * eta.bp * t_b,
            w_over_p: 2.0 * e * eta.comm * job.model_bits / job.bandwidth,
            inv_w: eta.fp * e * global_batch * t_f,
        }),
        SgdMode::Async { minibatch } => CostCoeffs::Async(AsyncCostCoeffs {
            constant: e * job.overhead_worker,
            p_over_w: e * job.overhead_ps,
            inv_w: e * (eta.fp * minibatch * t_f + eta.bp * t_b),
            inv_p: 2.0 * e * job.alpha * eta.comm * job.model_bits / job.bandwidth,
        }),
    }
}

/// Time of one training iteration at the given allocation, seconds.
pub fn iteration_time(job: &JobSpec, alloc: Allocation) -> Result<f64, SpeedError> {
    if alloc.workers < 1 || alloc.ps < 1 {
        return Err(SpeedError::ZeroAllocation);
    }
    let layers = job.layer_times();
    let eta = overlap_coefficients(&layers, job.training_mode)?;
    let (t_f, t_b, _) = aggregate_times(&layers);
    let w = f64::from(alloc.workers);
    let p = f64::from(alloc.ps);
    let transfer = job.model_bits / p / job.bandwidth;
    let overhead = job.overhead_worker * w + job.overhead_ps * p;
    let t_m = match job.sgd {
        SgdMode::Sync { global_batch } => {
            // Global batch split evenly: m = K/w, and all workers send at once.
            eta.fp * (global_batch / w) * t_f + eta.bp * t_b + 2.0 * eta.comm * transfer * w
        }
        SgdMode::Async { minibatch } => {
            // w' = alpha * w workers share each PS's bandwidth concurrently.
            eta.fp * minibatch * t_f + eta.bp * t_b + 2.0 * eta.comm * transfer * job.alpha * w
        }
    };
    Ok(t_m + overhead)
}

/// Iterations completed per second at the given allocation.
pub fn training_speed(job: &JobSpec, alloc: Allocation) -> Result<f64, SpeedError> {
    let t_m = iteration_time(job, alloc)?;
    Ok(match job.sgd {
        SgdMode::Sync { .. } => 1.0 / t_m,
        SgdMode::Async { .. } => f64::from(alloc.workers) / t_m,
    })
}

/// Estimated completion time of the whole job, seconds.
pub fn completion_time(job: &JobSpec, alloc: Allocation) -> Result<f64, SpeedError> {
    Ok(job.iterations as f64 / training_speed(job, alloc)?)
}

/// Sigmoid utility of finishing in `completion` seconds. Exponent overflow
/// saturates cleanly to `0` or `scale`.
pub fn utility_value(params: &UtilityParams, completion: f64) -> f64 {
    params.scale / (1.0 + (params.steepness * (completion - params.midpoint)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LayerProfile, ResourceVector};
    use crate::timeline::TrainingMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Job with eta = (1,1,1) (sequential), t_f = 1, t_b = 2, g/B = 2.
    fn toy_job(sgd: SgdMode, beta1: f64, beta2: f64) -> JobSpec {
        JobSpec {
            id: "toy".into(),
            layers: vec![LayerProfile::new(2.0, 1.0, 0.5)],
            iterations: 10,
            model_bits: 4.0,
            bandwidth: 2.0,
            overhead_worker: beta1,
            overhead_ps: beta2,
            alpha: 0.5,
            training_mode: TrainingMode::Sequential,
            sgd,
            worker_demand: ResourceVector::new(0.0, 1.0, 0.0, 0.0),
            ps_demand: ResourceVector::new(0.0, 1.0, 0.0, 0.0),
            resource_limit: ResourceVector::new(0.0, 16.0, 0.0, 0.0),
            utility: UtilityParams {
                scale: 10.0,
                steepness: 5.0,
                midpoint: 2.0,
            },
        }
    }

    #[test]
    fn sync_coefficients_match_direct_substitution() {
        let job = toy_job(SgdMode::Sync { global_batch: 10.0 }, 0.1, 0.2);
        let eta = OverlapCoefficients {
            fp: 1.0,
            bp: 1.0,
            comm: 1.0,
        };
        match cost_coefficients(&job, &eta) {
            CostCoeffs::Sync(c) => {
                assert_eq!(c.linear_w, 1.0);
                assert_eq!(c.linear_p, 2.0);
                assert_eq!(c.constant, 20.0);
                assert_eq!(c.w_over_p, 40.0);
                assert_eq!(c.inv_w, 100.0);
            }
            _ => panic!("expected sync"),
        }
    }

    #[test]
    fn async_coefficients_match_direct_substitution() {
        let job = toy_job(SgdMode::Async { minibatch: 2.0 }, 0.0, 0.0);
        let eta = OverlapCoefficients {
            fp: 1.0,
            bp: 1.0,
            comm: 1.0,
        };
        match cost_coefficients(&job, &eta) {
            CostCoeffs::Async(c) => {
                assert_eq!(c.constant, 0.0);
                assert_eq!(c.p_over_w, 0.0);
                assert_eq!(c.inv_w, 40.0);
                assert_eq!(c.inv_p, 20.0);
            }
            _ => panic!("expected async"),
        }
    }

    #[test]
    fn halving_overlap_halves_the_overlapped_terms() {
        let job = toy_job(SgdMode::Sync { global_batch: 10.0 }, 0.1, 0.2);
        let full = OverlapCoefficients {
            fp: 1.0,
            bp: 1.0,
            comm: 1.0,
        };
        let half = OverlapCoefficients {
            fp: 0.5,
            bp: 0.5,
            comm: 0.5,
        };
        let (CostCoeffs::Sync(a), CostCoeffs::Sync(b)) =
            (cost_coefficients(&job, &full), cost_coefficients(&job, &half))
        else {
            panic!("expected sync");
        };
        assert_eq!(b.constant, a.constant / 2.0);
        assert_eq!(b.w_over_p, a.w_over_p / 2.0);
        assert_eq!(b.inv_w, a.inv_w / 2.0);
        assert_eq!(b.linear_w, a.linear_w);
    }

    #[test]
    fn sync_iteration_time_example() {
        let job = toy_job(SgdMode::Sync { global_batch: 10.0 }, 0.0, 0.0);
        let t = iteration_time(&job, Allocation::new(2, 1)).unwrap();
        assert!((t - 15.0).abs() < 1e-12);
        assert!((training_speed(&job, Allocation::new(2, 1)).unwrap() - 1.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn async_iteration_time_example() {
        let job = toy_job(SgdMode::Async { minibatch: 2.0 }, 0.0, 0.0);
        let t = iteration_time(&job, Allocation::new(2, 1)).unwrap();
        assert!((t - 8.0).abs() < 1e-12);
        assert!((training_speed(&job, Allocation::new(2, 1)).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn overhead_is_additive() {
        let plain = toy_job(SgdMode::Async { minibatch: 2.0 }, 0.0, 0.0);
        let loaded = toy_job(SgdMode::Async { minibatch: 2.0 }, 1.0, 1.0);
        let a = iteration_time(&plain, Allocation::new(3, 2)).unwrap();
        let b = iteration_time(&loaded, Allocation::new(3, 2)).unwrap();
        assert!((b - a - 5.0).abs() < 1e-12);
    }

    #[test]
    fn completion_time_scales_with_iterations() {
        let mut job = toy_job(SgdMode::Sync { global_batch: 10.0 }, 0.1, 0.2);
        job.iterations = 1;
        let single = completion_time(&job, Allocation::new(2, 1)).unwrap();
        assert!((single - iteration_time(&job, Allocation::new(2, 1)).unwrap()).abs() < 1e-12);
        job.iterations = 2;
        let double = completion_time(&job, Allocation::new(2, 1)).unwrap();
        assert!((double - 2.0 * single).abs() < 1e-12);
    }

    #[test]
    fn completion_matches_coefficient_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..100 {
            let sgd = if i % 2 == 0 {
                SgdMode::Sync {
                    global_batch: rng.gen_range(1..=64) as f64,
                }
            } else {
                SgdMode::Async {
                    minibatch: rng.gen_range(1..=16) as f64,
                }
            };
            let job = toy_job(sgd, rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.5));
            let eta = overlap_coefficients(&job.layer_times(), job.training_mode).unwrap();
            let coeffs = cost_coefficients(&job, &eta);
            let w = rng.gen_range(1..=8);
            let p = rng.gen_range(1..=8);
            let direct = completion_time(&job, Allocation::new(w, p)).unwrap();
            let via_coeffs = coeffs.completion(f64::from(w), f64::from(p));
            assert!(
                (direct - via_coeffs).abs() <= 1e-9 * direct.max(1.0),
                "{direct} vs {via_coeffs}"
            );
        }
    }

    #[test]
    fn speed_is_inverse_homogeneous() {
        let job = toy_job(SgdMode::Sync { global_batch: 10.0 }, 0.3, 0.7);
        let mut scaled = job.clone();
        let c = 3.0;
        for l in &mut scaled.layers {
            l.bp *= c;
            l.fp *= c;
            if let Some(r) = &mut l.comm {
                *r *= c;
            }
        }
        scaled.model_bits *= c;
        scaled.overhead_worker *= c;
        scaled.overhead_ps *= c;
        let alloc = Allocation::new(3, 2);
        let base = training_speed(&job, alloc).unwrap();
        let slow = training_speed(&scaled, alloc).unwrap();
        assert!((slow - base / c).abs() < 1e-12);
    }

    #[test]
    fn utility_midpoint_and_tails() {
        let params = UtilityParams {
            scale: 10.0,
            steepness: 5.0,
            midpoint: 2.0,
        };
        assert!((utility_value(&params, 2.0) - 5.0).abs() < 1e-12);
        assert!((utility_value(&params, 0.0) - 9.999546021312975).abs() < 1e-9);
        assert_eq!(utility_value(&params, 1e9), 0.0);
        assert!(utility_value(&params, 0.0) < 10.0);
    }

    #[test]
    fn utility_is_non_increasing() {
        let params = UtilityParams {
            scale: 7.0,
            steepness: 0.8,
            midpoint: 12.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let a = rng.gen_range(0.0..100.0);
            let b = rng.gen_range(0.0..100.0);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            assert!(utility_value(&params, lo) >= utility_value(&params, hi));
        }
    }

    #[test]
    fn zero_allocation_rejected() {
        let job = toy_job(SgdMode::Sync { global_batch: 10.0 }, 0.0, 0.0);
        assert_eq!(
            iteration_time(&job, Allocation::new(0, 1)),
            Err(SpeedError::ZeroAllocation)
        );
    }
}
