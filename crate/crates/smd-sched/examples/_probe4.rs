use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smd_sched::bench::{generate_workload, GeneratorSpec};
use smd_sched::model::{JobSpec, ResourceVector};
use smd_sched::sor::{build_sor_problem, ratio_bounds, solve_sor, SorError};
use smd_sched::speed::cost_coefficients;
use smd_sched::timeline::overlap_coefficients;

fn inner_quality_job(rng: &mut ChaCha8Rng, index: usize) -> JobSpec {
    let mut spec = GeneratorSpec::new(1, rng.gen());
    spec.ranges.layers = (3, 8);
    spec.ranges.bp_ms = (1, 8);
    spec.ranges.fp_ms = (1, 6);
    spec.ranges.comm_ms = (8, 40);
    spec.ranges.iterations = (20, 60);
    spec.ranges.model_mb = (1, 6);
    spec.ranges.minibatch = (2, 8);
    spec.ranges.batch_multiplier = (1, 5);
    spec.ranges.beta1 = (0.0005, 0.002);
    spec.ranges.beta2 = (0.0, 0.0005);
    let mut job = generate_workload(&spec).jobs.remove(0);
    job.id = format!("inner-{index}");
    job.worker_demand = ResourceVector::new(0.0, 1.0, 0.0, 1.0);
    job.ps_demand = ResourceVector::new(0.0, 0.0, 1.0, 1.0);
    job.resource_limit = ResourceVector::new(0.0, 20.0, 20.0, rng.gen_range(22..=40) as f64);
    job
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for index in 0..200 {
        let job = inner_quality_job(&mut rng, index);
        let eta = overlap_coefficients(&job.layer_times(), job.training_mode).unwrap();
        let coeffs = cost_coefficients(&job, &eta);
        let problem = build_sor_problem(&job, &coeffs).unwrap();
        for eps in [0.5, 0.1, 0.01] {
            match solve_sor(&problem, eps) {
                Ok(_) => {}
                Err(e @ SorError::UnboundedVariable(_)) => {
                    println!("job {index} eps {eps}: {e}");
                    println!("terms: {:#?}", problem.terms);
                    println!("rows {:?} limits {:?}", problem.rows, problem.limits);
                    println!("bounds: {:?}", ratio_bounds(&problem));
                    return;
                }
                Err(e) => println!("job {index} eps {eps}: other {e}"),
            }
        }
    }
    println!("no failures");
}
