//! Command-line front end: generate workloads, schedule them, inspect
//! per-job timelines, sweep experiments to CSV, and compare against the
//! exhaustive oracle. All logic lives in the library; this binary only
//! parses flags and prints.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use smd_sched::bench::{
    self, io, AlgoKind, BenchError, ExperimentConfig, GeneratorSpec, ModePin, SgdPin,
    WorkloadSource,
};
use smd_sched::smd::{
    schedule_bruteforce, schedule_esw, schedule_optimus_greedy, schedule_smd, total_utility,
    BruteforceCaps, SmdError, SmdParams,
};
use smd_sched::timeline::{
    overlap_coefficients, priority_timeline, sequential_time, waitfree_timeline, TrainingMode,
};

#[derive(Parser)]
#[command(name = "smd-sched", version, about = "Admission and worker/PS allocation for DNN training jobs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic workload JSON.
    Gen(GenArgs),
    /// Run one scheduling algorithm on a workload and print the schedule.
    Schedule(ScheduleArgs),
    /// Report per-job iteration times and overlap coefficients.
    Timeline(TimelineArgs),
    /// Run a repetition sweep and emit the results CSV.
    Experiment(ExperimentArgs),
    /// Compare every algorithm against the exhaustive oracle.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Number of jobs to sample.
    #[arg(long, default_value_t = 10)]
    jobs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cluster capacity as a multiple of the unit cluster.
    #[arg(long, default_value_t = 1.0)]
    capacity_scale: f64,
    /// Pin every job to one SGD variant (sync|async).
    #[arg(long)]
    sgd: Option<String>,
    /// Pin every job to one overlap model (sequential|waitfree|priority).
    #[arg(long)]
    mode: Option<String>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AlgoParams {
    /// Inner grid precision.
    #[arg(long, default_value_t = 0.01)]
    eps1: f64,
    /// Admission knapsack precision.
    #[arg(long, default_value_t = 0.01)]
    eps2: f64,
    /// Rounding failure-probability budget.
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    /// Rounding retry budget.
    #[arg(long, default_value_t = 20)]
    retries: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the rounding shrink factor (e.g. 1.0 to disable shrinking).
    #[arg(long)]
    mdelta: Option<f64>,
    /// Bruteforce per-job worker search cap.
    #[arg(long, default_value_t = 10)]
    wmax: u32,
    /// Bruteforce per-job PS search cap.
    #[arg(long, default_value_t = 10)]
    pmax: u32,
    /// Bruteforce job-count cap.
    #[arg(long, default_value_t = 12)]
    max_jobs: usize,
}

impl AlgoParams {
    fn smd_params(&self) -> SmdParams {
        SmdParams {
            eps_inner: self.eps1,
            eps_admission: self.eps2,
            delta: self.delta,
            retries: self.retries,
            seed: self.seed,
            shrink_override: self.mdelta,
        }
    }

    fn caps(&self) -> BruteforceCaps {
        BruteforceCaps {
            max_workers: self.wmax,
            max_ps: self.pmax,
            max_jobs: self.max_jobs,
        }
    }
}

#[derive(Args)]
struct ScheduleArgs {
    /// Workload JSON path.
    #[arg(long)]
    workload: PathBuf,
    /// Algorithm: smd|esw|optimus|bruteforce.
    #[arg(long, default_value = "smd")]
    algo: String,
    #[command(flatten)]
    params: AlgoParams,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TimelineArgs {
    #[arg(long)]
    workload: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Workload JSON path; mutually exclusive with --jobs.
    #[arg(long)]
    workload: Option<PathBuf>,
    /// Generate this many jobs per repetition instead of loading a file.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    capacity_scale: f64,
    /// Comma-separated algorithm list.
    #[arg(long, default_value = "smd,esw,optimus")]
    algos: String,
    #[arg(long, default_value_t = 1)]
    reps: u32,
    /// Write 0 in the wall-clock column so reruns are byte-identical.
    #[arg(long, default_value_t = false)]
    no_timing: bool,
    #[command(flatten)]
    params: AlgoParams,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    workload: PathBuf,
    #[command(flatten)]
    params: AlgoParams,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), BenchError> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run_gen(args: &GenArgs) -> Result<(), BenchError> {
    let mut spec = GeneratorSpec::new(args.jobs, args.seed);
    spec.capacity_scale = args.capacity_scale;
    spec.sgd = match args.sgd.as_deref() {
        None => None,
        Some("sync") => Some(SgdPin::Sync),
        Some("async") => Some(SgdPin::Async),
        Some(other) => {
            return Err(BenchError::Validation(format!(
                "unknown sgd pin {other:?} (want sync|async)"
            )))
        }
    };
    spec.mode = match args.mode.as_deref() {
        None => None,
        Some("sequential") => Some(ModePin::Sequential),
        Some("waitfree") => Some(ModePin::WaitFree),
        Some("priority") => Some(ModePin::Priority),
        Some(other) => {
            return Err(BenchError::Validation(format!(
                "unknown mode pin {other:?} (want sequential|waitfree|priority)"
            )))
        }
    };
    let workload = bench::generate_workload(&spec);
    emit(&args.out, &io::workload_to_json(&workload)?)
}

fn run_schedule(args: &ScheduleArgs) -> Result<(), BenchError> {
    let workload = io::load_workload(&args.workload)?;
    workload
        .validate()
        .map_err(|e| BenchError::Validation(e.to_string()))?;
    let schedule = match args.algo.as_str() {
        "smd" => schedule_smd(&workload, &args.params.smd_params())?,
        "esw" => schedule_esw(&workload, args.params.eps2)?,
        "optimus" => schedule_optimus_greedy(&workload, args.params.eps2)?,
        "bruteforce" => schedule_bruteforce(&workload, &args.params.caps())?,
        other => {
            return Err(BenchError::Validation(format!(
                "unknown algorithm {other:?} (want smd|esw|optimus|bruteforce)"
            )))
        }
    };
    let mut text = serde_json::to_string_pretty(&schedule)?;
    text.push('\n');
    emit(&args.out, &text)
}

fn run_timeline(args: &TimelineArgs) -> Result<(), BenchError> {
    let workload = io::load_workload(&args.workload)?;
    let mut text = String::from("job,mode,t_sequential_s,t_model_s,eta_fp,eta_bp,eta_comm\n");
    for job in &workload.jobs {
        let layers = job.layer_times();
        let sequential =
            sequential_time(&layers).map_err(|e| BenchError::Validation(e.to_string()))?;
        let (modeled, mode_name) = match job.training_mode {
            TrainingMode::Sequential => (sequential, "sequential"),
            TrainingMode::WaitFree => (
                waitfree_timeline(&layers)
                    .map_err(|e| BenchError::Validation(e.to_string()))?
                    .total,
                "waitfree",
            ),
            TrainingMode::Priority { slice } => (
                priority_timeline(&layers, slice)
                    .map_err(|e| BenchError::Validation(e.to_string()))?
                    .total,
                "priority",
            ),
        };
        let eta = overlap_coefficients(&layers, job.training_mode)
            .map_err(|e| BenchError::Validation(e.to_string()))?;
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            job.id, mode_name, sequential, modeled, eta.fp, eta.bp, eta.comm
        ));
    }
    emit(&args.out, &text)
}

fn run_experiment_cmd(args: &ExperimentArgs) -> Result<(), BenchError> {
    let source = match (&args.workload, args.jobs) {
        (Some(path), None) => WorkloadSource::File(path.clone()),
        (None, Some(jobs)) => {
            let mut spec = GeneratorSpec::new(jobs, args.params.seed);
            spec.capacity_scale = args.capacity_scale;
            WorkloadSource::Generate(spec)
        }
        _ => {
            return Err(BenchError::Validation(
                "pass exactly one of --workload or --jobs".into(),
            ))
        }
    };
    let mut algorithms = Vec::new();
    for name in args.algos.split(',').filter(|s| !s.is_empty()) {
        match AlgoKind::parse(name.trim()) {
            Some(a) => algorithms.push(a),
            None => {
                return Err(BenchError::Validation(format!(
                    "unknown algorithm {name:?} in --algos"
                )))
            }
        }
    }
    if algorithms.is_empty() {
        return Err(BenchError::Validation("--algos must name at least one".into()));
    }
    let config = ExperimentConfig {
        source,
        algorithms,
        params: args.params.smd_params(),
        repetitions: args.reps.max(1),
        caps: args.params.caps(),
        record_timing: !args.no_timing,
        output: args.out.clone(),
    };
    let csv = bench::run_experiment(&config)?;
    if args.out.is_none() {
        print!("{csv}");
    }
    Ok(())
}

fn run_oracle(args: &OracleArgs) -> Result<(), BenchError> {
    let workload = io::load_workload(&args.workload)?;
    workload
        .validate()
        .map_err(|e| BenchError::Validation(e.to_string()))?;
    let best = schedule_bruteforce(&workload, &args.params.caps())?;
    let best_total = total_utility(&best);
    let mut text = String::from("algorithm,total_utility,ratio_to_bruteforce,admitted\n");
    text.push_str(&format!(
        "bruteforce,{},1,{}\n",
        best_total,
        best.admitted_count()
    ));
    let runs = [
        ("smd", schedule_smd(&workload, &args.params.smd_params())?),
        ("esw", schedule_esw(&workload, args.params.eps2)?),
        (
            "optimus",
            schedule_optimus_greedy(&workload, args.params.eps2)?,
        ),
    ];
    for (name, schedule) in runs {
        let value = total_utility(&schedule);
        let ratio = if best_total > 0.0 { value / best_total } else { 1.0 };
        text.push_str(&format!(
            "{name},{value},{ratio},{}\n",
            schedule.admitted_count()
        ));
    }
    emit(&args.out, &text)
}

/// Exit 0 on success, 2 on bad input (flags, files, workload invariants),
/// 1 on anything internal.
fn classify(err: &BenchError) -> u8 {
    match err {
        BenchError::Schema(_) | BenchError::Validation(_) | BenchError::Parse(_) => 2,
        BenchError::Schedule(inner) => match inner {
            SmdError::InvalidWorkload(_)
            | SmdError::TooManyJobs { .. }
            | SmdError::CapsExceeded { .. } => 2,
            _ => 1,
        },
        BenchError::Io(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(args) => run_gen(args),
        Command::Schedule(args) => run_schedule(args),
        Command::Timeline(args) => run_timeline(args),
        Command::Experiment(args) => run_experiment_cmd(args),
        Command::Oracle(args) => run_oracle(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(classify(&e))
        }
    }
}
