//! Grid-search approximation of the per-job sum-of-ratios problem.
//!
//! The continuous relaxation of a job's allocation problem is
//!
//! ```text
//! minimize   sum_j (a_j . x + q_j) / (c_j . x + d_j)
//! subject to A x <= C,  x >= 1
//! ```
//!
//! over `x = (workers, ps)`, with every numerator and denominator positive
//! on the (bounded) packing region. Sum-of-ratios programs are NP-complete
//! in general, but here the number of summands is 2 or 3 by construction, so
//! an epsilon-grid over the attainable range of each non-pivot ratio is
//! affordable:
//!
//! 1. bound every summand's range `[l_j, u_j]` with two linear-fractional
//!    solves;
//! 2. move the summand with the widest `u/l` span into the objective (the
//!    "pivot") and lay a geometric grid `l*(1+eps)^k` over the others;
//! 3. at every grid point, minimize the pivot ratio subject to the other
//!    ratios capped at their grid values — a linear-fractional program after
//!    clearing denominators;
//! 4. keep the grid point with the smallest cap-sum-plus-pivot value.
//!
//! The winner's objective is within `(1+eps)` of the continuous optimum.

use thiserror::Error;

use crate::lp::{solve_linear_fractional, LinearFractional, LpError, LpStatus, Sense};
use crate::model::JobSpec;
use crate::speed::CostCoeffs;

#[derive(Debug, Error, PartialEq)]
pub enum SorError {
    #[error("epsilon must lie in (0, 1), got {0}")]
    BadEpsilon(f64),
    #[error("variable {0} is unbounded: job has empty resource limits")]
    UnboundedVariable(usize),
    #[error("packing region is infeasible")]
    InfeasibleRegion,
    #[error("ratio term {0} violates positivity over the region")]
    PositivityViolated(usize),
    #[error("no feasible grid point")]
    NoFeasibleGridPoint,
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// One linear ratio `(num . x + num_const) / (den . x + den_const)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioTerm {
    pub num: Vec<f64>,
    pub num_const: f64,
    pub den: Vec<f64>,
    pub den_const: f64,
}

impl RatioTerm {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let num: f64 = self.num.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.num_const;
        let den: f64 = self.den.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.den_const;
        num / den
    }

    fn is_zero(&self) -> bool {
        self.num_const == 0.0 && self.num.iter().all(|&v| v == 0.0)
    }
}

/// Minimization of a sum of linear ratios over a packing polytope
/// intersected with `x >= lower`.
#[derive(Debug, Clone, PartialEq)]
pub struct SumOfRatiosProblem {
    pub terms: Vec<RatioTerm>,
    /// Packing rows (nonnegative coefficients).
    pub rows: Vec<Vec<f64>>,
    pub limits: Vec<f64>,
    pub lower: Vec<f64>,
    pub names: Vec<String>,
}

impl SumOfRatiosProblem {
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        let rows_ok = self.rows.iter().zip(&self.limits).all(|(row, &limit)| {
            row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() <= limit + tol
        });
        rows_ok && x.iter().zip(&self.lower).all(|(&v, &l)| v >= l - tol)
    }
}

/// Attainable range of every summand, and which one the search pivots on.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioBounds {
    /// Minimum of each summand over the region.
    pub min: Vec<f64>,
    /// Maximum of each summand over the region.
    pub max: Vec<f64>,
    /// Index of the summand with the largest max/min span (first index on
    /// ties); this one is optimized at every grid point instead of gridded.
    pub pivot: usize,
}

/// Geometric grids over the non-pivot summands.
///
/// `points[k]` holds `min_k * (1+eps)^i` for `i = 0..=levels[k]+1`:
/// `levels[k]` is the largest power still within the summand's range, and
/// one extra ceiling point strictly above the maximum is always kept. The
/// ceiling matters twice: the all-ceilings grid point admits every feasible
/// allocation (so the search can never come up empty), and any attainable
/// summand value has a grid cap at most `(1+eps)` above it (which is what
/// the approximation guarantee rests on). Without it, a summand whose whole
/// range spans less than `(1+eps)` would be capped at its minimum, and caps
/// at the minima of conflicting summands can be jointly unsatisfiable.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSet {
    pub points: Vec<Vec<f64>>,
    pub levels: Vec<u32>,
}

impl GridSet {
    /// Number of grid points in the product set.
    pub fn len(&self) -> usize {
        self.points.iter().map(|q| q.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.points.iter().any(|q| q.is_empty())
    }

    /// Iterate the product set lazily in lexicographic order.
    pub fn iter(&self) -> GridIter<'_> {
        GridIter {
            grid: self,
            index: vec![0; self.points.len()],
            done: self.is_empty(),
        }
    }
}

pub struct GridIter<'a> {
    grid: &'a GridSet,
    index: Vec<usize>,
    done: bool,
}

impl Iterator for GridIter<'_> {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        if self.done {
            return None;
        }
        let point: Vec<f64> = self
            .index
            .iter()
            .zip(&self.grid.points)
            .map(|(&i, q)| q[i])
            .collect();
        // Odometer increment, last coordinate fastest.
        let mut k = self.index.len();
        loop {
            if k == 0 {
                self.done = true;
                break;
            }
            k -= 1;
            self.index[k] += 1;
            if self.index[k] < self.grid.points[k].len() {
                break;
            }
            self.index[k] = 0;
        }
        if self.index.is_empty() {
            self.done = true;
        }
        Some(point)
    }
}

/// Fractional solution of the relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct SorSolution {
    pub x: Vec<f64>,
    /// Best grid value: cap sum plus optimized pivot ratio. Within
    /// `(1+eps)` of the continuous optimum.
    pub objective: f64,
    /// The winning grid point (caps for non-pivot summands), if any grid was
    /// searched.
    pub winning_point: Option<Vec<f64>>,
    /// Grid points whose subproblem was actually solved (after pruning).
    pub solved_points: usize,
}

/// Rewrite a job's completion time as a sum-of-ratios program over
/// `(workers, ps)` with the job's packing constraints and `x >= 1`.
///
/// Summands that are identically zero (no overheads, zero BP) are dropped;
/// they contribute nothing and would break the positive-range grid.
pub fn build_sor_problem(job: &JobSpec, coeffs: &CostCoeffs) -> Result<SumOfRatiosProblem, SorError> {
    let mut terms = Vec::new();
    match coeffs {
        CostCoeffs::Sync(c) => {
            terms.push(RatioTerm {
                num: vec![c.linear_w, c.linear_p],
                num_const: c.constant,
                den: vec![0.0, 0.0],
                den_const: 1.0,
            });
            terms.push(RatioTerm {
                num: vec![c.w_over_p, 0.0],
                num_const: 0.0,
                den: vec![0.0, 1.0],
                den_const: 0.0,
            });
            terms.push(RatioTerm {
                num: vec![0.0, 0.0],
                num_const: c.inv_w,
                den: vec![1.0, 0.0],
                den_const: 0.0,
            });
        }
        CostCoeffs::Async(c) => {
            terms.push(RatioTerm {
                num: vec![c.constant, c.p_over_w],
                num_const: c.inv_w,
                den: vec![1.0, 0.0],
                den_const: 0.0,
            });
            terms.push(RatioTerm {
                num: vec![0.0, 0.0],
                num_const: c.inv_p,
                den: vec![0.0, 1.0],
                den_const: 0.0,
            });
        }
    }
    terms.retain(|t| !t.is_zero());

    let demand = [job.worker_demand.as_array(), job.ps_demand.as_array()];
    let limit = job.resource_limit.as_array();
    let rows: Vec<Vec<f64>> = (0..4).map(|r| vec![demand[0][r], demand[1][r]]).collect();
    let limits: Vec<f64> = limit.to_vec();

    // Packing rows must bound both variables or the region is unbounded.
    for var in 0..2 {
        if !rows.iter().any(|row| row[var] > 0.0) {
            return Err(SorError::UnboundedVariable(var));
        }
    }

    Ok(SumOfRatiosProblem {
        terms,
        rows,
        limits,
        lower: vec![1.0, 1.0],
        names: vec!["workers".into(), "ps".into()],
    })
}

fn fractional_for(problem: &SumOfRatiosProblem, term: &RatioTerm, sense: Sense) -> LinearFractional {
    LinearFractional {
        num: term.num.clone(),
        num_const: term.num_const,
        den: term.den.clone(),
        den_const: term.den_const,
        sense,
        rows: problem.rows.clone(),
        rhs: problem.limits.clone(),
        lower: problem.lower.clone(),
        upper: vec![None; problem.lower.len()],
    }
}

/// Range of every summand over the region via Charnes-Cooper solves.
pub fn ratio_bounds(problem: &SumOfRatiosProblem) -> Result<RatioBounds, SorError> {
    let mut min = Vec::with_capacity(problem.terms.len());
    let mut max = Vec::with_capacity(problem.terms.len());
    for (i, term) in problem.terms.iter().enumerate() {
        let lo = solve_linear_fractional(&fractional_for(problem, term, Sense::Minimize))?;
        let hi = solve_linear_fractional(&fractional_for(problem, term, Sense::Maximize))?;
        match (lo.status, hi.status) {
            (LpStatus::Optimal, LpStatus::Optimal) => {
                if lo.objective <= 0.0 {
                    return Err(SorError::PositivityViolated(i));
                }
                min.push(lo.objective);
                max.push(hi.objective.max(lo.objective));
            }
            (LpStatus::Infeasible, _) | (_, LpStatus::Infeasible) => {
                return Err(SorError::InfeasibleRegion)
            }
            _ => return Err(SorError::UnboundedVariable(i)),
        }
    }
    let mut pivot = 0;
    let mut best_span = f64::NEG_INFINITY;
    for i in 0..min.len() {
        let span = max[i] / min[i];
        if span > best_span + 1e-15 {
            best_span = span;
            pivot = i;
        }
    }
    Ok(RatioBounds { min, max, pivot })
}

/// Geometric grid `min * (1+eps)^i` per summand, plus the ceiling point.
pub fn build_grid(min: &[f64], max: &[f64], eps: f64) -> Result<GridSet, SorError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(SorError::BadEpsilon(eps));
    }
    let mut points = Vec::with_capacity(min.len());
    let mut levels = Vec::with_capacity(min.len());
    for (&lo, &hi) in min.iter().zip(max) {
        let mut q = vec![lo];
        let mut v = lo;
        // Relative slack absorbs the float error of repeated multiplication.
        while v * (1.0 + eps) <= hi * (1.0 + 1e-12) {
            v *= 1.0 + eps;
            q.push(v);
        }
        levels.push((q.len() - 1) as u32);
        q.push(v * (1.0 + eps)); // ceiling point above the maximum
        points.push(q);
    }
    Ok(GridSet { points, levels })
}

/// Minimize the pivot (last) summand subject to every other summand capped
/// at its grid value. Returns the solution and the grid-point value
/// `sum(caps) + pivot`, or `None` when the caps are unsatisfiable.
pub fn solve_grid_point(
    problem: &SumOfRatiosProblem,
    caps: &[f64],
) -> Result<Option<(Vec<f64>, f64)>, SorError> {
    let n_terms = problem.terms.len();
    debug_assert_eq!(caps.len(), n_terms - 1);
    let pivot = &problem.terms[n_terms - 1];

    // Ratio caps cleared of their (positive) denominators:
    // (num - cap*den) . x <= cap*den_const - num_const.
    let mut rows = problem.rows.clone();
    let mut rhs = problem.limits.clone();
    for (term, &cap) in problem.terms[..n_terms - 1].iter().zip(caps) {
        let row: Vec<f64> = term
            .num
            .iter()
            .zip(&term.den)
            .map(|(a, c)| a - cap * c)
            .collect();
        rows.push(row);
        rhs.push(cap * term.den_const - term.num_const);
    }

    let lf = LinearFractional {
        num: pivot.num.clone(),
        num_const: pivot.num_const,
        den: pivot.den.clone(),
        den_const: pivot.den_const,
        sense: Sense::Minimize,
        rows,
        rhs,
        lower: problem.lower.clone(),
        upper: vec![None; problem.lower.len()],
    };
    let sol = solve_linear_fractional(&lf)?;
    match sol.status {
        LpStatus::Optimal => {
            let value: f64 = caps.iter().sum::<f64>() + sol.objective;
            Ok(Some((sol.x, value)))
        }
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(SorError::UnboundedVariable(0)),
    }
}

/// Grid-search the relaxation to a `(1+eps)`-approximate fractional
/// solution.
///
/// Grid points are visited in lexicographic order and the first strict
/// improvement is kept, so the result is deterministic. Points whose cap sum
/// plus the pivot's global minimum cannot beat the incumbent are skipped
/// without solving; the skipped value is a lower bound on the point's value,
/// so the winner is identical to an exhaustive sweep.
pub fn solve_sor(problem: &SumOfRatiosProblem, eps: f64) -> Result<SorSolution, SorError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(SorError::BadEpsilon(eps));
    }
    let bounds = ratio_bounds(problem)?;
    let n_terms = problem.terms.len();

    // Single ratio: plain fractional minimization, no grid.
    if n_terms == 1 {
        let sol = solve_linear_fractional(&fractional_for(
            problem,
            &problem.terms[0],
            Sense::Minimize,
        ))?;
        if sol.status != LpStatus::Optimal {
            return Err(SorError::InfeasibleRegion);
        }
        return Ok(SorSolution {
            x: sol.x,
            objective: sol.objective,
            winning_point: None,
            solved_points: 1,
        });
    }

    // Reorder so the pivot summand is last.
    let mut reordered = problem.clone();
    let pivot_term = reordered.terms.remove(bounds.pivot);
    reordered.terms.push(pivot_term);
    let mut min: Vec<f64> = bounds.min.clone();
    let mut max: Vec<f64> = bounds.max.clone();
    let pivot_min = min.remove(bounds.pivot);
    max.remove(bounds.pivot);

    let grid = build_grid(&min, &max, eps)?;
    let mut best: Option<(Vec<f64>, f64, Vec<f64>)> = None;
    let mut solved = 0usize;
    for caps in grid.iter() {
        let cap_sum: f64 = caps.iter().sum();
        if let Some((_, value, _)) = &best {
            if cap_sum + pivot_min >= *value {
                continue;
            }
        }
        solved += 1;
        if let Some((x, value)) = solve_grid_point(&reordered, &caps)? {
            let better = match &best {
                None => true,
                Some((_, incumbent, _)) => value < *incumbent,
            };
            if better {
                best = Some((x, value, caps));
            }
        }
    }

    match best {
        Some((x, objective, caps)) => Ok(SorSolution {
            x,
            objective,
            winning_point: Some(caps),
            solved_points: solved,
        }),
        None => Err(SorError::NoFeasibleGridPoint),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speed::{AsyncCostCoeffs, SyncCostCoeffs};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn box_problem(terms: Vec<RatioTerm>) -> SumOfRatiosProblem {
        // 1 <= x_i <= 2 encoded as packing rows.
        SumOfRatiosProblem {
            terms,
            rows: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            limits: vec![2.0, 2.0],
            lower: vec![1.0, 1.0],
            names: vec!["x1".into(), "x2".into()],
        }
    }

    fn ratio(num: Vec<f64>, num_const: f64, den: Vec<f64>, den_const: f64) -> RatioTerm {
        RatioTerm {
            num,
            num_const,
            den,
            den_const,
        }
    }

    fn toy_sync_job() -> JobSpec {
        use crate::model::{LayerProfile, ResourceVector, UtilityParams};
        use crate::timeline::TrainingMode;
        JobSpec {
            id: "sor-toy".into(),
            layers: vec![LayerProfile::new(2.0, 1.0, 0.5)],
            iterations: 10,
            model_bits: 4.0,
            bandwidth: 2.0,
            overhead_worker: 0.1,
            overhead_ps: 0.2,
            alpha: 0.5,
            training_mode: TrainingMode::Sequential,
            sgd: crate::model::SgdMode::Sync { global_batch: 10.0 },
            worker_demand: ResourceVector::new(0.0, 1.0, 1.0, 0.0),
            ps_demand: ResourceVector::new(0.0, 1.0, 0.0, 1.0),
            resource_limit: ResourceVector::new(0.0, 8.0, 4.0, 4.0),
            utility: UtilityParams {
                scale: 10.0,
                steepness: 1.0,
                midpoint: 5.0,
            },
        }
    }

    #[test]
    fn sync_transcription() {
        let coeffs = CostCoeffs::Sync(SyncCostCoeffs {
            linear_w: 1.0,
            linear_p: 2.0,
            constant: 20.0,
            w_over_p: 40.0,
            inv_w: 100.0,
        });
        let p = build_sor_problem(&toy_sync_job(), &coeffs).unwrap();
        assert_eq!(p.terms.len(), 3);
        assert_eq!(p.terms[0].num, vec![1.0, 2.0]);
        assert_eq!(p.terms[0].num_const, 20.0);
        assert_eq!(p.terms[1].num, vec![40.0, 0.0]);
        assert_eq!(p.terms[1].den, vec![0.0, 1.0]);
        assert_eq!(p.terms[2].num_const, 100.0);
        assert_eq!(p.terms[2].den, vec![1.0, 0.0]);
        // x = (3, 2): 3 + 4 + 20 + 60 + 100/3
        let x = [3.0, 2.0];
        assert!((p.objective(&x) - (27.0 + 60.0 + 100.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn async_transcription_drops_zero_terms() {
        let coeffs = CostCoeffs::Async(AsyncCostCoeffs {
            constant: 0.0,
            p_over_w: 0.0,
            inv_w: 40.0,
            inv_p: 20.0,
        });
        let p = build_sor_problem(&toy_sync_job(), &coeffs).unwrap();
        assert_eq!(p.terms.len(), 2);
        assert!((p.terms[0].eval(&[2.0, 1.0]) - 20.0).abs() < 1e-12);
        assert!((p.terms[1].eval(&[2.0, 4.0]) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn objective_matches_completion_time() {
        use crate::model::Allocation;
        use crate::speed::{completion_time, cost_coefficients};
        use crate::timeline::overlap_coefficients;
        let job = toy_sync_job();
        let eta = overlap_coefficients(&job.layer_times(), job.training_mode).unwrap();
        let coeffs = cost_coefficients(&job, &eta);
        let p = build_sor_problem(&job, &coeffs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for _ in 0..10 {
            let w = rng.gen_range(1..=4);
            let ps = rng.gen_range(1..=4);
            let direct = completion_time(&job, Allocation::new(w, ps)).unwrap();
            let via_sor = p.objective(&[f64::from(w), f64::from(ps)]);
            assert!((direct - via_sor).abs() < 1e-9 * direct);
        }
    }

    #[test]
    fn unbounded_variable_detected() {
        let mut job = toy_sync_job();
        job.ps_demand = crate::model::ResourceVector::zero();
        job.worker_demand = crate::model::ResourceVector::new(0.0, 1.0, 0.0, 0.0);
        let coeffs = CostCoeffs::Sync(SyncCostCoeffs {
            linear_w: 1.0,
            linear_p: 2.0,
            constant: 20.0,
            w_over_p: 40.0,
            inv_w: 100.0,
        });
        assert_eq!(
            build_sor_problem(&job, &coeffs),
            Err(SorError::UnboundedVariable(1))
        );
    }

    #[test]
    fn bounds_of_coordinate_ratio() {
        let p = box_problem(vec![ratio(vec![1.0, 0.0], 0.0, vec![0.0, 1.0], 0.0)]);
        let b = ratio_bounds(&p).unwrap();
        assert!((b.min[0] - 0.5).abs() < 1e-9);
        assert!((b.max[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn bounds_of_constant_summand() {
        let p = box_problem(vec![ratio(vec![0.0, 0.0], 5.0, vec![0.0, 0.0], 1.0)]);
        let b = ratio_bounds(&p).unwrap();
        assert!((b.min[0] - 5.0).abs() < 1e-9);
        assert!((b.max[0] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn pivot_is_widest_span_first_on_ties() {
        let p = box_problem(vec![
            ratio(vec![1.0, 0.0], 0.0, vec![0.0, 1.0], 0.0), // span 4
            ratio(vec![1.0, 0.0], 0.0, vec![0.0, 0.0], 1.0), // span 2
        ]);
        let b = ratio_bounds(&p).unwrap();
        assert_eq!(b.pivot, 0);
    }

    #[test]
    fn grid_powers_of_two() {
        let g = build_grid(&[1.0], &[10.0], 1.0 - 1e-12).unwrap();
        assert_eq!(g.levels, vec![3]);
        let pts: Vec<f64> = g.points[0].clone();
        assert_eq!(pts.len(), 5);
        for (got, want) in pts.iter().zip([1.0, 2.0, 4.0, 8.0, 16.0]) {
            assert!((got - want).abs() < 1e-8);
        }
    }

    #[test]
    fn degenerate_range_keeps_minimum_and_ceiling() {
        let g = build_grid(&[3.0], &[3.0], 0.5).unwrap();
        assert_eq!(g.levels, vec![0]);
        assert_eq!(g.points[0], vec![3.0, 4.5]);
    }

    #[test]
    fn product_grid_size() {
        let g = GridSet {
            points: vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0, 4.0]],
            levels: vec![2, 3],
        };
        assert_eq!(g.len(), 12);
        assert_eq!(g.iter().count(), 12);
    }

    #[test]
    fn grid_covers_every_interior_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let lo = rng.gen_range(0.1..2.0);
            let hi = lo * rng.gen_range(1.0..50.0);
            let eps = [0.5, 0.1, 0.01][rng.gen_range(0..3)];
            let g = build_grid(&[lo], &[hi], eps).unwrap();
            let chi = rng.gen_range(lo..=hi);
            let covered = g.points[0]
                .iter()
                .any(|&nu| nu <= chi && chi <= (1.0 + eps) * nu * (1.0 + 1e-9));
            assert!(covered, "chi={chi} not covered in [{lo},{hi}] eps={eps}");
        }
    }

    #[test]
    fn grid_point_subproblem_on_box() {
        // Cap x1/x2 at 1, minimize x2/x1 over the box: optimum 1.
        let p = box_problem(vec![
            ratio(vec![1.0, 0.0], 0.0, vec![0.0, 1.0], 0.0),
            ratio(vec![0.0, 1.0], 0.0, vec![1.0, 0.0], 0.0),
        ]);
        let (x, value) = solve_grid_point(&p, &[1.0]).unwrap().unwrap();
        assert!((value - 2.0).abs() < 1e-9);
        assert!((x[0] - x[1]).abs() < 1e-9);
    }

    #[test]
    fn caps_below_minimum_are_infeasible() {
        let p = box_problem(vec![
            ratio(vec![1.0, 0.0], 0.0, vec![0.0, 1.0], 0.0), // min 1/2
            ratio(vec![0.0, 1.0], 0.0, vec![1.0, 0.0], 0.0),
        ]);
        assert_eq!(solve_grid_point(&p, &[0.4]).unwrap(), None);
    }

    #[test]
    fn single_ratio_needs_no_grid() {
        let p = box_problem(vec![ratio(vec![1.0, 0.0], 0.0, vec![0.0, 1.0], 0.0)]);
        let sol = solve_sor(&p, 0.1).unwrap();
        assert!((sol.objective - 0.5).abs() < 1e-9);
        assert_eq!(sol.winning_point, None);
    }

    #[test]
    fn am_gm_instance() {
        let p = box_problem(vec![
            ratio(vec![1.0, 0.0], 0.0, vec![0.0, 1.0], 0.0),
            ratio(vec![0.0, 1.0], 0.0, vec![1.0, 0.0], 0.0),
        ]);
        let sol = solve_sor(&p, 0.01).unwrap();
        assert!(sol.objective <= 2.0 * 1.01 + 1e-9);
        assert!(sol.objective >= 2.0 - 1e-9);
    }

    #[test]
    fn singleton_region() {
        let p = SumOfRatiosProblem {
            terms: vec![
                ratio(vec![1.0, 1.0], 0.0, vec![0.0, 0.0], 1.0),
                ratio(vec![0.0, 0.0], 6.0, vec![1.0, 0.0], 0.0),
            ],
            rows: vec![vec![1.0, 1.0]],
            limits: vec![2.0],
            lower: vec![1.0, 1.0],
            names: vec!["w".into(), "p".into()],
        };
        let sol = solve_sor(&p, 0.1).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-7);
        assert!((sol.x[1] - 1.0).abs() < 1e-7);
        assert!((sol.objective - 8.0).abs() < 1e-7);
    }

    #[test]
    fn epsilon_out_of_range_rejected() {
        let p = box_problem(vec![ratio(vec![1.0, 0.0], 0.0, vec![0.0, 1.0], 0.0)]);
        assert!(matches!(solve_sor(&p, 0.0), Err(SorError::BadEpsilon(_))));
        assert!(matches!(solve_sor(&p, 1.0), Err(SorError::BadEpsilon(_))));
    }

    fn random_problem(rng: &mut ChaCha8Rng) -> SumOfRatiosProblem {
        // Random positive two-variable instance over a coupled packing
        // region inside [1, 12]^2.
        let n_terms = rng.gen_range(2..=3);
        let mut terms = Vec::new();
        for _ in 0..n_terms {
            let form = rng.gen_range(0..3);
            terms.push(match form {
                0 => ratio(
                    vec![rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0)],
                    rng.gen_range(0.1..5.0),
                    vec![0.0, 0.0],
                    1.0,
                ),
                1 => ratio(
                    vec![rng.gen_range(0.5..4.0), 0.0],
                    0.0,
                    vec![0.0, 1.0],
                    0.0,
                ),
                _ => ratio(
                    vec![0.0, 0.0],
                    rng.gen_range(1.0..30.0),
                    if rng.gen_bool(0.5) {
                        vec![1.0, 0.0]
                    } else {
                        vec![0.0, 1.0]
                    },
                    0.0,
                ),
            });
        }
        SumOfRatiosProblem {
            terms,
            rows: vec![
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, rng.gen_range(0.5..1.5)],
            ],
            limits: vec![12.0, 12.0, rng.gen_range(8.0..20.0)],
            lower: vec![1.0, 1.0],
            names: vec!["w".into(), "p".into()],
        }
    }

    fn dense_minimum(p: &SumOfRatiosProblem, steps: usize) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            let x1 = 1.0 + 11.0 * i as f64 / steps as f64;
            for j in 0..=steps {
                let x2 = 1.0 + 11.0 * j as f64 / steps as f64;
                let x = [x1, x2];
                if p.is_feasible(&x, 0.0) {
                    best = best.min(p.objective(&x));
                }
            }
        }
        best
    }

    #[test]
    fn approximation_beats_dense_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..20 {
            let p = random_problem(&mut rng);
            let dense = dense_minimum(&p, 300);
            for eps in [0.5, 0.1] {
                let sol = solve_sor(&p, eps).unwrap();
                assert!(
                    sol.objective <= (1.0 + eps) * dense + 1e-9,
                    "objective {} vs (1+{eps}) * {dense}",
                    sol.objective
                );
                assert!(p.is_feasible(&sol.x, 1e-7));
            }
        }
    }

    #[test]
    fn winner_respects_its_caps() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..20 {
            let p = random_problem(&mut rng);
            let bounds = ratio_bounds(&p).unwrap();
            let sol = solve_sor(&p, 0.2).unwrap();
            if let Some(caps) = &sol.winning_point {
                let mut cap_iter = caps.iter();
                for (i, term) in p.terms.iter().enumerate() {
                    if i == bounds.pivot {
                        continue;
                    }
                    let cap = cap_iter.next().unwrap();
                    assert!(term.eval(&sol.x) <= cap * (1.0 + 1e-9) + 1e-9);
                }
            }
        }
    }

    #[test]
    fn split_ratio_sum_dominates_ratio_of_sums() {
        // For nonnegative samples, sum(f)/sum(g) <= sum(f/g).
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..200 {
            let n = rng.gen_range(1..=6);
            let f: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
            let g: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..10.0)).collect();
            let lhs = f.iter().sum::<f64>() / g.iter().sum::<f64>();
            let rhs: f64 = f.iter().zip(&g).map(|(a, b)| a / b).sum();
            assert!(lhs <= rhs + 1e-12);
        }
    }
}
