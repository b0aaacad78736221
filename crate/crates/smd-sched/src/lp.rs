//! Small dense linear-program solver and linear-fractional solver.
//!
//! Every optimization in this crate reduces to linear programs of at most a
//! few dozen cells, so the solver is a two-phase dense-tableau simplex with
//! Bland's anti-cycling rule: deterministic, exact termination, no
//! factorization machinery. Reduced costs are recomputed from the tableau on
//! every pivot, which is wasteful in general and irrelevant at this size.
//!
//! Linear-fractional objectives `(a'x + q) / (c'x + d)` over a bounded
//! region with positive denominator are handled by the Charnes-Cooper
//! substitution `y = t*x`, `t = 1/(c'x + d)`, which turns the ratio into a
//! linear objective with one added normalization constraint.

use thiserror::Error;

/// Absolute feasibility tolerance on constraints.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Reduced-cost tolerance for optimality.
pub const OPTIMALITY_TOL: f64 = 1e-9;
/// Entries smaller than this are not acceptable pivots.
const PIVOT_TOL: f64 = 1e-11;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite coefficient in program")]
    NonFinite,
    #[error("simplex iteration limit reached")]
    IterationLimit,
}

/// `minimize objective . x  s.t.  rows . x <= rhs,  lower <= x <= upper`.
///
/// Lower bounds default to 0 and uppers to none.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<Option<f64>>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, rows: Vec<Vec<f64>>, rhs: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            rows,
            rhs,
            lower: vec![0.0; n],
            upper: vec![None; n],
        }
    }

    pub fn with_lower(mut self, lower: Vec<f64>) -> Self {
        self.lower = lower;
        self
    }

    pub fn with_upper(mut self, upper: Vec<Option<f64>>) -> Self {
        self.upper = upper;
        self
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.objective.len();
        if self.rows.len() != self.rhs.len() {
            return Err(LpError::DimensionMismatch(format!(
                "{} rows vs {} rhs entries",
                self.rows.len(),
                self.rhs.len()
            )));
        }
        for row in &self.rows {
            if row.len() != n {
                return Err(LpError::DimensionMismatch(format!(
                    "row of width {} vs {} variables",
                    row.len(),
                    n
                )));
            }
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::DimensionMismatch("bounds width".into()));
        }
        let finite = self
            .objective
            .iter()
            .chain(self.rhs.iter())
            .chain(self.rows.iter().flatten())
            .chain(self.lower.iter())
            .all(|v| v.is_finite());
        if !finite || self.upper.iter().flatten().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Solve result; `x` is a vertex of the feasible region when `Optimal`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
}

impl LpSolution {
    fn failed(status: LpStatus) -> Self {
        Self {
            status,
            x: Vec::new(),
            objective: f64::NAN,
        }
    }
}

/// Solve a small dense LP. Deterministic: identical inputs produce
/// identical solutions.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let n = lp.objective.len();

    // Shift variables so every lower bound is 0; add upper bounds as rows.
    let mut rows = lp.rows.clone();
    let mut rhs: Vec<f64> = lp
        .rhs
        .iter()
        .zip(&lp.rows)
        .map(|(&b, row)| b - dot(row, &lp.lower))
        .collect();
    for (j, upper) in lp.upper.iter().enumerate() {
        if let Some(u) = upper {
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            rows.push(row);
            rhs.push(u - lp.lower[j]);
        }
    }

    match simplex_standard(&lp.objective, &rows, &rhs)? {
        StandardResult::Optimal(y) => {
            let x: Vec<f64> = y.iter().zip(&lp.lower).map(|(v, l)| v + l).collect();
            let objective = dot(&lp.objective, &x);
            Ok(LpSolution {
                status: LpStatus::Optimal,
                x,
                objective,
            })
        }
        StandardResult::Infeasible => Ok(LpSolution::failed(LpStatus::Infeasible)),
        StandardResult::Unbounded => Ok(LpSolution::failed(LpStatus::Unbounded)),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

enum StandardResult {
    Optimal(Vec<f64>),
    Infeasible,
    Unbounded,
}

/// Two-phase simplex for `min c.y  s.t.  A y <= b, y >= 0` with possibly
/// negative `b`.
fn simplex_standard(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<StandardResult, LpError> {
    let n = c.len();
    let m = a.len();
    if m == 0 {
        // No constraints: optimum is 0 unless some cost is negative.
        if c.iter().any(|&cj| cj < -OPTIMALITY_TOL) {
            return Ok(StandardResult::Unbounded);
        }
        return Ok(StandardResult::Optimal(vec![0.0; n]));
    }

    let slack0 = n;
    let art0 = n + m;
    let n_art = b.iter().filter(|&&bi| bi < 0.0).count();
    let total_cols = art0 + n_art;

    // Tableau rows: structural | slack | artificial, rhs kept separately.
    // Rows with negative rhs are negated and given an artificial variable.
    let mut tab: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut rhs: Vec<f64> = Vec::with_capacity(m);
    let mut basis: Vec<usize> = Vec::with_capacity(m);
    let mut art_cols: Vec<usize> = Vec::with_capacity(n_art);

    for i in 0..m {
        let mut row = vec![0.0; total_cols];
        let neg = b[i] < 0.0;
        let sign = if neg { -1.0 } else { 1.0 };
        for j in 0..n {
            row[j] = sign * a[i][j];
        }
        row[slack0 + i] = sign;
        if neg {
            let col = art0 + art_cols.len();
            row[col] = 1.0;
            art_cols.push(col);
            basis.push(col);
        } else {
            basis.push(slack0 + i);
        }
        tab.push(row);
        rhs.push(sign * b[i]);
    }

    if n_art > 0 {
        // Phase 1: minimize the sum of artificials.
        let mut phase1_cost = vec![0.0; total_cols];
        for &j in &art_cols {
            phase1_cost[j] = 1.0;
        }
        if !pivot_to_optimum(&mut tab, &mut rhs, &mut basis, &phase1_cost, &[])? {
            // Phase 1 of a feasibility problem cannot be unbounded.
            return Err(LpError::IterationLimit);
        }
        let infeas: f64 = basis
            .iter()
            .zip(&rhs)
            .filter(|(&j, _)| j >= art0)
            .map(|(_, &v)| v)
            .sum();
        if infeas > FEASIBILITY_TOL {
            return Ok(StandardResult::Infeasible);
        }
        // Drive remaining zero-level artificials out of the basis.
        let mut drop_rows = Vec::new();
        for i in 0..tab.len() {
            if basis[i] < art0 {
                continue;
            }
            let col = (0..art0).find(|&j| tab[i][j].abs() > PIVOT_TOL);
            match col {
                Some(j) => pivot(&mut tab, &mut rhs, &mut basis, i, j),
                None => drop_rows.push(i), // redundant constraint
            }
        }
        for &i in drop_rows.iter().rev() {
            tab.remove(i);
            rhs.remove(i);
            basis.remove(i);
        }
    }

    // Phase 2 with artificial columns blocked from entering.
    let mut cost = vec![0.0; total_cols];
    cost[..n].copy_from_slice(c);
    if !pivot_to_optimum(&mut tab, &mut rhs, &mut basis, &cost, &art_cols)? {
        return Ok(StandardResult::Unbounded);
    }

    let mut y = vec![0.0; n];
    for (i, &j) in basis.iter().enumerate() {
        if j < n {
            y[j] = rhs[i];
        }
    }
    Ok(StandardResult::Optimal(y))
}

/// Bland-rule pivoting until optimal. Returns `false` when unbounded.
fn pivot_to_optimum(
    tab: &mut [Vec<f64>],
    rhs: &mut [f64],
    basis: &mut [usize],
    cost: &[f64],
    blocked: &[usize],
) -> Result<bool, LpError> {
    let total_cols = cost.len();
    let max_iters = 200 * (total_cols + tab.len() + 1);
    for _ in 0..max_iters {
        // Reduced costs from scratch: r_j = c_j - c_B . column_j.
        let mut entering = None;
        'cols: for j in 0..total_cols {
            if blocked.contains(&j) || basis.contains(&j) {
                continue;
            }
            let mut r = cost[j];
            for (i, row) in tab.iter().enumerate() {
                r -= cost[basis[i]] * row[j];
            }
            if r < -OPTIMALITY_TOL {
                entering = Some(j);
                break 'cols; // Bland: smallest improving index
            }
        }
        let Some(j) = entering else {
            return Ok(true);
        };

        // Ratio test; ties broken by smallest basis variable (Bland).
        let mut leaving: Option<(usize, f64)> = None;
        for i in 0..tab.len() {
            let coeff = tab[i][j];
            if coeff > PIVOT_TOL {
                let ratio = rhs[i] / coeff;
                leaving = match leaving {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - PIVOT_TOL
                            || ((ratio - br).abs() <= PIVOT_TOL && basis[i] < basis[bi])
                        {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
        }
        let Some((i, _)) = leaving else {
            return Ok(false);
        };
        pivot(tab, rhs, basis, i, j);
    }
    Err(LpError::IterationLimit)
}

fn pivot(tab: &mut [Vec<f64>], rhs: &mut [f64], basis: &mut [usize], i: usize, j: usize) {
    let p = tab[i][j];
    for v in tab[i].iter_mut() {
        *v /= p;
    }
    rhs[i] /= p;
    for k in 0..tab.len() {
        if k == i {
            continue;
        }
        let f = tab[k][j];
        if f == 0.0 {
            continue;
        }
        for col in 0..tab[k].len() {
            let delta = f * tab[i][col];
            tab[k][col] -= delta;
        }
        tab[k][j] = 0.0; // exact zero in the pivot column
        rhs[k] -= f * rhs[i];
    }
    basis[i] = j;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Optimize `(num . x + num_const) / (den . x + den_const)` over
/// `rows . x <= rhs, lower <= x <= upper`; the denominator must be positive
/// on the (nonempty, bounded) region.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFractional {
    pub num: Vec<f64>,
    pub num_const: f64,
    pub den: Vec<f64>,
    pub den_const: f64,
    pub sense: Sense,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<Option<f64>>,
}

impl LinearFractional {
    pub fn value(&self, x: &[f64]) -> f64 {
        (dot(&self.num, x) + self.num_const) / (dot(&self.den, x) + self.den_const)
    }
}

/// Charnes-Cooper solve of a linear-fractional program.
///
/// A vanishing normalization variable (possible only on unbounded regions)
/// is reported as `Unbounded`.
pub fn solve_linear_fractional(lf: &LinearFractional) -> Result<LpSolution, LpError> {
    let n = lf.num.len();
    if lf.den.len() != n || lf.lower.len() != n || lf.upper.len() != n {
        return Err(LpError::DimensionMismatch("fractional program width".into()));
    }

    // Variables (y_0..y_{n-1}, t), all >= 0.
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for (row, &b) in lf.rows.iter().zip(&lf.rhs) {
        let mut r = row.clone();
        r.push(-b);
        rows.push(r);
        rhs.push(0.0);
    }
    for j in 0..n {
        if lf.lower[j] != 0.0 {
            // lower * t - y_j <= 0
            let mut r = vec![0.0; n + 1];
            r[j] = -1.0;
            r[n] = lf.lower[j];
            rows.push(r);
            rhs.push(0.0);
        }
        if let Some(u) = lf.upper[j] {
            // y_j - upper * t <= 0
            let mut r = vec![0.0; n + 1];
            r[j] = 1.0;
            r[n] = -u;
            rows.push(r);
            rhs.push(0.0);
        }
    }
    // Normalization den . y + den_const * t = 1 as paired inequalities.
    let mut norm = lf.den.clone();
    norm.push(lf.den_const);
    rows.push(norm.clone());
    rhs.push(1.0);
    rows.push(norm.iter().map(|v| -v).collect());
    rhs.push(-1.0);

    let mut objective: Vec<f64> = lf.num.clone();
    objective.push(lf.num_const);
    if lf.sense == Sense::Maximize {
        for v in objective.iter_mut() {
            *v = -*v;
        }
    }

    let transformed = LinearProgram::new(objective, rows, rhs);
    let sol = solve_lp(&transformed)?;
    if sol.status != LpStatus::Optimal {
        return Ok(LpSolution::failed(sol.status));
    }
    let t = sol.x[n];
    if t <= FEASIBILITY_TOL {
        return Ok(LpSolution::failed(LpStatus::Unbounded));
    }
    let x: Vec<f64> = sol.x[..n].iter().map(|y| y / t).collect();
    let objective = lf.value(&x);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_bound_program() {
        let lp = LinearProgram::new(vec![-1.0], vec![vec![1.0]], vec![5.0]);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] - 5.0).abs() < 1e-9);
        assert!((sol.objective + 5.0).abs() < 1e-9);
    }

    #[test]
    fn covering_constraint_needs_phase_one() {
        let lp = LinearProgram::new(vec![1.0, 1.0], vec![vec![-1.0, -1.0]], vec![-3.0]);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let lp = LinearProgram::new(vec![0.0], vec![vec![1.0], vec![-1.0]], vec![1.0, -2.0]);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let lp = LinearProgram::new(vec![-1.0, 0.0], vec![vec![0.0, 1.0]], vec![1.0]);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn respects_lower_and_upper_bounds() {
        let lp = LinearProgram::new(vec![1.0, -1.0], vec![vec![1.0, 1.0]], vec![10.0])
            .with_lower(vec![2.0, 1.0])
            .with_upper(vec![None, Some(4.0)]);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] - 2.0).abs() < 1e-9);
        assert!((sol.x[1] - 4.0).abs() < 1e-9);
    }

    fn box_fractional(sense: Sense) -> LinearFractional {
        LinearFractional {
            num: vec![1.0],
            num_const: 1.0,
            den: vec![1.0],
            den_const: 2.0,
            sense,
            rows: vec![],
            rhs: vec![],
            lower: vec![0.0],
            upper: vec![Some(1.0)],
        }
    }

    #[test]
    fn fractional_min_on_interval() {
        let sol = solve_linear_fractional(&box_fractional(Sense::Minimize)).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(sol.x[0].abs() < 1e-9);
        assert!((sol.objective - 0.5).abs() < 1e-9);
    }

    #[test]
    fn fractional_max_on_interval() {
        let sol = solve_linear_fractional(&box_fractional(Sense::Maximize)).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
        assert!((sol.objective - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn fractional_coordinate_ratio_over_box() {
        let lf = LinearFractional {
            num: vec![1.0, 0.0],
            num_const: 0.0,
            den: vec![0.0, 1.0],
            den_const: 0.0,
            sense: Sense::Minimize,
            rows: vec![],
            rhs: vec![],
            lower: vec![1.0, 1.0],
            upper: vec![Some(2.0), Some(2.0)],
        };
        let sol = solve_linear_fractional(&lf).unwrap();
        assert!((sol.objective - 0.5).abs() < 1e-9);
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
        assert!((sol.x[1] - 2.0).abs() < 1e-9);
    }

    /// Enumerate all vertices of {rows.x <= rhs, lower <= x <= upper} by
    /// intersecting every choice of n active constraints.
    fn vertex_oracle(lp: &LinearProgram) -> Option<f64> {
        let n = lp.objective.len();
        let mut all_rows: Vec<(Vec<f64>, f64)> = lp
            .rows
            .iter()
            .zip(&lp.rhs)
            .map(|(r, &b)| (r.clone(), b))
            .collect();
        for j in 0..n {
            let mut r = vec![0.0; n];
            r[j] = -1.0;
            all_rows.push((r.clone(), -lp.lower[j]));
            if let Some(u) = lp.upper[j] {
                let mut r2 = vec![0.0; n];
                r2[j] = 1.0;
                all_rows.push((r2, u));
            }
        }
        let m = all_rows.len();
        let mut best: Option<f64> = None;
        let mut combo = vec![0usize; n];
        enumerate_combos(m, n, &mut combo, 0, 0, &mut |idx: &[usize]| {
            let a: Vec<Vec<f64>> = idx.iter().map(|&i| all_rows[i].0.clone()).collect();
            let b: Vec<f64> = idx.iter().map(|&i| all_rows[i].1).collect();
            if let Some(x) = solve_square(&a, &b) {
                let feasible = all_rows
                    .iter()
                    .all(|(row, bound)| dot(row, &x) <= bound + 1e-7);
                if feasible {
                    let v = dot(&lp.objective, &x);
                    best = Some(match best {
                        None => v,
                        Some(cur) => cur.min(v),
                    });
                }
            }
        });
        best
    }

    fn enumerate_combos(
        m: usize,
        k: usize,
        combo: &mut Vec<usize>,
        start: usize,
        depth: usize,
        f: &mut impl FnMut(&[usize]),
    ) {
        if depth == k {
            f(combo);
            return;
        }
        for i in start..m {
            combo[depth] = i;
            enumerate_combos(m, k, combo, i + 1, depth + 1, f);
        }
    }

    fn solve_square(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a
            .iter()
            .zip(b)
            .map(|(row, &bi)| {
                let mut r = row.clone();
                r.push(bi);
                r
            })
            .collect();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| {
                m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap()
            })?;
            if m[piv][col].abs() < 1e-10 {
                return None;
            }
            m.swap(col, piv);
            for i in 0..n {
                if i == col {
                    continue;
                }
                let f = m[i][col] / m[col][col];
                for j in col..=n {
                    let delta = f * m[col][j];
                    m[i][j] -= delta;
                }
            }
        }
        Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
    }

    #[test]
    fn agrees_with_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let n = rng.gen_range(1..=3);
            let m = rng.gen_range(1..=6);
            let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
            let rows: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let rhs: Vec<f64> = rows
                .iter()
                .map(|row| dot(row, &x0) + rng.gen_range(0.0..2.0))
                .collect();
            let objective: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lp = LinearProgram::new(objective, rows, rhs)
                .with_upper(vec![Some(5.0); n]);

            let sol = solve_lp(&lp).unwrap();
            assert_eq!(sol.status, LpStatus::Optimal);
            let oracle = vertex_oracle(&lp).expect("oracle found no vertex");
            assert!(
                (sol.objective - oracle).abs() <= 1e-7 * oracle.abs().max(1.0),
                "simplex {} vs oracle {}",
                sol.objective,
                oracle
            );
        }
    }

    #[test]
    fn solutions_are_bitwise_deterministic() {
        let lp = LinearProgram::new(
            vec![1.0, -2.0, 0.5],
            vec![vec![1.0, 1.0, 1.0], vec![-1.0, 2.0, 0.3]],
            vec![7.0, 4.0],
        )
        .with_upper(vec![Some(3.0), Some(3.0), Some(3.0)]);
        let a = solve_lp(&lp).unwrap();
        let b = solve_lp(&lp).unwrap();
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        for (xa, xb) in a.x.iter().zip(&b.x) {
            assert_eq!(xa.to_bits(), xb.to_bits());
        }
    }

    #[test]
    fn fractional_recovery_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..100 {
            let n = rng.gen_range(1..=3);
            let lf = LinearFractional {
                num: (0..n).map(|_| rng.gen_range(0.0..2.0)).collect(),
                num_const: rng.gen_range(0.1..2.0),
                den: (0..n).map(|_| rng.gen_range(0.0..2.0)).collect(),
                den_const: rng.gen_range(0.5..2.0),
                sense: if rng.gen_bool(0.5) {
                    Sense::Minimize
                } else {
                    Sense::Maximize
                },
                rows: vec![vec![1.0; n]],
                rhs: vec![rng.gen_range(2.0..6.0)],
                lower: vec![0.5; n],
                upper: vec![Some(4.0); n],
            };
            let sol = solve_linear_fractional(&lf).unwrap();
            assert_eq!(sol.status, LpStatus::Optimal);
            assert!((lf.value(&sol.x) - sol.objective).abs() < 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let lp = LinearProgram::new(vec![1.0, 2.0], vec![vec![1.0]], vec![1.0]);
        assert!(matches!(solve_lp(&lp), Err(LpError::DimensionMismatch(_))));
    }
}
