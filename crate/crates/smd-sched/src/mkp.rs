//! Outer admission stage: a multi-dimensional knapsack over per-job
//! utilities and resource-limit vectors.
//!
//! The approximation scheme enumerates candidate sets `S` of forced-in jobs
//! in increasing size. For each `S` it solves the LP relaxation with jobs in
//! `S` fixed to 1 and every job more valuable than the cheapest member of
//! `S` fixed to 0, rounds the basic solution down, and keeps the best
//! integral result. A basic solution of an LP with `R` capacity rows has at
//! most `R` fractional coordinates, so rounding down loses at most the `R`
//! largest utilities outside `S` — which is what enumerating larger `S`
//! repairs. Enumeration stops early once the incumbent is provably within
//! `1 - eps` of the root LP bound.
//!
//! An exact branch-and-bound solver over the same instances serves as the
//! verification oracle at desk scale.

use thiserror::Error;

use crate::lp::{solve_lp, LinearProgram, LpError, LpStatus};

#[derive(Debug, Error, PartialEq)]
pub enum MkpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("epsilon must lie in (0, 1), got {0}")]
    BadEpsilon(f64),
    #[error("instance has {0} items, exact solver capped at {1}")]
    TooLarge(usize, usize),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Select a subset of items maximizing total utility under a vector
/// capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct MkpInstance {
    pub utilities: Vec<f64>,
    /// Per-item demand vectors, all of the same width as `capacity`.
    pub demands: Vec<Vec<f64>>,
    pub capacity: Vec<f64>,
    pub eps: f64,
}

impl MkpInstance {
    pub fn new(
        utilities: Vec<f64>,
        demands: Vec<Vec<f64>>,
        capacity: Vec<f64>,
        eps: f64,
    ) -> Result<Self, MkpError> {
        if utilities.len() != demands.len() {
            return Err(MkpError::DimensionMismatch(format!(
                "{} utilities vs {} demand vectors",
                utilities.len(),
                demands.len()
            )));
        }
        for d in &demands {
            if d.len() != capacity.len() {
                return Err(MkpError::DimensionMismatch(format!(
                    "demand width {} vs capacity width {}",
                    d.len(),
                    capacity.len()
                )));
            }
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(MkpError::BadEpsilon(eps));
        }
        Ok(Self {
            utilities,
            demands,
            capacity,
            eps,
        })
    }

    fn fits(&self, selected: &[usize]) -> bool {
        for r in 0..self.capacity.len() {
            let used: f64 = selected.iter().map(|&i| self.demands[i][r]).sum();
            if used > self.capacity[r] {
                return false;
            }
        }
        true
    }

    fn utility_of(&self, selected: &[usize]) -> f64 {
        selected.iter().fold(0.0, |acc, &i| acc + self.utilities[i])
    }
}

/// Admitted index set (sorted ascending) with its utility and leftover
/// capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissionResult {
    pub selected: Vec<usize>,
    pub total_utility: f64,
    pub residual: Vec<f64>,
}

impl AdmissionResult {
    fn from_selection(instance: &MkpInstance, mut selected: Vec<usize>) -> Self {
        selected.sort_unstable();
        let total_utility = instance.utility_of(&selected);
        let mut residual = instance.capacity.clone();
        for &i in &selected {
            for (res, d) in residual.iter_mut().zip(&instance.demands[i]) {
                *res -= d;
            }
        }
        Self {
            selected,
            total_utility,
            residual,
        }
    }
}

/// Basic solution of the relaxation with `fixed_in` forced to 1 and every
/// item strictly more valuable than the cheapest member of `fixed_in`
/// forced to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedRelaxation {
    /// Fractional admission per item, including the fixed coordinates.
    pub x: Vec<f64>,
    pub value: f64,
}

/// Solve the LP relaxation with the given set fixed in; `None` when the
/// fixed set itself does not fit.
pub fn lp_relaxation_fixed(
    instance: &MkpInstance,
    fixed_in: &[usize],
) -> Result<Option<FixedRelaxation>, MkpError> {
    let n = instance.utilities.len();
    if !instance.fits(fixed_in) {
        return Ok(None);
    }
    let threshold = fixed_in
        .iter()
        .map(|&i| instance.utilities[i])
        .fold(f64::INFINITY, f64::min);

    // Free variables: not fixed in, not excluded by the utility threshold.
    let mut state = vec![0u8; n]; // 0 free, 1 fixed in, 2 fixed out
    for &i in fixed_in {
        state[i] = 1;
    }
    if fixed_in.is_empty() {
        // Empty fixing excludes nothing.
    } else {
        for i in 0..n {
            if state[i] == 0 && instance.utilities[i] > threshold {
                state[i] = 2;
            }
        }
    }
    let free: Vec<usize> = (0..n).filter(|&i| state[i] == 0).collect();

    let mut x = vec![0.0; n];
    for &i in fixed_in {
        x[i] = 1.0;
    }
    let fixed_value = instance.utility_of(fixed_in);
    if free.is_empty() {
        return Ok(Some(FixedRelaxation {
            x,
            value: fixed_value,
        }));
    }

    let residual: Vec<f64> = (0..instance.capacity.len())
        .map(|r| {
            instance.capacity[r]
                - fixed_in
                    .iter()
                    .map(|&i| instance.demands[i][r])
                    .sum::<f64>()
        })
        .collect();
    let objective: Vec<f64> = free.iter().map(|&i| -instance.utilities[i]).collect();
    let rows: Vec<Vec<f64>> = (0..instance.capacity.len())
        .map(|r| free.iter().map(|&i| instance.demands[i][r]).collect())
        .collect();
    let lp = LinearProgram::new(objective, rows, residual)
        .with_upper(vec![Some(1.0); free.len()]);
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        // Residual capacities are nonnegative here, so the zero point is
        // always feasible; anything else is a solver invariant violation.
        return Ok(None);
    }
    for (slot, &i) in sol.x.iter().zip(&free) {
        x[i] = slot.clamp(0.0, 1.0);
    }
    Ok(Some(FixedRelaxation {
        x,
        value: fixed_value - sol.objective,
    }))
}

/// Enumeration cap: sets up to size `ceil(R/eps)` guarantee the
/// `(1-eps)`-approximation.
fn candidate_cap(instance: &MkpInstance) -> usize {
    let r = instance.capacity.len().max(1) as f64;
    let k = (r / instance.eps).ceil() as usize;
    k.min(instance.utilities.len())
}

/// Utilities rescaled so the largest is 1, keeping the fixed tolerances
/// meaningful whatever the caller's utility scale (deeply saturated sigmoid
/// utilities can be arbitrarily tiny).
fn normalized(instance: &MkpInstance) -> Option<MkpInstance> {
    let peak = instance.utilities.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return None;
    }
    let mut scaled = instance.clone();
    for u in scaled.utilities.iter_mut() {
        *u /= peak;
    }
    Some(scaled)
}

/// `(1-eps)`-approximate admission.
///
/// Items with nonpositive utility can never help and are dropped up front.
/// Candidate sets are visited by size then lexicographically; ties keep the
/// first incumbent, so the result is deterministic.
pub fn solve_mkp_eps(original: &MkpInstance) -> Result<AdmissionResult, MkpError> {
    let Some(scaled) = normalized(original) else {
        return Ok(AdmissionResult::from_selection(original, Vec::new()));
    };
    let instance = &scaled;
    let active: Vec<usize> = (0..instance.utilities.len())
        .filter(|&i| instance.utilities[i] > 0.0 && instance.fits(&[i]))
        .collect();

    let mut best: Vec<usize> = Vec::new();
    let mut best_value = 0.0f64;

    // Root LP bound certifies early termination.
    let root = lp_relaxation_fixed(instance, &[])?
        .map(|r| r.value)
        .unwrap_or(0.0);
    let target = (1.0 - instance.eps) * root;

    let cap = candidate_cap(instance);
    let mut combo: Vec<usize> = Vec::new();
    for size in 0..=cap.min(active.len()) {
        let mut improved = false;
        enumerate_sets(&active, size, &mut combo, 0, &mut |set: &[usize]| {
            let Ok(Some(relax)) = lp_relaxation_fixed(instance, set) else {
                return;
            };
            // Round the basic solution down to the integral coordinates.
            let selected: Vec<usize> = relax
                .x
                .iter()
                .enumerate()
                .filter(|(_, &v)| v >= 1.0 - 1e-9)
                .map(|(i, _)| i)
                .collect();
            let value = instance.utility_of(&selected);
            if value > best_value + 1e-12 {
                best = selected;
                best_value = value;
                improved = true;
            }
        });
        let _ = improved;
        if best_value >= target - 1e-12 {
            break;
        }
    }

    Ok(AdmissionResult::from_selection(original, best))
}

fn enumerate_sets(
    items: &[usize],
    size: usize,
    combo: &mut Vec<usize>,
    start: usize,
    visit: &mut impl FnMut(&[usize]),
) {
    if combo.len() == size {
        visit(combo);
        return;
    }
    let remaining = size - combo.len();
    let mut i = start;
    while i + remaining <= items.len() {
        combo.push(items[i]);
        enumerate_sets(items, size, combo, i + 1, visit);
        combo.pop();
        i += 1;
    }
}

/// Exact optimum by depth-first branch and bound with an LP upper bound.
///
/// Branches include-first in index order and only strict improvements
/// replace the incumbent, so among ties the lexicographically smallest
/// index set wins. Instances above `size_cap` items are refused.
pub fn solve_mkp_exact(
    original: &MkpInstance,
    size_cap: usize,
) -> Result<AdmissionResult, MkpError> {
    let n = original.utilities.len();
    if n > size_cap {
        return Err(MkpError::TooLarge(n, size_cap));
    }
    let Some(scaled) = normalized(original) else {
        return Ok(AdmissionResult::from_selection(original, Vec::new()));
    };
    let instance = &scaled;

    struct Search<'a> {
        instance: &'a MkpInstance,
        best: Vec<usize>,
        best_value: f64,
    }

    impl Search<'_> {
        fn upper_bound(&self, next: usize, used: &[f64], value: f64) -> Result<f64, MkpError> {
            let residual: Vec<f64> = self
                .instance
                .capacity
                .iter()
                .zip(used)
                .map(|(c, u)| c - u)
                .collect();
            let free: Vec<usize> = (next..self.instance.utilities.len())
                .filter(|&i| self.instance.utilities[i] > 0.0)
                .collect();
            if free.is_empty() {
                return Ok(value);
            }
            let objective: Vec<f64> =
                free.iter().map(|&i| -self.instance.utilities[i]).collect();
            let rows: Vec<Vec<f64>> = (0..residual.len())
                .map(|r| free.iter().map(|&i| self.instance.demands[i][r]).collect())
                .collect();
            let lp = LinearProgram::new(objective, rows, residual)
                .with_upper(vec![Some(1.0); free.len()]);
            let sol = solve_lp(&lp)?;
            Ok(match sol.status {
                LpStatus::Optimal => value - sol.objective,
                _ => value,
            })
        }

        fn dfs(
            &mut self,
            next: usize,
            chosen: &mut Vec<usize>,
            used: &mut Vec<f64>,
            value: f64,
        ) -> Result<(), MkpError> {
            if value > self.best_value + 1e-12 {
                self.best_value = value;
                self.best = chosen.clone();
            }
            if next == self.instance.utilities.len() {
                return Ok(());
            }
            if self.upper_bound(next, used, value)? <= self.best_value + 1e-12 {
                return Ok(());
            }
            // Include branch first; lexicographically smaller sets found first.
            let demand = &self.instance.demands[next];
            let fits = used
                .iter()
                .zip(demand)
                .zip(&self.instance.capacity)
                .all(|((u, d), c)| u + d <= *c);
            if fits && self.instance.utilities[next] > 0.0 {
                for (u, d) in used.iter_mut().zip(demand) {
                    *u += d;
                }
                chosen.push(next);
                self.dfs(next + 1, chosen, used, value + self.instance.utilities[next])?;
                chosen.pop();
                for (u, d) in used.iter_mut().zip(demand) {
                    *u -= d;
                }
            }
            self.dfs(next + 1, chosen, used, value)
        }
    }

    let mut search = Search {
        instance,
        best: Vec::new(),
        best_value: 0.0,
    };
    let mut chosen = Vec::new();
    let mut used = vec![0.0; instance.capacity.len()];
    search.dfs(0, &mut chosen, &mut used, 0.0)?;
    Ok(AdmissionResult::from_selection(original, search.best))
}
