//! Randomized rounding of a fractional allocation under packing constraints.
//!
//! The fractional optimum is first shrunk by a factor in `(0, 1]` chosen so
//! that independent per-coordinate rounding violates any packing row only
//! with small probability, then each coordinate is rounded up with
//! probability equal to its fractional part. Rounding is retried a fixed
//! number of times and the best feasible draw (by the caller's objective)
//! is kept; if every draw is infeasible the deterministic floor, and finally
//! the all-ones vector, are tried before giving up.
//!
//! All randomness comes from a caller-supplied ChaCha8 stream, so results
//! are reproducible from `(master seed, job id)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RoundingError {
    #[error("constraint matrix has no positive entry")]
    AllZeroMatrix,
    #[error("delta must lie in (0, 1], got {0}")]
    BadDelta(f64),
    #[error("row count must be at least 1")]
    NoRows,
    #[error("capacity headroom must be positive, got {0}")]
    BadHeadroom(f64),
    #[error("retry budget must be at least 1")]
    NoRetries,
    #[error("no feasible integer allocation, even all-ones")]
    Unschedulable,
}

/// Rounding controls: failure probability budget `delta`, retry budget, and
/// an optional override of the computed shrink factor (1.0 disables
/// shrinking, matching headroom-rich clusters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundingParams {
    pub delta: f64,
    pub retries: u32,
    pub shrink_override: Option<f64>,
}

impl RoundingParams {
    pub fn new(delta: f64, retries: u32) -> Self {
        Self {
            delta,
            retries,
            shrink_override: None,
        }
    }

    pub fn validate(&self) -> Result<(), RoundingError> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(RoundingError::BadDelta(self.delta));
        }
        if self.retries < 1 {
            return Err(RoundingError::NoRetries);
        }
        Ok(())
    }
}

/// Smallest capacity-to-coefficient ratio over the positive entries of the
/// packing system: how many units of the tightest coordinate fit.
pub fn min_capacity_ratio(rows: &[Vec<f64>], limits: &[f64]) -> Result<f64, RoundingError> {
    let mut best = f64::INFINITY;
    for (row, &limit) in rows.iter().zip(limits) {
        for &coeff in row {
            if coeff > 0.0 {
                best = best.min(limit / coeff);
            }
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(RoundingError::AllZeroMatrix)
    }
}

/// Shrink factor applied before rounding so that every packing row survives
/// the rounding noise with probability at least `1 - delta/(2*rows)`:
///
/// ```text
/// shrink = 1 + a - sqrt(a^2 + 2a),   a = 3*ln(2*rows/delta) / (2*headroom)
/// ```
///
/// Always in `(0, 1]`; approaches 1 as headroom grows and shrinks as the
/// row count grows.
pub fn rounding_shrink_factor(
    delta: f64,
    rows: usize,
    headroom: f64,
) -> Result<f64, RoundingError> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(RoundingError::BadDelta(delta));
    }
    if rows < 1 {
        return Err(RoundingError::NoRows);
    }
    if headroom <= 0.0 {
        return Err(RoundingError::BadHeadroom(headroom));
    }
    let a = 3.0 * (2.0 * rows as f64 / delta).ln() / (2.0 * headroom);
    if a <= 0.0 {
        // delta = 2*rows makes ln zero; cannot happen for delta <= 1, rows >= 1.
        return Ok(1.0);
    }
    Ok(1.0 + a - (a * a + 2.0 * a).sqrt())
}

/// Worst-case cost inflation of one rounding draw with `terms` ratio terms
/// in the objective, holding with probability at least `1 - delta`.
pub fn rounding_cost_factor(terms: usize, delta: f64, shrink: f64) -> f64 {
    (8.0 * terms as f64 / shrink + 4.0) / delta
}

/// One unbiased rounding draw: floor plus a Bernoulli on the fractional
/// part, so `E[result_j]` equals `scaled[j]` exactly.
pub fn round_attempt(scaled: &[f64], rng: &mut ChaCha8Rng) -> Vec<u32> {
    scaled
        .iter()
        .map(|&v| {
            let floor = v.floor();
            let frac = v - floor;
            let up = frac > 0.0 && rng.gen::<f64>() < frac;
            (floor as u32) + u32::from(up)
        })
        .collect()
}

/// Rounded integer solution with the objective it achieved.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundedSolution {
    pub x: Vec<u32>,
    pub objective: f64,
    /// True when every randomized draw was infeasible and a deterministic
    /// fallback (floor, then all-ones) was used instead.
    pub fallback: bool,
}

fn feasible(x: &[u32], rows: &[Vec<f64>], limits: &[f64]) -> bool {
    x.iter().all(|&v| v >= 1)
        && rows.iter().zip(limits).all(|(row, &limit)| {
            row.iter()
                .zip(x)
                .map(|(&a, &v)| a * f64::from(v))
                .sum::<f64>()
                <= limit
        })
}

/// Round a feasible fractional point to integers at least 1 under
/// `rows . x <= limits`.
///
/// Keeps the best feasible draw by `objective` over the retry budget;
/// coordinates rounded to 0 are lifted to 1 before the feasibility check.
pub fn randomized_round(
    fractional: &[f64],
    rows: &[Vec<f64>],
    limits: &[f64],
    params: &RoundingParams,
    rng: &mut ChaCha8Rng,
    objective: impl Fn(&[f64]) -> f64,
) -> Result<RoundedSolution, RoundingError> {
    params.validate()?;
    let shrink = match params.shrink_override {
        Some(s) => s,
        None => {
            let headroom = min_capacity_ratio(rows, limits)?;
            rounding_shrink_factor(params.delta, rows.len(), headroom)?
        }
    };
    let scaled: Vec<f64> = fractional.iter().map(|v| v * shrink).collect();

    let eval = |x: &[u32]| {
        let xf: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
        objective(&xf)
    };

    let mut best: Option<RoundedSolution> = None;
    for _ in 0..params.retries {
        let mut draw = round_attempt(&scaled, rng);
        for v in draw.iter_mut() {
            if *v == 0 {
                *v = 1;
            }
        }
        if !feasible(&draw, rows, limits) {
            continue;
        }
        let value = eval(&draw);
        let better = match &best {
            None => true,
            Some(b) => value < b.objective,
        };
        if better {
            best = Some(RoundedSolution {
                x: draw,
                objective: value,
                fallback: false,
            });
        }
    }
    if let Some(sol) = best {
        return Ok(sol);
    }

    // Deterministic fallbacks: floor of the shrunk point, then all-ones.
    let mut floor: Vec<u32> = scaled.iter().map(|&v| (v.floor() as u32).max(1)).collect();
    if !feasible(&floor, rows, limits) {
        floor = vec![1; fractional.len()];
    }
    if feasible(&floor, rows, limits) {
        let objective = eval(&floor);
        Ok(RoundedSolution {
            x: floor,
            objective,
            fallback: true,
        })
    } else {
        Err(RoundingError::Unschedulable)
    }
}
