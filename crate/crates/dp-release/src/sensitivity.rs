//! Clipping bounds and global-sensitivity calculators.
//!
//! Clipping turns queries with unbounded sensitivity into bounded ones:
//! every attribute value is clamped into `[lower, upper]` before
//! aggregation. On clipped data the standard calibrations are
//!
//! * count / histogram bin: Δf = 1, independent of the dataset;
//! * sum:                   Δf = upper − lower;
//! * mean:                  Δf = (upper − lower) / n.
//!
//! When no a-priori range is known, [`dp_upper_bound_search`] spends a
//! little budget per step to grow a candidate upper bound (lower fixed at 0)
//! until a noisy clipped sum stops changing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanisms::{laplace_sample, laplace_scale, RandomSource};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensitivityError {
    #[error("invalid clipping bounds: {0}")]
    InvalidBounds(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(
        "noisy sum did not stabilize within {steps} steps; last candidate upper bound {last_candidate}"
    )]
    UnstableBounds {
        last_candidate: f64,
        steps: usize,
        epsilon_spent: f64,
    },
}

/// Clamp range `[lower, upper]` for a numeric attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBounds")]
pub struct ClippingBounds {
    lower: f64,
    upper: f64,
}

#[derive(Deserialize)]
struct RawBounds {
    lower: f64,
    upper: f64,
}

impl TryFrom<RawBounds> for ClippingBounds {
    type Error = SensitivityError;

    fn try_from(raw: RawBounds) -> Result<Self, Self::Error> {
        ClippingBounds::new(raw.lower, raw.upper)
    }
}

impl ClippingBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self, SensitivityError> {
        if !lower.is_finite() || !upper.is_finite() {
            return Err(SensitivityError::InvalidBounds(format!(
                "bounds must be finite, got [{lower}, {upper}]"
            )));
        }
        if lower >= upper {
            return Err(SensitivityError::InvalidBounds(format!(
                "lower bound must be below upper bound, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Width upper − lower; the clipped-sum sensitivity.
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        (self.lower..=self.upper).contains(&value)
    }
}

/// Neighboring-dataset model a sensitivity is stated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Neighboring {
    /// Datasets differing by addition or removal of one record.
    AddRemove,
}

/// A global sensitivity Δf: the worst-case output change over neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityValue {
    delta_f: f64,
    neighboring: Neighboring,
}

impl SensitivityValue {
    fn new(delta_f: f64) -> Self {
        debug_assert!(delta_f > 0.0);
        Self {
            delta_f,
            neighboring: Neighboring::AddRemove,
        }
    }

    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    pub fn neighboring(&self) -> Neighboring {
        self.neighboring
    }
}

/// min(max(value, lower), upper). NaN input is rejected.
pub fn clamp(value: f64, bounds: ClippingBounds) -> Result<f64, SensitivityError> {
    if value.is_nan() {
        return Err(SensitivityError::InvalidData("cannot clamp NaN".into()));
    }
    Ok(value.clamp(bounds.lower(), bounds.upper()))
}

/// Counting one record in or out changes a count by exactly 1.
pub fn count_sensitivity() -> SensitivityValue {
    SensitivityValue::new(1.0)
}

/// Sum over clipped data: Δf = upper − lower.
pub fn clipped_sum_sensitivity(bounds: ClippingBounds) -> SensitivityValue {
    SensitivityValue::new(bounds.width())
}

/// Mean over clipped data with public group size n: Δf = (upper − lower)/n.
pub fn mean_sensitivity(
    bounds: ClippingBounds,
    n: usize,
) -> Result<SensitivityValue, SensitivityError> {
    if n == 0 {
        return Err(SensitivityError::InvalidParameter(
            "mean sensitivity needs n >= 1".into(),
        ));
    }
    Ok(SensitivityValue::new(bounds.width() / n as f64))
}

/// Outcome of the iterative upper-bound search.
///
/// `epsilon_spent` is `epsilon_per_step × steps` and must be charged to the
/// caller's budget ledger; the search itself holds no ledger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSearch {
    pub bounds: ClippingBounds,
    pub steps: usize,
    pub epsilon_spent: f64,
}

/// Grow an upper bound until a noisy clipped sum stabilizes.
///
/// The lower bound is fixed at 0 (negative values clamp to 0). Candidate
/// uppers are `start·growth^k`; at each candidate the search evaluates
/// `Σ clamp(v, [0, u]) + Lap(u/ε_step)` and stops the first time the
/// relative change between consecutive evaluations drops below
/// `stability_tol`, returning the *previous* candidate — the first bound
/// past which the sum stopped moving.
pub fn dp_upper_bound_search(
    values: &[f64],
    epsilon_per_step: f64,
    start: f64,
    growth: f64,
    stability_tol: f64,
    max_steps: usize,
    rng: &mut RandomSource,
) -> Result<BoundSearch, SensitivityError> {
    if values.is_empty() {
        return Err(SensitivityError::InvalidParameter(
            "bound search needs a nonempty value sequence".into(),
        ));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(SensitivityError::InvalidData(
            "NaN in value sequence".into(),
        ));
    }
    if !(epsilon_per_step.is_finite() && epsilon_per_step > 0.0) {
        return Err(SensitivityError::InvalidParameter(format!(
            "epsilon_per_step must be positive, got {epsilon_per_step}"
        )));
    }
    if !(start.is_finite() && start > 0.0) {
        return Err(SensitivityError::InvalidParameter(format!(
            "start must be positive, got {start}"
        )));
    }
    if !(growth.is_finite() && growth > 1.0) {
        return Err(SensitivityError::InvalidParameter(format!(
            "growth must exceed 1, got {growth}"
        )));
    }
    if !(stability_tol.is_finite() && stability_tol > 0.0) {
        return Err(SensitivityError::InvalidParameter(format!(
            "stability_tol must be positive, got {stability_tol}"
        )));
    }
    if max_steps < 2 {
        return Err(SensitivityError::InvalidParameter(
            "max_steps must allow at least two evaluations".into(),
        ));
    }

    let noisy_sum = |upper: f64, rng: &mut RandomSource| -> f64 {
        let total: f64 = values.iter().map(|&v| v.clamp(0.0, upper)).sum();
        let scale = laplace_scale(upper, epsilon_per_step).expect("upper > 0");
        total + laplace_sample(scale, rng)
    };

    let mut upper_prev = start;
    let mut sum_prev = noisy_sum(upper_prev, rng);
    let mut steps = 1usize;

    while steps < max_steps {
        let upper_next = upper_prev * growth;
        let sum_next = noisy_sum(upper_next, rng);
        steps += 1;

        let change = if sum_next == sum_prev {
            0.0
        } else if sum_prev == 0.0 {
            f64::INFINITY
        } else {
            (sum_next - sum_prev).abs() / sum_prev.abs()
        };
        if change < stability_tol {
            return Ok(BoundSearch {
                bounds: ClippingBounds::new(0.0, upper_prev)?,
                steps,
                epsilon_spent: epsilon_per_step * steps as f64,
            });
        }
        upper_prev = upper_next;
        sum_prev = sum_next;
    }

    Err(SensitivityError::UnstableBounds {
        last_candidate: upper_prev,
        steps,
        epsilon_spent: epsilon_per_step * steps as f64,
    })
}

/// Default growth factor for the bound search.
pub const BOUND_SEARCH_GROWTH: f64 = 2.0;
/// Default relative stability tolerance for the bound search.
pub const BOUND_SEARCH_TOL: f64 = 0.01;
/// Default evaluation cap for the bound search.
pub const BOUND_SEARCH_MAX_STEPS: usize = 64;
