//! DP aggregate queries: count, sum, mean, median, histogram.
//!
//! Counts and histogram bins have sensitivity 1, so they take Laplace noise
//! of scale 1/ε and come back rounded and floored at zero (both privacy-free
//! post-processing). Sums and means clip every input into the configured
//! bounds first; the mean's final output is clamped back into the bounds,
//! with the `clamped` flag recording whether that fired — on rare groups the
//! noise dwarfs the signal and the published value collapses to an endpoint.
//!
//! The median uses the exponential mechanism over the continuous output
//! range `[lower, upper]` with the rank-distance utility
//!
//! ```text
//! u(o) = −| #{x < o} − #{x > o} |        (sensitivity Δu = 1)
//! ```
//!
//! which is piecewise constant on the gaps between consecutive order
//! statistics. A gap is drawn with weight `length · exp(ε·u/2)` and the
//! output is uniform inside it. A Laplace median would need the full range
//! as its sensitivity; the rank-based mechanism is what keeps medians usable
//! at small ε.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanisms::{laplace_sample, laplace_scale, MechanismError, RandomSource};
use crate::sensitivity::{clamp, ClippingBounds, SensitivityError};

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("empty group: this aggregate needs at least one value")]
    EmptyGroup,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("histogram spec mismatch: {0}")]
    SpecMismatch(String),
    #[error(transparent)]
    Sensitivity(#[from] SensitivityError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Laplace,
    Gaussian,
    Exponential,
}

/// One labeled histogram bin with its noisy count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub label: String,
    pub count: f64,
}

/// Scalar or per-bin query output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Scalar(f64),
    Histogram(Vec<HistogramBin>),
}

impl Value {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(x) => Some(*x),
            Value::Histogram(_) => None,
        }
    }

    pub fn as_bins(&self) -> Option<&[HistogramBin]> {
        match self {
            Value::Scalar(_) => None,
            Value::Histogram(bins) => Some(bins),
        }
    }
}

/// A single noisy query answer plus the privacy metadata that justifies it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyResult {
    pub query_id: String,
    pub value: Value,
    pub epsilon_spent: f64,
    pub mechanism: Mechanism,
    /// Value-scale clipping bounds, when the output lives on the value scale
    /// (mean, median). Sums clip their inputs but the output is on the sum
    /// scale, so no bounds are attached there.
    pub bounds: Option<ClippingBounds>,
    /// True iff the pre-clamp output fell outside `bounds`.
    pub clamped: bool,
}

impl NoisyResult {
    pub fn with_query_id(mut self, id: impl Into<String>) -> Self {
        self.query_id = id.into();
        self
    }
}

/// Bin layout for a histogram query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub column: String,
    pub bins: BinSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BinSpec {
    /// Explicit category list; anything else routes to a reserved "other" bin.
    Categories(Vec<String>),
    /// `bin_count` equal-width bins over `[min, max]`; out-of-range values
    /// clamp into the edge bins.
    Numeric {
        min: f64,
        max: f64,
        bin_count: usize,
    },
}

/// Reserved label for values outside an explicit category list.
pub const OTHER_BIN: &str = "other";

impl HistogramSpec {
    pub fn categorical(
        column: impl Into<String>,
        categories: Vec<String>,
    ) -> Result<Self, AggregateError> {
        if categories.is_empty() {
            return Err(AggregateError::InvalidParameter(
                "categorical histogram needs at least one category".into(),
            ));
        }
        if categories.iter().any(|c| c == OTHER_BIN) {
            return Err(AggregateError::InvalidParameter(format!(
                "category list may not use the reserved label {OTHER_BIN:?}"
            )));
        }
        Ok(Self {
            column: column.into(),
            bins: BinSpec::Categories(categories),
        })
    }

    pub fn numeric(
        column: impl Into<String>,
        min: f64,
        max: f64,
        bin_count: usize,
    ) -> Result<Self, AggregateError> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(AggregateError::InvalidParameter(format!(
                "numeric histogram needs finite min < max, got [{min}, {max}]"
            )));
        }
        if bin_count == 0 {
            return Err(AggregateError::InvalidParameter(
                "numeric histogram needs bin_count >= 1".into(),
            ));
        }
        Ok(Self {
            column: column.into(),
            bins: BinSpec::Numeric {
                min,
                max,
                bin_count,
            },
        })
    }

    /// Bin labels in output order.
    pub fn labels(&self) -> Vec<String> {
        match &self.bins {
            BinSpec::Categories(cats) => {
                let mut labels: Vec<String> = cats.clone();
                labels.push(OTHER_BIN.to_string());
                labels
            }
            BinSpec::Numeric {
                min,
                max,
                bin_count,
            } => {
                let width = (max - min) / *bin_count as f64;
                (0..*bin_count)
                    .map(|i| {
                        let lo = min + i as f64 * width;
                        let hi = if i + 1 == *bin_count {
                            *max
                        } else {
                            min + (i + 1) as f64 * width
                        };
                        let close = if i + 1 == *bin_count { ']' } else { ')' };
                        format!("[{lo:.6}, {hi:.6}{close}")
                    })
                    .collect()
            }
        }
    }

    pub fn bin_count(&self) -> usize {
        match &self.bins {
            BinSpec::Categories(cats) => cats.len() + 1,
            BinSpec::Numeric { bin_count, .. } => *bin_count,
        }
    }
}

/// Column values handed to a histogram query.
pub enum HistogramValues<'a> {
    Categorical(&'a [String]),
    Numeric(&'a [f64]),
}

fn validate_epsilon(epsilon: f64) -> Result<(), AggregateError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(AggregateError::InvalidParameter(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    Ok(())
}

fn noisy_count(
    true_count: f64,
    epsilon: f64,
    rng: &mut RandomSource,
) -> Result<f64, AggregateError> {
    let scale = laplace_scale(1.0, epsilon)?;
    Ok((true_count + laplace_sample(scale, rng)).round().max(0.0))
}

/// Noisy row count: `count + Lap(1/ε)`, rounded, floored at zero.
pub fn dp_count(
    values: &[f64],
    epsilon: f64,
    rng: &mut RandomSource,
) -> Result<NoisyResult, AggregateError> {
    validate_epsilon(epsilon)?;
    let value = noisy_count(values.len() as f64, epsilon, rng)?;
    Ok(NoisyResult {
        query_id: "count".into(),
        value: Value::Scalar(value),
        epsilon_spent: epsilon,
        mechanism: Mechanism::Laplace,
        bounds: None,
        clamped: false,
    })
}

/// Noisy clipped sum: `Σ clamp(v) + Lap((upper − lower)/ε)`.
pub fn dp_sum(
    values: &[f64],
    bounds: ClippingBounds,
    epsilon: f64,
    rng: &mut RandomSource,
) -> Result<NoisyResult, AggregateError> {
    validate_epsilon(epsilon)?;
    let mut total = 0.0;
    for &v in values {
        total += clamp(v, bounds)?;
    }
    let scale = laplace_scale(bounds.width(), epsilon)?;
    Ok(NoisyResult {
        query_id: "sum".into(),
        value: Value::Scalar(total + laplace_sample(scale, rng)),
        epsilon_spent: epsilon,
        mechanism: Mechanism::Laplace,
        bounds: None,
        clamped: false,
    })
}

/// Noisy clipped mean with public group size:
/// `mean(clamp(v)) + Lap((upper − lower)/(n·ε))`, output clamped back into
/// the bounds (privacy-free post-processing) with the `clamped` flag set.
pub fn dp_mean(
    values: &[f64],
    bounds: ClippingBounds,
    epsilon: f64,
    rng: &mut RandomSource,
) -> Result<NoisyResult, AggregateError> {
    validate_epsilon(epsilon)?;
    if values.is_empty() {
        return Err(AggregateError::EmptyGroup);
    }
    let n = values.len();
    let mut total = 0.0;
    for &v in values {
        total += clamp(v, bounds)?;
    }
    let true_mean = total / n as f64;
    let scale = laplace_scale(bounds.width() / n as f64, epsilon)?;
    let raw = true_mean + laplace_sample(scale, rng);
    let value = raw.clamp(bounds.lower(), bounds.upper());
    Ok(NoisyResult {
        query_id: "mean".into(),
        value: Value::Scalar(value),
        epsilon_spent: epsilon,
        mechanism: Mechanism::Laplace,
        bounds: Some(bounds),
        clamped: raw != value,
    })
}

/// DP median via the exponential mechanism over `[lower, upper]`.
///
/// Noise-off mode returns the exact sample median of the clamped values.
pub fn dp_median(
    values: &[f64],
    bounds: ClippingBounds,
    epsilon: f64,
    rng: &mut RandomSource,
) -> Result<NoisyResult, AggregateError> {
    validate_epsilon(epsilon)?;
    if values.is_empty() {
        return Err(AggregateError::EmptyGroup);
    }
    let mut xs = Vec::with_capacity(values.len());
    for &v in values {
        xs.push(clamp(v, bounds)?);
    }
    xs.sort_by(|a, b| a.partial_cmp(b).expect("clamped values are not NaN"));

    let value = if rng.is_noise_off() {
        let n = xs.len();
        (xs[(n - 1) / 2] + xs[n / 2]) / 2.0
    } else {
        sample_median_cell(&xs, bounds, epsilon, rng)
    };

    Ok(NoisyResult {
        query_id: "median".into(),
        value: Value::Scalar(value),
        epsilon_spent: epsilon,
        mechanism: Mechanism::Exponential,
        bounds: Some(bounds),
        clamped: false,
    })
}

/// Draw from the gap distribution: gap k (between order statistics k and
/// k+1, with the bounds as sentinels) has utility −|2k − n| and weight
/// `length · exp(ε·(u − u_max)/2)`; the draw is uniform inside the chosen
/// gap. Zero-length gaps (ties) carry no mass.
fn sample_median_cell(
    sorted: &[f64],
    bounds: ClippingBounds,
    epsilon: f64,
    rng: &mut RandomSource,
) -> f64 {
    let n = sorted.len();
    let point = |k: usize| -> f64 {
        if k == 0 {
            bounds.lower()
        } else if k == n + 1 {
            bounds.upper()
        } else {
            sorted[k - 1]
        }
    };
    let utility = |k: usize| -> f64 { -((2 * k) as f64 - n as f64).abs() };

    // Max utility over positive-length gaps keeps at least one weight at
    // exp(0) and the rest from underflowing to an all-zero total.
    let mut u_max = f64::NEG_INFINITY;
    for k in 0..=n {
        if point(k + 1) > point(k) {
            u_max = u_max.max(utility(k));
        }
    }

    let mut weights = Vec::with_capacity(n + 1);
    let mut total = 0.0;
    for k in 0..=n {
        let len = point(k + 1) - point(k);
        let w = if len > 0.0 {
            len * (epsilon * (utility(k) - u_max) / 2.0).exp()
        } else {
            0.0
        };
        weights.push(w);
        total += w;
    }

    let mut target = rng.next_uniform() * total;
    let mut chosen = weights.len() - 1;
    for (k, &w) in weights.iter().enumerate() {
        target -= w;
        if target < 0.0 && w > 0.0 {
            chosen = k;
            break;
        }
    }
    // Guard against landing on a zero-weight trailing gap via float dust.
    if weights[chosen] == 0.0 {
        chosen = (0..weights.len())
            .rev()
            .find(|&k| weights[k] > 0.0)
            .expect("total > 0");
    }

    let a = point(chosen);
    let b = point(chosen + 1);
    a + rng.next_uniform() * (b - a)
}

/// Noisy histogram: per-bin `count + Lap(1/ε)`, rounded, floored at zero.
/// One record lands in exactly one bin, so the single ε covers the whole
/// histogram.
pub fn dp_histogram(
    values: HistogramValues<'_>,
    spec: &HistogramSpec,
    epsilon: f64,
    rng: &mut RandomSource,
) -> Result<NoisyResult, AggregateError> {
    validate_epsilon(epsilon)?;
    let true_counts = true_histogram(values, spec)?;
    let labels = spec.labels();
    let mut bins = Vec::with_capacity(labels.len());
    for (label, count) in labels.into_iter().zip(true_counts) {
        bins.push(HistogramBin {
            label,
            count: noisy_count(count, epsilon, rng)?,
        });
    }
    Ok(NoisyResult {
        query_id: "histogram".into(),
        value: Value::Histogram(bins),
        epsilon_spent: epsilon,
        mechanism: Mechanism::Laplace,
        bounds: None,
        clamped: false,
    })
}

/// Exact per-bin counts for a spec (no noise); used by the DP path and
/// exposed for noise-off verification.
pub fn true_histogram(
    values: HistogramValues<'_>,
    spec: &HistogramSpec,
) -> Result<Vec<f64>, AggregateError> {
    match (&spec.bins, values) {
        (BinSpec::Categories(cats), HistogramValues::Categorical(vals)) => {
            let mut counts = vec![0.0; cats.len() + 1];
            for v in vals {
                let slot = cats.iter().position(|c| c == v).unwrap_or(cats.len());
                counts[slot] += 1.0;
            }
            Ok(counts)
        }
        (
            BinSpec::Numeric {
                min,
                max,
                bin_count,
            },
            HistogramValues::Numeric(vals),
        ) => {
            let mut counts = vec![0.0; *bin_count];
            let width = (max - min) / *bin_count as f64;
            for &v in vals {
                if v.is_nan() {
                    return Err(AggregateError::Sensitivity(SensitivityError::InvalidData(
                        "NaN in histogram input".into(),
                    )));
                }
                let clamped = v.clamp(*min, *max);
                let idx = (((clamped - min) / width) as usize).min(bin_count - 1);
                counts[idx] += 1.0;
            }
            Ok(counts)
        }
        (BinSpec::Categories(_), HistogramValues::Numeric(_)) => Err(AggregateError::SpecMismatch(
            "categorical spec given numeric values".into(),
        )),
        (BinSpec::Numeric { .. }, HistogramValues::Categorical(_)) => Err(
            AggregateError::SpecMismatch("numeric spec given categorical values".into()),
        ),
    }
}
