//! Noise primitives: Laplace sampler and tail bounds, Gaussian sampler for
//! (ε, δ) release, and the exponential-mechanism core.
//!
//! The Laplace mechanism adds noise drawn from the zero-mean distribution
//!
//! ```text
//! Lap(x | b) = 1/(2b) · e^(-|x|/b),    b = Δf / ε
//! ```
//!
//! Sampling uses the inverse CDF of a single uniform draw so that any port
//! reproduces the exact sample stream given the same uniform stream:
//!
//! ```text
//! u ~ Uniform[0, 1)           u = (next_u64() >> 11) · 2⁻⁵³
//! c = u − 0.5
//! x = −b · sign(c) · ln(1 − 2·|c|)
//! ```
//!
//! The Gaussian mechanism uses the classic calibration
//! σ = Δf · sqrt(2·ln(1.25/δ)) / ε (valid for ε < 1, δ > 0) and draws via
//! Box–Muller on two uniforms: z = sqrt(−2·ln u₁) · cos(2π·u₂) with
//! u₁ = 1 − u ∈ (0, 1].
//!
//! All samplers are driven by a [`RandomSource`], which is either seeded
//! (reproducible tests) or OS-seeded (production), and carries a noise mode.
//! In noise-off mode every additive sampler returns exactly 0 and the
//! exponential mechanism returns the max-utility candidate; the release
//! pipeline refuses noise-off sources.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechanismError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("the Gaussian mechanism requires delta > 0; use the Laplace mechanism for pure DP")]
    UnsupportedForPureDp,
}

/// The (ε, δ) pair a mechanism invocation claims or spends.
///
/// Pure DP has δ = 0; approximate DP allows a small failure probability δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    epsilon: f64,
    delta: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, MechanismError> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(MechanismError::InvalidParameter(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        if !delta.is_finite() || !(0.0..1.0).contains(&delta) {
            return Err(MechanismError::InvalidParameter(format!(
                "delta must lie in [0, 1), got {delta}"
            )));
        }
        Ok(Self { epsilon, delta })
    }

    /// Pure ε-DP parameters (δ = 0).
    pub fn pure(epsilon: f64) -> Result<Self, MechanismError> {
        Self::new(epsilon, 0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_pure(&self) -> bool {
        self.delta == 0.0
    }
}

/// Laplace scale parameter b = Δf / ε, in the units of the query output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScale {
    b: f64,
}

impl NoiseScale {
    pub fn new(b: f64) -> Result<Self, MechanismError> {
        if !b.is_finite() || b <= 0.0 {
            return Err(MechanismError::InvalidParameter(format!(
                "noise scale must be positive and finite, got {b}"
            )));
        }
        Ok(Self { b })
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

/// Whether samplers add real noise or act as deterministic pass-throughs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseMode {
    Noisy,
    /// Every additive sampler returns 0; the exponential mechanism returns
    /// the max-utility candidate. For deterministic tests only — the release
    /// pipeline refuses this mode.
    NoiseOff,
}

/// Seedable randomness feeding every mechanism.
///
/// Identical seed, mode, and call sequence produce an identical sample
/// stream. A source is single-owner; run parallel work on distinct sources.
#[derive(Debug, Clone)]
pub struct RandomSource {
    rng: ChaCha12Rng,
    mode: NoiseMode,
    seed: Option<u64>,
}

impl RandomSource {
    /// Reproducible noisy source.
    pub fn seeded(seed: u64) -> Self {
        Self {
            rng: ChaCha12Rng::seed_from_u64(seed),
            mode: NoiseMode::Noisy,
            seed: Some(seed),
        }
    }

    /// OS-seeded noisy source for production runs. The seed is not recorded.
    pub fn from_entropy() -> Self {
        Self {
            rng: ChaCha12Rng::try_from_os_rng().expect("OS entropy source unavailable"),
            mode: NoiseMode::Noisy,
            seed: None,
        }
    }

    /// Deterministic source whose samplers return their noise-free value.
    pub fn noise_off() -> Self {
        Self {
            rng: ChaCha12Rng::seed_from_u64(0),
            mode: NoiseMode::NoiseOff,
            seed: Some(0),
        }
    }

    pub fn mode(&self) -> NoiseMode {
        self.mode
    }

    pub fn is_noise_off(&self) -> bool {
        self.mode == NoiseMode::NoiseOff
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Uniform draw on [0, 1) as `(next_u64() >> 11) · 2⁻⁵³`.
    pub fn next_uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Derive an independent child source (consumes one draw from self).
    pub fn fork(&mut self) -> Self {
        Self {
            rng: ChaCha12Rng::seed_from_u64(self.rng.next_u64()),
            mode: self.mode,
            seed: None,
        }
    }
}

/// Laplace scale b = sensitivity / ε.
pub fn laplace_scale(sensitivity: f64, epsilon: f64) -> Result<NoiseScale, MechanismError> {
    if !sensitivity.is_finite() || sensitivity <= 0.0 {
        return Err(MechanismError::InvalidParameter(format!(
            "sensitivity must be positive and finite, got {sensitivity}"
        )));
    }
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(MechanismError::InvalidParameter(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    NoiseScale::new(sensitivity / epsilon)
}

/// One zero-mean Laplace draw at the given scale (0 in noise-off mode).
pub fn laplace_sample(scale: NoiseScale, rng: &mut RandomSource) -> f64 {
    if rng.is_noise_off() {
        return 0.0;
    }
    let c = rng.next_uniform() - 0.5;
    // 1 − 2|c| can round to 0 when the uniform lands on an endpoint; clamp
    // to the smallest positive double to keep ln finite.
    let t = (1.0 - 2.0 * c.abs()).max(f64::MIN_POSITIVE);
    -scale.b() * c.signum() * t.ln()
}

/// Two-sided tail mass P(|X| > t) = e^(−t/b) of the Laplace distribution.
pub fn laplace_tail(scale: NoiseScale, t: f64) -> Result<f64, MechanismError> {
    if !t.is_finite() || t < 0.0 {
        return Err(MechanismError::InvalidParameter(format!(
            "tail threshold must be nonnegative and finite, got {t}"
        )));
    }
    Ok((-t / scale.b()).exp())
}

/// Noise standard deviation of the Gaussian mechanism,
/// σ = Δf · sqrt(2·ln(1.25/δ)) / ε. Requires δ > 0 and ε ∈ (0, 1).
pub fn gaussian_sigma(sensitivity: f64, params: PrivacyParams) -> Result<f64, MechanismError> {
    if !sensitivity.is_finite() || sensitivity <= 0.0 {
        return Err(MechanismError::InvalidParameter(format!(
            "sensitivity must be positive and finite, got {sensitivity}"
        )));
    }
    if params.delta() == 0.0 {
        return Err(MechanismError::UnsupportedForPureDp);
    }
    if params.epsilon() >= 1.0 {
        return Err(MechanismError::InvalidParameter(format!(
            "the classic Gaussian calibration requires epsilon < 1, got {}",
            params.epsilon()
        )));
    }
    Ok(sensitivity * (2.0 * (1.25 / params.delta()).ln()).sqrt() / params.epsilon())
}

/// One zero-mean Gaussian draw calibrated for (ε, δ)-DP (0 in noise-off mode).
pub fn gaussian_sample(
    sensitivity: f64,
    params: PrivacyParams,
    rng: &mut RandomSource,
) -> Result<f64, MechanismError> {
    let sigma = gaussian_sigma(sensitivity, params)?;
    if rng.is_noise_off() {
        return Ok(0.0);
    }
    // Box–Muller; u1 shifted into (0, 1] so ln stays finite.
    let u1 = 1.0 - rng.next_uniform();
    let u2 = rng.next_uniform();
    let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
    Ok(sigma * z)
}

/// Exponential mechanism over an explicit candidate list.
///
/// Samples index i with probability proportional to
/// exp(ε · uᵢ / (2·Δu)). Weights are normalized against the maximum utility,
/// so the choice distribution is invariant under shifting all utilities by a
/// constant. Noise-off mode returns the max-utility index (ties break to the
/// lowest index).
pub fn exponential_choice_index(
    utilities: &[f64],
    epsilon: f64,
    utility_sensitivity: f64,
    rng: &mut RandomSource,
) -> Result<usize, MechanismError> {
    if utilities.is_empty() {
        return Err(MechanismError::InvalidParameter(
            "exponential mechanism needs at least one candidate".into(),
        ));
    }
    if utilities.iter().any(|u| !u.is_finite()) {
        return Err(MechanismError::InvalidParameter(
            "candidate utilities must be finite".into(),
        ));
    }
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(MechanismError::InvalidParameter(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    if !utility_sensitivity.is_finite() || utility_sensitivity <= 0.0 {
        return Err(MechanismError::InvalidParameter(format!(
            "utility sensitivity must be positive and finite, got {utility_sensitivity}"
        )));
    }

    let argmax =
        utilities.iter().enumerate().fold(
            0usize,
            |best, (i, &u)| if u > utilities[best] { i } else { best },
        );
    if rng.is_noise_off() {
        return Ok(argmax);
    }

    let max_u = utilities[argmax];
    let weights: Vec<f64> = utilities
        .iter()
        .map(|&u| (epsilon * (u - max_u) / (2.0 * utility_sensitivity)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut target = rng.next_uniform() * total;
    for (i, w) in weights.iter().enumerate() {
        target -= w;
        if target < 0.0 {
            return Ok(i);
        }
    }
    Ok(weights.len() - 1)
}

/// Exponential mechanism returning the chosen candidate.
pub fn exponential_choice<'a, T>(
    candidates: &'a [(T, f64)],
    epsilon: f64,
    utility_sensitivity: f64,
    rng: &mut RandomSource,
) -> Result<&'a T, MechanismError> {
    let utilities: Vec<f64> = candidates.iter().map(|(_, u)| *u).collect();
    let idx = exponential_choice_index(&utilities, epsilon, utility_sensitivity, rng)?;
    Ok(&candidates[idx].0)
}
