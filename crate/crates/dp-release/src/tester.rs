//! Empirical checker for the ε-DP predicate.
//!
//! For neighboring databases D, D′ an ε-DP mechanism must satisfy
//!
//! ```text
//! Pr[M(D) ∈ S] ≤ e^ε · Pr[M(D′) ∈ S] + δ
//! ```
//!
//! for every output event S. The tester estimates both output distributions
//! by running the mechanism T times per side, bins the pooled outputs into K
//! equal-width bins (a practical event family — the tester can refute, never
//! prove), and checks the inequality per bin in both directions with a
//! confidence margin
//!
//! ```text
//! slack = 2·sqrt(ln(2/β) / (2T))
//! ```
//!
//! twice the per-frequency Hoeffding deviation at confidence β, so false
//! alarms on a correct mechanism stay negligible across the whole suite
//! (union bound over every bin, pair, and direction). Micro-databases are
//! drawn from the three-valued domain {lower, midpoint, upper}: small
//! enough for exhaustive neighbor enumeration, rich enough to stress
//! clamping edges.
//!
//! [`mechanism_catalog`] registers correct mechanisms plus deliberately
//! broken ones (half noise, no noise, unclamped mean) as negative controls.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::aggregates;
use crate::mechanisms::{laplace_sample, laplace_scale, PrivacyParams, RandomSource};
use crate::sensitivity::ClippingBounds;

#[derive(Debug, Error)]
pub enum TesterError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("mechanism failed mid-trial: {0}")]
    MechanismFailure(String),
}

/// How two micro-databases relate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum NeighborRelation {
    /// `neighbor` is `base` with the record at this index removed.
    Removed { index: usize },
    /// `neighbor` is `base` with this value appended.
    Added { value: f64 },
}

/// A pair of databases differing in exactly one record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeighborPair {
    pub base: Vec<f64>,
    pub neighbor: Vec<f64>,
    pub relation: NeighborRelation,
}

impl NeighborPair {
    /// Length difference of one, with the shorter a sub-multiset of the
    /// longer.
    pub fn is_valid(&self) -> bool {
        let (short, long) = if self.base.len() + 1 == self.neighbor.len() {
            (&self.base, &self.neighbor)
        } else if self.neighbor.len() + 1 == self.base.len() {
            (&self.neighbor, &self.base)
        } else {
            return false;
        };
        let mut rest: Vec<f64> = long.clone();
        for v in short.iter() {
            match rest.iter().position(|r| r == v) {
                Some(i) => {
                    rest.swap_remove(i);
                }
                None => return false,
            }
        }
        rest.len() == 1
    }
}

/// Test configuration: claimed privacy, trial count per side, bin count,
/// per-frequency confidence, and the micro-database domain.
#[derive(Debug, Clone, Copy)]
pub struct DpTestConfig {
    pub claimed: PrivacyParams,
    /// Trials per database per pair. 10^4 or more for meaningful power.
    pub trials: usize,
    pub bins: usize,
    pub confidence_beta: f64,
    pub domain_bounds: ClippingBounds,
}

impl DpTestConfig {
    pub fn validate(&self) -> Result<(), TesterError> {
        if self.trials == 0 {
            return Err(TesterError::InvalidParameter("trials must be >= 1".into()));
        }
        if self.bins < 2 {
            return Err(TesterError::InvalidParameter("bins must be >= 2".into()));
        }
        if !(self.confidence_beta > 0.0 && self.confidence_beta < 1.0) {
            return Err(TesterError::InvalidParameter(format!(
                "confidence beta must lie in (0, 1), got {}",
                self.confidence_beta
            )));
        }
        Ok(())
    }

    /// Confidence margin added to every per-bin comparison.
    pub fn slack(&self) -> f64 {
        2.0 * ((2.0 / self.confidence_beta).ln() / (2.0 * self.trials as f64)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TestOutcome {
    Pass,
    Violation,
    /// Nothing could be compared (no pairs supplied).
    Inconclusive,
}

/// Verdict plus the most extreme per-bin comparison observed.
///
/// `max_excess` is the largest value of `p̂ − (e^ε·p̂′ + δ + slack)` over all
/// pairs, bins, and directions; a violation is exactly `max_excess > 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DpTestVerdict {
    pub outcome: TestOutcome,
    pub worst_pair: usize,
    pub worst_bin: usize,
    /// p̂/p̂′ at the worst bin; infinite when p̂′ was empirically zero.
    pub observed_ratio: f64,
    pub slack_used: f64,
    pub max_excess: f64,
    pub pairs_tested: usize,
}

/// Exhaustively enumerate neighbor pairs over the domain
/// {lower, midpoint, upper}: every multiset of size ≤ `max_size` paired with
/// all of its remove-one neighbors and with itself plus each appended domain
/// value, deduplicated.
pub fn generate_neighbor_pairs(
    domain_bounds: ClippingBounds,
    max_size: usize,
) -> Result<Vec<NeighborPair>, TesterError> {
    if max_size == 0 {
        return Err(TesterError::InvalidParameter(
            "max_size must be >= 1".into(),
        ));
    }
    let domain = [
        domain_bounds.lower(),
        (domain_bounds.lower() + domain_bounds.upper()) / 2.0,
        domain_bounds.upper(),
    ];

    // Multisets as sorted vectors, sizes 0..=max_size.
    let mut databases: Vec<Vec<f64>> = vec![Vec::new()];
    let mut frontier: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..max_size {
        let mut next = Vec::new();
        for db in &frontier {
            for &v in &domain {
                // Keep sorted; only append values >= the last to avoid
                // generating the same multiset twice.
                if db.last().is_none_or(|&l| v >= l) {
                    let mut bigger = db.clone();
                    bigger.push(v);
                    next.push(bigger);
                }
            }
        }
        databases.extend(next.iter().cloned());
        frontier = next;
    }

    let mut seen: BTreeSet<(Vec<u64>, Vec<u64>)> = BTreeSet::new();
    let mut pairs = Vec::new();
    let mut push = |base: Vec<f64>, neighbor: Vec<f64>, relation: NeighborRelation| {
        let key = (
            base.iter().map(|v| v.to_bits()).collect(),
            neighbor.iter().map(|v| v.to_bits()).collect(),
        );
        if seen.insert(key) {
            pairs.push(NeighborPair {
                base,
                neighbor,
                relation,
            });
        }
    };

    for db in &databases {
        for index in 0..db.len() {
            if index > 0 && db[index] == db[index - 1] {
                continue; // removing either duplicate yields the same pair
            }
            let mut neighbor = db.clone();
            neighbor.remove(index);
            push(db.clone(), neighbor, NeighborRelation::Removed { index });
        }
        for &value in &domain {
            let mut neighbor = db.clone();
            let at = neighbor.partition_point(|&x| x <= value);
            neighbor.insert(at, value);
            push(db.clone(), neighbor, NeighborRelation::Added { value });
        }
    }
    Ok(pairs)
}

/// A mechanism under test, as a borrowed trait object.
pub type Mechanism = dyn Fn(&[f64], &mut RandomSource) -> Result<f64, String>;

/// Run the mechanism T times per side of every pair and hunt for a bin where
/// the DP inequality fails in either direction.
///
/// A pair whose pooled output range is a single point has identical constant
/// outputs on both sides; it satisfies the inequality trivially and counts
/// as passed. The verdict is `Inconclusive` only when there was nothing to
/// test.
pub fn test_mechanism(
    mechanism: &Mechanism,
    pairs: &[NeighborPair],
    config: &DpTestConfig,
    rng: &mut RandomSource,
) -> Result<DpTestVerdict, TesterError> {
    config.validate()?;
    let slack = config.slack();
    let e_eps = config.claimed.epsilon().exp();
    let delta = config.claimed.delta();
    let trials = config.trials;

    let mut verdict = DpTestVerdict {
        outcome: if pairs.is_empty() {
            TestOutcome::Inconclusive
        } else {
            TestOutcome::Pass
        },
        worst_pair: 0,
        worst_bin: 0,
        observed_ratio: 0.0,
        slack_used: slack,
        max_excess: f64::NEG_INFINITY,
        pairs_tested: pairs.len(),
    };

    let mut base_out = vec![0.0f64; trials];
    let mut neighbor_out = vec![0.0f64; trials];
    for (pair_index, pair) in pairs.iter().enumerate() {
        run_trials(mechanism, &pair.base, &mut base_out, rng)?;
        run_trials(mechanism, &pair.neighbor, &mut neighbor_out, rng)?;

        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &x in base_out.iter().chain(neighbor_out.iter()) {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        if lo == hi {
            // Both sides produced one identical constant: distributions
            // match exactly, nothing to refute on this pair.
            continue;
        }

        let width = (hi - lo) / config.bins as f64;
        let bin_of = |x: f64| (((x - lo) / width) as usize).min(config.bins - 1);
        let mut p_base = vec![0.0f64; config.bins];
        let mut p_neighbor = vec![0.0f64; config.bins];
        for &x in base_out.iter() {
            p_base[bin_of(x)] += 1.0;
        }
        for &x in neighbor_out.iter() {
            p_neighbor[bin_of(x)] += 1.0;
        }
        let t = trials as f64;
        for bin in 0..config.bins {
            p_base[bin] /= t;
            p_neighbor[bin] /= t;
        }

        for bin in 0..config.bins {
            for (p, q) in [
                (p_base[bin], p_neighbor[bin]),
                (p_neighbor[bin], p_base[bin]),
            ] {
                let excess = p - (e_eps * q + delta + slack);
                if excess > verdict.max_excess {
                    verdict.max_excess = excess;
                    verdict.worst_pair = pair_index;
                    verdict.worst_bin = bin;
                    verdict.observed_ratio = if q > 0.0 {
                        p / q
                    } else if p > 0.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    };
                }
            }
        }
    }

    if verdict.max_excess > 0.0 {
        verdict.outcome = TestOutcome::Violation;
    }
    if verdict.max_excess == f64::NEG_INFINITY {
        verdict.max_excess = 0.0;
    }
    Ok(verdict)
}

fn run_trials(
    mechanism: &Mechanism,
    database: &[f64],
    out: &mut [f64],
    rng: &mut RandomSource,
) -> Result<(), TesterError> {
    for slot in out.iter_mut() {
        let y = mechanism(database, rng).map_err(TesterError::MechanismFailure)?;
        if !y.is_finite() {
            return Err(TesterError::MechanismFailure(format!(
                "mechanism produced non-finite output {y}"
            )));
        }
        *slot = y;
    }
    Ok(())
}

/// A mechanism under test, built for a claimed ε.
pub type MechanismFn = Box<dyn Fn(&[f64], &mut RandomSource) -> Result<f64, String>>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpectedBehavior {
    /// Genuinely ε-DP at the claimed ε.
    Correct,
    /// Should be flagged when tested at this claimed ε.
    ViolatesAt { claimed_epsilon: f64 },
}

/// A named catalog entry: how to build the mechanism for a claimed ε, which
/// domain to test it over, and what the tester should conclude.
pub struct MechanismFixture {
    pub name: &'static str,
    pub description: &'static str,
    pub expected: ExpectedBehavior,
    pub domain: ClippingBounds,
    builder: fn(f64) -> MechanismFn,
}

impl MechanismFixture {
    pub fn build(&self, epsilon: f64) -> MechanismFn {
        (self.builder)(epsilon)
    }
}

fn build_dp_count(epsilon: f64) -> MechanismFn {
    Box::new(move |db, rng| {
        aggregates::dp_count(db, epsilon, rng)
            .map(|r| r.value.as_scalar().expect("count is scalar"))
            .map_err(|e| e.to_string())
    })
}

fn build_dp_sum(epsilon: f64) -> MechanismFn {
    let bounds = ClippingBounds::new(0.0, 100.0).expect("static bounds");
    Box::new(move |db, rng| {
        aggregates::dp_sum(db, bounds, epsilon, rng)
            .map(|r| r.value.as_scalar().expect("sum is scalar"))
            .map_err(|e| e.to_string())
    })
}

fn build_half_noise_count(epsilon: f64) -> MechanismFn {
    Box::new(move |db, rng| {
        let scale = laplace_scale(1.0, 2.0 * epsilon).map_err(|e| e.to_string())?;
        Ok((db.len() as f64 + laplace_sample(scale, rng))
            .round()
            .max(0.0))
    })
}

fn build_no_noise_count(_epsilon: f64) -> MechanismFn {
    Box::new(move |db, _rng| Ok(db.len() as f64))
}

fn build_unclamped_mean(epsilon: f64) -> MechanismFn {
    // Claims the [0, 1] range for its noise scale but never clamps its
    // inputs, so data outside [0, 1] blows past the advertised sensitivity.
    Box::new(move |db, rng| {
        let n = db.len().max(1) as f64;
        let mean = db.iter().sum::<f64>() / n;
        let scale = laplace_scale(1.0 / n, epsilon).map_err(|e| e.to_string())?;
        Ok(mean + laplace_sample(scale, rng))
    })
}

/// Every registered mechanism, correct ones first.
pub fn mechanism_catalog() -> Vec<MechanismFixture> {
    vec![
        MechanismFixture {
            name: "dp_count",
            description: "count + Lap(1/eps), rounded, floored at 0",
            expected: ExpectedBehavior::Correct,
            domain: ClippingBounds::new(0.0, 1.0).expect("static bounds"),
            builder: build_dp_count,
        },
        MechanismFixture {
            name: "dp_sum",
            description: "clipped sum over [0, 100] + Lap(100/eps)",
            expected: ExpectedBehavior::Correct,
            domain: ClippingBounds::new(0.0, 100.0).expect("static bounds"),
            builder: build_dp_sum,
        },
        MechanismFixture {
            name: "broken_half_noise",
            description: "count + Lap(1/(2·eps)): only 2eps-DP",
            expected: ExpectedBehavior::ViolatesAt {
                claimed_epsilon: 1.0,
            },
            domain: ClippingBounds::new(0.0, 1.0).expect("static bounds"),
            builder: build_half_noise_count,
        },
        MechanismFixture {
            name: "broken_no_noise",
            description: "exact count, no noise at all",
            expected: ExpectedBehavior::ViolatesAt {
                claimed_epsilon: 1.0,
            },
            domain: ClippingBounds::new(0.0, 1.0).expect("static bounds"),
            builder: build_no_noise_count,
        },
        MechanismFixture {
            name: "broken_unclamped_mean",
            description:
                "mean without input clamping; noise scaled for [0, 1] but fed [0, 100] data",
            expected: ExpectedBehavior::ViolatesAt {
                claimed_epsilon: 1.0,
            },
            domain: ClippingBounds::new(0.0, 100.0).expect("static bounds"),
            builder: build_unclamped_mean,
        },
    ]
}

/// The negative controls only.
pub fn broken_fixtures() -> Vec<MechanismFixture> {
    mechanism_catalog()
        .into_iter()
        .filter(|f| matches!(f.expected, ExpectedBehavior::ViolatesAt { .. }))
        .collect()
}

pub fn find_mechanism(name: &str) -> Option<MechanismFixture> {
    mechanism_catalog().into_iter().find(|f| f.name == name)
}
