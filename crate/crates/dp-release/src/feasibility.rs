//! Economic ε-feasibility: when is a privacy budget affordable?
//!
//! A study with budget B recruits N participants, each of whom expects to
//! lose E (in the same currency) if their record leaks through *some other*
//! channel. Participation is rational while the marginal leak risk the study
//! adds stays affordable, which bounds the privacy-loss parameter by
//!
//! ```text
//! (e^ε − 1) · E · N ≤ B
//! ```
//!
//! so the largest affordable epsilon is `ε_max = ln(1 + B/(E·N))`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeasibilityError {
    #[error("invalid economic model: {0}")]
    InvalidModel(String),
    #[error("invalid breach statistics: {0}")]
    InvalidStatistics(String),
}

/// Relative slack applied at the feasibility boundary so that
/// `is_feasible(model, max_feasible_epsilon(model))` holds despite the
/// ln/exp round trip.
pub const BOUNDARY_REL_TOL: f64 = 1e-9;

/// Budget-constraint inputs: study budget B, per-individual expected breach
/// cost E, and participant count N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconomicModel {
    budget: f64,
    expected_cost: f64,
    population: u64,
}

impl EconomicModel {
    pub fn new(budget: f64, expected_cost: f64, population: u64) -> Result<Self, FeasibilityError> {
        if !(budget.is_finite() && budget > 0.0) {
            return Err(FeasibilityError::InvalidModel(format!(
                "budget must be positive, got {budget}"
            )));
        }
        if !(expected_cost.is_finite() && expected_cost > 0.0) {
            return Err(FeasibilityError::InvalidModel(format!(
                "expected cost must be positive, got {expected_cost}"
            )));
        }
        if population == 0 {
            return Err(FeasibilityError::InvalidModel(
                "population must be at least 1".into(),
            ));
        }
        Ok(Self {
            budget,
            expected_cost,
            population,
        })
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn expected_cost(&self) -> f64 {
        self.expected_cost
    }

    pub fn population(&self) -> u64 {
        self.population
    }

    fn exposure(&self) -> f64 {
        self.expected_cost * self.population as f64
    }
}

/// Largest ε satisfying the budget constraint: ln(1 + B/(E·N)).
pub fn max_feasible_epsilon(model: &EconomicModel) -> f64 {
    (model.budget() / model.exposure()).ln_1p()
}

/// Expected per-individual breach cost from population statistics:
/// (annual_affected / population) × breach_cost.
pub fn expected_cost_from_breach_stats(
    annual_affected: f64,
    population: f64,
    breach_cost: f64,
) -> Result<f64, FeasibilityError> {
    if !(annual_affected.is_finite() && annual_affected >= 0.0) {
        return Err(FeasibilityError::InvalidStatistics(format!(
            "annual affected count must be nonnegative, got {annual_affected}"
        )));
    }
    if !(population.is_finite() && population > 0.0) {
        return Err(FeasibilityError::InvalidStatistics(format!(
            "population must be positive, got {population}"
        )));
    }
    if !(breach_cost.is_finite() && breach_cost >= 0.0) {
        return Err(FeasibilityError::InvalidStatistics(format!(
            "breach cost must be nonnegative, got {breach_cost}"
        )));
    }
    if annual_affected > population {
        return Err(FeasibilityError::InvalidStatistics(format!(
            "annual affected ({annual_affected}) cannot exceed the population ({population})"
        )));
    }
    Ok(annual_affected / population * breach_cost)
}

/// Whether (e^ε − 1)·E·N ≤ B, with [`BOUNDARY_REL_TOL`] relative slack.
pub fn is_feasible(model: &EconomicModel, epsilon: f64) -> bool {
    epsilon.is_finite()
        && epsilon > 0.0
        && epsilon.exp_m1() * model.exposure() <= model.budget() * (1.0 + BOUNDARY_REL_TOL)
}
