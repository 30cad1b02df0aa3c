//! Noninteractive differential-privacy query release for tabular clinical
//! feature data, plus the supporting machinery: noise mechanisms, clipping
//! and sensitivity, a persistent privacy-budget ledger, an economic
//! ε-feasibility calculator, and an empirical tester that hunts for
//! violations of the DP inequality.
//!
//! The release flow is six steps: pick the queries, pick the DP flavor,
//! bound the sensitivities by clipping, choose ε (the feasibility module
//! helps), split the budget across queries, then execute and publish a
//! report that carries the spent ε alongside every noisy value.
//!
//! Start with the runnable examples (`cargo run --example release_pipeline`)
//! or the `dp-release` binary, which wraps the same pipeline behind
//! subcommands.

pub mod accountant;
pub mod aggregates;
pub mod cli;
pub mod dataset;
pub mod feasibility;
pub mod mechanisms;
pub mod release;
pub mod sensitivity;
pub mod tester;

pub use accountant::{distribute, AccountantError, BudgetLedger, LedgerState};
pub use aggregates::{
    dp_count, dp_histogram, dp_mean, dp_median, dp_sum, AggregateError, HistogramSpec,
    HistogramValues, Mechanism, NoisyResult, Value,
};
pub use dataset::{Dataset, DatasetError, EcgRecord, RhythmCode, Sex};
pub use feasibility::{
    expected_cost_from_breach_stats, is_feasible, max_feasible_epsilon, EconomicModel,
    FeasibilityError,
};
pub use mechanisms::{
    exponential_choice, gaussian_sample, laplace_sample, laplace_scale, laplace_tail,
    MechanismError, NoiseMode, NoiseScale, PrivacyParams, RandomSource,
};
pub use release::{
    emit_report, execute, validate_plan, DpReport, DpType, QueryKind, QuerySpec, ReleaseError,
    ReleasePlan, ValidatedPlan,
};
pub use sensitivity::{
    clamp, clipped_sum_sensitivity, count_sensitivity, dp_upper_bound_search, mean_sensitivity,
    ClippingBounds, SensitivityError, SensitivityValue,
};
pub use tester::{
    generate_neighbor_pairs, test_mechanism, DpTestConfig, DpTestVerdict, NeighborPair,
    TestOutcome, TesterError,
};
