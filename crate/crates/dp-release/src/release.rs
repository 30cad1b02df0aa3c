//! The six-step release pipeline: parse a declarative plan, validate it
//! against the data (including the economic ε check), distribute the budget
//! across queries, execute everything through the accountant, and emit a
//! publishable report.
//!
//! A `group_by` query expands into one independently charged query per
//! group — eleven rhythm groups means eleven charges of ε/11 under
//! sequential composition, reproducing the per-group accounting even though
//! the groups are disjoint. Empty groups still consume their share (the
//! decision to query was made before seeing the data; refunds conditioned on
//! the data would leak) and are published as suppressed.
//!
//! The report carries, for every result, the ε spent on it, plus the plan
//! digest, the total ε, and any warnings. Production reports record no
//! seed, so nobody can replay the noise; noise-off sources are refused
//! outright.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::accountant::{distribute, AccountantError, BudgetLedger, EXHAUSTION_TOL};
use crate::aggregates::{
    dp_count, dp_histogram, dp_mean, dp_median, AggregateError, HistogramSpec, HistogramValues,
    Mechanism, Value,
};
use crate::dataset::{self, Dataset, RhythmCode};
use crate::feasibility::{max_feasible_epsilon, EconomicModel, FeasibilityError};
use crate::mechanisms::{PrivacyParams, RandomSource};
use crate::sensitivity::ClippingBounds;

#[derive(Debug, Error)]
pub enum ReleaseError {
    #[error("plan validation failed:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
    #[error(
        "noise-off random sources are for tests only; report generation requires a noisy source"
    )]
    NoiseOffRefused,
    #[error(
        "budget refused: plan needs epsilon {needed} but the ledger has {remaining} remaining"
    )]
    BudgetRefused { needed: f64, remaining: f64 },
    #[error("a report must contain at least one query result")]
    EmptyReport,
    #[error("plan file: {0}")]
    PlanParse(String),
    #[error(transparent)]
    Accountant(#[from] AccountantError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DpType {
    Pure,
    Approximate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Mean,
    Median,
    Count,
    Histogram,
}

impl QueryKind {
    fn as_str(&self) -> &'static str {
        match self {
            QueryKind::Mean => "mean",
            QueryKind::Median => "median",
            QueryKind::Count => "count",
            QueryKind::Histogram => "histogram",
        }
    }
}

/// Numeric histogram layout in a plan file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericBins {
    pub min: f64,
    pub max: f64,
    pub bin_count: usize,
}

/// One query in a plan file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub query_id: String,
    pub kind: QueryKind,
    pub column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_by: Option<String>,
    /// Histogram only: explicit category list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    /// Histogram only: numeric bin layout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<NumericBins>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconomicModelSpec {
    pub budget: f64,
    pub expected_cost: f64,
    pub population: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsSpec {
    pub lower: f64,
    pub upper: f64,
}

/// Declarative description of a release run. See the config reference in the
/// repository README for the key-by-key format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleasePlan {
    pub dp_type: DpType,
    pub total_epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub queries: Vec<QuerySpec>,
    /// Per-query budget weights; defaults to an equal split.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<f64>,
    /// Per-column clipping bounds, keyed by column name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bounds: BTreeMap<String, BoundsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub economic_model: Option<EconomicModelSpec>,
}

impl ReleasePlan {
    pub fn from_toml_str(text: &str) -> Result<Self, ReleaseError> {
        toml::from_str(text).map_err(|e| ReleaseError::PlanParse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ReleaseError> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// SHA-256 over the canonical JSON form of the plan.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("plan serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}

/// A plan checked against a dataset, with its bounds and warnings resolved.
#[derive(Debug, Clone)]
pub struct ValidatedPlan {
    plan: ReleasePlan,
    weights: Vec<f64>,
    bounds: BTreeMap<String, ClippingBounds>,
    warnings: Vec<String>,
}

impl ValidatedPlan {
    pub fn plan(&self) -> &ReleasePlan {
        &self.plan
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

/// One published query result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportResult {
    pub query_id: String,
    pub kind: QueryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    /// Absent when the result was suppressed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
    pub epsilon_spent: f64,
    pub mechanism: Mechanism,
    pub clamped: bool,
    pub suppressed: bool,
}

/// The publishable artifact: per-query noisy results, the ε spent on each,
/// the total, and run metadata. No seed is ever recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpReport {
    pub plan_digest: String,
    pub results: Vec<ReportResult>,
    pub total_epsilon: f64,
    pub warnings: Vec<String>,
    pub timestamp: String,
    pub seed_policy: String,
}

/// Step 1–5 checks: structure, bounds, the δ < 1/n rule, and the economic
/// ε bound. Breaching the economic bound is a warning, not an error — the
/// release may knowingly proceed past it, and the warning cites the
/// computed bound.
pub fn validate_plan(plan: &ReleasePlan, data: &Dataset) -> Result<ValidatedPlan, ReleaseError> {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();

    if !(plan.total_epsilon.is_finite() && plan.total_epsilon > 0.0) {
        errors.push(format!(
            "total_epsilon must be positive and finite, got {}",
            plan.total_epsilon
        ));
    }

    match (plan.dp_type, plan.delta) {
        (DpType::Pure, Some(d)) => {
            errors.push(format!("pure DP plans must not set delta (got {d})"));
        }
        (DpType::Pure, None) => {}
        (DpType::Approximate, None) => {
            errors.push("approximate DP plans must set delta".into());
        }
        (DpType::Approximate, Some(d)) => {
            if !(d.is_finite() && d > 0.0 && d < 1.0) {
                errors.push(format!("delta must lie in (0, 1), got {d}"));
            } else {
                let limit = 1.0 / data.len() as f64;
                if d >= limit {
                    errors.push(format!(
                        "delta {d} is not below 1/n = {limit:.3e} for this dataset (n = {})",
                        data.len()
                    ));
                }
            }
        }
    }

    if plan.queries.is_empty() {
        errors.push("plan contains no queries".into());
    }

    let weights = if plan.weights.is_empty() {
        vec![1.0; plan.queries.len()]
    } else {
        if plan.weights.len() != plan.queries.len() {
            errors.push(format!(
                "weights length {} does not match query count {}",
                plan.weights.len(),
                plan.queries.len()
            ));
        }
        for (i, &w) in plan.weights.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                errors.push(format!("weight {i} must be positive, got {w}"));
            }
        }
        plan.weights.clone()
    };

    let mut bounds = BTreeMap::new();
    for (column, spec) in &plan.bounds {
        match ClippingBounds::new(spec.lower, spec.upper) {
            Ok(b) => {
                bounds.insert(dataset::normalize_column(column), b);
            }
            Err(e) => errors.push(format!("bounds for column {column:?}: {e}")),
        }
    }

    let mut seen_ids: Vec<&str> = Vec::new();
    for q in &plan.queries {
        let label = format!("query {:?}", q.query_id);
        if q.query_id.is_empty()
            || q.query_id.contains(',')
            || q.query_id.contains('\n')
            || q.query_id == "ledger"
        {
            errors.push(format!(
                "{label}: ids must be nonempty, contain no commas or newlines, and not be \"ledger\""
            ));
        }
        if seen_ids.contains(&q.query_id.as_str()) {
            errors.push(format!("{label}: duplicate query_id"));
        }
        seen_ids.push(&q.query_id);

        if let Some(group_col) = &q.group_by {
            let key = dataset::normalize_column(group_col);
            if key != "rhythm" && key != "sex" {
                errors.push(format!(
                    "{label}: group_by supports the closed-domain columns rhythm and sex, got {group_col:?}"
                ));
            }
        }

        match q.kind {
            QueryKind::Count => {
                if !data.has_column(&q.column) {
                    errors.push(format!("{label}: unknown column {:?}", q.column));
                }
                if q.categories.is_some() || q.bins.is_some() {
                    errors.push(format!("{label}: count queries take no histogram layout"));
                }
            }
            QueryKind::Mean | QueryKind::Median => {
                if !dataset::is_numeric_column(&q.column) {
                    errors.push(format!(
                        "{label}: {} needs a numeric column, got {:?}",
                        q.kind.as_str(),
                        q.column
                    ));
                } else if !bounds.contains_key(&dataset::normalize_column(&q.column)) {
                    errors.push(format!(
                        "{label}: no clipping bounds configured for column {:?}",
                        q.column
                    ));
                }
                if q.categories.is_some() || q.bins.is_some() {
                    errors.push(format!(
                        "{label}: {} queries take no histogram layout",
                        q.kind.as_str()
                    ));
                }
            }
            QueryKind::Histogram => match (&q.categories, &q.bins) {
                (Some(_), Some(_)) => {
                    errors.push(format!("{label}: set either categories or bins, not both"));
                }
                (None, None) => {
                    errors.push(format!("{label}: histogram needs categories or bins"));
                }
                (Some(cats), None) => {
                    if !dataset::is_categorical_column(&q.column) {
                        errors.push(format!(
                            "{label}: categorical histogram needs a categorical column, got {:?}",
                            q.column
                        ));
                    }
                    if let Err(e) = HistogramSpec::categorical(&q.column, cats.clone()) {
                        errors.push(format!("{label}: {e}"));
                    }
                }
                (None, Some(nb)) => {
                    if !dataset::is_numeric_column(&q.column) {
                        errors.push(format!(
                            "{label}: numeric histogram needs a numeric column, got {:?}",
                            q.column
                        ));
                    }
                    if let Err(e) = HistogramSpec::numeric(&q.column, nb.min, nb.max, nb.bin_count)
                    {
                        errors.push(format!("{label}: {e}"));
                    }
                }
            },
        }
    }

    if let Some(spec) = &plan.economic_model {
        match EconomicModel::new(spec.budget, spec.expected_cost, spec.population) {
            Ok(model) => {
                let eps_max = max_feasible_epsilon(&model);
                if plan.total_epsilon > eps_max {
                    warnings.push(format!(
                        "total_epsilon {} exceeds the economically feasible bound {:.6} \
                         (budget {}, expected cost {}, population {}); proceeding as planned",
                        plan.total_epsilon,
                        eps_max,
                        spec.budget,
                        spec.expected_cost,
                        spec.population
                    ));
                }
            }
            Err(FeasibilityError::InvalidModel(msg) | FeasibilityError::InvalidStatistics(msg)) => {
                errors.push(format!("economic_model: {msg}"));
            }
        }
    }

    if !errors.is_empty() {
        return Err(ReleaseError::Validation(errors));
    }
    Ok(ValidatedPlan {
        plan: plan.clone(),
        weights,
        bounds,
        warnings,
    })
}

struct ExecUnit<'a> {
    query: &'a QuerySpec,
    group: Option<String>,
    records: Vec<&'a dataset::EcgRecord>,
    flat_weight: f64,
}

/// Run a validated plan: one atomic admission check, then per-expanded-query
/// budget charges and aggregates, in plan order.
pub fn execute(
    validated: &ValidatedPlan,
    data: &Dataset,
    ledger: &mut BudgetLedger,
    rng: &mut RandomSource,
) -> Result<DpReport, ReleaseError> {
    if rng.is_noise_off() {
        return Err(ReleaseError::NoiseOffRefused);
    }
    let plan = &validated.plan;

    // Expand group_by queries into one unit per group, in the fixed group
    // order, dividing the query's weight equally among its groups.
    let mut units: Vec<ExecUnit> = Vec::new();
    for (q, &weight) in plan.queries.iter().zip(validated.weights.iter()) {
        match &q.group_by {
            None => units.push(ExecUnit {
                query: q,
                group: None,
                records: data.records().iter().collect(),
                flat_weight: weight,
            }),
            Some(col) => {
                let groups = group_records(data, col);
                let share = weight / groups.len() as f64;
                for (label, records) in groups {
                    units.push(ExecUnit {
                        query: q,
                        group: Some(label),
                        records,
                        flat_weight: share,
                    });
                }
            }
        }
    }

    // All-or-nothing admission: refuse up front rather than mid-run.
    let remaining = ledger.remaining();
    if plan.total_epsilon > remaining.epsilon + EXHAUSTION_TOL {
        return Err(ReleaseError::BudgetRefused {
            needed: plan.total_epsilon,
            remaining: remaining.epsilon,
        });
    }

    let flat_weights: Vec<f64> = units.iter().map(|u| u.flat_weight).collect();
    let shares = distribute(plan.total_epsilon, &flat_weights)?;

    let mut results = Vec::with_capacity(units.len());
    let mut warnings = validated.warnings.clone();
    let mut total_epsilon = 0.0;
    for (unit, &epsilon) in units.iter().zip(shares.iter()) {
        let ledger_id = match &unit.group {
            Some(g) => format!("{}:{}", unit.query.query_id, g),
            None => unit.query.query_id.clone(),
        };
        ledger.charge(&ledger_id, PrivacyParams::pure(epsilon).expect("share > 0"))?;

        let result = run_unit(unit, epsilon, &validated.bounds, rng)?;
        if result.suppressed {
            warnings.push(format!(
                "{ledger_id}: suppressed (empty group), epsilon still charged"
            ));
        } else if result.clamped {
            warnings.push(format!("{ledger_id}: output clamped to its bounds"));
        }
        total_epsilon += result.epsilon_spent;
        results.push(result);
    }

    debug_assert!((ledger.spent_epsilon() - total_epsilon).abs() <= EXHAUSTION_TOL);
    Ok(DpReport {
        plan_digest: plan.digest(),
        results,
        total_epsilon,
        warnings,
        timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Micros, true),
        seed_policy: "none-recorded".into(),
    })
}

fn group_records<'a>(
    data: &'a Dataset,
    column: &str,
) -> Vec<(String, Vec<&'a dataset::EcgRecord>)> {
    match dataset::normalize_column(column).as_str() {
        "rhythm" => {
            let mut groups: Vec<(String, Vec<&dataset::EcgRecord>)> = RhythmCode::ALL
                .iter()
                .map(|c| (c.acronym().to_string(), Vec::new()))
                .collect();
            for r in data.records() {
                let slot = RhythmCode::ALL
                    .iter()
                    .position(|&c| c == r.rhythm)
                    .expect("all codes enumerated");
                groups[slot].1.push(r);
            }
            groups
        }
        "sex" => {
            let mut male = Vec::new();
            let mut female = Vec::new();
            for r in data.records() {
                match r.sex {
                    dataset::Sex::Male => male.push(r),
                    dataset::Sex::Female => female.push(r),
                }
            }
            vec![("MALE".to_string(), male), ("FEMALE".to_string(), female)]
        }
        other => unreachable!("validation admits only rhythm/sex group columns, got {other}"),
    }
}

fn run_unit(
    unit: &ExecUnit<'_>,
    epsilon: f64,
    bounds: &BTreeMap<String, ClippingBounds>,
    rng: &mut RandomSource,
) -> Result<ReportResult, ReleaseError> {
    let q = unit.query;
    let records = unit.records.iter().copied();

    let outcome = match q.kind {
        QueryKind::Count => {
            let values = dataset::numeric_values(records, &q.column)
                .unwrap_or_else(|| vec![0.0; unit.records.len()]);
            Some(dp_count(&values, epsilon, rng)?)
        }
        QueryKind::Mean | QueryKind::Median => {
            let values =
                dataset::numeric_values(records, &q.column).expect("validated numeric column");
            let b = bounds[&dataset::normalize_column(&q.column)];
            if values.is_empty() {
                None // suppressed below; the budget is already committed
            } else if q.kind == QueryKind::Mean {
                Some(dp_mean(&values, b, epsilon, rng)?)
            } else {
                Some(dp_median(&values, b, epsilon, rng)?)
            }
        }
        QueryKind::Histogram => {
            let spec = histogram_spec(q)?;
            let result = if q.categories.is_some() {
                let values =
                    dataset::categorical_values(records, &q.column).expect("validated column");
                dp_histogram(HistogramValues::Categorical(&values), &spec, epsilon, rng)?
            } else {
                let values = dataset::numeric_values(records, &q.column).expect("validated column");
                dp_histogram(HistogramValues::Numeric(&values), &spec, epsilon, rng)?
            };
            Some(result)
        }
    };

    Ok(match outcome {
        Some(noisy) => ReportResult {
            query_id: q.query_id.clone(),
            kind: q.kind,
            group: unit.group.clone(),
            value: Some(noisy.value),
            epsilon_spent: epsilon,
            mechanism: noisy.mechanism,
            clamped: noisy.clamped,
            suppressed: false,
        },
        None => ReportResult {
            query_id: q.query_id.clone(),
            kind: q.kind,
            group: unit.group.clone(),
            value: None,
            epsilon_spent: epsilon,
            mechanism: match q.kind {
                QueryKind::Median => Mechanism::Exponential,
                _ => Mechanism::Laplace,
            },
            clamped: false,
            suppressed: true,
        },
    })
}

fn histogram_spec(q: &QuerySpec) -> Result<HistogramSpec, ReleaseError> {
    match (&q.categories, &q.bins) {
        (Some(cats), None) => Ok(HistogramSpec::categorical(&q.column, cats.clone())?),
        (None, Some(nb)) => Ok(HistogramSpec::numeric(
            &q.column,
            nb.min,
            nb.max,
            nb.bin_count,
        )?),
        _ => unreachable!("validation enforces exactly one histogram layout"),
    }
}

/// Write the report JSON plus one two-column plot-data sidecar per
/// histogram result. Returns every path written (report first).
pub fn emit_report(report: &DpReport, path: &Path) -> Result<Vec<PathBuf>, ReleaseError> {
    if report.results.is_empty() {
        return Err(ReleaseError::EmptyReport);
    }
    let mut written = Vec::new();
    let json = serde_json::to_string_pretty(report)?;
    fs::write(path, json.as_bytes())?;
    written.push(path.to_path_buf());

    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    for result in &report.results {
        let Some(Value::Histogram(bins)) = &result.value else {
            continue;
        };
        let mut name = format!("{stem}_{}", result.query_id);
        if let Some(g) = &result.group {
            name.push('_');
            name.push_str(g);
        }
        let safe: String = name
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                    c
                } else {
                    '-'
                }
            })
            .collect();
        let sidecar = dir.join(format!("{safe}.plot.txt"));
        let mut text = String::new();
        for bin in bins {
            text.push_str(&format!("{}\t{}\n", bin.label, bin.count));
        }
        fs::write(&sidecar, text.as_bytes())?;
        written.push(sidecar);
    }
    Ok(written)
}
