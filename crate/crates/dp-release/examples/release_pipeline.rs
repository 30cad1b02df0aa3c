//! The whole six-step flow in one program: load the bundled plan, validate
//! it against synthetic data (feasibility check included), execute through a
//! budget ledger, and emit the report plus plot-data sidecars.
//!
//! ```bash
//! cargo run --example release_pipeline
//! ```

use dp_release::accountant::BudgetLedger;
use dp_release::dataset::synthesize;
use dp_release::mechanisms::{PrivacyParams, RandomSource};
use dp_release::release::{emit_report, execute, validate_plan, ReleasePlan};

fn main() {
    let plan_text = include_str!("../plans/qrs_release.toml");
    let plan = ReleasePlan::from_toml_str(plan_text).unwrap();
    println!(
        "plan: {} queries, total epsilon {}, digest {}...",
        plan.queries.len(),
        plan.total_epsilon,
        &plan.digest()[..12]
    );

    let data = synthesize(10_646, 1, None).unwrap();
    let validated = validate_plan(&plan, &data).unwrap();
    for w in validated.warnings() {
        println!("warning: {w}");
    }

    let mut ledger = BudgetLedger::new(PrivacyParams::pure(plan.total_epsilon).unwrap());
    let mut rng = RandomSource::from_entropy();
    let report = execute(&validated, &data, &mut ledger, &mut rng).unwrap();

    println!(
        "published {} results, total epsilon {}, ledger now {:?}",
        report.results.len(),
        report.total_epsilon,
        ledger.state()
    );
    for r in report.results.iter().take(11) {
        let value = r
            .value
            .as_ref()
            .and_then(|v| v.as_scalar())
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "(suppressed)".into());
        println!(
            "  {} {} = {} (epsilon {:.6}{})",
            r.query_id,
            r.group.as_deref().unwrap_or("-"),
            value,
            r.epsilon_spent,
            if r.clamped { ", clamped" } else { "" }
        );
    }

    let dir = std::env::temp_dir().join(format!("dp-release-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out = dir.join("report.json");
    let written = emit_report(&report, &out).unwrap();
    println!("wrote {} files under {}", written.len(), dir.display());
}
