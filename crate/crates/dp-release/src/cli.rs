//! Command-line front end for the release workflow.
//!
//! Exit codes: 0 success, 1 validation error, 2 budget/feasibility refusal,
//! 3 I/O error. Human summaries go to stdout, diagnostics to stderr, and all
//! machine-readable output goes to files. No subcommand ever prints a raw
//! record value.

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::accountant::{AccountantError, BudgetLedger};
use crate::dataset;
use crate::feasibility::{is_feasible, max_feasible_epsilon, EconomicModel};
use crate::mechanisms::{PrivacyParams, RandomSource};
use crate::release::{self, ReleaseError, ReleasePlan};
use crate::tester::{self, DpTestConfig, TestOutcome};

const EXIT_OK: i32 = 0;
const EXIT_VALIDATION: i32 = 1;
const EXIT_REFUSED: i32 = 2;
const EXIT_IO: i32 = 3;

#[derive(Parser)]
#[command(
    name = "dp-release",
    version,
    about = "Differentially private query release for tabular clinical feature data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a CSV feature table; prints only counts and diagnostics.
    Ingest {
        /// Path to the CSV file.
        #[arg(long)]
        data: PathBuf,
        /// Fail on the first bad row instead of dropping it.
        #[arg(long)]
        strict: bool,
    },
    /// Compute the economically feasible epsilon bound for a study.
    Feasibility {
        /// Study budget B (currency units).
        #[arg(long)]
        budget: f64,
        /// Per-individual expected breach cost E (currency units).
        #[arg(long = "expected-cost")]
        expected_cost: f64,
        /// Number of participants N.
        #[arg(long)]
        population: u64,
        /// Optional epsilon to check against the bound.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Run a release plan end to end and emit the report files.
    Release {
        /// Plan file (TOML).
        #[arg(long)]
        plan: PathBuf,
        /// Dataset CSV.
        #[arg(long)]
        data: PathBuf,
        /// Budget ledger file; created on first use, refuses double-spending
        /// across invocations.
        #[arg(long)]
        ledger: PathBuf,
        /// Report output path (JSON); histogram plot data lands beside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Empirically test a catalog mechanism for the claimed epsilon.
    TestDp {
        /// Mechanism name from the catalog.
        #[arg(long)]
        mechanism: String,
        /// Claimed epsilon.
        #[arg(long)]
        epsilon: f64,
        /// Claimed delta (defaults to 0 = pure DP).
        #[arg(long)]
        delta: Option<f64>,
        /// Trials per database per neighbor pair.
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// Histogram bins for the distribution comparison.
        #[arg(long, default_value_t = 20)]
        bins: usize,
        /// Largest micro-database size to enumerate.
        #[arg(long = "max-size", default_value_t = 2)]
        max_size: usize,
        /// RNG seed (omit for OS entropy).
        #[arg(long)]
        seed: Option<u64>,
        /// Verdict file path.
        #[arg(long, default_value = "dp-test-verdict.json")]
        out: PathBuf,
    },
    /// Generate a deterministic synthetic dataset CSV.
    Synth {
        /// Number of records.
        #[arg(long)]
        n: usize,
        /// Generator seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parse arguments from the process environment and run.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return EXIT_OK;
        }
        Err(e) => {
            eprint!("{e}");
            return EXIT_VALIDATION;
        }
    };

    match cli.command {
        Command::Ingest { data, strict } => cmd_ingest(&data, strict),
        Command::Feasibility {
            budget,
            expected_cost,
            population,
            epsilon,
        } => cmd_feasibility(budget, expected_cost, population, epsilon),
        Command::Release {
            plan,
            data,
            ledger,
            out,
        } => cmd_release(&plan, &data, &ledger, &out),
        Command::TestDp {
            mechanism,
            epsilon,
            delta,
            trials,
            bins,
            max_size,
            seed,
            out,
        } => cmd_test_dp(
            &mechanism, epsilon, delta, trials, bins, max_size, seed, &out,
        ),
        Command::Synth { n, seed, out } => cmd_synth(n, seed, &out),
    }
}

/// Format with the given number of significant digits.
fn sig_digits(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - exponent).max(0) as usize;
    format!("{x:.decimals$}")
}

fn cmd_ingest(data: &Path, strict: bool) -> i32 {
    match dataset::ingest_csv(data, strict) {
        Ok((dataset, stats)) => {
            println!("rows accepted: {}", dataset.len());
            println!("rows dropped:  {}", stats.rows_dropped);
            for (line, reason) in &stats.diagnostics {
                eprintln!("line {line}: {reason}");
            }
            EXIT_OK
        }
        Err(dataset::DatasetError::Io(e)) => {
            eprintln!("error: {e}");
            EXIT_IO
        }
        Err(dataset::DatasetError::Csv(e)) if matches!(e.kind(), csv::ErrorKind::Io(_)) => {
            eprintln!("error: {e}");
            EXIT_IO
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_VALIDATION
        }
    }
}

fn cmd_feasibility(budget: f64, expected_cost: f64, population: u64, epsilon: Option<f64>) -> i32 {
    let model = match EconomicModel::new(budget, expected_cost, population) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };
    println!(
        "epsilon_max = {}",
        sig_digits(max_feasible_epsilon(&model), 6)
    );
    match epsilon {
        None => EXIT_OK,
        Some(eps) if !(eps.is_finite() && eps > 0.0) => {
            eprintln!("error: epsilon must be positive, got {eps}");
            EXIT_VALIDATION
        }
        Some(eps) => {
            if is_feasible(&model, eps) {
                println!("FEASIBLE");
                EXIT_OK
            } else {
                println!("INFEASIBLE");
                EXIT_REFUSED
            }
        }
    }
}

fn cmd_release(plan_path: &Path, data_path: &Path, ledger_path: &Path, out: &Path) -> i32 {
    let plan = match ReleasePlan::load(plan_path) {
        Ok(p) => p,
        Err(ReleaseError::Io(e)) => {
            eprintln!("error: plan file: {e}");
            return EXIT_IO;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };

    let (data, stats) = match dataset::ingest_csv(data_path, false) {
        Ok(ok) => ok,
        Err(dataset::DatasetError::Io(e)) => {
            eprintln!("error: data file: {e}");
            return EXIT_IO;
        }
        Err(dataset::DatasetError::Csv(e)) if matches!(e.kind(), csv::ErrorKind::Io(_)) => {
            eprintln!("error: data file: {e}");
            return EXIT_IO;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };
    if stats.rows_dropped > 0 {
        eprintln!("note: dropped {} unparseable rows", stats.rows_dropped);
    }

    let validated = match release::validate_plan(&plan, &data) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };

    // Budget spent on a run whose report cannot be written is gone for
    // good, so refuse unwritable output paths before touching the ledger.
    let out_dir = out.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = out_dir {
        if !dir.is_dir() {
            eprintln!(
                "error: report directory {} does not exist; create it before spending budget",
                dir.display()
            );
            return EXIT_IO;
        }
    }

    let total = match plan_budget(&plan) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };
    let mut ledger = if ledger_path.exists() {
        match BudgetLedger::load(ledger_path) {
            Ok(l) => l,
            Err(AccountantError::Io(e)) => {
                eprintln!("error: ledger: {e}");
                return EXIT_IO;
            }
            Err(e) => {
                eprintln!("error: ledger: {e}");
                return EXIT_VALIDATION;
            }
        }
    } else {
        match BudgetLedger::create(ledger_path, total) {
            Ok(l) => l,
            Err(AccountantError::Io(e)) => {
                eprintln!("error: ledger: {e}");
                return EXIT_IO;
            }
            Err(e) => {
                eprintln!("error: ledger: {e}");
                return EXIT_VALIDATION;
            }
        }
    };

    let mut rng = RandomSource::from_entropy();
    let report = match release::execute(&validated, &data, &mut ledger, &mut rng) {
        Ok(r) => r,
        Err(ReleaseError::BudgetRefused { needed, remaining }) => {
            eprintln!(
                "refused: plan needs epsilon {needed} but the ledger has {remaining} remaining"
            );
            return EXIT_REFUSED;
        }
        Err(ReleaseError::Io(e)) => {
            eprintln!("error: {e}");
            return EXIT_IO;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };

    if let Err(e) = ledger.checkpoint(ledger_path) {
        eprintln!("error: ledger checkpoint: {e}");
        return EXIT_IO;
    }
    let written = match release::emit_report(&report, out) {
        Ok(w) => w,
        Err(ReleaseError::Io(e)) => {
            eprintln!("error: report: {e}");
            return EXIT_IO;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };

    println!(
        "published {} results (total epsilon {}) to {}",
        report.results.len(),
        report.total_epsilon,
        out.display()
    );
    println!("files written: {}", written.len());
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    EXIT_OK
}

fn plan_budget(plan: &ReleasePlan) -> Result<PrivacyParams, String> {
    let delta = match plan.dp_type {
        release::DpType::Pure => 0.0,
        release::DpType::Approximate => plan.delta.unwrap_or(0.0),
    };
    PrivacyParams::new(plan.total_epsilon, delta).map_err(|e| e.to_string())
}

#[allow(clippy::too_many_arguments)]
fn cmd_test_dp(
    mechanism: &str,
    epsilon: f64,
    delta: Option<f64>,
    trials: usize,
    bins: usize,
    max_size: usize,
    seed: Option<u64>,
    out: &Path,
) -> i32 {
    let Some(fixture) = tester::find_mechanism(mechanism) else {
        let names: Vec<&str> = tester::mechanism_catalog().iter().map(|f| f.name).collect();
        eprintln!(
            "error: unknown mechanism {mechanism:?}; catalog: {}",
            names.join(", ")
        );
        return EXIT_VALIDATION;
    };
    let claimed = match PrivacyParams::new(epsilon, delta.unwrap_or(0.0)) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };
    let pairs = match tester::generate_neighbor_pairs(fixture.domain, max_size) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };
    let config = DpTestConfig {
        claimed,
        trials,
        bins,
        confidence_beta: 1e-9,
        domain_bounds: fixture.domain,
    };
    let mech = fixture.build(epsilon);
    let mut rng = match seed {
        Some(s) => RandomSource::seeded(s),
        None => RandomSource::from_entropy(),
    };
    let verdict = match tester::test_mechanism(&*mech, &pairs, &config, &mut rng) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };

    let worst = &pairs[verdict.worst_pair];
    let file = serde_json::json!({
        "mechanism": fixture.name,
        "outcome": verdict.outcome,
        "claimed_epsilon": epsilon,
        "claimed_delta": delta.unwrap_or(0.0),
        "trials": trials,
        "bins": bins,
        "confidence_beta": config.confidence_beta,
        "slack": verdict.slack_used,
        "pairs_tested": verdict.pairs_tested,
        "worst_pair": { "base": worst.base, "neighbor": worst.neighbor },
        "worst_bin": verdict.worst_bin,
        "observed_ratio": if verdict.observed_ratio.is_finite() {
            serde_json::json!(verdict.observed_ratio)
        } else {
            serde_json::json!("infinite")
        },
        "max_excess": verdict.max_excess,
    });
    if let Err(e) = std::fs::write(out, serde_json::to_string_pretty(&file).unwrap()) {
        eprintln!("error: verdict file: {e}");
        return EXIT_IO;
    }

    match verdict.outcome {
        TestOutcome::Pass => {
            println!("PASS: {} at claimed epsilon {epsilon}", fixture.name);
            EXIT_OK
        }
        TestOutcome::Violation => {
            println!(
                "VIOLATION: {} at claimed epsilon {epsilon} (max excess {:.4})",
                fixture.name, verdict.max_excess
            );
            EXIT_REFUSED
        }
        TestOutcome::Inconclusive => {
            println!("INCONCLUSIVE: nothing to compare");
            EXIT_VALIDATION
        }
    }
}

fn cmd_synth(n: usize, seed: u64, out: &Path) -> i32 {
    let data = match dataset::synthesize(n, seed, None) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };
    match dataset::write_csv(&data, out) {
        Ok(()) => {
            println!(
                "wrote {} synthetic records to {}",
                data.len(),
                out.display()
            );
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_IO
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig_digit_formatting() {
        assert_eq!(sig_digits(0.027252316029946735, 6), "0.0272523");
        assert_eq!(sig_digits(1.0, 6), "1.00000");
        assert_eq!(sig_digits(123456.789, 6), "123457");
        assert_eq!(sig_digits(0.0, 6), "0");
    }
}
