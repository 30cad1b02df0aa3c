//! Acceptance suite: one test per release criterion, each printing a
//! pass/fail line with its measured runtime.
//!
//! Run with `cargo test -p dp-release --test acceptance -- --nocapture`.

use std::path::Path;
use std::time::Instant;

use dp_release::accountant::{BudgetLedger, LedgerState};
use dp_release::aggregates::{
    dp_count, dp_histogram, dp_mean, dp_median, dp_sum, HistogramSpec, HistogramValues, Value,
};
use dp_release::dataset::{self, synthesize, RhythmCode};
use dp_release::feasibility::{max_feasible_epsilon, EconomicModel};
use dp_release::mechanisms::{laplace_sample, NoiseScale, PrivacyParams, RandomSource};
use dp_release::release::{execute, validate_plan, QueryKind, ReleasePlan};
use dp_release::sensitivity::ClippingBounds;
use dp_release::tester::{
    find_mechanism, generate_neighbor_pairs, test_mechanism, DpTestConfig, TestOutcome,
};

fn report_line(criterion: &str, started: Instant) {
    println!("PASS {criterion} ({:.2}s)", started.elapsed().as_secs_f64());
}

fn qrs_plan() -> ReleasePlan {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("plans/qrs_release.toml");
    ReleasePlan::load(&path).expect("bundled plan parses")
}

/// Criterion 1: the economic model B=10000, E=34, N=10646 bounds epsilon at
/// 0.02725 ± 0.0005.
#[test]
fn criterion_1_feasibility_reproduction() {
    let started = Instant::now();
    let model = EconomicModel::new(10_000.0, 34.0, 10_646).unwrap();
    let eps_max = max_feasible_epsilon(&model);
    assert!(
        (eps_max - 0.02725).abs() <= 0.0005,
        "eps_max = {eps_max}, expected 0.02725 ± 0.0005"
    );
    report_line("criterion 1: feasibility reproduction", started);
}

/// Criterion 2: the replica plan (11 means + 11 medians + 14 histograms at
/// 0.2 per report) publishes total ε = 0.6 exactly and exhausts a 0.6 ledger
/// on synthetic 10,646-row data.
#[test]
fn criterion_2_budget_reproduction() {
    let started = Instant::now();
    let plan = qrs_plan();
    let data = synthesize(10_646, 1, None).unwrap();
    let validated = validate_plan(&plan, &data).unwrap();
    let mut ledger = BudgetLedger::new(PrivacyParams::pure(0.6).unwrap());
    let mut rng = RandomSource::seeded(20_260_810);
    let report = execute(&validated, &data, &mut ledger, &mut rng).unwrap();

    assert_eq!(
        report.results.len(),
        36,
        "11 means + 11 medians + 14 histograms"
    );
    assert_eq!(report.total_epsilon, 0.6, "total epsilon must be exact");
    assert_eq!(ledger.state(), LedgerState::Exhausted);
    assert!(ledger.remaining().epsilon <= 1e-12);
    assert!(
        started.elapsed().as_secs_f64() < 10.0,
        "runtime budget exceeded"
    );
    report_line(
        "criterion 2: budget reproduction (total epsilon 0.6, ledger exhausted)",
        started,
    );
}

/// Criterion 3: a size-1 group mean at ε = 0.2/11 with bounds [18, 256]
/// clamps to an endpoint in at least 96% of 1,000 seeded runs; the empirical
/// rate must also sit within binomial 3σ of the analytic clamping
/// probability.
#[test]
fn criterion_3_rare_group_clamping() {
    let started = Instant::now();
    let bounds = ClippingBounds::new(18.0, 256.0).unwrap();
    let epsilon = 0.2 / 11.0;
    let value: f64 = 85.0;
    let runs = 1000;

    // Analytic clamping probability from the Laplace CDF: the output stays
    // inside [18, 256] only while the noise lies in [18−85, 256−85].
    let scale: f64 = 238.0 / epsilon; // n = 1, so Δf/ε = 238/(0.2/11) = 13090
    let p_inside =
        (1.0 - 0.5 * (-(256.0 - value) / scale).exp()) - 0.5 * (-(value - 18.0) / scale).exp();
    let p_clamped = 1.0 - p_inside;

    let mut rng = RandomSource::seeded(3);
    let mut clamped = 0usize;
    for _ in 0..runs {
        let r = dp_mean(&[value], bounds, epsilon, &mut rng).unwrap();
        let v = r.value.as_scalar().unwrap();
        if v == 18.0 || v == 256.0 {
            clamped += 1;
        }
    }
    let frac = clamped as f64 / runs as f64;
    assert!(frac >= 0.96, "clamped fraction {frac} below 0.96");
    let sigma = (p_clamped * (1.0 - p_clamped) / runs as f64).sqrt();
    assert!(
        (frac - p_clamped).abs() <= 3.0 * sigma,
        "clamped fraction {frac} outside 3σ of analytic {p_clamped:.5}"
    );
    assert!(started.elapsed().as_secs_f64() < 5.0);
    report_line(
        "criterion 3: rare-group clamping (endpoint collapse)",
        started,
    );
}

/// Criterion 4: 10^6 seeded Laplace samples at b = 1 match the analytic
/// distribution: variance 2.0 ± 2%, KS distance < 0.002, and tail mass
/// beyond 3 within e^−3 ± 0.005.
#[test]
fn criterion_4_laplace_sampler_calibration() {
    let started = Instant::now();
    let scale = NoiseScale::new(1.0).unwrap();
    let mut rng = RandomSource::seeded(4);
    let n = 1_000_000usize;
    let mut samples = Vec::with_capacity(n);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut beyond3 = 0usize;
    for _ in 0..n {
        let x = laplace_sample(scale, &mut rng);
        sum += x;
        sum_sq += x * x;
        if x.abs() > 3.0 {
            beyond3 += 1;
        }
        samples.push(x);
    }

    let mean = sum / n as f64;
    let variance = sum_sq / n as f64 - mean * mean;
    assert!((variance - 2.0).abs() / 2.0 < 0.02, "variance = {variance}");

    let tail = beyond3 as f64 / n as f64;
    assert!(
        (tail - (-3.0f64).exp()).abs() < 0.005,
        "tail fraction = {tail}"
    );

    // Kolmogorov–Smirnov distance against the analytic Laplace CDF.
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cdf = |x: f64| -> f64 {
        if x < 0.0 {
            0.5 * x.exp()
        } else {
            1.0 - 0.5 * (-x).exp()
        }
    };
    let mut ks = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        ks = ks.max((f - i as f64 / n as f64).abs());
        ks = ks.max((f - (i + 1) as f64 / n as f64).abs());
    }
    assert!(ks < 0.002, "KS distance = {ks}");
    assert!(started.elapsed().as_secs_f64() < 10.0);
    report_line(
        "criterion 4: Laplace sampler calibration (variance, KS, tail)",
        started,
    );
}

/// Criterion 5: in noise-off mode every aggregate equals a plain reference
/// implementation, exactly, over 1,000 random synthetic datasets.
#[test]
fn criterion_5_noise_off_oracle_equivalence() {
    let started = Instant::now();

    mod reference {
        pub fn count(values: &[f64]) -> f64 {
            values.len() as f64
        }
        pub fn sum(values: &[f64], lo: f64, hi: f64) -> f64 {
            values.iter().map(|v| v.clamp(lo, hi)).sum()
        }
        pub fn mean(values: &[f64], lo: f64, hi: f64) -> f64 {
            sum(values, lo, hi) / values.len() as f64
        }
        pub fn median(values: &[f64], lo: f64, hi: f64) -> f64 {
            let mut xs: Vec<f64> = values.iter().map(|v| v.clamp(lo, hi)).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = xs.len();
            (xs[(n - 1) / 2] + xs[n / 2]) / 2.0
        }
        pub fn histogram(values: &[f64], min: f64, max: f64, bins: usize) -> Vec<f64> {
            let mut counts = vec![0.0; bins];
            let width = (max - min) / bins as f64;
            for &v in values {
                let idx = (((v.clamp(min, max) - min) / width) as usize).min(bins - 1);
                counts[idx] += 1.0;
            }
            counts
        }
    }

    let bounds = ClippingBounds::new(18.0, 256.0).unwrap();
    let spec = HistogramSpec::numeric("qrs_duration", 18.0, 256.0, 17).unwrap();
    let mut gen = RandomSource::seeded(55);
    for case in 0..1000 {
        let n = 1 + (gen.next_uniform() * 60.0) as usize;
        // Values deliberately spill outside the bounds to exercise clipping.
        let values: Vec<f64> = (0..n).map(|_| gen.next_uniform() * 320.0 - 10.0).collect();

        let mut rng = RandomSource::noise_off();
        let count = dp_count(&values, 1.0, &mut rng).unwrap();
        let sum = dp_sum(&values, bounds, 1.0, &mut rng).unwrap();
        let mean = dp_mean(&values, bounds, 1.0, &mut rng).unwrap();
        let median = dp_median(&values, bounds, 1.0, &mut rng).unwrap();
        let hist = dp_histogram(HistogramValues::Numeric(&values), &spec, 1.0, &mut rng).unwrap();

        assert_eq!(
            count.value.as_scalar().unwrap(),
            reference::count(&values),
            "case {case}"
        );
        assert_eq!(
            sum.value.as_scalar().unwrap(),
            reference::sum(&values, 18.0, 256.0),
            "case {case}"
        );
        assert_eq!(
            mean.value.as_scalar().unwrap(),
            reference::mean(&values, 18.0, 256.0),
            "case {case}"
        );
        assert_eq!(
            median.value.as_scalar().unwrap(),
            reference::median(&values, 18.0, 256.0),
            "case {case}"
        );
        let got: Vec<f64> = hist
            .value
            .as_bins()
            .unwrap()
            .iter()
            .map(|b| b.count)
            .collect();
        assert_eq!(
            got,
            reference::histogram(&values, 18.0, 256.0, 17),
            "case {case}"
        );
    }
    assert!(started.elapsed().as_secs_f64() < 30.0);
    report_line(
        "criterion 5: noise-off oracle equivalence (1000 datasets, exact)",
        started,
    );
}

/// Criterion 6: exhaustive sensitivity check on all datasets of size ≤ 6
/// over {18, 137, 256} under the fixed-n (replace-one) neighbor model the
/// mean formula assumes: the clipped sum moves by ≤ 238 and the clamped
/// mean by ≤ 238/n. Removing a record also moves the mean by ≤ 238/n.
#[test]
fn criterion_6_sensitivity_oracle() {
    let started = Instant::now();
    let domain = [18.0, 137.0, 256.0];
    let range = 238.0;

    let mut datasets_checked = 0usize;
    for size in 1..=6usize {
        let mean_bound = range / size as f64;
        for code in 0..3usize.pow(size as u32) {
            let mut ds = Vec::with_capacity(size);
            let mut c = code;
            for _ in 0..size {
                ds.push(domain[c % 3]);
                c /= 3;
            }
            datasets_checked += 1;
            let sum: f64 = ds.iter().sum();
            let mean = sum / size as f64;

            for pos in 0..size {
                // Fixed-n neighbors: replace one record with any other value.
                for &replacement in &domain {
                    let new_sum = sum - ds[pos] + replacement;
                    assert!(
                        (sum - new_sum).abs() <= range + 1e-9,
                        "sum moved by {} on {ds:?}",
                        (sum - new_sum).abs()
                    );
                    let new_mean = new_sum / size as f64;
                    assert!(
                        (mean - new_mean).abs() <= mean_bound + 1e-9,
                        "mean moved by {} > {mean_bound} on {ds:?}",
                        (mean - new_mean).abs()
                    );
                }
                // Removing a record also respects the (b−a)/n mean bound
                // (n = the larger side).
                if size > 1 {
                    let removed_mean = (sum - ds[pos]) / (size - 1) as f64;
                    assert!(
                        (mean - removed_mean).abs() <= mean_bound + 1e-9,
                        "removal moved the mean by {} > {mean_bound} on {ds:?}",
                        (mean - removed_mean).abs()
                    );
                }
            }
        }
    }
    assert_eq!(datasets_checked, 3 + 9 + 27 + 81 + 243 + 729);
    assert!(started.elapsed().as_secs_f64() < 60.0);
    report_line(
        "criterion 6: exhaustive sensitivity oracle (fixed-n neighbors)",
        started,
    );
}

/// Criterion 7: the stochastic tester passes the correct count mechanism at
/// its true ε and flags the half-noise and no-noise controls
/// (T = 10^5, K = 20, β = 1e−9).
#[test]
fn criterion_7_tester_power_and_soundness() {
    let started = Instant::now();
    let count_fixture = find_mechanism("dp_count").unwrap();
    let pairs = generate_neighbor_pairs(count_fixture.domain, 2).unwrap();
    let config = DpTestConfig {
        claimed: PrivacyParams::pure(1.0).unwrap(),
        trials: 100_000,
        bins: 20,
        confidence_beta: 1e-9,
        domain_bounds: count_fixture.domain,
    };

    let mech = count_fixture.build(1.0);
    let mut rng = RandomSource::seeded(71);
    let verdict = test_mechanism(&*mech, &pairs, &config, &mut rng).unwrap();
    assert_eq!(
        verdict.outcome,
        TestOutcome::Pass,
        "correct dp_count: {verdict:?}"
    );

    let half = find_mechanism("broken_half_noise").unwrap().build(1.0);
    let mut rng = RandomSource::seeded(72);
    let verdict = test_mechanism(&*half, &pairs, &config, &mut rng).unwrap();
    assert_eq!(
        verdict.outcome,
        TestOutcome::Violation,
        "half noise: {verdict:?}"
    );

    let none = find_mechanism("broken_no_noise").unwrap().build(1.0);
    let mut rng = RandomSource::seeded(73);
    let verdict = test_mechanism(&*none, &pairs, &config, &mut rng).unwrap();
    assert_eq!(
        verdict.outcome,
        TestOutcome::Violation,
        "no noise: {verdict:?}"
    );

    assert!(started.elapsed().as_secs_f64() < 180.0);
    report_line("criterion 7: tester power and soundness", started);
}

/// Criterion 8: rhythm histograms on synthetic n = 10,646 at ε = 0.2/14 keep
/// at least 90% of bins within ±70·ln 20 of the true counts across 100
/// seeded runs.
#[test]
fn criterion_8_histogram_fidelity() {
    let started = Instant::now();
    let data = synthesize(10_646, 1, None).unwrap();
    let values = data.categorical_column("rhythm").unwrap();
    let categories: Vec<String> = RhythmCode::ALL
        .iter()
        .map(|c| c.acronym().to_string())
        .collect();
    let spec = HistogramSpec::categorical("rhythm", categories.clone()).unwrap();

    let mut truth = vec![0.0f64; categories.len()];
    for v in &values {
        let idx = categories.iter().position(|c| c == v).unwrap();
        truth[idx] += 1.0;
    }

    let epsilon = 0.2 / 14.0;
    let limit = (1.0 / epsilon) * 20.0f64.ln(); // 70·ln 20 ≈ 209.7
    let mut rng = RandomSource::seeded(88);
    let mut within = 0usize;
    let mut total = 0usize;
    for _ in 0..100 {
        let r = dp_histogram(
            HistogramValues::Categorical(&values),
            &spec,
            epsilon,
            &mut rng,
        )
        .unwrap();
        let bins = r.value.as_bins().unwrap();
        for (bin, &t) in bins.iter().zip(truth.iter()) {
            total += 1;
            if (bin.count - t).abs() <= limit {
                within += 1;
            }
        }
    }
    let frac = within as f64 / total as f64;
    assert!(frac >= 0.90, "only {frac} of bins within ±{limit:.1}");
    assert!(started.elapsed().as_secs_f64() < 30.0);
    report_line("criterion 8: histogram fidelity (bins near truth)", started);
}

/// Criterion 9: specific published draws are not reproducible — two seeds
/// give different noisy values under identical accounting — and the
/// per-arrhythmia report carries exactly the eleven rhythm codes with their
/// full-name mapping.
#[test]
fn criterion_9_structure_and_nonreproducibility() {
    let started = Instant::now();
    let plan = qrs_plan();
    let data = synthesize(2_000, 5, None).unwrap();
    let validated = validate_plan(&plan, &data).unwrap();

    let run = |seed: u64| {
        let mut ledger = BudgetLedger::new(PrivacyParams::pure(0.6).unwrap());
        let mut rng = RandomSource::seeded(seed);
        execute(&validated, &data, &mut ledger, &mut rng).unwrap()
    };
    let run1 = run(1);
    let run2 = run(2);

    // Identical structure and accounting, differing noisy values: the
    // published numbers are single random draws, not reproducible targets.
    assert_eq!(run1.total_epsilon, run2.total_epsilon);
    let values_differ = run1
        .results
        .iter()
        .zip(run2.results.iter())
        .any(|(a, b)| a.value != b.value);
    assert!(values_differ, "two seeds produced identical noise draws");
    assert_eq!(run1.seed_policy, "none-recorded");

    // Structural check: per-arrhythmia results enumerate the 11 codes.
    let expected_codes: Vec<&str> = RhythmCode::ALL.iter().map(|c| c.acronym()).collect();
    for kind in [QueryKind::Mean, QueryKind::Median] {
        let groups: Vec<&str> = run1
            .results
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| r.group.as_deref().unwrap())
            .collect();
        assert_eq!(groups, expected_codes, "{kind:?} groups");
    }

    // The acronym ↔ full-name mapping is the fixed eleven-row table.
    let mapping: Vec<(&str, &str)> = RhythmCode::ALL
        .iter()
        .map(|c| (c.acronym(), c.full_name()))
        .collect();
    let expected_mapping = [
        ("AFIB", "Atrial Fibrillation"),
        ("SB", "Sinus Bradycardia"),
        ("SA", "Sinus Irregularity"),
        ("AF", "Atrial Flutter"),
        ("SR", "Sinus Rhythm"),
        ("ST", "Sinus Tachycardia"),
        ("SVT", "Supraventricular Tachycardia"),
        ("AT", "Atrial Tachycardia"),
        ("AVNRT", "Atrioventricular Node Reentrant Tachycardia"),
        ("SAAWR", "Sinus Atrium to Atrial Wandering Rhythm"),
        ("AVRT", "Atrioventricular Reentrant Tachycardia"),
    ];
    assert_eq!(mapping, expected_mapping);

    // Histogram results exist for every column except the free-form beat
    // label (14 of the 15 columns).
    let hist_columns: Vec<&str> = run1
        .results
        .iter()
        .filter(|r| r.kind == QueryKind::Histogram)
        .map(|r| r.query_id.as_str())
        .collect();
    assert_eq!(hist_columns.len(), 14);
    assert!(!hist_columns.iter().any(|c| c.contains("beat")));

    // Every histogram sidecar would carry labeled bins.
    for r in run1
        .results
        .iter()
        .filter(|r| r.kind == QueryKind::Histogram)
    {
        match r.value.as_ref().unwrap() {
            Value::Histogram(bins) => assert!(!bins.is_empty()),
            Value::Scalar(_) => panic!("histogram result must carry bins"),
        }
    }

    let _ = dataset::COLUMNS; // release order and schema stay pinned together
    report_line(
        "criterion 9: structural checks and non-reproducibility disclosure",
        started,
    );
}
