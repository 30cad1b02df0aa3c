//! Every DP aggregate on one synthetic rhythm group: count, clipped sum,
//! clipped mean, exponential-mechanism median, and a histogram — and the
//! endpoint collapse that tiny groups suffer.
//!
//! ```bash
//! cargo run --example aggregates_tour
//! ```

use dp_release::aggregates::{
    dp_count, dp_histogram, dp_mean, dp_median, dp_sum, HistogramSpec, HistogramValues,
};
use dp_release::dataset::{partition_by_rhythm, synthesize, RhythmCode};
use dp_release::mechanisms::RandomSource;
use dp_release::sensitivity::ClippingBounds;

fn main() {
    let data = synthesize(10_646, 1, None).unwrap();
    let groups = partition_by_rhythm(&data);
    let (_, bradycardia) = groups
        .iter()
        .find(|(code, _)| *code == RhythmCode::Sb)
        .unwrap();
    let qrs: Vec<f64> = bradycardia.iter().map(|r| r.qrs_duration as f64).collect();
    let bounds = ClippingBounds::new(18.0, 256.0).unwrap();
    let epsilon = 0.2 / 11.0;
    let mut rng = RandomSource::seeded(9);

    let true_mean = qrs.iter().sum::<f64>() / qrs.len() as f64;
    println!(
        "SB group: n = {}, true mean QRS = {true_mean:.4}",
        qrs.len()
    );

    let count = dp_count(&qrs, epsilon, &mut rng).unwrap();
    let sum = dp_sum(&qrs, bounds, epsilon, &mut rng).unwrap();
    let mean = dp_mean(&qrs, bounds, epsilon, &mut rng).unwrap();
    let median = dp_median(&qrs, bounds, epsilon, &mut rng).unwrap();
    println!("dp count : {:?}", count.value.as_scalar().unwrap());
    println!("dp sum   : {:.1}", sum.value.as_scalar().unwrap());
    println!(
        "dp mean  : {:.4} (clamped: {})",
        mean.value.as_scalar().unwrap(),
        mean.clamped
    );
    println!("dp median: {:.4}", median.value.as_scalar().unwrap());

    // A large group barely feels scale 13090/n noise; a 1-member group is
    // noise all the way down and collapses to an endpoint.
    let lonely = dp_mean(&[85.0], bounds, epsilon, &mut rng).unwrap();
    println!(
        "size-1 group mean: {:.4} (clamped: {})",
        lonely.value.as_scalar().unwrap(),
        lonely.clamped
    );

    // Histogram over the full rhythm column; sensitivity 1 covers all bins.
    let rhythms = data.categorical_column("rhythm").unwrap();
    let spec = HistogramSpec::categorical(
        "rhythm",
        RhythmCode::ALL
            .iter()
            .map(|c| c.acronym().to_string())
            .collect(),
    )
    .unwrap();
    let hist = dp_histogram(
        HistogramValues::Categorical(&rhythms),
        &spec,
        0.2 / 14.0,
        &mut rng,
    )
    .unwrap();
    println!("rhythm histogram at epsilon 0.2/14:");
    for bin in hist.value.as_bins().unwrap() {
        println!("  {:5}  {}", bin.label, bin.count);
    }
}
