//! Picking clipping bounds without looking at the data: grow a candidate
//! upper bound and watch a noisy clipped sum until it stabilizes. Each probe
//! costs a little epsilon, which the caller must charge to their ledger.
//!
//! ```bash
//! cargo run --example bound_search
//! ```

use dp_release::mechanisms::RandomSource;
use dp_release::sensitivity::{
    dp_upper_bound_search, BOUND_SEARCH_GROWTH, BOUND_SEARCH_MAX_STEPS, BOUND_SEARCH_TOL,
};

fn main() {
    // Synthetic QRS-like durations, mostly below 110 ms.
    let mut gen = RandomSource::seeded(42);
    let values: Vec<f64> = (0..5000)
        .map(|_| 60.0 + 60.0 * gen.next_uniform() + 30.0 * gen.next_uniform())
        .collect();

    let mut rng = RandomSource::seeded(7);
    let outcome = dp_upper_bound_search(
        &values,
        0.05, // epsilon per probe
        1.0,  // starting upper bound
        BOUND_SEARCH_GROWTH,
        BOUND_SEARCH_TOL,
        BOUND_SEARCH_MAX_STEPS,
        &mut rng,
    )
    .unwrap();

    println!(
        "chosen bounds: [{}, {}]",
        outcome.bounds.lower(),
        outcome.bounds.upper()
    );
    println!(
        "probes: {} (epsilon spent: {:.3} — charge this to your ledger)",
        outcome.steps, outcome.epsilon_spent
    );

    let true_max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!("true maximum (never revealed by the search): {true_max:.1}");
}
