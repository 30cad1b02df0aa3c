//! Economic choice of epsilon: given a study budget, a per-individual
//! expected breach cost, and a participant count, how much privacy loss can
//! the study afford?
//!
//! ```bash
//! cargo run --example feasibility
//! ```

use dp_release::feasibility::{
    expected_cost_from_breach_stats, is_feasible, max_feasible_epsilon, EconomicModel,
};

fn main() {
    // Per-individual expected breach cost from population statistics:
    // 23.5M people affected annually out of 293.75M, at $429 per breach.
    let expected_cost = expected_cost_from_breach_stats(23.5e6, 293.75e6, 429.0).unwrap();
    println!("expected per-individual breach cost E = {expected_cost:.2}");

    let model = EconomicModel::new(10_000.0, 34.0, 10_646).unwrap();
    let eps_max = max_feasible_epsilon(&model);
    println!(
        "study budget {} over {} participants at E = {} => epsilon_max = {eps_max:.6}",
        model.budget(),
        model.population(),
        model.expected_cost()
    );

    for epsilon in [0.01, 0.02, eps_max, 0.1, 0.2] {
        println!(
            "  epsilon {epsilon:.6}: {}",
            if is_feasible(&model, epsilon) {
                "feasible"
            } else {
                "NOT feasible"
            }
        );
    }
    println!();
    println!(
        "A working budget of 0.2 knowingly overshoots the affordable bound; \
         the release pipeline surfaces that as a warning rather than a refusal."
    );
}
