//! Sequential composition in practice: a ledger admits charges until the
//! total is spent, refuses atomically, and persists every accepted charge so
//! a crashed run cannot double-spend after restart.
//!
//! ```bash
//! cargo run --example budget_ledger
//! ```

use dp_release::accountant::{distribute, BudgetLedger, LedgerState};
use dp_release::mechanisms::PrivacyParams;

fn main() {
    let dir = std::env::temp_dir().join("dp-release-ledger-example");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(format!("spend-{}.ledger", std::process::id()));

    // One report of total epsilon 0.2, split equally over eleven per-group
    // queries.
    let shares = distribute(0.2, &[1.0; 11]).unwrap();
    println!(
        "0.2 over 11 queries: {:.7} each (sums to {})",
        shares[0],
        shares.iter().sum::<f64>()
    );

    let mut ledger = BudgetLedger::create(&path, PrivacyParams::pure(0.2).unwrap()).unwrap();
    for (i, &share) in shares.iter().enumerate() {
        ledger
            .charge(
                &format!("qrs-mean:group-{i}"),
                PrivacyParams::pure(share).unwrap(),
            )
            .unwrap();
    }
    println!(
        "after 11 charges: remaining epsilon = {:.2e}, state = {:?}",
        ledger.remaining().epsilon,
        ledger.state()
    );
    assert_eq!(ledger.state(), LedgerState::Exhausted);

    // Any further spend is refused and leaves the ledger untouched.
    let refusal = ledger.charge("one-more", PrivacyParams::pure(0.01).unwrap());
    println!("extra charge: {}", refusal.unwrap_err());

    // Reloading from disk sees the same spend history.
    let reloaded = BudgetLedger::load(&path).unwrap();
    println!(
        "reloaded from {}: {} entries, state {:?}",
        path.display(),
        reloaded.entries().len(),
        reloaded.state()
    );

    std::fs::remove_file(&path).ok();
}
