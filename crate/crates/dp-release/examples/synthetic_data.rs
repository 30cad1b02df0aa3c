//! Deterministic synthetic feature tables: same seed, same records. Useful
//! for testing the pipeline end to end without any external download.
//!
//! ```bash
//! cargo run --example synthetic_data
//! ```

use dp_release::dataset::{partition_by_rhythm, synthesize, write_csv};

fn main() {
    let data = synthesize(10_646, 1, None).unwrap();
    println!("generated {} records", data.len());

    let qrs = data.numeric_column("qrs_duration").unwrap();
    let (min, max) = qrs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    println!("QRS duration range: [{min}, {max}] (generator keeps it inside [18, 256])");

    println!("rhythm groups (release order):");
    for (code, records) in partition_by_rhythm(&data) {
        println!(
            "  {:5} {:44} {:>6}",
            code.acronym(),
            code.full_name(),
            records.len()
        );
    }

    let out = std::env::temp_dir().join(format!("dp-release-synth-{}.csv", std::process::id()));
    write_csv(&data, &out).unwrap();
    println!("wrote {}", out.display());
}
