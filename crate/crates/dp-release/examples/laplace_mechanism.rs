//! The Laplace mechanism from first principles: calibrate a scale from
//! sensitivity and epsilon, sample, and read error bars off the tail bound.
//!
//! ```bash
//! cargo run --example laplace_mechanism
//! ```

use dp_release::mechanisms::{
    gaussian_sample, laplace_sample, laplace_scale, laplace_tail, PrivacyParams, RandomSource,
};

fn main() {
    // A count query has sensitivity 1. At epsilon = 0.2/14 the noise scale
    // is 70, which is what a histogram bin gets in the bundled plan.
    let scale = laplace_scale(1.0, 0.2 / 14.0).unwrap();
    println!("count query at epsilon 0.2/14: scale b = {}", scale.b());

    // The tail bound turns a scale into an error bar: 95% of draws land
    // within b·ln 20.
    let bar = scale.b() * 20.0f64.ln();
    println!(
        "95% of noisy counts fall within ±{bar:.1} (tail mass beyond: {:.4})",
        laplace_tail(scale, bar).unwrap()
    );

    // A mean over one lone record with range [18, 256] at epsilon 0.2/11:
    // scale 13090, so the noise swamps the signal entirely.
    let lonely = laplace_scale(256.0 - 18.0, 0.2 / 11.0).unwrap();
    println!(
        "size-1 group mean: scale {} -> P(|noise| <= 238) = {:.4}",
        lonely.b(),
        1.0 - laplace_tail(lonely, 238.0).unwrap()
    );

    // Seeded sampling is reproducible; the same seed replays the stream.
    let mut rng = RandomSource::seeded(7);
    let draws: Vec<f64> = (0..5).map(|_| laplace_sample(scale, &mut rng)).collect();
    println!("five seeded draws at b = 70: {draws:.1?}");

    // Gaussian mechanism for (epsilon, delta) releases.
    let params = PrivacyParams::new(0.5, 1e-5).unwrap();
    let g = gaussian_sample(1.0, params, &mut rng).unwrap();
    println!("one (0.5, 1e-5) Gaussian draw at sensitivity 1: {g:.3}");

    // Noise-off mode exists for tests: every additive sampler returns 0.
    let mut debug_rng = RandomSource::noise_off();
    assert_eq!(laplace_sample(scale, &mut debug_rng), 0.0);
    println!("noise-off draw: 0 (refused by the release pipeline)");
}
