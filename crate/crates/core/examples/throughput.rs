use holdback::ring::{new_state, step, InitSpec, ModelParams, Variant};
use holdback::rng::CounterRng;
use std::time::Instant;

fn main() {
    for (variant, pi) in [
        (Variant::TasepH, 1.0),
        (Variant::ZeroRange, 0.9),
        (Variant::SlowToStart, 1.0),
    ] {
        let n = 1_000_000;
        let params = ModelParams::builder(n, 0.4, 0.5)
            .variant(variant)
            .pi(pi)
            .seed(1)
            .build()
            .unwrap();
        let rng = CounterRng::new(1);
        let mut s = new_state(&params, &InitSpec::UniformRandom).unwrap();
        for _ in 0..50 {
            step(&mut s, &params, &rng);
        }
        let t0 = Instant::now();
        let slots = 300;
        for _ in 0..slots {
            step(&mut s, &params, &rng);
        }
        let dt = t0.elapsed().as_secs_f64();
        println!(
            "{:?}: {:.3e} site-updates/s",
            variant,
            (n * slots) as f64 / dt
        );
    }
}
