use holdback::ballot::{
    arrival_sequence, ballot_bound, ballot_count, collapse_holes, seed_sequence, BallotInstance,
};
use holdback::ring::{new_state, InitSpec, ModelParams};
use proptest::prelude::*;

/// Is index 0 a good start: every prefix sum `< (m / n) r`? Exact in
/// integers.
fn good_start(k: &[u64], m: u64) -> bool {
    let n = k.len() as u64;
    let mut sum = 0;
    k.iter().enumerate().all(|(r, &x)| {
        sum += x;
        sum * n < m * (r as u64 + 1)
    })
}

fn integer_instance() -> impl Strategy<Value = (Vec<u64>, u64)> {
    prop::collection::vec(0u64..6, 1..=64).prop_flat_map(|k| {
        let total: u64 = k.iter().sum();
        (Just(k), (total + 1)..(total + 40))
    })
}

fn rational_instance() -> impl Strategy<Value = (Vec<(u64, u64)>, (u64, u64))> {
    prop::collection::vec((0u64..20, 1u64..9), 1..=64).prop_flat_map(|k| {
        // Exceed the total by a rational margin: m = ceil(total) + a / b.
        // Denominators divide 840, so the floor of the total is exact.
        let base = k.iter().map(|&(a, b)| a * (840 / b)).sum::<u64>() / 840 + 1;
        (Just(k), 0u64..30, 1u64..7).prop_map(move |(k, a, b)| (k, (base * b + a, b)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn integer_count_dominates_bound((k, m) in integer_instance()) {
        let inst = BallotInstance::Integer { k, m };
        prop_assert!(ballot_count(&inst).unwrap().count >= ballot_bound(&inst).unwrap());
    }

    #[test]
    fn rational_count_dominates_bound((k, m) in rational_instance()) {
        let inst = BallotInstance::Rational { k, m };
        prop_assert!(ballot_count(&inst).unwrap().count >= ballot_bound(&inst).unwrap());
    }

    #[test]
    fn rotations_average_to_count((k, m) in integer_instance()) {
        let n = k.len();
        let count = ballot_count(&BallotInstance::Integer { k: k.clone(), m }).unwrap().count;
        let good = (0..n)
            .filter(|&s| {
                let rot: Vec<u64> = (0..n).map(|i| k[(i + s) % n]).collect();
                good_start(&rot, m)
            })
            .count();
        prop_assert_eq!(good, count);
        // The count itself is rotation invariant.
        let rot: Vec<u64> = (0..n).map(|i| k[(i + 1) % n]).collect();
        prop_assert_eq!(ballot_count(&BallotInstance::Integer { k: rot, m }).unwrap().count, count);
    }

    #[test]
    fn real_path_agrees_off_ties((k, m) in integer_instance()) {
        let real = BallotInstance::Real {
            k: k.iter().map(|&x| x as f64).collect(),
            m: m as f64,
        };
        let exact = ballot_count(&BallotInstance::Integer { k, m }).unwrap();
        let approx = ballot_count(&real).unwrap();
        if approx.near_ties == 0 {
            prop_assert_eq!(approx.count, exact.count);
        }
    }

    #[test]
    fn collapse_conserves_zero_count(
        n in 8usize..400,
        frac in 0.05f64..0.5,
        seed in any::<u64>(),
        pick in any::<usize>(),
    ) {
        let m = ((frac * n as f64).floor() as usize).clamp(1, n / 2);
        let params = ModelParams::builder(n, m as f64 / n as f64, 0.5).seed(seed).build().unwrap();
        prop_assume!(params.m == m);
        let state = new_state(&params, &InitSpec::RandomIdeal).unwrap();
        let sites = state.particle_sites();
        let seed_site = sites[pick % sites.len()];
        let seq = seed_sequence(&state, seed_site);
        prop_assert_eq!(seq.len(), n);
        prop_assert_eq!(seq.iter().filter(|&&b| b == 1).count(), m - 1);
        let out = arrival_sequence(&state, seed_site).unwrap();
        prop_assert_eq!(out.len(), n - (m - 1));
        prop_assert_eq!(out.iter().filter(|&&b| b == 0).count(), n - 2 * m + 2);
        prop_assert_eq!(out, collapse_holes(&seq).unwrap());
    }
}
