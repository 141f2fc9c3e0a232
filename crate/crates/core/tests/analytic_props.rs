use holdback::analytic::{mes_quantities, solve_fugacity, tau_star_from_threshold};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn solver_residuals_are_small(
        gamma in 0.01f64..0.99,
        pi in 0.01f64..0.999,
        p in 0.01f64..0.99,
    ) {
        let sol = solve_fugacity(gamma, pi, p).unwrap();
        prop_assert!(sol.residual_fuga < 1e-10, "fugacity residual {}", sol.residual_fuga);
        prop_assert!(sol.residual_cubic < 1e-8, "cubic residual {}", sol.residual_cubic);
        prop_assert!(sol.eta > 0.0 && sol.eta < 1.0);
        prop_assert!(sol.phi >= 0.0 && sol.phi <= gamma.min(1.0 - gamma) + 1e-12);
    }

    #[test]
    fn cluster_length_forms_agree(rho in 0.01f64..=1.0, p in 0.01f64..=1.0) {
        let q = mes_quantities(rho, p).unwrap();
        if let Some(t) = q.tau_star {
            prop_assert!((t - tau_star_from_threshold(rho, p)).abs() <= 1e-14);
        }
    }
}

/// Successive jumps of `eta` along a grid in `pi` shrink as the grid refines.
#[test]
fn eta_is_continuous_in_pi() {
    let p = 0.5;
    for &gamma in &[0.2, 0.5, 0.8] {
        let max_jump = |points: usize| {
            let etas: Vec<f64> = (0..points)
                .map(|i| {
                    let pi = 0.01 + 0.98 * i as f64 / (points - 1) as f64;
                    solve_fugacity(gamma, pi, p).unwrap().eta
                })
                .collect();
            etas.windows(2)
                .map(|w| (w[1] - w[0]).abs())
                .fold(0.0, f64::max)
        };
        let coarse = max_jump(50);
        let fine = max_jump(500);
        assert!(fine < coarse / 5.0, "gamma {gamma}: {coarse} -> {fine}");
        assert!(fine < 1e-2, "gamma {gamma}: jump {fine}");
    }
}
