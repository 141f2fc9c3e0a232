//! Closed-form condensation quantities and the zero-range steady state.

use crate::error::{Error, Result};

/// Threshold density `p / (1 + p)`.
pub fn threshold(p: f64) -> f64 {
    p / (1.0 + p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MesQuantities {
    pub rho: f64,
    pub p: f64,
    pub h: f64,
    /// Scaled cluster length; `None` below the threshold.
    pub tau_star: Option<f64>,
    /// Flux of the condensed state; `None` below the threshold.
    pub phi_star: Option<f64>,
}

/// Cluster length and flux of the main equilibrium state. At `rho == h`
/// the values are the continuous limits `tau* = 0`, `phi* = h`.
pub fn mes_quantities(rho: f64, p: f64) -> Result<MesQuantities> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} outside (0, 1]")));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "rho = {rho} outside (0, 1]"
        )));
    }
    let h = threshold(p);
    let (tau_star, phi_star) = if rho >= h {
        let tau = (rho * (1.0 + p) - p).max(0.0);
        (Some(tau), Some(p * (1.0 - rho)))
    } else {
        (None, None)
    };
    Ok(MesQuantities {
        rho,
        p,
        h,
        tau_star,
        phi_star,
    })
}

/// `tau*` in the form `(rho - h) / (1 - h)`.
pub fn tau_star_from_threshold(rho: f64, p: f64) -> f64 {
    let h = threshold(p);
    (rho - h) / (1.0 - h)
}

/// Typical flux: `rho` below the threshold, `p (1 - rho)` above.
pub fn typical_flux(rho: f64, p: f64) -> f64 {
    if rho <= threshold(p) {
        rho
    } else {
        p * (1.0 - rho)
    }
}

/// Stationary weight `f(k)` of a gap of `k` particles in front of a hole.
pub fn zr_weight(k: usize, pi: f64, p: f64) -> f64 {
    match k {
        0 => 1.0,
        1 => 1.0 / pi,
        _ => (1.0 - pi) / (pi * p) * ((1.0 - p) / p).powi(k as i32 - 2),
    }
}

/// `G(z)` and `G'(z)` in closed form.
pub fn zr_weights_and_g(z: f64, pi: f64, p: f64) -> Result<(f64, f64)> {
    check_rates(pi, p)?;
    let b = (1.0 - p) / p;
    if !(z >= 0.0) || (b > 0.0 && z * b >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "z = {z} outside [0, {})",
            if b > 0.0 { 1.0 / b } else { f64::INFINITY }
        )));
    }
    Ok(g_with_gap(z, 1.0 - b * z, pi, p))
}

/// `G`, `G'` given the pole gap `w = 1 - z (1 - p) / p`, which may be far
/// more accurate than recomputing it from `z` near the pole.
fn g_with_gap(z: f64, w: f64, pi: f64, p: f64) -> (f64, f64) {
    let a = (1.0 - pi) / (pi * p);
    let g = 1.0 + z / pi + a * z * z / w;
    let dg = 1.0 / pi + a * z * (1.0 + w) / (w * w);
    (g, dg)
}

fn check_rates(pi: f64, p: f64) -> Result<()> {
    if !(pi > 0.0 && pi <= 1.0) {
        return Err(Error::InvalidParameter(format!("pi = {pi} outside (0, 1]")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} outside (0, 1]")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FugacitySolution {
    pub gamma: f64,
    pub pi: f64,
    pub p: f64,
    pub z_star: f64,
    /// Hole velocity.
    pub eta: f64,
    /// Particle velocity.
    pub v: f64,
    /// Particle flux per site.
    pub phi: f64,
    pub residual_fuga: f64,
    pub residual_cubic: f64,
}

/// Left side minus right side of the cubic relation between `eta`, `q`,
/// `pi` and `p`.
pub fn cubic_residual(eta: f64, q: f64, pi: f64, p: f64) -> f64 {
    (q - eta) * (p - eta) * (eta * (p - pi - pi * p) + pi * p)
        - p * p * (1.0 - pi) * eta * (1.0 - eta)
}

/// Explicit hole velocity when `pi == p`.
pub fn eta_equal_rates(gamma: f64, p: f64) -> f64 {
    (1.0 - (1.0 - 4.0 * p * gamma * (1.0 - gamma)).sqrt()) / (2.0 * gamma)
}

const BISECTION_STEPS: usize = 200;
/// The bracket stops this far (relatively) short of the pole.
const POLE_MARGIN: f64 = 1e-15;

/// Solve `1 - gamma = gamma z G'(z) / G(z)` by bisection.
///
/// The unknown is carried as the pole gap `w = 1 - z (1 - p) / p`, on which
/// the map is strictly decreasing; this keeps full relative precision in
/// the gap when the root sits next to the pole (`pi` close to 1).
pub fn solve_fugacity(gamma: f64, pi: f64, p: f64) -> Result<FugacitySolution> {
    solve_in_bracket(gamma, pi, p, 1.0)
}

fn solve_in_bracket(gamma: f64, pi: f64, p: f64, w_hi: f64) -> Result<FugacitySolution> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma = {gamma} outside (0, 1)"
        )));
    }
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::InvalidParameter(format!("pi = {pi} outside (0, 1)")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} outside (0, 1)")));
    }
    let b = (1.0 - p) / p;
    let target = (1.0 - gamma) / gamma;
    let ratio = |w: f64| {
        let z = (1.0 - w) / b;
        let (g, dg) = g_with_gap(z, w, pi, p);
        z * dg / g
    };
    let (mut lo, mut hi) = (POLE_MARGIN, w_hi);
    if ratio(lo) < target {
        return Err(Error::NonConvergence {
            what: "fugacity bracket",
            steps: 0,
        });
    }
    if ratio(hi) > target {
        hi = 1.0;
    }
    // ratio(lo) >= target >= ratio(hi).
    let mut steps = 0;
    while steps < BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ratio(mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
    }
    if steps == BISECTION_STEPS && (hi - lo) > 1e-12 * hi {
        return Err(Error::NonConvergence {
            what: "fugacity bisection",
            steps,
        });
    }
    let w = 0.5 * (lo + hi);
    let z = (1.0 - w) / b;
    let (g, dg) = g_with_gap(z, w, pi, p);
    let eta = z / (1.0 + z);
    let phi = gamma * eta;
    let rho = 1.0 - gamma;
    Ok(FugacitySolution {
        gamma,
        pi,
        p,
        z_star: z,
        eta,
        v: phi / rho,
        phi,
        residual_fuga: ((1.0 - gamma) - gamma * z * dg / g).abs(),
        residual_cubic: cubic_residual(eta, target, pi, p).abs(),
    })
}

/// Pole gap of a solution, used to narrow the next bracket.
fn gap(sol: &FugacitySolution) -> f64 {
    1.0 - sol.z_star * (1.0 - sol.p) / sol.p
}

/// Flux `phi(rho)` over a density grid.
///
/// Along increasing densities the root moves toward the pole, so the
/// previous root bounds the next one.
pub fn zr_flux_curve(rho_grid: &[f64], pi: f64, p: f64) -> Result<Vec<(f64, FugacitySolution)>> {
    let mut out = Vec::with_capacity(rho_grid.len());
    let mut prev: Option<(f64, f64)> = None;
    for &rho in rho_grid {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "grid value {rho} outside (0, 1)"
            )));
        }
        let w_hi = match prev {
            Some((r, w)) if rho >= r => (w * (1.0 + 1e-12)).min(1.0),
            _ => 1.0,
        };
        let sol = solve_in_bracket(1.0 - rho, pi, p, w_hi)?;
        prev = Some((rho, gap(&sol)));
        out.push((rho, sol));
    }
    Ok(out)
}

/// Weights `f(0..=kmax)` for a general occupation-dependent rate `p(k)`,
/// `f(k) = 1 / (1 - p(k)) prod_{m <= k} (1 - p(m)) / p(m)`.
pub fn general_rate_weights(rate: impl Fn(usize) -> f64, kmax: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(kmax + 1);
    out.push(1.0);
    let mut prod = 1.0;
    for k in 1..=kmax {
        let pk = rate(k);
        prod *= (1.0 - pk) / pk;
        out.push(prod / (1.0 - pk));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_and_mes() {
        assert!((threshold(0.5) - 1.0 / 3.0).abs() < 1e-16);
        let q = mes_quantities(0.4, 0.5).unwrap();
        assert!((q.tau_star.unwrap() - 0.1).abs() < 1e-15);
        assert!((q.phi_star.unwrap() - 0.3).abs() < 1e-15);
        assert!(mes_quantities(0.3, 0.5).unwrap().tau_star.is_none());
        let q = mes_quantities(threshold(0.5), 0.5).unwrap();
        assert!(q.tau_star.unwrap().abs() < 1e-15);
        assert!((q.phi_star.unwrap() - q.h).abs() < 1e-15);
        assert!(mes_quantities(1.2, 0.5).is_err());
        assert!(mes_quantities(0.4, 0.0).is_err());
    }

    #[test]
    fn g_closed_form_matches_series() {
        for &(z, pi, p) in &[
            (0.5, 0.9, 0.5),
            (0.3, 0.4, 0.6),
            (1.2, 0.7, 0.6),
            (0.0, 0.3, 0.3),
        ] {
            let (g, dg) = zr_weights_and_g(z, pi, p).unwrap();
            let mut sg = 0.0;
            let mut sdg = 0.0;
            for k in 0..400usize {
                let f = zr_weight(k, pi, p);
                sg += f * z.powi(k as i32);
                if k > 0 {
                    sdg += k as f64 * f * z.powi(k as i32 - 1);
                }
            }
            assert!((g - sg).abs() < 1e-12 * sg, "{z} {pi} {p}");
            assert!((dg - sdg).abs() < 1e-10 * sdg.max(1.0), "{z} {pi} {p}");
        }
        let (g, dg) = zr_weights_and_g(0.0, 0.7, 0.5).unwrap();
        assert_eq!((g, dg), (1.0, 1.0 / 0.7));
        assert!(zr_weights_and_g(1.0, 0.7, 0.5).is_err());
        assert!(zr_weights_and_g(-0.1, 0.7, 0.5).is_err());
    }

    #[test]
    fn pi_one_gives_linear_g() {
        for z in [0.0, 0.3, 0.9] {
            let (g, dg) = zr_weights_and_g(z, 1.0, 0.5).unwrap();
            assert_eq!(g, 1.0 + z);
            assert_eq!(dg, 1.0);
        }
    }

    #[test]
    fn equal_rates_closed_form() {
        let sol = solve_fugacity(0.5, 0.5, 0.5).unwrap();
        assert!((sol.eta - (1.0 - 0.5f64.sqrt())).abs() < 1e-10);
        for p in [0.1, 0.3, 0.5, 0.7, 0.9] {
            for gamma in [0.1, 0.4, 0.6, 0.9] {
                let sol = solve_fugacity(gamma, p, p).unwrap();
                assert!(
                    (sol.eta - eta_equal_rates(gamma, p)).abs() < 1e-10,
                    "{p} {gamma}"
                );
                assert!(sol.residual_cubic < 1e-8);
                assert!(sol.residual_fuga < 1e-10);
            }
        }
    }

    #[test]
    fn limit_near_pi_one() {
        let near = 1.0 - 1e-6;
        let low = solve_fugacity(0.8, near, 0.5).unwrap();
        assert!((low.phi - 0.2).abs() < 1e-2, "{}", low.phi);
        let high = solve_fugacity(0.55, near, 0.5).unwrap();
        assert!((high.phi - 0.275).abs() < 1e-2, "{}", high.phi);
        assert!(low.residual_fuga < 1e-10 && high.residual_fuga < 1e-10);
        assert!(low.residual_cubic < 1e-8 && high.residual_cubic < 1e-8);
    }

    #[test]
    fn flux_balance_and_bounds() {
        for pi in [0.2, 0.5, 0.9, 0.999] {
            let grid: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
            for (rho, sol) in zr_flux_curve(&grid, pi, 0.5).unwrap() {
                let q = rho / (1.0 - rho);
                assert!(sol.eta <= q.min(0.5) + 1e-12);
                assert!(((1.0 - rho) * sol.eta - rho * sol.v).abs() < 1e-14);
                assert!(sol.phi <= rho.min(0.5 * (1.0 - rho)) + 1e-12);
            }
        }
    }

    #[test]
    fn curve_bracket_reuse_changes_nothing() {
        let grid: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
        for (rho, sol) in zr_flux_curve(&grid, 0.9, 0.5).unwrap() {
            let direct = solve_fugacity(1.0 - rho, 0.9, 0.5).unwrap();
            assert!((sol.eta - direct.eta).abs() < 1e-13);
        }
    }

    #[test]
    fn general_rate_recursion() {
        let (pi, p) = (0.7, 0.4);
        let rate = |k: usize| match k {
            0 => 0.0,
            1 => pi,
            _ => p,
        };
        let f = general_rate_weights(rate, 30);
        for k in 0..=30 {
            assert!((f[k] - zr_weight(k, pi, p)).abs() < 1e-12 * f[k].max(1.0));
        }
        for k in 1..=30 {
            let lhs = rate(k) * f[k];
            let rhs = (1.0 - rate(k - 1)) * f[k - 1];
            assert!((lhs - rhs).abs() < 1e-12 * lhs.max(1.0));
        }
    }

    #[test]
    fn both_tau_forms_agree() {
        for p in [0.1, 0.25, 0.5, 0.75, 1.0] {
            for rho in [0.5, 0.6, 0.8, 0.99] {
                let a = mes_quantities(rho, p).unwrap().tau_star.unwrap();
                assert!((a - tau_star_from_threshold(rho, p)).abs() < 1e-14);
            }
        }
    }
}
