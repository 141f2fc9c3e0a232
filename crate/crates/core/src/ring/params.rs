use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which update rule drives the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    TasepH,
    ZeroRange,
    SlowToStart,
    Csma,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::TasepH => "tasep_h",
            Variant::ZeroRange => "zero_range",
            Variant::SlowToStart => "slow_to_start",
            Variant::Csma => "csma",
        }
    }

    /// At most one particle per site.
    pub fn is_exclusion(self) -> bool {
        !matches!(self, Variant::Csma)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tasep_h" | "tasep-h" => Ok(Variant::TasepH),
            "zero_range" | "zero-range" => Ok(Variant::ZeroRange),
            "slow_to_start" | "slow-to-start" | "sts" => Ok(Variant::SlowToStart),
            "csma" => Ok(Variant::Csma),
            other => Err(Error::InvalidParameter(format!(
                "unknown variant '{other}'"
            ))),
        }
    }
}

/// Perturbation policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    None,
    /// Perturb only when the post-movement state is ideal.
    Absorbing,
    /// Perturb independently of the state.
    Independent,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::None => "none",
            Policy::Absorbing => "A",
            Policy::Independent => "I",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Policy::None),
            "A" | "a" => Ok(Policy::Absorbing),
            "I" | "i" => Ok(Policy::Independent),
            other => Err(Error::InvalidParameter(format!("unknown policy '{other}'"))),
        }
    }
}

/// One experiment's full deterministic identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub n: usize,
    pub m: usize,
    /// Holdback probability, rule (c).
    pub p: f64,
    /// Free-move probability. Fixed to 1 outside the zero-range variant.
    pub pi: f64,
    /// Perturbation intensity; the per-slot probability is `lambda / n`.
    pub lambda: f64,
    /// Overrides `lambda / n` with an explicit per-slot probability.
    pub perturb_prob: Option<f64>,
    /// The vacated origin counts as a candidate destination.
    pub allow_return: bool,
    pub variant: Variant,
    pub policy: Policy,
    pub seed: u64,
}

impl ModelParams {
    /// TASEP-H without perturbations, `m = ceil(rho n)` particles.
    pub fn tasep_h(n: usize, rho: f64, p: f64, seed: u64) -> Result<Self> {
        Self::builder(n, rho, p).seed(seed).build()
    }

    pub fn builder(n: usize, rho: f64, p: f64) -> ParamsBuilder {
        ParamsBuilder {
            n,
            rho,
            p,
            pi: 1.0,
            lambda: 0.0,
            perturb_prob: None,
            allow_return: true,
            variant: Variant::TasepH,
            policy: Policy::None,
            seed: 0,
        }
    }

    pub fn rho(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    /// Phase threshold `p / (1 + p)`.
    pub fn h(&self) -> f64 {
        self.p / (1.0 + self.p)
    }

    /// Per-slot perturbation probability.
    pub fn perturb_probability(&self) -> f64 {
        match self.policy {
            Policy::None => 0.0,
            _ => self
                .perturb_prob
                .unwrap_or(self.lambda / self.n as f64)
                .clamp(0.0, 1.0),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.variant.is_exclusion() && self.m > self.n {
            return bad(format!(
                "m = {} exceeds n = {} for an exclusion variant",
                self.m, self.n
            ));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad(format!("p = {} outside (0, 1]", self.p));
        }
        if !(self.pi > 0.0 && self.pi <= 1.0) {
            return bad(format!("pi = {} outside (0, 1]", self.pi));
        }
        if self.variant != Variant::ZeroRange && self.pi != 1.0 {
            return bad("pi != 1 is only meaningful for the zero-range variant".into());
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!(
                "lambda = {} must be finite and non-negative",
                self.lambda
            ));
        }
        if let Some(q) = self.perturb_prob {
            if !(0.0..=1.0).contains(&q) {
                return bad(format!("perturbation probability {q} outside [0, 1]"));
            }
        }
        if self.variant == Variant::Csma && self.policy != Policy::None {
            return bad("perturbations are not defined for the CSMA variant".into());
        }
        Ok(())
    }
}

/// `ceil(x)` that ignores floating-point noise just above an integer.
pub(crate) fn ceil_tol(x: f64) -> usize {
    (x - 1e-9).ceil().max(0.0) as usize
}

#[derive(Debug, Clone)]
pub struct ParamsBuilder {
    n: usize,
    rho: f64,
    p: f64,
    pi: f64,
    lambda: f64,
    perturb_prob: Option<f64>,
    allow_return: bool,
    variant: Variant,
    policy: Policy,
    seed: u64,
}

impl ParamsBuilder {
    pub fn pi(mut self, pi: f64) -> Self {
        self.pi = pi;
        self
    }

    pub fn lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn perturb_prob(mut self, q: Option<f64>) -> Self {
        self.perturb_prob = q;
        self
    }

    pub fn allow_return(mut self, allow: bool) -> Self {
        self.allow_return = allow;
        self
    }

    pub fn variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn policy(mut self, policy: Policy) -> Self {
        self.policy = policy;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn build(self) -> Result<ModelParams> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "rho = {} must be positive",
                self.rho
            )));
        }
        let params = ModelParams {
            n: self.n,
            m: ceil_tol(self.rho * self.n as f64),
            p: self.p,
            pi: self.pi,
            lambda: self.lambda,
            perturb_prob: self.perturb_prob,
            allow_return: self.allow_return,
            variant: self.variant,
            policy: self.policy,
            seed: self.seed,
        };
        params.validate()?;
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn particle_count_rounds_up() {
        let p = ModelParams::tasep_h(10, 0.25, 0.5, 0).unwrap();
        assert_eq!(p.m, 3);
        let p = ModelParams::tasep_h(1000, 0.4, 0.5, 0).unwrap();
        assert_eq!(p.m, 400);
        assert!((p.h() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(ModelParams::tasep_h(10, 1.2, 0.5, 0).is_err());
        assert!(ModelParams::tasep_h(10, 0.5, 0.0, 0).is_err());
        assert!(ModelParams::tasep_h(10, 0.5, 1.5, 0).is_err());
        assert!(ModelParams::builder(10, 0.5, 0.5).pi(0.5).build().is_err());
        assert!(ModelParams::builder(10, 3.0, 0.5)
            .variant(Variant::Csma)
            .build()
            .is_ok());
    }

    #[test]
    fn names_round_trip() {
        for v in [
            Variant::TasepH,
            Variant::ZeroRange,
            Variant::SlowToStart,
            Variant::Csma,
        ] {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        for p in [Policy::None, Policy::Absorbing, Policy::Independent] {
            assert_eq!(p.name().parse::<Policy>().unwrap(), p);
        }
    }
}
