//! Fluid limit of a single cluster.
//!
//! Mass outside the cluster is advected right at speed 1. The cluster's
//! right edge recedes at speed `p` and leaves density `h = p / (1 + p)`
//! behind; its left edge absorbs whatever mass arrives. With piecewise
//! constant densities every rate is constant between two events (the
//! piece next to the left edge is used up, or the cluster length reaches
//! zero), so the integrator jumps from event to event and is exact up to
//! rounding.
//!
//! Positions are on the unit circle, `x` in site units divided by `n`, and
//! time is slots divided by `n`. The cumulative mass `f(x, t)` is the mass
//! in `[0, x]` at time 0 minus the mass that crossed `x` since, so
//! `f(x + 1, t) = f(x, t) + rho`.

use std::collections::VecDeque;

use crate::analytic::{mes_quantities, threshold};
use crate::error::{Error, Result};
use crate::ring::RingState;

/// Rates closer than this are treated as equal.
const RATE_TOL: f64 = 1e-12;
/// Pieces shorter than this are dropped.
const SLIVER: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub len: f64,
    pub density: f64,
}

/// Periodic piecewise-constant density with its cumulative function.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    /// Left end of the first piece.
    pub x0: f64,
    /// `f(x0)`.
    pub f0: f64,
    /// Pieces covering `[x0, x0 + 1)`.
    pub pieces: Vec<Piece>,
}

impl DensityProfile {
    pub fn mass(&self) -> f64 {
        self.pieces.iter().map(|p| p.len * p.density).sum()
    }

    /// Piece boundaries in `[x0, x0 + 1)`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.pieces.len());
        let mut x = self.x0;
        for p in &self.pieces {
            out.push(x);
            x += p.len;
        }
        out
    }

    /// `f(x)` for any real `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let rho = self.mass();
        let shift = (x - self.x0).floor();
        let mut offset = x - self.x0 - shift;
        let mut f = self.f0 + shift * rho;
        for p in &self.pieces {
            if offset <= p.len {
                return f + offset * p.density;
            }
            f += p.len * p.density;
            offset -= p.len;
        }
        f
    }

    /// `g(x) = f(x + dx) + df`.
    pub fn shifted(&self, dx: f64, df: f64) -> DensityProfile {
        DensityProfile {
            x0: self.x0 - dx,
            f0: self.f0 + df,
            pieces: self.pieces.clone(),
        }
    }

    /// Max-norm distance of the cumulative functions, evaluated exactly at
    /// the union of both profiles' breakpoints over one period.
    pub fn distance(&self, other: &DensityProfile) -> f64 {
        let mut pts: Vec<f64> = self
            .breakpoints()
            .into_iter()
            .chain(other.breakpoints())
            .map(|x| x.rem_euclid(1.0))
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts.iter()
            .map(|&x| (self.eval(x) - other.eval(x)).abs())
            .fold(0.0, f64::max)
    }
}

/// Cluster state of the fluid limit.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidProfile {
    pub t: f64,
    pub rho: f64,
    pub p: f64,
    /// Right edge of the cluster. Without a cluster, a marker carried by
    /// the flow.
    pub r: f64,
    pub tau: f64,
    pub has_cluster: bool,
    /// `f(r, t)`.
    pub f_r: f64,
    /// Sparse interval `[r, r + 1 - tau]`, listed from `r` rightwards.
    pub sparse: VecDeque<Piece>,
}

impl FluidProfile {
    /// Cluster `[ell, ell + tau]` followed by the given sparse pieces, with
    /// `f(ell) = f_ell`.
    pub fn new(p: f64, ell: f64, tau: f64, f_ell: f64, sparse: Vec<Piece>) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidParameter(format!("p = {p} outside (0, 1]")));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidParameter(format!(
                "tau = {tau} outside [0, 1]"
            )));
        }
        let len: f64 = sparse.iter().map(|q| q.len).sum();
        if (len + tau - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "cluster and sparse pieces cover {} of the circle",
                len + tau
            )));
        }
        if sparse
            .iter()
            .any(|q| !(q.len >= 0.0) || !(q.density >= 0.0 && q.density <= 0.5))
        {
            return Err(Error::InvalidParameter(
                "sparse densities must lie in [0, 1/2]".into(),
            ));
        }
        let rho = tau + sparse.iter().map(|q| q.len * q.density).sum::<f64>();
        Ok(Self {
            t: 0.0,
            rho,
            p,
            r: ell + tau,
            tau,
            has_cluster: true,
            f_r: f_ell + tau,
            sparse: sparse.into_iter().filter(|q| q.len > SLIVER).collect(),
        })
    }

    pub fn ell(&self) -> f64 {
        self.r - self.tau
    }

    pub fn h(&self) -> f64 {
        threshold(self.p)
    }

    /// A cluster of zero length kept alive by a left density equal to `h`.
    pub fn zero_length_cluster(&self) -> bool {
        self.has_cluster && self.tau == 0.0
    }

    /// Measure of sparse points with density above `h`.
    pub fn mu(&self) -> f64 {
        let h = self.h();
        self.sparse
            .iter()
            .filter(|q| q.density > h + RATE_TOL)
            .map(|q| q.len)
            .sum()
    }

    /// Density just left of the cluster.
    pub fn left_density(&self) -> Option<f64> {
        self.sparse.back().map(|q| q.density)
    }

    /// `(x, density)` from the left cluster edge around the circle.
    pub fn breakpoints(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.sparse.len() + 1);
        if self.tau > 0.0 {
            out.push((self.ell(), 1.0));
        }
        let mut x = self.r;
        for q in &self.sparse {
            out.push((x, q.density));
            x += q.len;
        }
        out
    }

    pub fn to_density(&self) -> DensityProfile {
        let mut pieces = Vec::with_capacity(self.sparse.len() + 1);
        if self.tau > 0.0 {
            pieces.push(Piece {
                len: self.tau,
                density: 1.0,
            });
        }
        pieces.extend(self.sparse.iter().copied());
        DensityProfile {
            x0: self.ell(),
            f0: self.f_r - self.tau,
            pieces,
        }
    }

    fn push_wake(&mut self, len: f64) {
        if len <= 0.0 {
            return;
        }
        let h = self.h();
        match self.sparse.front_mut() {
            Some(front) if (front.density - h).abs() <= RATE_TOL => front.len += len,
            _ => self.sparse.push_front(Piece { len, density: h }),
        }
    }

    /// Advance by `dt`, calling `observe` after every event and at the end.
    pub fn advance_observed(&mut self, dt: f64, mut observe: impl FnMut(&FluidProfile)) {
        let p = self.p;
        let h = self.h();
        let mut remaining = dt;
        while remaining > 0.0 {
            let Some(back) = self.sparse.back().copied() else {
                // Full ring: nothing moves.
                self.t += remaining;
                break;
            };
            if !self.has_cluster {
                self.r += remaining;
                self.t += remaining;
                break;
            }
            let g = back.density;
            let mut dtau = -p + g / (1.0 - g);
            if dtau.abs() < RATE_TOL {
                dtau = 0.0;
            }
            if self.tau == 0.0 && dtau < 0.0 {
                self.has_cluster = false;
                observe(self);
                continue;
            }
            let mut step = remaining;
            let mut back_done = false;
            let mut tau_done = false;
            let t_back = back.len * (1.0 - g);
            if t_back <= step {
                step = t_back;
                back_done = true;
            }
            if dtau < 0.0 {
                let t_tau = self.tau / -dtau;
                if t_tau <= step {
                    if t_tau < step {
                        back_done = false;
                    }
                    step = t_tau;
                    tau_done = true;
                }
            }
            self.tau = if tau_done {
                0.0
            } else {
                (self.tau + dtau * step).min(1.0)
            };
            self.r -= p * step;
            self.f_r -= p * step;
            self.t += step;
            remaining -= step;
            if back_done {
                self.sparse.pop_back();
            } else if let Some(b) = self.sparse.back_mut() {
                b.len -= step / (1.0 - g);
                if b.len <= SLIVER {
                    self.sparse.pop_back();
                }
            }
            self.push_wake((1.0 + p) * step);
            if tau_done && g < h - RATE_TOL {
                self.has_cluster = false;
            }
            if back_done || tau_done {
                observe(self);
            }
        }
        observe(self);
    }

    pub fn advance(&mut self, dt: f64) {
        self.advance_observed(dt, |_| {});
    }
}

/// Main equilibrium state with the cluster at `[0, tau*]` and `f(0) = 0`.
pub fn mes_profile(rho: f64, p: f64) -> Result<FluidProfile> {
    let q = mes_quantities(rho, p)?;
    let tau = match q.tau_star {
        Some(t) if rho > q.h => t,
        _ => return Err(Error::NoEquilibrium { rho, h: q.h }),
    };
    let sparse = if tau < 1.0 {
        vec![Piece {
            len: 1.0 - tau,
            density: q.h,
        }]
    } else {
        Vec::new()
    };
    FluidProfile::new(p, 0.0, tau, 0.0, sparse)
}

/// All mass in one cluster `[0, rho]`.
pub fn single_cluster_profile(rho: f64, p: f64) -> Result<FluidProfile> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "rho = {rho} outside (0, 1]"
        )));
    }
    let sparse = if rho < 1.0 {
        vec![Piece {
            len: 1.0 - rho,
            density: 0.0,
        }]
    } else {
        Vec::new()
    };
    FluidProfile::new(p, 0.0, rho, 0.0, sparse)
}

/// The profile after `dt` more units of fluid time.
pub fn fluid_step(profile: &FluidProfile, dt: f64) -> FluidProfile {
    let mut next = profile.clone();
    next.advance(dt);
    next
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidPoint {
    pub t: f64,
    pub tau: f64,
    pub ell: f64,
    pub r: f64,
    pub has_cluster: bool,
    pub zero_length: bool,
    pub mu: f64,
    pub left_density: Option<f64>,
}

impl FluidPoint {
    fn of(p: &FluidProfile) -> Self {
        Self {
            t: p.t,
            tau: p.tau,
            ell: p.ell(),
            r: p.r,
            has_cluster: p.has_cluster,
            zero_length: p.zero_length_cluster(),
            mu: p.mu(),
            left_density: p.left_density(),
        }
    }
}

/// Event times of an integrated trajectory. `tau` is linear between
/// consecutive points.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidTrajectory {
    pub points: Vec<FluidPoint>,
}

/// Integrate to `t_end`, recording the start, every event and the end.
pub fn integrate(profile: &FluidProfile, t_end: f64) -> (FluidProfile, FluidTrajectory) {
    let mut state = profile.clone();
    let mut points = vec![FluidPoint::of(&state)];
    let dt = t_end - state.t;
    if dt > 0.0 {
        state.advance_observed(dt, |s| points.push(FluidPoint::of(s)));
    }
    (state, FluidTrajectory { points })
}

/// `int tau dt` over the trajectory; exact for piecewise-linear `tau`.
pub fn tau_integral(traj: &FluidTrajectory) -> f64 {
    traj.points
        .windows(2)
        .map(|w| 0.5 * (w[0].tau + w[1].tau) * (w[1].t - w[0].t))
        .sum()
}

/// Lengths of the maximal time intervals during which a cluster exists,
/// truncated at the end of the trajectory.
pub fn cluster_lifetimes(traj: &FluidTrajectory) -> Vec<f64> {
    let mut out = Vec::new();
    let mut start: Option<f64> = None;
    for pt in &traj.points {
        match (start, pt.has_cluster) {
            (None, true) => start = Some(pt.t),
            (Some(s), false) => {
                out.push(pt.t - s);
                start = None;
            }
            _ => {}
        }
    }
    if let (Some(s), Some(last)) = (start, traj.points.last()) {
        out.push(last.t - s);
    }
    out
}

/// Scaled empirical cumulative mass. Each particle's mass is spread
/// uniformly over its cell `[i/n, (i+1)/n]`, and particles that crossed the
/// seam are subtracted so the function is comparable with the fluid limit.
pub fn empirical_profile(state: &RingState) -> DensityProfile {
    let n = state.n();
    let w = 1.0 / n as f64;
    let occ = state.occupancy();
    let mut pieces: Vec<Piece> = Vec::new();
    for &b in &occ {
        let density = b as f64;
        match pieces.last_mut() {
            Some(last) if last.density == density => last.len += w,
            _ => pieces.push(Piece { len: w, density }),
        }
    }
    DensityProfile {
        x0: 0.0,
        f0: -(state.seam_crossings() as f64) / n as f64,
        pieces,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mes_shape() {
        let m = mes_profile(0.4, 0.5).unwrap();
        assert!((m.tau - 0.1).abs() < 1e-15);
        assert_eq!(m.sparse.len(), 1);
        assert!((m.sparse[0].len - 0.9).abs() < 1e-15);
        assert!((m.sparse[0].density - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.to_density().mass() - 0.4).abs() < 1e-15);
        assert!(mes_profile(0.3, 0.5).is_err());
        let full = mes_profile(1.0, 0.5).unwrap();
        assert_eq!(full.tau, 1.0);
        assert!(full.sparse.is_empty());
        let near = mes_profile(1.0 / 3.0 + 1e-9, 0.5).unwrap();
        assert!(near.tau < 1e-8);
    }

    #[test]
    fn left_edge_speed() {
        // Left density h: the edge moves at -1/2 for p = 1/2 and tau holds.
        let m = mes_profile(0.4, 0.5).unwrap();
        let next = fluid_step(&m, 0.01);
        assert!(((next.ell() - m.ell()) / 0.01 + 0.5).abs() < 1e-12);
        assert!((next.tau - m.tau).abs() < 1e-15);
    }

    #[test]
    fn mes_is_stationary_up_to_shift() {
        for (rho, p) in [(0.4, 0.5), (0.6, 0.25), (0.7, 0.9)] {
            let m = mes_profile(rho, p).unwrap();
            let d0 = m.to_density();
            let mut cur = m.clone();
            for k in 1..=50 {
                cur.advance(0.037);
                let t = 0.037 * k as f64;
                let expect = d0.shifted(p * t, -p * t);
                assert!(cur.to_density().distance(&expect) < 1e-12 * t.max(1.0));
            }
        }
    }

    #[test]
    fn single_cluster_reaches_mes_at_one_minus_rho() {
        let (rho, p) = (0.4, 0.5);
        let s = single_cluster_profile(rho, p).unwrap();
        let (end, _) = integrate(&s, 1.0 - rho);
        assert!((end.tau - 0.1).abs() < 1e-12);
        // Right edge and its cumulative value recede at rate p from rho.
        let t = 1.0 - rho;
        let h = p / (1.0 + p);
        let tau = rho * (1.0 + p) - p;
        let r = rho - p * t;
        let expect = DensityProfile {
            x0: r - tau,
            f0: rho - p * t - tau,
            pieces: vec![
                Piece {
                    len: tau,
                    density: 1.0,
                },
                Piece {
                    len: 1.0 - tau,
                    density: h,
                },
            ],
        };
        assert!(end.to_density().distance(&expect) < 1e-12);
        assert_eq!(end.sparse.len(), 1);
    }

    #[test]
    fn low_density_cluster_dissolves() {
        let (rho, p) = (0.25, 0.5);
        let s = single_cluster_profile(rho, p).unwrap();
        let (end, traj) = integrate(&s, 3.0);
        assert!(!end.has_cluster);
        let life = cluster_lifetimes(&traj);
        assert_eq!(life.len(), 1);
        assert!((life[0] - rho / p).abs() < 1e-12);
        let integral = tau_integral(&traj);
        assert!((integral - 0.5 * rho * rho / p).abs() < 1e-12);
        assert!((end.to_density().mass() - rho).abs() < 1e-12);
    }

    #[test]
    fn tau_grows_only_with_dense_left_neighbourhood() {
        let p = 0.5;
        let sparse = vec![
            Piece {
                len: 0.5,
                density: 0.1,
            },
            Piece {
                len: 0.45,
                density: 0.45,
            },
        ];
        let mut s = FluidProfile::new(p, 0.0, 0.05, 0.0, sparse).unwrap();
        let mut last = s.clone();
        s.advance_observed(2.0, |cur| {
            let g = last.left_density().unwrap_or(0.0);
            if cur.t > last.t && last.has_cluster && last.tau > 0.0 {
                let slope = (cur.tau - last.tau) / (cur.t - last.t);
                assert_eq!(slope > 1e-9, g > threshold(p), "g = {g}");
            }
            last = cur.clone();
        });
    }

    #[test]
    fn empirical_profile_counts() {
        use crate::ring::Variant;
        let occ = [1u8, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        let s = RingState::from_occupancy(&occ, Variant::TasepH).unwrap();
        let d = empirical_profile(&s);
        assert_eq!(d.pieces.len(), 2);
        assert!((d.eval(0.3) - 0.3).abs() < 1e-15);
        assert!((d.eval(1.05) - 0.35).abs() < 1e-15);
        let f = single_cluster_profile(0.3, 0.5).unwrap().to_density();
        assert!(d.distance(&f) < 1e-15);
    }

    #[test]
    fn distance_uses_all_breakpoints() {
        let a = DensityProfile {
            x0: 0.0,
            f0: 0.0,
            pieces: vec![Piece {
                len: 1.0,
                density: 0.5,
            }],
        };
        let b = DensityProfile {
            x0: 0.0,
            f0: 0.0,
            pieces: vec![
                Piece {
                    len: 0.5,
                    density: 1.0,
                },
                Piece {
                    len: 0.5,
                    density: 0.0,
                },
            ],
        };
        assert!((a.distance(&b) - 0.25).abs() < 1e-15);
    }
}
