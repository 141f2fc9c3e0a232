use crate::error::{Error, Result};
use crate::rng::{CounterRng, Stream};

use super::params::{ceil_tol, ModelParams, Variant};

/// Initial configuration recipe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitSpec {
    /// `m` of `n` sites sampled without replacement (CSMA: each particle on
    /// an independent uniform site).
    UniformRandom,
    /// Sites `0..m` occupied.
    SingleCluster,
    /// Particles at spacing `floor(n / m)`; an ideal state, needs `2m <= n`.
    EquallySpaced,
    /// A random ideal state: `m` blocks "particle, hole" interleaved with
    /// the remaining holes, then rotated uniformly. Needs `2m <= n`.
    RandomIdeal,
    /// Discretized main equilibrium state: a cluster of `ceil(tau* n)`
    /// particles at sites `0..` followed by a sparse interval of density `h`.
    Mes,
    /// Explicit occupied sites (CSMA: repeats allowed, one entry per particle).
    Explicit(Vec<usize>),
}

/// Lattice configuration plus the bookkeeping the steppers need.
///
/// Exclusion variants store occupancy and slow-to-start restart flags as
/// bit words, site `i` at bit `i % 64` of word `i / 64`; padding bits of the
/// last word are always zero. The CSMA variant stores per-site counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingState {
    pub(crate) n: usize,
    pub(crate) variant: Variant,
    pub(crate) occ: Vec<u64>,
    pub(crate) restart: Vec<u64>,
    pub(crate) counts: Vec<u32>,
    pub(crate) particles: usize,
    pub(crate) t: u64,
    pub(crate) crossings: u64,
    pub(crate) scratch: Vec<u64>,
}

#[inline]
pub(crate) fn word_count(n: usize) -> usize {
    n.div_ceil(64)
}

/// Number of valid bits in the last word (1..=64).
#[inline]
pub(crate) fn tail_bits(n: usize) -> u32 {
    (n - 64 * (word_count(n) - 1)) as u32
}

#[inline]
pub(crate) fn tail_mask(n: usize) -> u64 {
    let r = tail_bits(n);
    if r == 64 {
        !0
    } else {
        (1u64 << r) - 1
    }
}

impl RingState {
    fn empty(n: usize, variant: Variant) -> Self {
        let w = if variant.is_exclusion() {
            word_count(n)
        } else {
            0
        };
        Self {
            n,
            variant,
            occ: vec![0; w],
            restart: vec![0; w],
            counts: if variant.is_exclusion() {
                Vec::new()
            } else {
                vec![0; n]
            },
            particles: 0,
            t: 0,
            crossings: 0,
            scratch: vec![0; w],
        }
    }

    /// Exclusion state from a 0/1 occupancy slice.
    pub fn from_occupancy(occ: &[u8], variant: Variant) -> Result<Self> {
        if occ.is_empty() {
            return Err(Error::InvalidInit("empty lattice".into()));
        }
        if !variant.is_exclusion() {
            return Err(Error::UnsupportedVariant(variant.name()));
        }
        let mut s = Self::empty(occ.len(), variant);
        for (i, &x) in occ.iter().enumerate() {
            match x {
                0 => {}
                1 => s.place(i),
                other => return Err(Error::InvalidInit(format!("occupancy {other} at site {i}"))),
            }
        }
        Ok(s)
    }

    /// CSMA state from per-site counts.
    pub fn from_counts(counts: &[u32]) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidInit("empty lattice".into()));
        }
        let mut s = Self::empty(counts.len(), Variant::Csma);
        s.counts.copy_from_slice(counts);
        s.particles = counts.iter().map(|&c| c as usize).sum();
        Ok(s)
    }

    #[inline]
    pub(crate) fn place(&mut self, i: usize) {
        debug_assert!(!self.occupied(i));
        self.occ[i / 64] |= 1 << (i % 64);
        self.particles += 1;
    }

    #[inline]
    pub(crate) fn remove(&mut self, i: usize) {
        debug_assert!(self.occupied(i));
        self.occ[i / 64] &= !(1 << (i % 64));
        self.restart[i / 64] &= !(1 << (i % 64));
        self.particles -= 1;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn holes(&self) -> usize {
        self.n.saturating_sub(self.particles)
    }

    /// Current time slot.
    pub fn t(&self) -> u64 {
        self.t
    }

    /// Cumulative number of particles that left site `n - 1`, relocations
    /// included. This is the offset between the current occupancy counts and
    /// the cumulative mass function `F(x, t)`.
    pub fn seam_crossings(&self) -> u64 {
        self.crossings
    }

    /// Occupancy bit words (exclusion variants).
    pub fn words(&self) -> &[u64] {
        &self.occ
    }

    pub fn restart_words(&self) -> &[u64] {
        &self.restart
    }

    #[inline]
    pub fn occupied(&self, i: usize) -> bool {
        if self.variant.is_exclusion() {
            self.occ[i / 64] >> (i % 64) & 1 == 1
        } else {
            self.counts[i] > 0
        }
    }

    /// Particles at site `i`.
    pub fn count(&self, i: usize) -> u32 {
        if self.variant.is_exclusion() {
            self.occupied(i) as u32
        } else {
            self.counts[i]
        }
    }

    pub fn counts(&self) -> Vec<u32> {
        if self.variant.is_exclusion() {
            (0..self.n).map(|i| self.count(i)).collect()
        } else {
            self.counts.clone()
        }
    }

    /// Slow-to-start restart flag of site `i`.
    pub fn flagged(&self, i: usize) -> bool {
        self.variant.is_exclusion() && self.restart[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn flagged_count(&self) -> usize {
        self.restart.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub(crate) fn set_flag(&mut self, i: usize) {
        debug_assert!(self.occupied(i));
        self.restart[i / 64] |= 1 << (i % 64);
    }

    /// 0/1 occupancy per site (exclusion) or clipped counts (CSMA).
    pub fn occupancy(&self) -> Vec<u8> {
        (0..self.n).map(|i| self.occupied(i) as u8).collect()
    }

    /// Occupied sites in increasing order.
    pub fn particle_sites(&self) -> Vec<usize> {
        if !self.variant.is_exclusion() {
            return (0..self.n).filter(|&i| self.counts[i] > 0).collect();
        }
        let mut out = Vec::with_capacity(self.particles);
        for (w, &word) in self.occ.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                out.push(64 * w + bits.trailing_zeros() as usize);
                bits &= bits - 1;
            }
        }
        out
    }

    /// Whether some pair of neighboring sites is occupied, i.e. a cluster
    /// exists. A ring of one site is never clustered.
    pub fn has_adjacent_pair(&self) -> bool {
        if self.n < 2 {
            return false;
        }
        if !self.variant.is_exclusion() {
            return (0..self.n).any(|i| self.counts[i] > 0 && self.counts[(i + 1) % self.n] > 0);
        }
        let w = self.occ.len();
        let r = tail_bits(self.n);
        for i in 0..w {
            let next = if i + 1 < w {
                self.occ[i + 1] << 63
            } else {
                (self.occ[0] & 1) << (r - 1)
            };
            let right = (self.occ[i] >> 1) | next;
            if self.occ[i] & right != 0 {
                return true;
            }
        }
        false
    }

    /// Ideal (completely sparse) state: no particle has an occupied
    /// neighbor, and for slow-to-start no particle is stopped.
    pub fn is_ideal(&self) -> bool {
        !self.has_adjacent_pair()
            && !(self.variant == Variant::SlowToStart && self.restart.iter().any(|&w| w != 0))
    }

    /// The state rotated so that site `i` moves to `(i + shift) mod n`.
    /// Time and seam bookkeeping are reset.
    pub fn rotated(&self, shift: usize) -> RingState {
        let mut out = Self::empty(self.n, self.variant);
        for i in 0..self.n {
            let j = (i + shift) % self.n;
            if self.variant.is_exclusion() {
                if self.occupied(i) {
                    out.place(j);
                    if self.flagged(i) {
                        out.set_flag(j);
                    }
                }
            } else {
                out.counts[j] = self.counts[i];
            }
        }
        out.particles = self.particles;
        out
    }

    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.variant.is_exclusion() {
            let ones: usize = self.occ.iter().map(|w| w.count_ones() as usize).sum();
            if ones != self.particles {
                return Err(format!("popcount {ones} != particles {}", self.particles));
            }
            let last = self.occ.len() - 1;
            if self.occ[last] & !tail_mask(self.n) != 0 {
                return Err("padding bits set".into());
            }
            for (o, r) in self.occ.iter().zip(&self.restart) {
                if r & !o != 0 {
                    return Err("restart flag on an empty site".into());
                }
            }
        } else {
            let total: usize = self.counts.iter().map(|&c| c as usize).sum();
            if total != self.particles {
                return Err(format!(
                    "count total {total} != particles {}",
                    self.particles
                ));
            }
        }
        Ok(())
    }
}

/// Build the initial state for `params` from `init`.
pub fn new_state(params: &ModelParams, init: &InitSpec) -> Result<RingState> {
    params.validate()?;
    let (n, m) = (params.n, params.m);
    let mut rng = CounterRng::new(params.seed).stream(0, Stream::Init);

    if !params.variant.is_exclusion() {
        let mut s = RingState::empty(n, params.variant);
        match init {
            InitSpec::UniformRandom => {
                for _ in 0..m {
                    s.counts[rng.below(n as u64) as usize] += 1;
                }
            }
            InitSpec::EquallySpaced => {
                for k in 0..m {
                    s.counts[k % n] += 1;
                }
            }
            InitSpec::Explicit(sites) => {
                if sites.len() != m {
                    return Err(Error::InvalidInit(format!(
                        "explicit list has {} particles, expected {m}",
                        sites.len()
                    )));
                }
                for &i in sites {
                    if i >= n {
                        return Err(Error::InvalidInit(format!("site {i} outside ring of {n}")));
                    }
                    s.counts[i] += 1;
                }
            }
            other => {
                return Err(Error::InvalidInit(format!(
                    "{other:?} is not defined for the counts representation"
                )))
            }
        }
        s.particles = m;
        return Ok(s);
    }

    let mut s = RingState::empty(n, params.variant);
    match init {
        InitSpec::UniformRandom => {
            for i in rand::seq::index::sample(&mut rng, n, m) {
                s.place(i);
            }
        }
        InitSpec::SingleCluster => {
            for i in 0..m {
                s.place(i);
            }
        }
        InitSpec::EquallySpaced => {
            if 2 * m > n {
                return Err(Error::InvalidInit(format!(
                    "equally spaced ideal state needs m <= n/2 (m = {m}, n = {n})"
                )));
            }
            if m > 0 {
                let spacing = n / m;
                for k in 0..m {
                    s.place(k * spacing);
                }
            }
        }
        InitSpec::RandomIdeal => {
            if 2 * m > n {
                return Err(Error::InvalidInit(format!(
                    "an ideal state needs m <= n/2 (m = {m}, n = {n})"
                )));
            }
            let tokens = n - m;
            let mut is_block = vec![false; tokens];
            for i in rand::seq::index::sample(&mut rng, tokens, m) {
                is_block[i] = true;
            }
            let offset = rng.below(n as u64) as usize;
            let mut site = 0;
            for block in is_block {
                if block {
                    s.place((site + offset) % n);
                    site += 2;
                } else {
                    site += 1;
                }
            }
            debug_assert_eq!(site, n);
        }
        InitSpec::Mes => {
            let h = params.h();
            let rho = params.rho();
            if rho <= h {
                return Err(Error::NoEquilibrium { rho, h });
            }
            let cluster = ceil_tol(m as f64 * (1.0 + params.p) - params.p * n as f64).clamp(1, m);
            for i in 0..cluster {
                s.place(i);
            }
            let sparse = m - cluster;
            let len = (n - cluster) as f64;
            for j in 0..sparse {
                let offset = ((j as f64 + 0.5) * len / sparse as f64).floor() as usize;
                s.place(cluster + offset);
            }
        }
        InitSpec::Explicit(sites) => {
            if sites.len() != m {
                return Err(Error::InvalidInit(format!(
                    "explicit list has {} particles, expected {m}",
                    sites.len()
                )));
            }
            for &i in sites {
                if i >= n {
                    return Err(Error::InvalidInit(format!("site {i} outside ring of {n}")));
                }
                if s.occupied(i) {
                    return Err(Error::InvalidInit(format!("duplicate site {i}")));
                }
                s.place(i);
            }
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &RingState) -> String {
        s.occupancy().iter().map(|b| char::from(b'0' + b)).collect()
    }

    fn params(n: usize, m: usize, p: f64) -> ModelParams {
        ModelParams::tasep_h(n, m as f64 / n as f64, p, 1).unwrap()
    }

    #[test]
    fn single_cluster_layout() {
        let s = new_state(&params(10, 4, 0.5), &InitSpec::SingleCluster).unwrap();
        assert_eq!(bits(&s), "1111000000");
    }

    #[test]
    fn equally_spaced_layout() {
        let s = new_state(&params(10, 5, 0.5), &InitSpec::EquallySpaced).unwrap();
        assert_eq!(bits(&s), "1010101010");
        assert!(s.is_ideal());
        assert!(new_state(&params(10, 6, 0.5), &InitSpec::EquallySpaced).is_err());
    }

    #[test]
    fn mes_layout_small_ring() {
        // tau* = 0.4 * 1.5 - 0.5 = 0.1 -> a 2-particle cluster, then 6
        // particles at density 1/3 across the remaining 18 sites.
        let s = new_state(&params(20, 8, 0.5), &InitSpec::Mes).unwrap();
        assert_eq!(bits(&s), "11010010010010010010");
        assert_eq!(s.particles(), 8);
        let sparse: Vec<_> = s.particle_sites().into_iter().filter(|&i| i >= 2).collect();
        assert_eq!(sparse.len(), 6);
        assert!(sparse.windows(2).all(|w| w[1] - w[0] == 3));
    }

    #[test]
    fn mes_requires_high_density() {
        let err = new_state(&params(30, 9, 0.5), &InitSpec::Mes).unwrap_err();
        assert!(matches!(err, Error::NoEquilibrium { .. }));
    }

    #[test]
    fn explicit_rejects_duplicates() {
        let p = params(6, 2, 0.5);
        assert!(new_state(&p, &InitSpec::Explicit(vec![1, 1])).is_err());
        assert!(new_state(&p, &InitSpec::Explicit(vec![1, 7])).is_err());
        let s = new_state(&p, &InitSpec::Explicit(vec![4, 1])).unwrap();
        assert_eq!(bits(&s), "010010");
    }

    #[test]
    fn random_inits_have_m_particles() {
        for n in [1usize, 2, 63, 64, 65, 200] {
            for m in [0usize, 1, n / 3, n / 2] {
                if m == 0 {
                    continue;
                }
                let p = ModelParams::tasep_h(n, m as f64 / n as f64, 0.5, 9).unwrap();
                let s = new_state(&p, &InitSpec::UniformRandom).unwrap();
                assert_eq!(s.particles(), p.m);
                s.check_invariants().unwrap();
                if 2 * p.m <= n {
                    let s = new_state(&p, &InitSpec::RandomIdeal).unwrap();
                    assert_eq!(s.particles(), p.m);
                    assert!(s.is_ideal(), "n={n} m={m}");
                }
            }
        }
    }

    #[test]
    fn adjacency_detects_the_seam() {
        let s = RingState::from_occupancy(&[1, 0, 0, 0, 1], Variant::TasepH).unwrap();
        assert!(s.has_adjacent_pair());
        let mut occ = vec![0u8; 130];
        occ[0] = 1;
        occ[129] = 1;
        let s = RingState::from_occupancy(&occ, Variant::TasepH).unwrap();
        assert!(s.has_adjacent_pair());
        occ[129] = 0;
        occ[64] = 1;
        occ[63] = 1;
        let s = RingState::from_occupancy(&occ, Variant::TasepH).unwrap();
        assert!(s.has_adjacent_pair());
        occ[63] = 0;
        let s = RingState::from_occupancy(&occ, Variant::TasepH).unwrap();
        assert!(!s.has_adjacent_pair());
    }
}
