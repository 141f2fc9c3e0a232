//! Observables: flux, clusters, distance to the main equilibrium state.

use crate::analytic::mes_quantities;
use crate::error::{Error, Result};
use crate::ring::{eligibility, ModelParams, MoveRecord, RingState};

/// Expected number of moves in the next slot per site, read from the
/// current snapshot.
pub fn instantaneous_flux(state: &RingState, p: f64, pi: f64) -> Result<f64> {
    if !state.variant().is_exclusion() {
        return Err(Error::UnsupportedVariant(state.variant().name()));
    }
    let (free, hold) = eligibility(state);
    Ok((pi * free as f64 + p * hold as f64) / state.n() as f64)
}

/// A maximal run of at least two occupied sites; `left..=right` cyclically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cluster {
    pub left: usize,
    pub right: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClusterStats {
    pub clusters: Vec<Cluster>,
    pub num_clusters: usize,
    pub max_length: usize,
    pub total_clustered_particles: usize,
    pub is_ideal: bool,
}

fn collect_bits(words: &[u64], mut f: impl FnMut(usize)) {
    for (w, &word) in words.iter().enumerate() {
        let mut bits = word;
        while bits != 0 {
            f(64 * w + bits.trailing_zeros() as usize);
            bits &= bits - 1;
        }
    }
}

/// Maximal-run decomposition of an exclusion state. Runs may wrap the seam;
/// a completely full ring is one cluster `0..=n-1`.
pub fn find_clusters(state: &RingState) -> ClusterStats {
    let n = state.n();
    let occ = state.words();
    let words = occ.len();
    let r = (n - 64 * (words - 1)) as u32;
    let mut starts = Vec::new();
    let mut ends = Vec::new();
    let mut start_words = vec![0u64; words];
    let mut end_words = vec![0u64; words];
    for w in 0..words {
        let cur = occ[w];
        let left = if w > 0 {
            (cur << 1) | (occ[w - 1] >> 63)
        } else {
            (cur << 1) | ((occ[words - 1] >> (r - 1)) & 1)
        };
        let right = if w + 1 < words {
            (cur >> 1) | (occ[w + 1] << 63)
        } else {
            (cur >> 1) | ((occ[0] & 1) << (r - 1))
        };
        start_words[w] = cur & !left;
        end_words[w] = cur & !right;
    }
    collect_bits(&start_words, |i| starts.push(i));
    collect_bits(&end_words, |i| ends.push(i));

    let mut stats = ClusterStats::default();
    if starts.is_empty() {
        if state.particles() == n && n >= 2 {
            stats.clusters.push(Cluster {
                left: 0,
                right: n - 1,
                len: n,
            });
        }
    } else {
        // The run through the seam ends before the first start.
        if ends[0] < starts[0] {
            ends.rotate_left(1);
        }
        for (&s, &e) in starts.iter().zip(&ends) {
            let len = (e + n - s) % n + 1;
            if len >= 2 {
                stats.clusters.push(Cluster {
                    left: s,
                    right: e,
                    len,
                });
            }
        }
    }
    stats.num_clusters = stats.clusters.len();
    stats.max_length = stats.clusters.iter().map(|c| c.len).max().unwrap_or(0);
    stats.total_clustered_particles = stats.clusters.iter().map(|c| c.len).sum();
    stats.is_ideal = stats.num_clusters == 0;
    stats
}

/// Per-site product series `x(i) x(i+1)`; runs of ones mark clusters.
pub fn product_series(state: &RingState) -> Vec<u8> {
    let n = state.n();
    (0..n)
        .map(|i| (state.occupied(i) && state.occupied((i + 1) % n)) as u8)
        .collect()
}

/// Range-extremum table over a fixed array.
struct Sparse {
    max: Vec<Vec<f64>>,
    min: Vec<Vec<f64>>,
}

impl Sparse {
    fn new(v: &[f64]) -> Self {
        let mut max = vec![v.to_vec()];
        let mut min = vec![v.to_vec()];
        let mut span = 1;
        while 2 * span <= v.len() {
            let (pm, pn) = (max.last().unwrap(), min.last().unwrap());
            let len = v.len() - 2 * span + 1;
            let nm: Vec<f64> = (0..len).map(|i| pm[i].max(pm[i + span])).collect();
            let nn: Vec<f64> = (0..len).map(|i| pn[i].min(pn[i + span])).collect();
            max.push(nm);
            min.push(nn);
            span *= 2;
        }
        Self { max, min }
    }

    /// `(max, min)` over `lo..=hi`, or `None` for an empty range.
    fn query(&self, lo: i64, hi: i64) -> Option<(f64, f64)> {
        if lo > hi {
            return None;
        }
        let (lo, hi) = (lo as usize, hi as usize);
        let len = hi - lo + 1;
        let k = (usize::BITS - 1 - len.leading_zeros()) as usize;
        let span = 1 << k;
        Some((
            self.max[k][lo].max(self.max[k][hi + 1 - span]),
            self.min[k][lo].min(self.min[k][hi + 1 - span]),
        ))
    }
}

/// Max-norm distance to the closest main equilibrium state.
///
/// The empirical cumulative mass spreads each site's particle uniformly over
/// its cell. The reference profile has slope 1 on a cluster of length
/// `tau* n` sites and slope `h` elsewhere; it is compared at every one of the
/// `n` integer cluster positions, and the additive constant of the
/// cumulative function is chosen optimally, so the result does not depend
/// on where the ring is cut.
pub fn mes_distance(state: &RingState, params: &ModelParams) -> Result<f64> {
    let n = state.n();
    let rho = state.particles() as f64 / n as f64;
    let q = mes_quantities(rho, params.p)?;
    let tau = q.tau_star.ok_or(Error::NoEquilibrium { rho, h: q.h })?;
    if !(rho > q.h) {
        return Err(Error::NoEquilibrium { rho, h: q.h });
    }
    let h = q.h;
    let scale = 1.0 / n as f64;
    let occ = state.occupancy();
    // Cumulative mass at grid points 0..=n in site units.
    let mut c = vec![0.0f64; n + 1];
    for k in 0..n {
        c[k + 1] = c[k] + occ[k] as f64;
    }
    let e1: Vec<f64> = (0..n).map(|k| c[k] - h * k as f64).collect();
    let e2: Vec<f64> = (0..n).map(|k| c[k] - k as f64).collect();
    let t1 = Sparse::new(&e1);
    let t2 = Sparse::new(&e2);
    let big_l = tau * n as f64;
    let c_at = |x: f64| -> f64 {
        let k = (x.floor() as usize).min(n - 1);
        c[k] + (x - k as f64) * occ[k] as f64
    };

    let mut best = f64::INFINITY;
    for s in 0..n {
        let sf = s as f64;
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        let mut add = |v: Option<(f64, f64)>, shift: f64| {
            if let Some((mx, mn)) = v {
                hi = hi.max(mx + shift);
                lo = lo.min(mn + shift);
            }
        };
        let ceil = |x: f64| x.ceil() as i64;
        let floor = |x: f64| x.floor() as i64;
        let nn = n as i64 - 1;
        let (kink, kink_i) = if sf + big_l <= n as f64 {
            let end = sf + big_l;
            // d = e1 on [0, s]; e2 + (1-h) s on [s, end]; e1 - (1-h) L beyond.
            add(t1.query(0, s as i64), 0.0);
            add(t2.query(s as i64, floor(end).min(nn)), (1.0 - h) * sf);
            add(t1.query(ceil(end), nn), -(1.0 - h) * big_l);
            (end, (1.0 - h) * big_l)
        } else {
            let e = sf + big_l - n as f64;
            // Wrapped: cluster covers [0, e] and [s, n).
            add(t2.query(0, floor(e).min(nn)), 0.0);
            add(t1.query(ceil(e), s as i64), -(1.0 - h) * e);
            add(t2.query(s as i64, nn), (1.0 - h) * (sf - e));
            (e, (1.0 - h) * e)
        };
        if kink < n as f64 && kink.fract() != 0.0 {
            let v = c_at(kink) - h * kink - kink_i;
            hi = hi.max(v);
            lo = lo.min(v);
        }
        best = best.min(0.5 * (hi - lo));
    }
    Ok(best * scale)
}

/// Time-averaged flux with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxEstimate {
    /// Slot range `[start, end)` covered.
    pub window: (u64, u64),
    pub realized: f64,
    pub expected: f64,
    pub perturb_term: f64,
    pub std_err: f64,
}

const MAX_BATCHES: usize = 64;

/// Streaming accumulator behind [`FluxEstimate`].
#[derive(Debug, Clone)]
pub struct FluxAccumulator {
    n: usize,
    include_perturb: bool,
    start: Option<u64>,
    slots: u64,
    moves: u64,
    perturb: u64,
    expected: f64,
    batch_size: u64,
    batch_fill: u64,
    batch_sum: f64,
    batches: Vec<f64>,
}

impl FluxAccumulator {
    pub fn new(n: usize, include_perturb: bool) -> Self {
        Self {
            n,
            include_perturb,
            start: None,
            slots: 0,
            moves: 0,
            perturb: 0,
            expected: 0.0,
            batch_size: 1,
            batch_fill: 0,
            batch_sum: 0.0,
            batches: Vec::with_capacity(MAX_BATCHES),
        }
    }

    /// Record the slot that started at time `slot`.
    pub fn push(&mut self, slot: u64, rec: &MoveRecord) {
        self.start.get_or_insert(slot);
        self.slots += 1;
        let moved = rec.moved() as u64;
        self.moves += moved;
        self.perturb += rec.perturb_distance as u64;
        self.expected += rec.expected_moves;
        let counted = moved
            + if self.include_perturb {
                rec.perturb_distance as u64
            } else {
                0
            };
        self.batch_sum += counted as f64;
        self.batch_fill += 1;
        if self.batch_fill == self.batch_size {
            self.batches.push(self.batch_sum / self.batch_size as f64);
            self.batch_fill = 0;
            self.batch_sum = 0.0;
            if self.batches.len() == MAX_BATCHES {
                let merged: Vec<f64> = self
                    .batches
                    .chunks(2)
                    .map(|c| 0.5 * (c[0] + c[1]))
                    .collect();
                self.batches = merged;
                self.batch_size *= 2;
            }
        }
    }

    pub fn slots(&self) -> u64 {
        self.slots
    }

    pub fn estimate(&self) -> Result<FluxEstimate> {
        if self.slots == 0 {
            return Err(Error::EmptyWindow);
        }
        let norm = 1.0 / (self.n as f64 * self.slots as f64);
        let counted = self.moves
            + if self.include_perturb {
                self.perturb
            } else {
                0
            };
        let k = self.batches.len();
        let std_err = if k >= 2 {
            let mean = self.batches.iter().sum::<f64>() / k as f64;
            let var = self.batches.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt() / self.n as f64
        } else {
            f64::NAN
        };
        let start = self.start.unwrap_or(0);
        Ok(FluxEstimate {
            window: (start, start + self.slots),
            realized: counted as f64 * norm,
            expected: self.expected * norm,
            perturb_term: self.perturb as f64 * norm,
            std_err,
        })
    }
}

/// Flux estimate of a recorded window starting at slot `start`.
pub fn accumulate(
    records: &[MoveRecord],
    n: usize,
    start: u64,
    include_perturb: bool,
) -> Result<FluxEstimate> {
    let mut acc = FluxAccumulator::new(n, include_perturb);
    for (i, rec) in records.iter().enumerate() {
        acc.push(start + i as u64, rec);
    }
    acc.estimate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::{new_state, InitSpec, Variant};

    fn state(bits: &str) -> RingState {
        let occ: Vec<u8> = bits.bytes().map(|b| b - b'0').collect();
        RingState::from_occupancy(&occ, Variant::TasepH).unwrap()
    }

    /// Rotate so that site 0 is a hole, scan linearly, map back.
    fn naive_clusters(occ: &[u8]) -> Vec<(usize, usize, usize)> {
        let n = occ.len();
        let Some(z) = occ.iter().position(|&b| b == 0) else {
            return if n >= 2 { vec![(0, n - 1, n)] } else { vec![] };
        };
        let mut out = Vec::new();
        let mut i = 0;
        while i < n {
            let site = (z + i) % n;
            if occ[site] == 1 {
                let mut len = 0;
                while i < n && occ[(z + i) % n] == 1 {
                    len += 1;
                    i += 1;
                }
                if len >= 2 {
                    out.push((site, (site + len - 1) % n, len));
                }
            } else {
                i += 1;
            }
        }
        out.sort();
        out
    }

    fn as_tuples(stats: &ClusterStats) -> Vec<(usize, usize, usize)> {
        let mut v: Vec<_> = stats
            .clusters
            .iter()
            .map(|c| (c.left, c.right, c.len))
            .collect();
        v.sort();
        v
    }

    #[test]
    fn flux_examples() {
        let f = instantaneous_flux(&state("1010101000"), 0.5, 1.0).unwrap();
        assert!((f - 0.4).abs() < 1e-15);
        let f = instantaneous_flux(&state("1100"), 0.5, 1.0).unwrap();
        assert!((f - 0.125).abs() < 1e-15);
        assert_eq!(instantaneous_flux(&state("1111"), 0.5, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn cluster_examples() {
        let s = find_clusters(&state("0110011100"));
        assert_eq!(as_tuples(&s), vec![(1, 2, 2), (5, 7, 3)]);
        assert!(!s.is_ideal);
        assert_eq!(s.max_length, 3);
        assert_eq!(s.total_clustered_particles, 5);
        assert!(find_clusters(&state("1010101010")).is_ideal);
        let s = find_clusters(&state("1000000011"));
        assert_eq!(as_tuples(&s), vec![(8, 0, 3)]);
        assert_eq!(as_tuples(&find_clusters(&state("1111"))), vec![(0, 3, 4)]);
    }

    #[test]
    fn clusters_match_naive_scan() {
        for n in [2usize, 3, 5, 63, 64, 65, 130] {
            for seed in 0..30u64 {
                let occ: Vec<u8> = (0..n)
                    .map(|i| (crate::rng::mix64(seed * 1000 + i as u64) % 3 != 0) as u8)
                    .collect();
                let s = RingState::from_occupancy(&occ, Variant::TasepH).unwrap();
                assert_eq!(as_tuples(&find_clusters(&s)), naive_clusters(&occ), "n={n}");
            }
        }
    }

    /// Direct evaluation over all shifts and all grid and kink points.
    fn mes_distance_oracle(occ: &[u8], p: f64) -> f64 {
        let n = occ.len();
        let m: usize = occ.iter().map(|&b| b as usize).sum();
        let rho = m as f64 / n as f64;
        let h = p / (1.0 + p);
        let l = (rho - h) / (1.0 - h) * n as f64;
        let c_at = |x: f64| -> f64 {
            let k = x.floor() as usize;
            let full: f64 = occ[..k.min(n)].iter().map(|&b| b as f64).sum();
            if k >= n {
                full
            } else {
                full + (x - k as f64) * occ[k] as f64
            }
        };
        let mut best = f64::INFINITY;
        for s in 0..n {
            let sf = s as f64;
            let cluster_in = |x: f64| -> f64 {
                // Measure of [0, x] covered by the cluster [s, s + l] mod n.
                let seg = |a: f64, b: f64| (x.min(b) - a).max(0.0);
                if sf + l <= n as f64 {
                    seg(sf, sf + l)
                } else {
                    seg(0.0, sf + l - n as f64) + seg(sf, n as f64)
                }
            };
            let mut pts: Vec<f64> = (0..n).map(|k| k as f64).collect();
            pts.push((sf + l) % n as f64);
            let d: Vec<f64> = pts
                .iter()
                .map(|&x| c_at(x) - h * x - (1.0 - h) * cluster_in(x))
                .collect();
            let hi = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
            best = best.min(0.5 * (hi - lo));
        }
        best / n as f64
    }

    #[test]
    fn mes_distance_matches_oracle() {
        for (n, rho, p) in [
            (50usize, 0.4, 0.5),
            (64, 0.45, 0.25),
            (97, 0.7, 0.9),
            (30, 0.35, 0.5),
        ] {
            let params = ModelParams::tasep_h(n, rho, p, 3).unwrap();
            for init in [
                InitSpec::UniformRandom,
                InitSpec::SingleCluster,
                InitSpec::Mes,
            ] {
                let s = new_state(&params, &init).unwrap();
                let got = mes_distance(&s, &params).unwrap();
                let want = mes_distance_oracle(&s.occupancy(), p);
                assert!(
                    (got - want).abs() < 1e-12,
                    "{n} {rho} {init:?}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn mes_init_is_close_to_mes() {
        for n in [100usize, 1000, 3000] {
            let params = ModelParams::tasep_h(n, 0.4, 0.5, 0).unwrap();
            let s = new_state(&params, &InitSpec::Mes).unwrap();
            assert!(mes_distance(&s, &params).unwrap() <= 2.0 / n as f64);
        }
    }

    #[test]
    fn single_cluster_distance_closed_form() {
        // With the reference cluster inside the block, the difference rises
        // with slope 1 - h across the block's uncovered part and falls with
        // slope h across the empty stretch of length 1 - rho. Its range is
        // h (1 - rho); the free offset halves it.
        let (n, rho, p) = (1000, 0.4, 0.5);
        let params = ModelParams::tasep_h(n, rho, p, 0).unwrap();
        let s = new_state(&params, &InitSpec::SingleCluster).unwrap();
        let h = p / (1.0 + p);
        let closed = 0.5 * h * (1.0 - rho);
        let got = mes_distance(&s, &params).unwrap();
        assert!((got - closed).abs() < 2.0 / n as f64, "{got} vs {closed}");
    }

    #[test]
    fn mes_distance_rejects_low_density() {
        let params = ModelParams::tasep_h(100, 0.3, 0.5, 0).unwrap();
        let s = new_state(&params, &InitSpec::UniformRandom).unwrap();
        assert!(matches!(
            mes_distance(&s, &params),
            Err(Error::NoEquilibrium { .. })
        ));
    }

    #[test]
    fn accumulate_counts_moves_and_perturbations() {
        let rec = MoveRecord {
            moved_free: 3,
            eligible_free: 3,
            perturb_distance: 0,
            expected_moves: 3.0,
            ..Default::default()
        };
        let mut recs = vec![rec; 1000];
        let est = accumulate(&recs, 10, 0, true).unwrap();
        assert_eq!(est.realized, 0.3);
        assert_eq!(est.expected, 0.3);
        assert_eq!(est.window, (0, 1000));
        assert_eq!(est.std_err, 0.0);
        recs[0].perturb_distance = 10;
        let with = accumulate(&recs, 10, 0, true).unwrap();
        let without = accumulate(&recs, 10, 0, false).unwrap();
        assert!((with.realized - without.realized - 10.0 / 10_000.0).abs() < 1e-15);
        assert!((with.perturb_term - 0.001).abs() < 1e-15);
        assert_eq!(accumulate(&[], 10, 0, true), Err(Error::EmptyWindow));
    }

    #[test]
    fn product_series_marks_pairs() {
        assert_eq!(
            product_series(&state("1101110001")),
            vec![1, 0, 0, 1, 1, 0, 0, 0, 0, 1]
        );
    }
}
