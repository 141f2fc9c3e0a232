//! Synchronous one-slot updates.
//!
//! Exclusion variants work on the bit-packed occupancy: eligibility masks are
//! computed for all 64 sites of a word at once from the frozen snapshot, the
//! coins are drawn only for eligible sites, and the moves are applied in a
//! second pass. Every target site `x + 1` has the unique source `x`, so the
//! parallel update needs no conflict resolution.

use crate::rng::{CounterRng, SlotKey, Stream, Threshold};

use super::params::{ModelParams, Variant};
use super::state::{tail_bits, tail_mask, RingState};

/// Per-slot movement tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MoveRecord {
    /// Moves under rule (b): free, unstopped particles.
    pub moved_free: u32,
    /// Moves under rule (c), plus restarts of stopped slow-to-start particles.
    pub moved_holdback: u32,
    pub eligible_free: u32,
    pub eligible_holdback: u32,
    /// Rightward distance of a relocated particle in this slot.
    pub perturb_distance: u32,
    /// Expected number of moves given the snapshot before the step.
    pub expected_moves: f64,
}

impl MoveRecord {
    pub fn moved(&self) -> u32 {
        self.moved_free + self.moved_holdback
    }
}

/// Bit `b` of the result is the occupancy of site `64 w + b + 1` (mod n),
/// `b` ranging over the valid bits of word `w`.
#[inline(always)]
fn right_neighbors(words: &[u64], w: usize, r: u32) -> u64 {
    let cur = words[w];
    if w + 1 < words.len() {
        (cur >> 1) | (words[w + 1] << 63)
    } else {
        (cur >> 1) | ((words[0] & 1) << (r - 1))
    }
}

/// Bit `b` of the result is the occupancy of site `64 w + b - 1` (mod n).
#[inline(always)]
fn left_neighbors(words: &[u64], w: usize, r: u32) -> u64 {
    let cur = words[w];
    if w > 0 {
        (cur << 1) | (words[w - 1] >> 63)
    } else {
        (cur << 1) | ((words[words.len() - 1] >> (r - 1)) & 1)
    }
}

/// Site `64 w + b + offset` mod n aligned to bit `b`, for small offsets.
fn shifted(words: &[u64], n: usize, w: usize, offset: isize) -> u64 {
    let mut out = 0u64;
    let base = 64 * w;
    let valid = if w + 1 == words.len() {
        tail_bits(n) as usize
    } else {
        64
    };
    // Bulk part from linear shifts, then patch the sites whose source wraps.
    let get = |word: isize| -> u64 {
        if word < 0 || word as usize >= words.len() {
            0
        } else {
            words[word as usize]
        }
    };
    let wi = w as isize;
    if offset > 0 {
        let k = offset as u32;
        out |= get(wi) >> k;
        out |= get(wi + 1) << (64 - k);
    } else if offset < 0 {
        let k = (-offset) as u32;
        out |= get(wi) << k;
        out |= get(wi - 1) >> (64 - k);
    } else {
        out = get(wi);
    }
    for b in 0..valid {
        let src = base as isize + b as isize + offset;
        if src < 0 || src >= n as isize {
            let s = src.rem_euclid(n as isize) as usize;
            let bit = (words[s / 64] >> (s % 64)) & 1;
            out = (out & !(1 << b)) | (bit << b);
        }
    }
    if valid < 64 {
        out &= (1u64 << valid) - 1;
    }
    out
}

#[inline(always)]
fn draw(mask: u64, th: Threshold, key: SlotKey, base: u64) -> u64 {
    match th {
        Threshold::Always => mask,
        Threshold::Below(_) => {
            let mut bits = mask;
            let mut out = 0u64;
            while bits != 0 {
                let b = bits.trailing_zeros();
                if key.coin(base + b as u64, th) {
                    out |= 1 << b;
                }
                bits &= bits - 1;
            }
            out
        }
    }
}

struct Rates {
    free: Threshold,
    hold: Threshold,
    p: f64,
    pi: f64,
    stoppable: bool,
}

fn step_exclusion(state: &mut RingState, rates: Rates, rng: &CounterRng) -> MoveRecord {
    let n = state.n;
    let r = tail_bits(n);
    let words = state.occ.len();
    let slot = state.t;
    let free_key = rng.slot_key(slot, Stream::Free);
    let hold_key = rng.slot_key(slot, Stream::Holdback);
    let restart_key = rng.slot_key(slot, Stream::Restart);

    let mut rec = MoveRecord::default();
    let mut dissolving = if rates.stoppable {
        vec![0u64; words]
    } else {
        Vec::new()
    };

    for w in 0..words {
        let cur = state.occ[w];
        if cur == 0 {
            state.scratch[w] = 0;
            continue;
        }
        let right = right_neighbors(&state.occ, w, r);
        let left = left_neighbors(&state.occ, w, r);
        let movable = cur & !right;
        let mut free = movable & !left;
        let hold = movable & left;
        let base = 64 * w as u64;
        let mut moves = draw(hold, rates.hold, hold_key, base);
        let mut stopped_free = 0;
        if rates.stoppable {
            let flags = state.restart[w];
            stopped_free = free & flags;
            free &= !flags;
            moves |= draw(stopped_free, rates.hold, restart_key, base);
            // Left end of a two-particle cluster: occupied, right neighbor
            // occupied, left neighbor empty.
            dissolving[w] = cur & right & !left;
        }
        let free_moves = draw(free, rates.free, free_key, base);
        moves |= free_moves;
        state.scratch[w] = moves;

        let hold_all = hold | stopped_free;
        rec.eligible_free += free.count_ones();
        rec.eligible_holdback += hold_all.count_ones();
        rec.moved_free += free_moves.count_ones();
        rec.moved_holdback += (moves & hold_all).count_ones();
    }
    rec.expected_moves =
        rates.pi * rec.eligible_free as f64 + rates.p * rec.eligible_holdback as f64;

    if rates.stoppable {
        // A pair dissolves when its right particle departs and nothing
        // arrives at the left particle's left neighbor.
        for w in 0..words {
            if dissolving[w] == 0 {
                continue;
            }
            let right_moved = shifted(&state.scratch, n, w, 1);
            let arrival_left = shifted(&state.scratch, n, w, -2);
            dissolving[w] &= right_moved & !arrival_left;
        }
    }

    let last = words - 1;
    let seam_move = (state.scratch[last] >> (r - 1)) & 1;
    state.crossings += seam_move;
    let mask = tail_mask(n);
    let mut carry = seam_move;
    for w in 0..words {
        let mv = state.scratch[w];
        let mut arrivals = (mv << 1) | carry;
        carry = mv >> 63;
        if w == last {
            arrivals &= mask;
        }
        state.occ[w] = (state.occ[w] & !mv) | arrivals;
    }
    if rates.stoppable {
        for w in 0..words {
            state.restart[w] = (state.restart[w] & !state.scratch[w]) | dissolving[w];
        }
    }
    state.t += 1;
    rec
}

/// TASEP-H: rules (a), (b) and (c) applied in parallel.
pub fn step_tasep_h(state: &mut RingState, params: &ModelParams, rng: &CounterRng) -> MoveRecord {
    debug_assert_eq!(state.variant, Variant::TasepH);
    step_exclusion(
        state,
        Rates {
            free: Threshold::Always,
            hold: Threshold::new(params.p),
            p: params.p,
            pi: 1.0,
            stoppable: false,
        },
        rng,
    )
}

/// Zero-range variant: free particles move with probability `pi`.
pub fn step_zero_range(
    state: &mut RingState,
    params: &ModelParams,
    rng: &CounterRng,
) -> MoveRecord {
    step_exclusion(
        state,
        Rates {
            free: Threshold::new(params.pi),
            hold: Threshold::new(params.p),
            p: params.p,
            pi: params.pi,
            stoppable: false,
        },
        rng,
    )
}

/// Slow-to-start variant: the left particle of a dissolving pair is
/// stopped and restarts with probability `p` per slot.
pub fn step_sts(state: &mut RingState, params: &ModelParams, rng: &CounterRng) -> MoveRecord {
    step_exclusion(
        state,
        Rates {
            free: Threshold::Always,
            hold: Threshold::new(params.p),
            p: params.p,
            pi: 1.0,
            stoppable: true,
        },
        rng,
    )
}

/// Sites that fire in the current slot of a CSMA state: sites are visited
/// in a uniformly random order and a nonempty site fires unless a neighbor
/// already fired.
pub fn csma_fire_pattern(state: &RingState, rng: &CounterRng) -> Vec<bool> {
    use rand::seq::SliceRandom;

    let n = state.n;
    let mut order: Vec<u32> = (0..n as u32).collect();
    let mut stream = rng.stream(state.t, Stream::Priority);
    order.shuffle(&mut stream);

    let mut fired = vec![false; n];
    for &i in &order {
        let i = i as usize;
        if state.counts[i] == 0 {
            continue;
        }
        let left = (i + n - 1) % n;
        let right = (i + 1) % n;
        if !fired[left] && !fired[right] {
            fired[i] = true;
        }
    }
    fired
}

/// CSMA variant on the counts representation.
pub fn step_csma(state: &mut RingState, rng: &CounterRng) -> MoveRecord {
    let n = state.n;
    let fired = csma_fire_pattern(state, rng);
    let mut rec = MoveRecord::default();
    for i in 0..n {
        if state.counts[i] > 0 {
            rec.eligible_free += 1;
        }
        if fired[i] {
            state.counts[i] -= 1;
            rec.moved_free += 1;
        }
    }
    for i in 0..n {
        if fired[i] {
            state.counts[(i + 1) % n] += 1;
        }
    }
    if fired[n - 1] {
        state.crossings += 1;
    }
    // No closed form for the per-state firing probability.
    rec.expected_moves = rec.moved_free as f64;
    state.t += 1;
    rec
}

/// Dispatch on the variant recorded in `params`.
pub fn step(state: &mut RingState, params: &ModelParams, rng: &CounterRng) -> MoveRecord {
    match params.variant {
        Variant::TasepH => step_tasep_h(state, params, rng),
        Variant::ZeroRange => step_zero_range(state, params, rng),
        Variant::SlowToStart => step_sts(state, params, rng),
        Variant::Csma => step_csma(state, rng),
    }
}

/// Eligibility counts `(free, holdback)` of the current snapshot, with
/// stopped slow-to-start particles counted as holdback-eligible.
pub fn eligibility(state: &RingState) -> (u32, u32) {
    if !state.variant.is_exclusion() {
        let nonempty = state.counts.iter().filter(|&&c| c > 0).count() as u32;
        return (nonempty, 0);
    }
    let r = tail_bits(state.n);
    let stoppable = state.variant == Variant::SlowToStart;
    let (mut free_total, mut hold_total) = (0, 0);
    for w in 0..state.occ.len() {
        let cur = state.occ[w];
        let movable = cur & !right_neighbors(&state.occ, w, r);
        let left = left_neighbors(&state.occ, w, r);
        let mut free = movable & !left;
        let mut hold = movable & left;
        if stoppable {
            let flags = state.restart[w];
            hold |= free & flags;
            free &= !flags;
        }
        free_total += free.count_ones();
        hold_total += hold.count_ones();
    }
    (free_total, hold_total)
}
