//! Random relocations of a single particle.

use crate::error::{Error, Result};
use crate::ring::{ModelParams, Policy, RingState};
use crate::rng::{CounterRng, Stream, Threshold};
use rand::RngCore;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PerturbationRecord {
    pub slot: u64,
    pub from_site: usize,
    pub to_site: usize,
    /// `(to_site - from_site) mod n`; relocations always count as rightward.
    pub right_distance: usize,
    /// The landing site has an occupied neighbor.
    pub created_cluster: bool,
    /// Removing the particle left both of its neighbors occupied.
    pub split_cluster: bool,
}

/// Position of the `k`-th set bit (`k` from 0) of the first `n` bits.
fn select(words: &[u64], n: usize, mut k: usize, ones: bool) -> usize {
    let last = words.len() - 1;
    for (w, &word) in words.iter().enumerate() {
        let mut bits = if ones { word } else { !word };
        if w == last && n % 64 != 0 {
            bits &= (1u64 << (n % 64)) - 1;
        }
        let c = bits.count_ones() as usize;
        if k < c {
            for _ in 0..k {
                bits &= bits - 1;
            }
            return 64 * w + bits.trailing_zeros() as usize;
        }
        k -= c;
    }
    unreachable!("select index out of range")
}

/// Move a uniformly chosen particle to a uniformly chosen hole.
///
/// With `allow_return` the vacated site is itself a candidate hole. Draws
/// come from the perturbation stream of the current slot.
pub fn apply_perturbation(
    state: &mut RingState,
    rng: &CounterRng,
    allow_return: bool,
) -> Result<PerturbationRecord> {
    if !state.variant.is_exclusion() {
        return Err(Error::UnsupportedVariant(state.variant.name()));
    }
    let n = state.n;
    let m = state.particles;
    let holes = n - m;
    if m == 0 || holes == 0 {
        return Err(Error::CannotPerturb);
    }
    let mut stream = rng.stream(state.t, Stream::Perturb);
    // Word 0 is reserved for the policy coin.
    stream.next_u64();
    let from = select(&state.occ, n, stream.below(m as u64) as usize, true);
    state.remove(from);
    let split = n > 2 && state.occupied((from + n - 1) % n) && state.occupied((from + 1) % n);
    let to = if allow_return {
        select(
            &state.occ,
            n,
            stream.below(holes as u64 + 1) as usize,
            false,
        )
    } else {
        let k = stream.below(holes as u64) as usize;
        // Skip `from` among the holes of the post-removal configuration.
        let rank_from = rank_zero(&state.occ, from);
        select(&state.occ, n, if k >= rank_from { k + 1 } else { k }, false)
    };
    state.place(to);
    if to < from {
        state.crossings += 1;
    }
    let created =
        to != from && n > 1 && (state.occupied((to + n - 1) % n) || state.occupied((to + 1) % n));
    Ok(PerturbationRecord {
        slot: state.t,
        from_site: from,
        to_site: to,
        right_distance: (to + n - from) % n,
        created_cluster: created,
        split_cluster: split && to != from,
    })
}

/// Number of zero bits strictly before position `i`.
fn rank_zero(words: &[u64], i: usize) -> usize {
    let full: usize = words[..i / 64]
        .iter()
        .map(|w| w.count_zeros() as usize)
        .sum();
    let partial = if i % 64 == 0 {
        0
    } else {
        (!words[i / 64] & ((1u64 << (i % 64)) - 1)).count_ones() as usize
    };
    full + partial
}

/// The per-slot policy decision, taken after movement.
///
/// `post_move_ideal` is the ideal-state check on the configuration produced
/// by this slot's movement phase.
pub fn policy_step(
    state: &mut RingState,
    params: &ModelParams,
    rng: &CounterRng,
    post_move_ideal: bool,
) -> Result<Option<PerturbationRecord>> {
    let fire = match params.policy {
        Policy::None => false,
        Policy::Absorbing => post_move_ideal,
        Policy::Independent => true,
    };
    if !fire {
        return Ok(None);
    }
    let q = params.perturb_probability();
    let coin = rng
        .slot_key(state.t, Stream::Perturb)
        .coin(0, Threshold::new(q));
    if !coin || q == 0.0 {
        return Ok(None);
    }
    if state.particles == 0 || state.particles == state.n {
        return Ok(None);
    }
    apply_perturbation(state, rng, params.allow_return).map(Some)
}
