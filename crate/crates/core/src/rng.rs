//! Counter-based random numbers.
//!
//! Every draw is a pure function of `(seed, slot, stream, index)`. A slot key
//! is derived from the seed, the stream id and the slot; individual words are
//! SplitMix64 outputs of that key at the requested counter. Trajectories are
//! therefore reproducible regardless of how runs are scheduled on threads, and
//! the coin of site `i` in slot `t` does not depend on the rest of the lattice.

use rand::RngCore;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const SLOT_MUL: u64 = 0xD1B5_4A32_D192_ED03;

/// Stream identifiers. Distinct mechanisms never share random words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    /// Rule (c) coins.
    Holdback = 1,
    /// Free-particle coins of the zero-range variant.
    Free = 2,
    /// Restart coins of flagged slow-to-start particles.
    Restart = 3,
    /// Perturbation timing and placement.
    Perturb = 4,
    /// CSMA priority permutations.
    Priority = 5,
    /// Initial configurations.
    Init = 6,
}

/// SplitMix64 finalizer.
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a label (replicate index,
/// grid point, trial number). Used to key independent runs.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    mix64(mix64(seed ^ 0x5EED_5EED_5EED_5EED).wrapping_add(label.wrapping_mul(GOLDEN)))
}

/// Keyed counter-based generator. Cheap to copy; carries no mutable state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Key shared by all draws of one `(slot, stream)` pair.
    #[inline]
    pub fn slot_key(&self, slot: u64, stream: Stream) -> SlotKey {
        let k = mix64(self.seed ^ (stream as u64).wrapping_mul(GOLDEN));
        SlotKey(mix64(k.wrapping_add(slot.wrapping_mul(SLOT_MUL))))
    }

    /// Sequential generator for draws whose count depends on the state
    /// (perturbation placement, permutations).
    pub fn stream(&self, slot: u64, stream: Stream) -> SlotStream {
        SlotStream {
            key: self.slot_key(slot, stream),
            counter: 0,
        }
    }
}

/// Per-slot key. `word(i)` is the i-th SplitMix64 output for this key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotKey(u64);

impl SlotKey {
    #[inline(always)]
    pub fn word(self, index: u64) -> u64 {
        mix64(
            self.0
                .wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)),
        )
    }

    /// Bernoulli draw for `index` against a precomputed threshold.
    #[inline(always)]
    pub fn coin(self, index: u64, threshold: Threshold) -> bool {
        match threshold {
            Threshold::Always => true,
            Threshold::Below(t) => self.word(index) < t,
        }
    }
}

/// Success probability converted to a 64-bit comparison threshold.
/// Probability one is kept exact and never consumes a draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threshold {
    Always,
    Below(u64),
}

impl Threshold {
    pub fn new(prob: f64) -> Self {
        if prob >= 1.0 {
            Threshold::Always
        } else if prob <= 0.0 {
            Threshold::Below(0)
        } else {
            // prob < 1 so the product is < 2^64 and the cast is in range.
            Threshold::Below((prob * 18_446_744_073_709_551_616.0) as u64)
        }
    }
}

/// Sequential stream over one slot key.
#[derive(Debug, Clone)]
pub struct SlotStream {
    key: SlotKey,
    counter: u64,
}

impl SlotStream {
    /// Uniform float in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unbiased integer in `0..bound` (Lemire's method). `bound > 0`.
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let m = (self.next_u64() as u128) * (bound as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }
}

impl RngCore for SlotStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let w = self.key.word(self.counter);
        self.counter += 1;
        w
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}
