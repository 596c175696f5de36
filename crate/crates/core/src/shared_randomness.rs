//! Internal shared randomness ξ, organized as addressable substreams.
//!
//! A reproducible policy run twice with the same `SharedSeed` must consume
//! *identical* internal random values — thresholds, grid offsets, design
//! directions — even though the two executions see different rewards and may
//! therefore take different code paths for different numbers of steps. A
//! single sequential generator cannot survive that: one extra reward sample
//! on one side would shift every later draw. Instead, every internal value
//! is a pure function of `(seed, key, ordinal)`, where the key names *why*
//! the value is being drawn (purpose, batch, arm) and the ordinal counts
//! draws within that key. Two executions that ask the same questions get the
//! same answers, no matter what happened in between.
//!
//! The mixer is the splitmix64 finalizer, which is small, fast, and has
//! full-period avalanche behavior; keyed substreams are derived by chaining
//! the same finalizer over the key fields. Reward randomness deliberately
//! does *not* live here — see `environments` — so that paired executions
//! share ξ but not the reward draws.

use std::collections::HashMap;

/// Weyl-sequence increment used by splitmix64; coprime to 2^64 and
/// close to 2^64/φ, which spreads consecutive ordinals across the state
/// space before finalization.
pub(crate) const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Domain tag separating internal-randomness streams from reward streams
/// that might share a numeric seed value.
const XI_DOMAIN: u64 = 0x5852_f14d_a5a1_e1b5;

/// splitmix64 finalizer: a 64-bit avalanche mix.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Map 64 random bits to a uniform draw in `[0, 1)` using the top 53 bits.
#[inline]
pub(crate) fn bits_to_unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Same, but open at zero: `(0, 1]`. Used where a logarithm follows.
#[inline]
pub(crate) fn bits_to_unit_open(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// What an internal draw is *for*. Part of the substream address, so that
/// e.g. threshold draws and grid offsets can never collide even if they
/// happen in the same batch for the same arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StreamPurpose {
    /// Random elimination thresholds (`Ū_i`, `ε̄_i`).
    Threshold,
    /// Rounding-grid offsets for reproducible mean estimation.
    GridOffset,
    /// Gaussian directions for the design initializer.
    KyDirection,
    /// Anything else; callers pick their own batch/arm conventions.
    Other,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Threshold => 1,
            StreamPurpose::GridOffset => 2,
            StreamPurpose::KyDirection => 3,
            StreamPurpose::Other => 4,
        }
    }
}

/// Address of one substream of ξ: purpose plus batch and arm indices
/// (set an index to 0 when it does not apply).
///
/// Key equality means "the same substream"; distinct keys give streams that
/// behave independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubstreamKey {
    pub purpose: StreamPurpose,
    pub batch: u32,
    pub arm: u32,
}

impl SubstreamKey {
    pub fn new(purpose: StreamPurpose, batch: u32, arm: u32) -> Self {
        SubstreamKey { purpose, batch, arm }
    }
}

/// The internal randomness ξ of a (paired) execution. Copy-cheap; all draw
/// methods are pure functions of `(self, key, ordinal)` and safe to call
/// concurrently.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SharedSeed(pub u64);

impl SharedSeed {
    /// Raw 64 bits for draw number `ordinal` on substream `key`.
    ///
    /// This is the whole generator: chain the finalizer over the key to get
    /// a per-substream base state, then walk a Weyl sequence from that base
    /// and finalize. Equivalent to indexing a splitmix64 stream at an
    /// arbitrary position, so consecutive ordinals inherit its statistical
    /// quality while staying randomly accessible.
    #[inline]
    pub fn raw_at(self, key: SubstreamKey, ordinal: u64) -> u64 {
        let mut base = self.0 ^ XI_DOMAIN;
        base = mix64(base.wrapping_add(key.purpose.tag().wrapping_mul(GOLDEN_GAMMA)));
        base = mix64(base ^ (((key.batch as u64) << 32) | key.arm as u64));
        mix64(base.wrapping_add(ordinal.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform draw in `[0, 1)` at `(key, ordinal)`.
    #[inline]
    pub fn uniform_at(self, key: SubstreamKey, ordinal: u64) -> f64 {
        bits_to_unit(self.raw_at(key, ordinal))
    }

    /// Uniform draw in `[lo, hi]` at `(key, ordinal)`. `lo == hi` returns `lo`.
    #[inline]
    pub fn uniform_in_at(self, key: SubstreamKey, ordinal: u64, lo: f64, hi: f64) -> f64 {
        debug_assert!(lo <= hi, "uniform_in_at: lo > hi");
        lo + (hi - lo) * self.uniform_at(key, ordinal)
    }

    /// Standard normal draw number `t` on substream `key`, via Box–Muller.
    ///
    /// Draw `t` belongs to pair `t/2`; the pair consumes uniforms at
    /// ordinals `2·(t/2)` and `2·(t/2)+1` and yields the cosine branch for
    /// even `t`, the sine branch for odd `t`. No state, no cached spare:
    /// both branches are recomputed from the same two uniforms, so normal
    /// draws stay pure functions of `(seed, key, t)`.
    pub fn normal_at(self, key: SubstreamKey, t: u64) -> f64 {
        let pair = t / 2;
        let u1 = bits_to_unit_open(self.raw_at(key, 2 * pair));
        let u2 = bits_to_unit(self.raw_at(key, 2 * pair + 1));
        let r = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        if t % 2 == 0 {
            r * angle.cos()
        } else {
            r * angle.sin()
        }
    }
}

/// One logged internal draw: which substream, which ordinal, and the bits
/// of the value handed to the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DrawRecord {
    pub key: SubstreamKey,
    pub ordinal: u64,
    pub value_bits: u64,
}

/// Stateful front-end over a `SharedSeed` for one execution: tracks the
/// next ordinal per substream so callers don't have to, and logs every
/// draw so a run's internal-randomness consumption can be replayed and
/// compared byte for byte.
///
/// Internal draws are few (a handful per batch), so the log stays tiny even
/// for long horizons.
#[derive(Debug, Clone)]
pub struct SubstreamCursor {
    seed: SharedSeed,
    next_ordinal: HashMap<SubstreamKey, u64>,
    log: Vec<DrawRecord>,
}

impl SubstreamCursor {
    pub fn new(seed: SharedSeed) -> Self {
        SubstreamCursor {
            seed,
            next_ordinal: HashMap::new(),
            log: Vec::new(),
        }
    }

    pub fn seed(&self) -> SharedSeed {
        self.seed
    }

    fn advance(&mut self, key: SubstreamKey) -> u64 {
        let slot = self.next_ordinal.entry(key).or_insert(0);
        let ord = *slot;
        *slot += 1;
        ord
    }

    /// Next uniform value in `[lo, hi]` on substream `key`.
    pub fn draw_uniform(&mut self, key: SubstreamKey, lo: f64, hi: f64) -> f64 {
        let ordinal = self.advance(key);
        let value = self.seed.uniform_in_at(key, ordinal, lo, hi);
        self.log.push(DrawRecord {
            key,
            ordinal,
            value_bits: value.to_bits(),
        });
        value
    }

    /// Next standard-normal value on substream `key`.
    pub fn draw_normal(&mut self, key: SubstreamKey) -> f64 {
        let ordinal = self.advance(key);
        let value = self.seed.normal_at(key, ordinal);
        self.log.push(DrawRecord {
            key,
            ordinal,
            value_bits: value.to_bits(),
        });
        value
    }

    /// Every draw made through this cursor, in order.
    pub fn log(&self) -> &[DrawRecord] {
        &self.log
    }
}
