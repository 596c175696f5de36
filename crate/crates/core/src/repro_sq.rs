//! Reproducible mean estimation: the statistical-query primitive that the
//! elimination policies build on.
//!
//! The construction is shared-randomness grid rounding. Take enough samples
//! that the empirical mean concentrates to within `τ·ρ'/2` of the truth,
//! draw one uniform offset `u ∈ [0, τ)` from the shared substream, and
//! output the point of the grid `{u + m·τ}` nearest the empirical mean.
//! Two executions sharing the offset then disagree only when their two
//! empirical means straddle a grid boundary, and a uniformly offset
//! boundary lands in an interval of length `γ` with probability `γ/τ`;
//! since the means sit within an O(ρ')-fraction of the grid step of each
//! other, the executions agree with probability at least `1 − ρ'`.
//!
//! Sample counts use natural logarithms throughout; the analysis constants
//! are folded into a single `C₀` per data scale: `C₀ = 8` for values in
//! [0,1] (Hoeffding) and `C₀ = 32σ²` for declared σ-subgaussian samples,
//! which agrees with the [0,1] case at its worst-case scale σ = 1/2.

use crate::error::{BanditError, Result};
use crate::shared_randomness::{SharedSeed, SubstreamKey};

/// Concentration scale of the samples handed to the estimator.
///
/// MAB rewards live in [0,1]; linear-bandit rewards are unbounded but
/// σ-subgaussian around their mean, so the caller declares σ instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleScale {
    /// Values in [0,1]; Hoeffding constant.
    UnitInterval,
    /// Values are σ-subgaussian around the mean. σ = 0 means deterministic
    /// samples: a single observation suffices.
    Subgaussian(f64),
}

impl SampleScale {
    /// The constant C₀ in n = ⌈C₀·ln(1/δ)/(τ²ρ'²)⌉.
    fn c0(self) -> f64 {
        match self {
            SampleScale::UnitInterval => 8.0,
            SampleScale::Subgaussian(sigma) => 32.0 * sigma * sigma,
        }
    }
}

/// One reproducible mean-estimation request: target accuracy τ,
/// reproducibility budget ρ', failure probability δ, and the substream
/// the grid offset is drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqRequest {
    /// Grid spacing and accuracy target, in (0, 1].
    pub tau: f64,
    /// Per-call reproducibility budget ρ', in (0, 1].
    pub rho: f64,
    /// Failure probability, in (0, ρ'): the guarantees only hold in the
    /// regime where δ sits strictly below ρ'.
    pub delta: f64,
    /// Substream the shared grid offset is drawn from (ordinal 0).
    pub key: SubstreamKey,
    /// Concentration scale of the samples.
    pub scale: SampleScale,
}

impl SqRequest {
    pub fn new(tau: f64, rho: f64, delta: f64, key: SubstreamKey) -> Self {
        SqRequest {
            tau,
            rho,
            delta,
            key,
            scale: SampleScale::UnitInterval,
        }
    }

    pub fn with_scale(mut self, scale: SampleScale) -> Self {
        self.scale = scale;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(BanditError::OutOfRange {
                name: "tau",
                value: self.tau,
                range: "(0, 1]",
            });
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(BanditError::OutOfRange {
                name: "rho",
                value: self.rho,
                range: "(0, 1]",
            });
        }
        if self.delta <= 0.0 {
            return Err(BanditError::OutOfRange {
                name: "delta",
                value: self.delta,
                range: "(0, rho)",
            });
        }
        if self.delta >= self.rho {
            return Err(BanditError::InvalidRegime {
                reason: format!(
                    "delta = {} must sit strictly below rho = {}",
                    self.delta, self.rho
                ),
            });
        }
        if let SampleScale::Subgaussian(sigma) = self.scale {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(BanditError::OutOfRange {
                    name: "sigma",
                    value: sigma,
                    range: "[0, ∞)",
                });
            }
        }
        Ok(())
    }
}

/// Samples needed before `repro_mean` will answer:
/// n = ⌈C₀ · ln(1/δ) / (τ² ρ'²)⌉, at least 1.
///
/// Monotone nonincreasing in each of τ, ρ', δ.
pub fn required_samples(req: &SqRequest) -> Result<u64> {
    req.validate()?;
    let raw = req.scale.c0() * (1.0 / req.delta).ln() / (req.tau * req.tau * req.rho * req.rho);
    Ok((raw.ceil() as u64).max(1))
}

/// Nearest point of the grid `{offset + m·spacing : m ∈ ℤ}` to `value`,
/// with exact midpoints rounding toward the smaller grid point (any
/// deterministic tie rule preserves reproducibility; ties are measure-zero).
///
/// The result is exactly `offset + m·spacing` for the chosen integer m, so
/// two calls that agree on `(value-side, offset, spacing)` agree bit for bit.
pub fn round_to_grid(value: f64, offset: f64, spacing: f64) -> f64 {
    debug_assert!(spacing > 0.0);
    let q = (value - offset) / spacing;
    // Nearest integer with the midpoint q = m + 0.5 mapping to m.
    let m = (q - 0.5).ceil();
    offset + m * spacing
}

/// Reproducible mean of `samples` under `req`, using `seed` for the grid
/// offset.
///
/// Output is a grid point `u + m·τ` with `u = uniform(seed, req.key)·τ`;
/// it is within τ of the true mean with probability ≥ 1 − δ, and two
/// executions sharing `(seed, req.key)` but holding independent sample
/// sets return the identical value with probability ≥ 1 − ρ'.
pub fn repro_mean(samples: &[f64], req: &SqRequest, seed: SharedSeed) -> Result<f64> {
    let n = samples.len() as u64;
    let sum = samples.iter().sum::<f64>();
    repro_mean_from_stats(sum, n, req, seed)
}

/// `repro_mean` when the caller already holds the sufficient statistics
/// (sample sum and count). Same contract; lets simulations sample the sum
/// directly instead of materializing millions of individual rewards.
pub fn repro_mean_from_stats(sum: f64, count: u64, req: &SqRequest, seed: SharedSeed) -> Result<f64> {
    let needed = required_samples(req)?;
    if count < needed {
        return Err(BanditError::InsufficientSamples {
            needed,
            got: count,
        });
    }
    let mean = sum / count as f64;
    let spacing = req.tau;
    let offset = seed.uniform_at(req.key, 0) * spacing;
    Ok(round_to_grid(mean, offset, spacing))
}

/// Probability that a uniformly offset grid of the given `spacing`
/// separates two points at distance `gamma` ≤ `spacing`: exactly
/// `gamma / spacing`. Analytic oracle for the reproducibility tests.
pub fn grid_crossing_probability(gamma: f64, spacing: f64) -> Result<f64> {
    if !(spacing > 0.0) {
        return Err(BanditError::OutOfRange {
            name: "spacing",
            value: spacing,
            range: "(0, ∞)",
        });
    }
    if !(0.0..=spacing).contains(&gamma) {
        return Err(BanditError::OutOfRange {
            name: "gamma",
            value: gamma,
            range: "[0, spacing]",
        });
    }
    Ok(gamma / spacing)
}
