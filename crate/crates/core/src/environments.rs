//! Stochastic reward processes: K-armed bandits with [0,1]-supported
//! rewards and d-dimensional linear bandits with subgaussian noise.
//!
//! Environments are immutable descriptions. Sampling goes through a
//! per-execution *reward stream* that is deliberately separate from the
//! shared internal randomness ξ: a reproducibility pair shares ξ but owns
//! two independent reward seeds. Reward samples are indexed by
//! `(arm, pull-ordinal)` (MAB) or by global pull ordinal (linear), so an
//! execution can be replayed exactly from its reward seed for debugging.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{BanditError, Result};
use crate::shared_randomness::{bits_to_unit, bits_to_unit_open, mix64, GOLDEN_GAMMA};

/// Domain tag for reward randomness; keeps reward streams disjoint from ξ
/// substreams even when both are built from the same numeric seed.
const REWARD_DOMAIN: u64 = 0xd6e8_feb8_6659_fd93;

#[inline]
fn reward_bits(seed: u64, channel: u64, count: u64) -> u64 {
    let base = mix64((seed ^ REWARD_DOMAIN).wrapping_add((channel + 1).wrapping_mul(GOLDEN_GAMMA)));
    mix64(base.wrapping_add(count.wrapping_mul(GOLDEN_GAMMA)))
}

/// Shape of a MAB arm's reward distribution. Everything here is supported
/// on [0,1] with mean exactly μ_a.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// Bernoulli(μ): the default — [0,1]-supported, 1/2-subgaussian, and
    /// the fastest to sample.
    Bernoulli,
    /// Uniform on the widest symmetric interval around μ that fits in
    /// [0,1], i.e. [μ−w, μ+w] with w = min(μ, 1−μ).
    UniformAroundMean,
}

/// A K-armed stochastic bandit: one mean per arm, one distribution shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MabEnvironment {
    arm_means: Vec<f64>,
    kind: RewardKind,
}

impl MabEnvironment {
    pub fn new(arm_means: Vec<f64>, kind: RewardKind) -> Result<Self> {
        if arm_means.is_empty() {
            return Err(BanditError::InvalidConfig {
                reason: "MAB environment needs at least one arm".into(),
            });
        }
        for (i, &m) in arm_means.iter().enumerate() {
            if !(0.0..=1.0).contains(&m) || !m.is_finite() {
                return Err(BanditError::OutOfRange {
                    name: "arm mean",
                    value: m,
                    range: "[0, 1]",
                });
            }
            let _ = i;
        }
        Ok(MabEnvironment { arm_means, kind })
    }

    pub fn bernoulli(arm_means: Vec<f64>) -> Result<Self> {
        Self::new(arm_means, RewardKind::Bernoulli)
    }

    pub fn n_arms(&self) -> usize {
        self.arm_means.len()
    }

    pub fn arm_means(&self) -> &[f64] {
        &self.arm_means
    }

    pub fn kind(&self) -> RewardKind {
        self.kind
    }

    pub fn best_mean(&self) -> f64 {
        self.arm_means.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-execution reward randomness for a MAB environment: a reward seed
/// plus one pull counter per arm. Not shared across threads or executions.
#[derive(Debug, Clone)]
pub struct MabRewardStream {
    seed: u64,
    counts: Vec<u64>,
}

impl MabRewardStream {
    pub fn new(seed: u64, n_arms: usize) -> Self {
        MabRewardStream {
            seed,
            counts: vec![0; n_arms],
        }
    }

    fn next_bits(&mut self, arm: usize) -> u64 {
        let c = self.counts[arm];
        self.counts[arm] += 1;
        reward_bits(self.seed, arm as u64, c)
    }

    /// Pulls of each arm so far.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

/// Sample one reward from `arm`. The value is always in [0,1] and
/// independent across calls (each call consumes a fresh ordinal).
pub fn pull_mab(env: &MabEnvironment, arm: usize, stream: &mut MabRewardStream) -> Result<f64> {
    if arm >= env.n_arms() {
        return Err(BanditError::InvalidArm {
            index: arm,
            count: env.n_arms(),
        });
    }
    let mu = env.arm_means[arm];
    let u = bits_to_unit(stream.next_bits(arm));
    Ok(match env.kind {
        RewardKind::Bernoulli => {
            if u < mu {
                1.0
            } else {
                0.0
            }
        }
        RewardKind::UniformAroundMean => {
            let w = mu.min(1.0 - mu);
            mu - w + 2.0 * w * u
        }
    })
}

/// Gap profile of a MAB instance: per-arm gaps Δ_j = max_a μ_a − μ_j and
/// the hardness sum H_Δ = Σ_{j: Δ_j > 0} 1/Δ_j.
pub fn gap_profile(env: &MabEnvironment) -> (Vec<f64>, f64) {
    let best = env.best_mean();
    let gaps: Vec<f64> = env.arm_means.iter().map(|&m| best - m).collect();
    let hardness = gaps.iter().filter(|&&d| d > 0.0).map(|&d| 1.0 / d).sum();
    (gaps, hardness)
}

/// The action set of a linear bandit. Infinite kinds are descriptions;
/// a finite net over them is materialized by the linear policies.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionSet {
    /// An explicit list of actions, each with ‖a‖₂ ≤ 1.
    Finite(Vec<DVector<f64>>),
    /// The Euclidean unit ball in dimension d.
    UnitBall { dim: usize },
    /// The scaled hypercube vertices {±1/√d}^d.
    HypercubeVertices { dim: usize },
}

impl ActionSet {
    pub fn dim(&self) -> usize {
        match self {
            ActionSet::Finite(v) => v.first().map_or(0, |a| a.len()),
            ActionSet::UnitBall { dim } | ActionSet::HypercubeVertices { dim } => *dim,
        }
    }
}

const NORM_SLACK: f64 = 1e-9;

/// A d-dimensional linear bandit: r = ⟨θ*, a⟩ + η with η zero-mean
/// σ-subgaussian, ‖θ*‖₂ ≤ 1, and every action inside the unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEnvironment {
    theta_star: DVector<f64>,
    action_set: ActionSet,
    noise_sigma: f64,
}

impl LinearEnvironment {
    pub fn new(theta_star: DVector<f64>, action_set: ActionSet, noise_sigma: f64) -> Result<Self> {
        if theta_star.norm() > 1.0 + NORM_SLACK {
            return Err(BanditError::OutOfRange {
                name: "‖theta_star‖",
                value: theta_star.norm(),
                range: "[0, 1]",
            });
        }
        if !(0.0..=1.0).contains(&noise_sigma) {
            return Err(BanditError::OutOfRange {
                name: "noise_sigma",
                value: noise_sigma,
                range: "[0, 1]",
            });
        }
        match &action_set {
            ActionSet::Finite(actions) => {
                if actions.is_empty() {
                    return Err(BanditError::DegenerateArmSet {
                        reason: "finite action set is empty".into(),
                    });
                }
                for a in actions {
                    if a.len() != theta_star.len() {
                        return Err(BanditError::InvalidConfig {
                            reason: format!(
                                "action dimension {} does not match theta dimension {}",
                                a.len(),
                                theta_star.len()
                            ),
                        });
                    }
                    if a.norm() > 1.0 + NORM_SLACK {
                        return Err(BanditError::InvalidAction {
                            reason: format!("‖a‖ = {} exceeds 1", a.norm()),
                        });
                    }
                }
            }
            ActionSet::UnitBall { dim } | ActionSet::HypercubeVertices { dim } => {
                if *dim != theta_star.len() {
                    return Err(BanditError::InvalidConfig {
                        reason: format!(
                            "action-set dimension {} does not match theta dimension {}",
                            dim,
                            theta_star.len()
                        ),
                    });
                }
            }
        }
        Ok(LinearEnvironment {
            theta_star,
            action_set,
            noise_sigma,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    pub fn action_set(&self) -> &ActionSet {
        &self.action_set
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    /// Mean reward of an action.
    pub fn mean_reward(&self, action: &DVector<f64>) -> f64 {
        self.theta_star.dot(action)
    }

    /// Best achievable mean reward over the action set (sup over infinite
    /// kinds): ‖θ*‖ on the unit ball, Σ|θ*_i|/√d on the hypercube
    /// vertices, max over the list for finite sets.
    pub fn best_mean_reward(&self) -> f64 {
        match &self.action_set {
            ActionSet::Finite(actions) => actions
                .iter()
                .map(|a| self.theta_star.dot(a))
                .fold(f64::NEG_INFINITY, f64::max),
            ActionSet::UnitBall { .. } => self.theta_star.norm(),
            ActionSet::HypercubeVertices { dim } => {
                self.theta_star.iter().map(|x| x.abs()).sum::<f64>() / (*dim as f64).sqrt()
            }
        }
    }
}

/// Per-execution noise randomness for a linear environment: Gaussian η_t
/// indexed by the global pull ordinal t.
#[derive(Debug, Clone)]
pub struct LinearNoiseStream {
    seed: u64,
    t: u64,
}

impl LinearNoiseStream {
    pub fn new(seed: u64) -> Self {
        LinearNoiseStream { seed, t: 0 }
    }

    /// Standard normal at the next global ordinal (Box–Muller over the
    /// reward-domain bit stream; both pair members recomputed, stateless
    /// apart from the ordinal).
    fn next_normal(&mut self) -> f64 {
        let t = self.t;
        self.t += 1;
        let pair = t / 2;
        let u1 = bits_to_unit_open(reward_bits(self.seed, 0, 2 * pair));
        let u2 = bits_to_unit(reward_bits(self.seed, 0, 2 * pair + 1));
        let r = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        if t % 2 == 0 {
            r * angle.cos()
        } else {
            r * angle.sin()
        }
    }

    pub fn pulls(&self) -> u64 {
        self.t
    }
}

/// Sample one linear reward: ⟨θ*, a⟩ + σ·z with z standard normal.
pub fn pull_linear(
    env: &LinearEnvironment,
    action: &DVector<f64>,
    stream: &mut LinearNoiseStream,
) -> Result<f64> {
    if action.norm() > 1.0 + NORM_SLACK {
        return Err(BanditError::InvalidAction {
            reason: format!("‖a‖ = {} exceeds 1", action.norm()),
        });
    }
    let noise = if env.noise_sigma == 0.0 {
        // Noiseless environments are pure functions of the action; don't
        // burn an ordinal so replays stay aligned with the pull count.
        stream.t += 1;
        0.0
    } else {
        env.noise_sigma * stream.next_normal()
    };
    Ok(env.theta_star.dot(action) + noise)
}

/// JSON-facing description of an environment, e.g.
/// `{"kind":"mab","means":[0.9,0.5]}` or
/// `{"kind":"linear","theta":[0.6,0.8],"actions":{"kind":"unit_ball","dim":2},"sigma":0.3}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentSpec {
    Mab {
        means: Vec<f64>,
        #[serde(default = "default_reward_kind")]
        distribution: RewardKind,
    },
    Linear {
        theta: Vec<f64>,
        actions: ActionSetSpec,
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
}

fn default_reward_kind() -> RewardKind {
    RewardKind::Bernoulli
}

fn default_sigma() -> f64 {
    1.0
}

/// JSON-facing description of an action set.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionSetSpec {
    Finite { vectors: Vec<Vec<f64>> },
    UnitBall { dim: usize },
    HypercubeVertices { dim: usize },
}

impl ActionSetSpec {
    pub fn build(&self) -> ActionSet {
        match self {
            ActionSetSpec::Finite { vectors } => ActionSet::Finite(
                vectors
                    .iter()
                    .map(|v| DVector::from_column_slice(v))
                    .collect(),
            ),
            ActionSetSpec::UnitBall { dim } => ActionSet::UnitBall { dim: *dim },
            ActionSetSpec::HypercubeVertices { dim } => {
                ActionSet::HypercubeVertices { dim: *dim }
            }
        }
    }
}

/// One of the two environment families, constructed and validated.
#[derive(Debug, Clone)]
pub enum Environment {
    Mab(MabEnvironment),
    Linear(LinearEnvironment),
}

impl EnvironmentSpec {
    pub fn build(&self) -> Result<Environment> {
        match self {
            EnvironmentSpec::Mab {
                means,
                distribution,
            } => Ok(Environment::Mab(MabEnvironment::new(
                means.clone(),
                *distribution,
            )?)),
            EnvironmentSpec::Linear {
                theta,
                actions,
                sigma,
            } => Ok(Environment::Linear(LinearEnvironment::new(
                DVector::from_column_slice(theta),
                actions.build(),
                *sigma,
            )?)),
        }
    }
}
