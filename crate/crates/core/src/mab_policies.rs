//! The K-armed policies: an explore-then-commit baseline with a known gap,
//! grid-elimination over reproducible mean estimates, and random-threshold
//! elimination with a pull blow-up.
//!
//! All three run a batched schedule against a horizon T and emit a trace of
//! exactly T pulls. Reproducibility comes from different mechanisms: ETC
//! is deterministic given its exploration length; grid elimination feeds
//! every decision through the reproducible mean estimator; random-threshold
//! elimination pulls each arm β times more than the base schedule and
//! compares plain empirical means against a shared random threshold, so
//! paired executions see estimates far tighter than the threshold's scale
//! and decide identically unless a ρ-rare boundary crossing occurs.

use crate::environments::{pull_mab, MabEnvironment, MabRewardStream};
use crate::error::{BanditError, Result};
use crate::harness::{BatchRecord, ExecutionTrace, RunSeeds, TraceOptions};
use crate::repro_sq::{repro_mean_from_stats, required_samples, SqRequest};
use crate::shared_randomness::{StreamPurpose, SubstreamCursor, SubstreamKey};

/// Failure probabilities are clamped below by this to keep log arguments
/// sane at extreme horizons.
pub(crate) const DELTA_FLOOR: f64 = 1e-12;

/// Floor that forgives floating-point droop: K²/ρ² and q^i are
/// mathematically integral for clean inputs (K = 10, ρ = 0.1 gives 10⁴)
/// but can evaluate a few ulps under the integer; nudge by a relative
/// epsilon before flooring so the mathematical value wins.
#[inline]
pub(crate) fn guarded_floor(x: f64) -> f64 {
    (x * (1.0 + 8.0 * f64::EPSILON)).floor()
}

/// The batched pull schedule shared by the elimination policies: B batches
/// with per-arm base pulls ⌊q^i⌋ in batch i, where q = T^(1/B), optionally
/// blown up by a factor β.
#[derive(Debug, Clone)]
pub struct BatchSchedule {
    pub horizon: u64,
    /// Number of batches B = max(1, ⌊ln T⌋). The floor (rather than a
    /// ceiling) keeps q = T^(1/B) at or above e, so per-batch base pulls
    /// ⌊q^i⌋ grow geometrically from ⌊q⌋ ≥ 2.
    pub batches: u32,
    /// Growth rate q = T^(1/B) > 1.
    pub growth: f64,
    /// Pull blow-up: 1 for grid elimination, ⌊max{K²/ρ², 2304}⌋ for
    /// random-threshold elimination.
    pub beta: u64,
    /// c_i = Σ_{j≤i} ⌊q^j⌋ for i = 1..=B (index i−1): cumulative per-arm
    /// base pulls, strictly increasing.
    pub cumulative_base: Vec<u64>,
    /// Budget at the start of the run; policies consume from a copy and
    /// break as soon as a batch no longer fits, so total pulls never
    /// exceed T.
    pub remaining_budget: u64,
}

impl BatchSchedule {
    pub fn plan(horizon: u64, beta: u64) -> Result<Self> {
        if horizon < 2 {
            return Err(BanditError::HorizonTooSmall {
                horizon,
                reason: "batched schedules need T ≥ 2".into(),
            });
        }
        let batches = ((horizon as f64).ln().floor() as u32).max(1);
        let growth = (horizon as f64).powf(1.0 / batches as f64);
        let mut cumulative_base = Vec::with_capacity(batches as usize);
        let mut c = 0u64;
        for i in 1..=batches {
            c += guarded_floor(growth.powi(i as i32)) as u64;
            cumulative_base.push(c);
        }
        Ok(BatchSchedule {
            horizon,
            batches,
            growth,
            beta,
            cumulative_base,
            remaining_budget: horizon,
        })
    }

    /// Base pulls ⌊q^i⌋ added in batch `i` (1-based).
    pub fn base_increment(&self, i: u32) -> u64 {
        let idx = (i - 1) as usize;
        if idx == 0 {
            self.cumulative_base[0]
        } else {
            self.cumulative_base[idx] - self.cumulative_base[idx - 1]
        }
    }
}

/// Pull blow-up for random-threshold elimination: ⌊max{K²/ρ², 2304}⌋.
pub fn beta_for(n_arms: usize, rho: f64) -> u64 {
    let k = n_arms as f64;
    guarded_floor((k * k / (rho * rho)).max(2304.0)) as u64
}

/// The three confidence radii of one random-threshold batch.
#[derive(Debug, Clone, Copy)]
pub struct ConfidenceRadii {
    /// U_i = √(2·ln(2KTB)/c_i): the radius at base pull counts.
    pub u: f64,
    /// Ũ_i = √(2·ln(2KTB)/(β·c_i)) = U_i/√β: the radius at actual
    /// (blown-up) pull counts.
    pub u_tilde: f64,
    /// Ū_i ~ Uni[U_i/2, U_i], drawn from the shared threshold substream.
    pub u_bar: f64,
}

/// Elimination bookkeeping for one run.
#[derive(Debug, Clone)]
pub struct EliminationState {
    /// Still-active arm identifiers, ascending; never empty.
    pub active: Vec<u32>,
    /// Latest estimate per arm (NaN before the first batch touches it).
    pub estimates: Vec<f64>,
    /// Total pulls per arm so far.
    pub pull_counts: Vec<u64>,
    /// 1-based index of the batch being processed.
    pub batch_index: u32,
}

impl EliminationState {
    fn new(n_arms: usize) -> Self {
        EliminationState {
            active: (0..n_arms as u32).collect(),
            estimates: vec![f64::NAN; n_arms],
            pull_counts: vec![0; n_arms],
            batch_index: 0,
        }
    }

    fn best_active_estimate(&self) -> f64 {
        self.active
            .iter()
            .map(|&a| self.estimates[a as usize])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Active arm with the highest estimate, lowest index on ties. Falls
    /// back to the lowest-index active arm when nothing was estimated yet.
    fn empirical_best(&self) -> u32 {
        let mut best = self.active[0];
        let mut best_val = f64::NEG_INFINITY;
        for &a in &self.active {
            let v = self.estimates[a as usize];
            if v.is_finite() && v > best_val {
                best_val = v;
                best = a;
            }
        }
        best
    }
}

/// One random-threshold elimination step: remove exactly the active arms
/// with μ̂_a + Ũ_i < (max over active μ̂) − Ū_i. The empirical-max arm can
/// never satisfy the strict inequality, so the active set stays nonempty.
pub fn eliminate_alg2(state: &EliminationState, radii: &ConfidenceRadii) -> Vec<u32> {
    let best = state.best_active_estimate();
    state
        .active
        .iter()
        .copied()
        .filter(|&a| state.estimates[a as usize] + radii.u_tilde >= best - radii.u_bar)
        .collect()
}

/// Exploration pulls per arm for the known-gap baseline:
/// m = ⌈(4/Δ²)·ln(1/ρ)⌉.
pub fn etc_exploration_pulls(gap: f64, rho: f64) -> u64 {
    ((4.0 / (gap * gap)) * (1.0 / rho).ln()).ceil() as u64
}

pub(crate) fn validate_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(BanditError::OutOfRange {
            name: "rho",
            value: rho,
            range: "(0, 1]",
        });
    }
    Ok(())
}

/// Explore-then-commit with a known minimal gap Δ: round-robin each arm
/// m = ⌈(4/Δ²)·ln(1/ρ)⌉ times, then commit to the empirical best (lowest
/// index on ties) for the remaining T − mK rounds.
///
/// Uses no internal randomness at all: with the gap known, a deterministic
/// exploration length already makes paired executions agree whenever both
/// identify the best arm, which Hoeffding gives with probability ≥ 1 − ρ.
pub fn run_etc(
    env: &MabEnvironment,
    horizon: u64,
    rho: f64,
    gap: f64,
    seeds: RunSeeds,
    opts: &TraceOptions,
) -> Result<ExecutionTrace> {
    validate_rho(rho)?;
    if !(gap > 0.0 && gap <= 1.0) {
        return Err(BanditError::OutOfRange {
            name: "gap",
            value: gap,
            range: "(0, 1]",
        });
    }
    let k = env.n_arms() as u64;
    let m = etc_exploration_pulls(gap, rho);
    if m * k > horizon {
        return Err(BanditError::HorizonTooSmall {
            horizon,
            reason: format!("exploration needs {} pulls for {} arms", m * k, k),
        });
    }
    let mut stream = MabRewardStream::new(seeds.reward, env.n_arms());
    let mut trace = ExecutionTrace::with_capacity(horizon, opts);
    let mut sums = vec![0.0; env.n_arms()];
    for _ in 0..m {
        for arm in 0..env.n_arms() {
            let r = pull_mab(env, arm, &mut stream)?;
            sums[arm] += r;
            trace.arms.push(arm as u32);
            if opts.record_rewards {
                trace.rewards.push(r);
            }
        }
    }
    let mut best = 0usize;
    for arm in 1..env.n_arms() {
        if sums[arm] > sums[best] {
            best = arm;
        }
    }
    commit_remaining(env, best as u32, horizon, &mut trace, &mut stream, opts)?;
    Ok(trace)
}

/// Fill the trace up to the horizon with pulls of the committed arm.
/// Rewards in this phase influence nothing, so they are only sampled when
/// the caller asked to record them.
fn commit_remaining(
    env: &MabEnvironment,
    arm: u32,
    horizon: u64,
    trace: &mut ExecutionTrace,
    stream: &mut MabRewardStream,
    opts: &TraceOptions,
) -> Result<()> {
    let remaining = horizon as usize - trace.arms.len();
    if opts.record_rewards {
        for _ in 0..remaining {
            let r = pull_mab(env, arm as usize, stream)?;
            trace.arms.push(arm);
            trace.rewards.push(r);
        }
    } else {
        trace.arms.resize(horizon as usize, arm);
    }
    Ok(())
}

/// Grid elimination: per batch, a reproducible mean estimate per active
/// arm at accuracy τ_i = min{1, √(ln(2KTB)/c_i)}, then eliminate
/// everything strictly more than 2τ_i below the leader.
///
/// Each estimate call carries ρ' = ρ/(KB) and δ = 1/(2KTB), so the run
/// makes at most KB estimator calls and the per-call reproducibility
/// losses sum to ρ. Arms are pulled exactly as many times as the
/// estimator's own sample precondition demands for the batch's τ_i
/// (cumulatively, never discarding old samples), and the run breaks to
/// the commit phase once the next batch's pulls no longer fit the budget.
pub fn run_alg1(
    env: &MabEnvironment,
    horizon: u64,
    rho: f64,
    seeds: RunSeeds,
    opts: &TraceOptions,
) -> Result<ExecutionTrace> {
    validate_rho(rho)?;
    let k = env.n_arms() as u64;
    if horizon < k {
        return Err(BanditError::HorizonTooSmall {
            horizon,
            reason: format!("need at least one pull per arm, K = {k}"),
        });
    }
    let plan = BatchSchedule::plan(horizon, 1)?;
    let b = plan.batches as u64;
    let log_arg = 2.0 * k as f64 * horizon as f64 * b as f64;
    let delta = (1.0 / log_arg).max(DELTA_FLOOR);
    let rho_prime = rho / (k * b) as f64;

    let mut stream = MabRewardStream::new(seeds.reward, env.n_arms());
    let mut trace = ExecutionTrace::with_capacity(horizon, opts);
    let mut state = EliminationState::new(env.n_arms());
    let mut sums = vec![0.0; env.n_arms()];
    let mut remaining = horizon;
    let mut target_per_arm = 0u64;

    for i in 1..=plan.batches {
        state.batch_index = i;
        let c_i = plan.cumulative_base[(i - 1) as usize];
        let tau = (log_arg.ln() / c_i as f64).sqrt().min(1.0);
        let probe = SqRequest::new(
            tau,
            rho_prime,
            delta,
            SubstreamKey::new(StreamPurpose::GridOffset, i, 0),
        );
        let needed = required_samples(&probe)?;
        let target = needed.max(target_per_arm);
        let increment = target - target_per_arm;
        if increment * state.active.len() as u64 > remaining {
            break;
        }
        for &a in &state.active {
            for _ in 0..increment {
                let r = pull_mab(env, a as usize, &mut stream)?;
                sums[a as usize] += r;
                state.pull_counts[a as usize] += 1;
                trace.arms.push(a);
                if opts.record_rewards {
                    trace.rewards.push(r);
                }
            }
        }
        remaining -= increment * state.active.len() as u64;
        target_per_arm = target;

        for &a in &state.active {
            let req = SqRequest::new(
                tau,
                rho_prime,
                delta,
                SubstreamKey::new(StreamPurpose::GridOffset, i, a),
            );
            state.estimates[a as usize] = repro_mean_from_stats(
                sums[a as usize],
                state.pull_counts[a as usize],
                &req,
                seeds.shared,
            )?;
        }
        let active_before: Vec<u32> = state.active.clone();
        let best = state.best_active_estimate();
        state
            .active
            .retain(|&a| state.estimates[a as usize] >= best - 2.0 * tau);
        if opts.batch_log {
            trace.batch_log.push(BatchRecord::GridMab {
                batch: i,
                tau,
                new_pulls_per_arm: increment,
                estimates: active_before
                    .iter()
                    .map(|&a| (a, state.estimates[a as usize]))
                    .collect(),
                active_before,
            });
        }
    }

    let committed = state.empirical_best();
    commit_remaining(env, committed, horizon, &mut trace, &mut stream, opts)?;
    Ok(trace)
}

/// Random-threshold elimination: per batch, β⌊q^i⌋ pulls of every active
/// arm, plain empirical means, and the rule
/// μ̂_a + Ũ_i < max μ̂ − Ū_i with Ū_i ~ Uni[U_i/2, U_i] drawn from the
/// shared substream (threshold, i, 0) — once per executed batch, whether
/// or not the batch evaluates any elimination, so paired executions stay
/// aligned on internal draws even if their active sets momentarily differ.
pub fn run_alg2(
    env: &MabEnvironment,
    horizon: u64,
    rho: f64,
    seeds: RunSeeds,
    opts: &TraceOptions,
) -> Result<ExecutionTrace> {
    validate_rho(rho)?;
    let k = env.n_arms() as u64;
    if horizon < k {
        return Err(BanditError::HorizonTooSmall {
            horizon,
            reason: format!("need at least one pull per arm, K = {k}"),
        });
    }
    let beta = beta_for(env.n_arms(), rho);
    let plan = BatchSchedule::plan(horizon, beta)?;
    if beta * plan.base_increment(1) * k > horizon {
        return Err(BanditError::HorizonTooSmall {
            horizon,
            reason: format!(
                "first batch needs β·⌊q⌋·K = {} pulls",
                beta * plan.base_increment(1) * k
            ),
        });
    }
    let b = plan.batches as u64;
    let log_term = (2.0 * k as f64 * horizon as f64 * b as f64).ln();

    let mut cursor = SubstreamCursor::new(seeds.shared);
    let mut stream = MabRewardStream::new(seeds.reward, env.n_arms());
    let mut trace = ExecutionTrace::with_capacity(horizon, opts);
    let mut state = EliminationState::new(env.n_arms());
    let mut sums = vec![0.0; env.n_arms()];
    let mut remaining = horizon;
    let mut c_executed = 0u64;

    for i in 1..=plan.batches {
        state.batch_index = i;
        let pulls_per_arm = beta * plan.base_increment(i);
        if pulls_per_arm * state.active.len() as u64 > remaining {
            break;
        }
        for &a in &state.active {
            for _ in 0..pulls_per_arm {
                let r = pull_mab(env, a as usize, &mut stream)?;
                sums[a as usize] += r;
                state.pull_counts[a as usize] += 1;
                trace.arms.push(a);
                if opts.record_rewards {
                    trace.rewards.push(r);
                }
            }
        }
        remaining -= pulls_per_arm * state.active.len() as u64;
        c_executed += plan.base_increment(i);

        for &a in &state.active {
            state.estimates[a as usize] =
                sums[a as usize] / state.pull_counts[a as usize] as f64;
        }
        let u = (2.0 * log_term / c_executed as f64).sqrt();
        let u_tilde = (2.0 * log_term / (beta * c_executed) as f64).sqrt();
        let u_bar = cursor.draw_uniform(
            SubstreamKey::new(StreamPurpose::Threshold, i, 0),
            u / 2.0,
            u,
        );
        let radii = ConfidenceRadii { u, u_tilde, u_bar };

        let active_before = state.active.clone();
        let best = state.best_active_estimate();
        // Bad region around the elimination boundary; an arm whose
        // estimate lands here is the one that can flip the decision.
        let bad_lo = best - u - 5.0 * u_tilde;
        let bad_hi = best - u / 2.0 + 3.0 * u_tilde;
        let bad_event_arms: Vec<u32> = state
            .active
            .iter()
            .copied()
            .filter(|&a| {
                let e = state.estimates[a as usize];
                (bad_lo..=bad_hi).contains(&e)
            })
            .collect();
        state.active = eliminate_alg2(&state, &radii);
        if opts.batch_log {
            trace.batch_log.push(BatchRecord::ThresholdMab {
                batch: i,
                u,
                u_tilde,
                u_bar,
                new_pulls_per_arm: pulls_per_arm,
                estimates: active_before
                    .iter()
                    .map(|&a| (a, state.estimates[a as usize]))
                    .collect(),
                active_before,
                bad_event_arms,
            });
        }
    }

    let committed = state.empirical_best();
    commit_remaining(env, committed, horizon, &mut trace, &mut stream, opts)?;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det_env() -> MabEnvironment {
        MabEnvironment::bernoulli(vec![1.0, 0.0]).unwrap()
    }

    #[test]
    fn batch_plan_small_horizon() {
        // T = 55 (≈ e⁴): B = 4, q = 55^(1/4) ≈ 2.72, base pulls 2, 7, 20.
        let plan = BatchSchedule::plan(55, 1).unwrap();
        assert_eq!(plan.batches, 4);
        assert!((plan.growth - 2.7233).abs() < 1e-3, "q = {}", plan.growth);
        assert_eq!(plan.base_increment(1), 2);
        assert_eq!(plan.base_increment(2), 7);
        assert_eq!(plan.base_increment(3), 20);
        assert_eq!(&plan.cumulative_base[..3], &[2, 9, 29]);
        // Cumulative pulls strictly increase.
        for w in plan.cumulative_base.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn batch_plan_growth_rate_stays_above_e_ish() {
        // With B = ⌊ln T⌋, q = T^(1/B) ∈ [e, e²) territory, so ⌊q⌋ ≥ 2.
        for t in [55u64, 100, 1000, 10_000, 1_000_000, 10_000_000] {
            let plan = BatchSchedule::plan(t, 1).unwrap();
            assert!(plan.growth >= std::f64::consts::E - 1e-9, "q = {}", plan.growth);
            assert!(plan.base_increment(1) >= 2);
        }
    }

    #[test]
    fn beta_values() {
        // max{K²/ρ², 2304}: small instances sit on the constant floor.
        assert_eq!(beta_for(2, 1.0), 2304);
        // K = 10, ρ = 0.1 → K²/ρ² = 10⁴ dominates the floor.
        assert_eq!(beta_for(10, 0.1), 10_000);
        assert_eq!(beta_for(2, 0.5), 2304);
        assert_eq!(beta_for(100, 0.1), 1_000_000);
    }

    #[test]
    fn etc_exploration_formula() {
        // Δ = 1, ρ = e⁻¹ → m = 4; Δ = 0.8, ρ = 0.1 → m = 15.
        assert_eq!(etc_exploration_pulls(1.0, (-1.0f64).exp()), 4);
        assert_eq!(etc_exploration_pulls(0.8, 0.1), 15);
    }

    #[test]
    fn etc_round_robin_then_commit() {
        let env = det_env();
        let t = 100;
        let trace = run_etc(
            &env,
            t,
            (-1.0f64).exp(),
            1.0,
            RunSeeds::new(1, 2),
            &TraceOptions::full(),
        )
        .unwrap();
        assert_eq!(trace.arms.len(), t as usize);
        assert_eq!(trace.rewards.len(), t as usize);
        // m = 4 round-robin passes over both arms...
        assert_eq!(&trace.arms[..8], &[0, 1, 0, 1, 0, 1, 0, 1]);
        // ...then committed to the deterministic best arm in every round.
        assert!(trace.arms[8..].iter().all(|&a| a == 0));
    }

    #[test]
    fn etc_horizon_too_small() {
        let env = det_env();
        assert!(matches!(
            run_etc(&env, 7, (-1.0f64).exp(), 1.0, RunSeeds::new(1, 2), &TraceOptions::arms_only()),
            Err(BanditError::HorizonTooSmall { .. })
        ));
    }

    #[test]
    fn eliminate_alg2_rule_evaluation() {
        let mut state = EliminationState::new(2);
        state.estimates = vec![0.9, 0.5];
        let radii = ConfidenceRadii {
            u: 0.2,
            u_tilde: 0.05,
            u_bar: 0.1,
        };
        // 0.5 + 0.05 < 0.9 − 0.1 → arm 1 removed.
        assert_eq!(eliminate_alg2(&state, &radii), vec![0]);

        state.estimates = vec![0.9, 0.78];
        // 0.78 + 0.05 = 0.83 ≥ 0.8 → no removal.
        assert_eq!(eliminate_alg2(&state, &radii), vec![0, 1]);
    }

    #[test]
    fn eliminate_alg2_keeps_equal_estimates_and_the_max() {
        let mut state = EliminationState::new(4);
        state.estimates = vec![0.6; 4];
        let radii = ConfidenceRadii {
            u: 0.01,
            u_tilde: 0.001,
            u_bar: 0.005,
        };
        assert_eq!(eliminate_alg2(&state, &radii), vec![0, 1, 2, 3]);

        // The empirical max survives any radii.
        state.estimates = vec![0.1, 0.95, 0.2, 0.9];
        for (u_tilde, u_bar) in [(1e-9, 1e-9), (0.0, 0.0), (0.3, 0.2)] {
            let radii = ConfidenceRadii { u: 1.0, u_tilde, u_bar };
            let kept = eliminate_alg2(&state, &radii);
            assert!(kept.contains(&1));
        }
    }

    #[test]
    fn alg1_single_arm_constant_trace() {
        let env = MabEnvironment::bernoulli(vec![0.4]).unwrap();
        let t = 300;
        let a = run_alg1(&env, t, 0.5, RunSeeds::new(9, 1), &TraceOptions::arms_only()).unwrap();
        let b = run_alg1(&env, t, 0.5, RunSeeds::new(9, 2), &TraceOptions::arms_only()).unwrap();
        assert_eq!(a.arms.len(), t as usize);
        assert!(a.arms.iter().all(|&x| x == 0));
        assert_eq!(a.first_divergence(&b), None);
    }

    #[test]
    fn alg1_deterministic_env_is_always_reproducible() {
        // Zero-variance rewards: paired executions are identical for any
        // seeds, and the committed arm is the true best.
        let env = det_env();
        let t = 1_000_000;
        for shared in [3u64, 17, 99] {
            let a = run_alg1(&env, t, 0.4, RunSeeds::new(shared, 1000), &TraceOptions::arms_only())
                .unwrap();
            let b = run_alg1(&env, t, 0.4, RunSeeds::new(shared, 2000), &TraceOptions::arms_only())
                .unwrap();
            assert_eq!(a.first_divergence(&b), None);
            assert_eq!(*a.arms.last().unwrap(), 0);
        }
    }

    #[test]
    fn alg1_trace_is_exactly_t_with_valid_arms() {
        let env = MabEnvironment::bernoulli(vec![0.9, 0.5, 0.2]).unwrap();
        let t = 5_000;
        let trace = run_alg1(&env, t, 0.8, RunSeeds::new(5, 6), &TraceOptions::arms_only()).unwrap();
        assert_eq!(trace.arms.len(), t as usize);
        assert!(trace.arms.iter().all(|&a| (a as usize) < 3));
    }

    #[test]
    fn alg2_deterministic_env_eliminates_on_schedule() {
        // μ = (1, 0), T = 10⁶, ρ = 1 → β = 2304, B = 13, q ≈ 2.894,
        // base pulls 2, 8, 24, 70. At batch 4 the cumulative base count is
        // c₄ = 104, so U₄ = √(2·ln(2KTB)/104) ≈ 0.585 and even the largest
        // possible threshold Ū₄ = U₄ leaves 0 + Ũ₄ < 1 − Ū₄: the bad arm
        // is eliminated at batch 4 in every execution. Earlier batches
        // can't eliminate for every draw (U₃ ≈ 1.05 > 1 can exceed the
        // gap), and batch 4's verdict never depends on the draw.
        let env = det_env();
        let t = 1_000_000;
        let opts = TraceOptions {
            record_rewards: false,
            batch_log: true,
        };
        for shared in [0u64, 8, 21, 34] {
            let a = run_alg2(&env, t, 1.0, RunSeeds::new(shared, 50), &opts).unwrap();
            let b = run_alg2(&env, t, 1.0, RunSeeds::new(shared, 60), &opts).unwrap();
            assert_eq!(a.first_divergence(&b), None);
            assert_eq!(a.arms.len(), t as usize);
            // Arm 1 gone by the end of batch 4: count its pulls.
            let arm1_pulls = a.arms.iter().filter(|&&x| x == 1).count() as u64;
            assert!(
                arm1_pulls <= 2304 * 104,
                "arm 1 pulled {arm1_pulls} times, expected ≤ β·c₄"
            );
            // And the last batch record with both arms active is ≤ 4.
            let last_two_arm_batch = a
                .batch_log
                .iter()
                .filter_map(|r| match r {
                    BatchRecord::ThresholdMab {
                        batch,
                        active_before,
                        ..
                    } if active_before.len() == 2 => Some(*batch),
                    _ => None,
                })
                .max()
                .unwrap();
            assert!(last_two_arm_batch <= 4);
            assert_eq!(*a.arms.last().unwrap(), 0);
        }
    }

    #[test]
    fn alg2_horizon_too_small() {
        let env = det_env();
        // β·⌊q⌋·K = 2304·3·2 ≫ 1000.
        assert!(matches!(
            run_alg2(&env, 1000, 1.0, RunSeeds::new(1, 2), &TraceOptions::arms_only()),
            Err(BanditError::HorizonTooSmall { .. })
        ));
    }

    #[test]
    fn alg2_single_arm_constant_trace() {
        let env = MabEnvironment::bernoulli(vec![0.7]).unwrap();
        let t = 50_000;
        let a = run_alg2(&env, t, 1.0, RunSeeds::new(4, 1), &TraceOptions::arms_only()).unwrap();
        let b = run_alg2(&env, t, 1.0, RunSeeds::new(4, 2), &TraceOptions::arms_only()).unwrap();
        assert!(a.arms.iter().all(|&x| x == 0));
        assert_eq!(a.first_divergence(&b), None);
    }

    #[test]
    fn rho_validation() {
        let env = det_env();
        for bad in [0.0, -0.5, 1.5] {
            assert!(run_alg1(&env, 100, bad, RunSeeds::new(0, 0), &TraceOptions::arms_only()).is_err());
            assert!(run_alg2(&env, 100_000, bad, RunSeeds::new(0, 0), &TraceOptions::arms_only()).is_err());
            assert!(
                run_etc(&env, 100, bad, 1.0, RunSeeds::new(0, 0), &TraceOptions::arms_only()).is_err()
            );
        }
    }
}
