//! Reproducible linear bandits: batched elimination over a finite arm set
//! (with an oversampled G-optimal design), and the ε-net variant for
//! infinite action sets built on a statistical-query least-squares
//! estimator whose per-coordinate answers are snapped to a shared random
//! grid.
//!
//! Both policies draw every internal random bit — design directions and
//! elimination thresholds — from [`SharedSeed`] substreams, so two
//! executions holding the same seed replay the same decisions whenever
//! their reward noise leaves the estimates on the same side of each
//! threshold.

use nalgebra::{DMatrix, DVector};

use crate::environments::{pull_linear, ActionSet, LinearEnvironment, LinearNoiseStream};
use crate::error::{BanditError, Result};
use crate::harness::{BatchRecord, ExecutionTrace, RunSeeds, TraceOptions};
use crate::mab_policies::{beta_for, validate_rho, BatchSchedule};
use crate::optimal_design::{
    design_to_multiset, effective_support, frank_wolfe_design, ky_initialize, Design,
};
use crate::repro_sq::{repro_mean_from_stats, required_samples, SampleScale, SqRequest};
use crate::shared_randomness::{SharedSeed, StreamPurpose, SubstreamCursor, SubstreamKey};

/// Default ceiling on materialized net sizes.
pub const NET_POINT_CAP: u64 = 1_000_000;

/// Iteration budget handed to the Frank-Wolfe refinement inside a batch.
const DESIGN_ITERS: usize = 20_000;

/// Least-squares estimate together with the Gram matrix it inverted and
/// the per-distinct-arm pull counts behind it.
#[derive(Debug, Clone)]
pub struct LseResult {
    pub theta_hat: DVector<f64>,
    pub gram: DMatrix<f64>,
    pub pull_counts: Vec<(DVector<f64>, u64)>,
}

impl LseResult {
    /// Solves `V θ = Σ a·(sum of rewards on a)` from per-arm sufficient
    /// statistics `(arm, count, reward sum)`.
    pub fn from_arm_stats(stats: &[(DVector<f64>, u64, f64)]) -> Result<Self> {
        let Some(first) = stats.first() else {
            return Err(BanditError::InvalidConfig {
                reason: "least squares needs at least one pulled arm".into(),
            });
        };
        let d = first.0.len();
        let mut gram = DMatrix::zeros(d, d);
        let mut rhs = DVector::zeros(d);
        for (a, count, sum) in stats {
            if a.len() != d {
                return Err(BanditError::InvalidConfig {
                    reason: "pulled arms must share one dimension".into(),
                });
            }
            if *count > 0 {
                gram += (*count as f64) * a * a.transpose();
                rhs += *sum * a;
            }
        }
        let chol = gram.clone().cholesky().ok_or_else(|| BanditError::SingularDesign {
            reason: "pulled arms do not span the action space".into(),
        })?;
        let diag = chol.l().diagonal();
        let (dmin, dmax) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), x| (lo.min(*x), hi.max(*x)));
        if dmin > 0.0 && (dmax / dmin).powi(2) > 1e12 {
            log::warn!(
                "Gram matrix condition number ≈ {:.2e}; estimates may be inaccurate",
                (dmax / dmin).powi(2)
            );
        }
        let theta_hat = chol.solve(&rhs);
        Ok(LseResult {
            theta_hat,
            gram,
            pull_counts: stats.iter().map(|(a, c, _)| (a.clone(), *c)).collect(),
        })
    }
}

/// Plain least squares over raw `(arm, reward)` pulls. Exact when the
/// rewards are noiseless; duplicated pulls scale both sides and leave the
/// solution unchanged.
pub fn least_squares(pulls: &[(DVector<f64>, f64)]) -> Result<LseResult> {
    let mut stats: Vec<(DVector<f64>, u64, f64)> = Vec::new();
    for (a, r) in pulls {
        match stats.iter_mut().find(|(v, _, _)| {
            v.len() == a.len() && v.iter().zip(a.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
        }) {
            Some((_, c, s)) => {
                *c += 1;
                *s += r;
            }
            None => stats.push((a.clone(), 1, *r)),
        }
    }
    LseResult::from_arm_stats(&stats)
}

/// A deterministic η-cover of an action set.
#[derive(Debug, Clone)]
pub struct NetSpec {
    pub base: ActionSet,
    pub resolution: f64,
    pub points: Vec<DVector<f64>>,
}

/// The coarse net resolution `T^{-1/(4d+2)}` that keeps net sizes workable
/// at long horizons.
pub fn coarse_eta(horizon: u64, d: usize) -> f64 {
    (horizon as f64).powf(-1.0 / (4.0 * d as f64 + 2.0))
}

/// Builds an η-cover: finite sets pass through verbatim, hypercube-vertex
/// sets enumerate their corners, and the unit ball gets the axis lattice of
/// pitch η/√d clipped to the ball. Rounding each coordinate toward zero
/// moves a ball point by less than the pitch per axis, so every point of the
/// ball lies within η of a kept lattice point.
pub fn build_net(base: &ActionSet, eta: f64) -> Result<NetSpec> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(BanditError::OutOfRange {
            name: "eta",
            value: eta,
            range: "(0, 1]",
        });
    }
    let points = match base {
        ActionSet::Finite(arms) => arms.clone(),
        ActionSet::HypercubeVertices { dim } => {
            let d = *dim;
            if d >= 63 || (1u64 << d) > NET_POINT_CAP {
                return Err(BanditError::NetTooLarge {
                    points: 1u64.checked_shl(d as u32).unwrap_or(u64::MAX),
                    cap: NET_POINT_CAP,
                });
            }
            let scale = 1.0 / (d as f64).sqrt();
            (0..1u64 << d)
                .map(|mask| {
                    DVector::from_fn(d, |j, _| {
                        if mask >> j & 1 == 1 {
                            scale
                        } else {
                            -scale
                        }
                    })
                })
                .collect()
        }
        ActionSet::UnitBall { dim } => {
            let d = *dim;
            let pitch = eta / (d as f64).sqrt();
            let span = (1.0 / pitch).floor() as i64;
            let per_axis = 2 * span as u64 + 1;
            let projected = per_axis.checked_pow(d as u32).unwrap_or(u64::MAX);
            if projected > NET_POINT_CAP.saturating_mul(4) {
                // Even before clipping to the ball the lattice is hopeless.
                return Err(BanditError::NetTooLarge {
                    points: projected,
                    cap: NET_POINT_CAP,
                });
            }
            let mut points = Vec::new();
            let mut index = vec![-span; d];
            'outer: loop {
                let p = DVector::from_fn(d, |j, _| index[j] as f64 * pitch);
                if p.norm() <= 1.0 {
                    if points.len() as u64 >= NET_POINT_CAP {
                        return Err(BanditError::NetTooLarge {
                            points: projected,
                            cap: NET_POINT_CAP,
                        });
                    }
                    points.push(p);
                }
                for j in 0..d {
                    index[j] += 1;
                    if index[j] <= span {
                        continue 'outer;
                    }
                    index[j] = -span;
                }
                break;
            }
            points
        }
    };
    if points.is_empty() {
        return Err(BanditError::InvalidConfig {
            reason: "net construction produced no points".into(),
        });
    }
    Ok(NetSpec {
        base: base.clone(),
        resolution: eta,
        points,
    })
}

/// Statistical-query least squares: each core-arm mean is released through
/// the reproducible-mean primitive at accuracy `tau/(11d)` with failure
/// budget split `(rho/|C|, delta/(2|C|))` per arm, then
/// `θ_SQ = V⁻¹ Σ_a a·n_a·v(a)` with `V = Σ_a n_a·a·aᵀ`.
///
/// `stats[k]` is the `(reward sum, pull count)` pair for `design.support[k]`;
/// grid offsets come from the `(grid_offset, batch, k)` substream. Two paired
/// executions return bit-identical estimates whenever all `|C|` grid
/// roundings agree, which shared offsets make a probability ≥ 1−rho event.
pub fn reproducible_lse(
    design: &Design,
    stats: &[(f64, u64)],
    rho: f64,
    delta: f64,
    tau: f64,
    scale: SampleScale,
    seed: SharedSeed,
    batch: u32,
) -> Result<DVector<f64>> {
    reproducible_lse_detailed(design, stats, rho, delta, tau, scale, seed, batch)
        .map(|(theta, _)| theta)
}

/// As [`reproducible_lse`], but also returns the released per-arm values
/// `v(a)` for audit logs.
#[allow(clippy::too_many_arguments)]
pub fn reproducible_lse_detailed(
    design: &Design,
    stats: &[(f64, u64)],
    rho: f64,
    delta: f64,
    tau: f64,
    scale: SampleScale,
    seed: SharedSeed,
    batch: u32,
) -> Result<(DVector<f64>, Vec<f64>)> {
    if stats.len() != design.len() {
        return Err(BanditError::InvalidConfig {
            reason: format!(
                "got {} stat pairs for a core set of {}",
                stats.len(),
                design.len()
            ),
        });
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(BanditError::OutOfRange {
            name: "tau",
            value: tau,
            range: "(0, ∞)",
        });
    }
    if delta > rho {
        return Err(BanditError::InvalidRegime {
            reason: format!("delta {delta} must not exceed rho {rho}"),
        });
    }
    let d = design.dim();
    let cardinality = design.len() as f64;
    let mut values = Vec::with_capacity(design.len());
    let mut gram = DMatrix::zeros(d, d);
    let mut rhs = DVector::zeros(d);
    for (k, (a, (sum, count))) in design.support.iter().zip(stats).enumerate() {
        let req = SqRequest::new(
            tau / (11.0 * d as f64),
            rho / cardinality,
            delta / (2.0 * cardinality),
            SubstreamKey::new(StreamPurpose::GridOffset, batch, k as u32),
        )
        .with_scale(scale);
        let needed = required_samples(&req)?;
        if *count < needed {
            return Err(BanditError::InsufficientSamples {
                needed,
                got: *count,
            });
        }
        let v = repro_mean_from_stats(*sum, *count, &req, seed)?;
        values.push(v);
        gram += (*count as f64) * a * a.transpose();
        rhs += (*count as f64) * v * a;
    }
    let chol = gram.cholesky().ok_or_else(|| BanditError::SingularDesign {
        reason: "core set does not span the action space".into(),
    })?;
    Ok((chol.solve(&rhs), values))
}

fn finite_arms(env: &LinearEnvironment) -> Result<&[DVector<f64>]> {
    match env.action_set() {
        ActionSet::Finite(arms) => Ok(arms),
        other => Err(BanditError::InvalidAction {
            reason: format!("this policy needs a finite arm list, got {other:?}"),
        }),
    }
}

/// Maps each design-support vector back to the index of the bitwise-equal
/// entry of `pool` (whose elements `ids` names in the caller's space).
fn support_ids(design: &Design, pool: &[DVector<f64>], ids: &[usize]) -> Vec<usize> {
    design
        .support
        .iter()
        .map(|s| {
            let local = pool
                .iter()
                .position(|a| {
                    a.len() == s.len()
                        && a.iter().zip(s.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
                })
                .expect("design support always comes from the active pool");
            ids[local]
        })
        .collect()
}

fn fill_commit(
    env: &LinearEnvironment,
    action: &DVector<f64>,
    id: u32,
    horizon: u64,
    trace: &mut ExecutionTrace,
    noise: &mut LinearNoiseStream,
    opts: &TraceOptions,
) -> Result<()> {
    if opts.record_rewards {
        while (trace.arms.len() as u64) < horizon {
            let r = pull_linear(env, action, noise)?;
            trace.arms.push(id);
            trace.rewards.push(r);
        }
    } else {
        trace.arms.resize(horizon as usize, id);
    }
    Ok(())
}

/// Batched linear elimination over a finite arm set.
///
/// Per batch i the surviving arms get a fresh 2d-approximate design rounded
/// to `N_i = ⌈8βq^i⌉` pulls (β the reproducibility blow-up from
/// [`beta_for`]), a plain least-squares estimate over exactly this batch's
/// pulls, and a shared randomized threshold ε̄_i ~ Uni[ε_i/2, ε_i]; arms with
/// `⟨a, θ̂⟩ + ε̃_i < max ⟨a, θ̂⟩ − ε̄_i` are dropped and the leftover budget
/// commits to the final favorite.
pub fn run_alg3(
    env: &LinearEnvironment,
    horizon: u64,
    rho: f64,
    seeds: RunSeeds,
    opts: &TraceOptions,
) -> Result<ExecutionTrace> {
    validate_rho(rho)?;
    let arms = finite_arms(env)?;
    let k = arms.len();
    let d = env.dim();
    let mut trace = ExecutionTrace::with_capacity(horizon, opts);
    trace.actions = Some(arms.iter().map(|a| a.as_slice().to_vec()).collect());
    let mut noise = LinearNoiseStream::new(seeds.reward);
    if horizon == 0 {
        return Err(BanditError::HorizonTooSmall {
            horizon,
            reason: "the horizon must be positive".into(),
        });
    }
    if k == 1 {
        fill_commit(env, &arms[0], 0, horizon, &mut trace, &mut noise, opts)?;
        return Ok(trace);
    }

    let beta = beta_for(k, rho);
    let schedule = BatchSchedule::plan(horizon, beta)?;
    let q = schedule.growth;
    let log_arg = k as f64 * (horizon as f64) * (horizon as f64);
    let delta = 1.0 / log_arg;
    let ln_term = log_arg.ln();

    let mut active: Vec<usize> = (0..k).collect();
    let mut theta: Option<DVector<f64>> = None;
    let mut cursor = SubstreamCursor::new(seeds.shared);
    for i in 1..=schedule.batches {
        if active.len() <= 1 || trace.arms.len() as u64 >= horizon {
            break;
        }
        let active_vecs: Vec<DVector<f64>> = active.iter().map(|&a| arms[a].clone()).collect();
        let init = match ky_initialize(&active_vecs, seeds.shared, i) {
            Ok(init) => init,
            Err(BanditError::DegenerateArmSet { .. }) if i > 1 => break,
            Err(e) => return Err(e),
        };
        let solve = frank_wolfe_design(&active_vecs, init, 2.0 * d as f64, DESIGN_ITERS)?;
        if !solve.converged {
            log::warn!("batch {i}: design refinement stopped at g = {}", solve.achieved_g);
        }
        let qi = q.powi(i as i32);
        let eps = (d as f64 * ln_term / qi).sqrt();
        let eps_tilde = (d as f64 * ln_term / (beta as f64 * qi)).sqrt();
        let (counts, _) = design_to_multiset(&solve.design, eps_tilde, delta)?;
        let cost: u64 = counts.iter().sum();
        if cost > horizon - trace.arms.len() as u64 {
            break;
        }

        let ids = support_ids(&solve.design, &active_vecs, &active);
        let mut stats: Vec<(DVector<f64>, u64, f64)> = Vec::with_capacity(counts.len());
        for ((a, n), id) in solve.design.support.iter().zip(&counts).zip(&ids) {
            let mut sum = 0.0;
            for _ in 0..*n {
                let r = pull_linear(env, a, &mut noise)?;
                sum += r;
                trace.arms.push(*id as u32);
                if opts.record_rewards {
                    trace.rewards.push(r);
                }
            }
            stats.push((a.clone(), *n, sum));
        }
        let lse = LseResult::from_arm_stats(&stats)?;

        let eps_bar = cursor.draw_uniform(
            SubstreamKey::new(StreamPurpose::Threshold, i, 0),
            eps / 2.0,
            eps,
        );
        let values: Vec<(u32, f64)> = active
            .iter()
            .map(|&a| (a as u32, arms[a].dot(&lse.theta_hat)))
            .collect();
        let best = values
            .iter()
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        if opts.batch_log {
            trace.batch_log.push(BatchRecord::LinearElim {
                batch: i,
                eps,
                eps_tilde,
                eps_bar,
                achieved_g: solve.achieved_g,
                core_size: solve.design.len() as u32,
                new_pulls_total: cost,
                active_before: active.iter().map(|&a| a as u32).collect(),
                values: values.clone(),
            });
        }
        active = values
            .iter()
            .filter(|(_, v)| v + eps_tilde >= best - eps_bar)
            .map(|(a, _)| *a as usize)
            .collect();
        theta = Some(lse.theta_hat);
    }

    let commit = match &theta {
        Some(t) => {
            let mut best = active[0];
            for &a in &active {
                if arms[a].dot(t) > arms[best].dot(t) {
                    best = a;
                }
            }
            best
        }
        None => active[0],
    };
    fill_commit(
        env,
        &arms[commit].clone(),
        commit as u32,
        horizon,
        &mut trace,
        &mut noise,
        opts,
    )?;
    Ok(trace)
}

/// Net-based linear elimination for infinite (or large) action sets.
///
/// A deterministic η-net is built once; per batch the surviving net points
/// get a rebalanced 2d-approximate design, every core arm is pulled often
/// enough for the statistical-query estimator at accuracy `ε_i/(11d)` and
/// failure split `(rho/(dB)/|C|, δ/(2|C|))`, and net points falling `2ε_i`
/// below the estimated leader are dropped. A batch whose core pulls no
/// longer fit the remaining budget ends the elimination phase and the
/// favorite absorbs the rest of the horizon.
///
/// `even_split` pulls every core arm `⌈M_i⌉/|C_i|` times instead of
/// proportionally to its design weight (both satisfy the estimator's
/// per-arm requirement; the proportional default puts extra mass where the
/// design wants it).
#[allow(clippy::too_many_arguments)]
pub fn run_alg4(
    env: &LinearEnvironment,
    horizon: u64,
    rho: f64,
    seeds: RunSeeds,
    net_eta: Option<f64>,
    even_split: bool,
    opts: &TraceOptions,
) -> Result<ExecutionTrace> {
    validate_rho(rho)?;
    let d = env.dim();
    if horizon == 0 {
        return Err(BanditError::HorizonTooSmall {
            horizon,
            reason: "the horizon must be positive".into(),
        });
    }
    let eta = net_eta.unwrap_or_else(|| coarse_eta(horizon, d));
    let net = build_net(env.action_set(), eta)?;
    let points = &net.points;
    let mut trace = ExecutionTrace::with_capacity(horizon, opts);
    trace.actions = Some(points.iter().map(|p| p.as_slice().to_vec()).collect());
    let mut noise = LinearNoiseStream::new(seeds.reward);
    if points.len() == 1 {
        fill_commit(env, &points[0].clone(), 0, horizon, &mut trace, &mut noise, opts)?;
        return Ok(trace);
    }

    let schedule = BatchSchedule::plan(horizon, 1)?;
    let b = schedule.batches;
    let q = schedule.growth;
    let delta = 1.0 / (2.0 * points.len() as f64 * (horizon as f64) * (horizon as f64));
    let rho_batch = rho / (d as f64 * b as f64);
    let scale = SampleScale::Subgaussian(env.noise_sigma());
    let ln_t = (horizon as f64).ln();

    let mut active: Vec<usize> = (0..points.len()).collect();
    let mut theta: Option<DVector<f64>> = None;
    for i in 1..=b {
        if active.len() <= 1 || trace.arms.len() as u64 >= horizon {
            break;
        }
        let active_vecs: Vec<DVector<f64>> = active.iter().map(|&a| points[a].clone()).collect();
        let init = match ky_initialize(&active_vecs, seeds.shared, i) {
            Ok(init) => init,
            Err(BanditError::DegenerateArmSet { .. }) if i > 1 => break,
            Err(e) => return Err(e),
        };
        let solve = frank_wolfe_design(&active_vecs, init, 2.0 * d as f64, DESIGN_ITERS)?;
        let design = effective_support(&solve.design);
        let core = design.len();
        let eps = d as f64 * (ln_t / q.powi(i as i32)).sqrt();

        let probe = SqRequest::new(
            eps / (11.0 * d as f64),
            rho_batch / core as f64,
            delta / (2.0 * core as f64),
            SubstreamKey::new(StreamPurpose::GridOffset, i, 0),
        )
        .with_scale(scale);
        let per_arm = required_samples(&probe)?;
        let blow_up = per_arm as u128 * core as u128;
        let counts: Vec<u64> = if even_split {
            vec![per_arm; core]
        } else {
            design
                .weights
                .iter()
                .map(|w| ((w * blow_up as f64).ceil() as u64).max(per_arm))
                .collect()
        };
        let cost: u128 = counts.iter().map(|&c| c as u128).sum();
        if cost > (horizon - trace.arms.len() as u64) as u128 {
            break;
        }
        let cost = cost as u64;

        let ids = support_ids(&design, &active_vecs, &active);
        let mut stats: Vec<(f64, u64)> = Vec::with_capacity(core);
        for ((a, n), id) in design.support.iter().zip(&counts).zip(&ids) {
            let mut sum = 0.0;
            for _ in 0..*n {
                let r = pull_linear(env, a, &mut noise)?;
                sum += r;
                trace.arms.push(*id as u32);
                if opts.record_rewards {
                    trace.rewards.push(r);
                }
            }
            stats.push((sum, *n));
        }
        let (theta_sq, released) = reproducible_lse_detailed(
            &design,
            &stats,
            rho_batch,
            delta,
            eps,
            scale,
            seeds.shared,
            i,
        )?;

        let values: Vec<(u32, f64)> = active
            .iter()
            .map(|&a| (a as u32, points[a].dot(&theta_sq)))
            .collect();
        let best = values
            .iter()
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        if opts.batch_log {
            trace.batch_log.push(BatchRecord::NetElim {
                batch: i,
                eps,
                achieved_g: solve.achieved_g,
                core_size: core as u32,
                new_pulls_total: cost,
                active_before: active.iter().map(|&a| a as u32).collect(),
                core_values: ids
                    .iter()
                    .zip(&released)
                    .map(|(id, v)| (*id as u32, *v))
                    .collect(),
            });
        }
        active = values
            .iter()
            .filter(|(_, v)| *v >= best - 2.0 * eps)
            .map(|(a, _)| *a as usize)
            .collect();
        theta = Some(theta_sq);
    }

    let commit = match &theta {
        Some(t) => {
            let mut best = active[0];
            for &a in &active {
                if points[a].dot(t) > points[best].dot(t) {
                    best = a;
                }
            }
            best
        }
        None => active[0],
    };
    fill_commit(
        env,
        &points[commit].clone(),
        commit as u32,
        horizon,
        &mut trace,
        &mut noise,
        opts,
    )?;
    Ok(trace)
}
