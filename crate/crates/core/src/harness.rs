//! The experiment driver: paired executions, reproducibility-rate
//! estimation with one-sided certification bounds, pseudo-regret curves,
//! parameter sweeps, and CSV emission.
//!
//! A *paired run* executes one policy twice with the same internal
//! randomness ξ (the `SharedSeed`) and two independent reward seeds, then
//! compares the two arm sequences element-wise — exact equality on arm
//! identifiers, never on rewards. The fraction of identical pairs estimates
//! the policy's reproducibility, certified from below with a
//! Clopper–Pearson bound.

use std::io;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::environments::{Environment, EnvironmentSpec};
use crate::error::{BanditError, Result};
use crate::linear_policies::{run_alg3, run_alg4};
use crate::mab_policies::{run_alg1, run_alg2, run_etc};
use crate::shared_randomness::SharedSeed;

/// Seeds owned by one execution: the shared internal randomness ξ plus a
/// per-execution reward seed. Pair hygiene: both members of a pair carry
/// the same `shared`, never the same `reward`.
#[derive(Debug, Clone, Copy)]
pub struct RunSeeds {
    pub shared: SharedSeed,
    pub reward: u64,
}

impl RunSeeds {
    pub fn new(shared: u64, reward: u64) -> Self {
        RunSeeds {
            shared: SharedSeed(shared),
            reward,
        }
    }
}

/// What a policy run records beyond the arm sequence.
#[derive(Debug, Clone, Copy)]
pub struct TraceOptions {
    /// Record the realized reward of every round. On for CLI traces (the
    /// CSV wants `t, arm, reward`); off inside bulk certification runs,
    /// which compare arm identifiers only — this keeps paired memory flat
    /// and skips sampling rewards nobody reads during the commit phase.
    pub record_rewards: bool,
    /// Keep per-batch records (estimates, radii, eliminations) for audits.
    pub batch_log: bool,
}

impl TraceOptions {
    pub fn arms_only() -> Self {
        TraceOptions {
            record_rewards: false,
            batch_log: false,
        }
    }

    pub fn full() -> Self {
        TraceOptions {
            record_rewards: true,
            batch_log: true,
        }
    }
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions::arms_only()
    }
}

/// Per-batch audit record emitted when `TraceOptions::batch_log` is set.
///
/// `estimates` pairs each then-active arm (by identifier) with the value
/// the elimination rule saw for it in that batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum BatchRecord {
    /// A grid-elimination batch: reproducible mean per arm, kill anything
    /// more than `2·tau` below the leader.
    GridMab {
        batch: u32,
        tau: f64,
        new_pulls_per_arm: u64,
        active_before: Vec<u32>,
        estimates: Vec<(u32, f64)>,
    },
    /// A random-threshold batch with its three radii and the arms whose
    /// estimate fell in the bad region around the elimination boundary.
    ThresholdMab {
        batch: u32,
        u: f64,
        u_tilde: f64,
        u_bar: f64,
        new_pulls_per_arm: u64,
        active_before: Vec<u32>,
        estimates: Vec<(u32, f64)>,
        bad_event_arms: Vec<u32>,
    },
    /// A linear-elimination batch: estimated values ⟨a, θ̂⟩ per active
    /// action, the design quality actually reached, and the randomized
    /// elimination threshold pieces.
    LinearElim {
        batch: u32,
        eps: f64,
        eps_tilde: f64,
        /// Randomized threshold ε̄ drawn from [eps/2, eps].
        eps_bar: f64,
        achieved_g: f64,
        core_size: u32,
        new_pulls_total: u64,
        active_before: Vec<u32>,
        values: Vec<(u32, f64)>,
    },
    /// A net-elimination batch: the statistical-query means `v(a)` over the
    /// core set (by net index) plus the deterministic elimination radius.
    NetElim {
        batch: u32,
        eps: f64,
        achieved_g: f64,
        core_size: u32,
        new_pulls_total: u64,
        active_before: Vec<u32>,
        core_values: Vec<(u32, f64)>,
    },
}

/// The full record of one execution: the arm sequence that reproducibility
/// is defined over, plus whatever else was recorded.
///
/// `arms[t]` is the arm identifier pulled at round t (for linear policies,
/// an index into `actions`). When reward recording is on,
/// `rewards.len() == arms.len() == T`.
#[derive(Debug, Clone, Default)]
pub struct ExecutionTrace {
    pub arms: Vec<u32>,
    pub rewards: Vec<f64>,
    pub batch_log: Vec<BatchRecord>,
    /// The action vectors the arm identifiers index into (linear runs).
    pub actions: Option<Vec<Vec<f64>>>,
}

impl ExecutionTrace {
    pub fn with_capacity(t: u64, opts: &TraceOptions) -> Self {
        ExecutionTrace {
            arms: Vec::with_capacity(t as usize),
            rewards: if opts.record_rewards {
                Vec::with_capacity(t as usize)
            } else {
                Vec::new()
            },
            batch_log: Vec::new(),
            actions: None,
        }
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    /// First index where two traces disagree on the arm identifier.
    pub fn first_divergence(&self, other: &ExecutionTrace) -> Option<usize> {
        if self.arms.len() != other.arms.len() {
            return Some(self.arms.len().min(other.arms.len()));
        }
        self.arms
            .iter()
            .zip(other.arms.iter())
            .position(|(a, b)| a != b)
    }
}

/// Outcome of one paired execution.
#[derive(Debug, Clone)]
pub struct PairedRunReport {
    /// Exact arm-sequence equality.
    pub identical: bool,
    /// Index of the first disagreement; absent iff `identical`.
    pub first_divergence: Option<usize>,
    pub traces: (ExecutionTrace, ExecutionTrace),
}

/// Mean pseudo-regret against the horizon, with a symmetric normal-theory
/// confidence halfwidth per point.
#[derive(Debug, Clone, Serialize)]
pub struct RegretCurve {
    pub horizons: Vec<u64>,
    pub mean_pseudo_regret: Vec<f64>,
    pub ci_halfwidth: Vec<f64>,
    pub runs_per_point: u64,
}

/// Which policy a config runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum PolicySpec {
    /// Explore-then-commit with a known gap.
    Etc { gap: f64 },
    /// Grid-elimination MAB.
    Alg1,
    /// Random-threshold MAB.
    Alg2,
    /// Finite-arm linear elimination.
    Alg3,
    /// Net-based linear elimination.
    Alg4 {
        #[serde(default)]
        net_eta: Option<f64>,
        #[serde(default)]
        even_split: bool,
    },
}

impl PolicySpec {
    /// Short id used to key result tables.
    pub fn id(&self) -> &'static str {
        match self {
            PolicySpec::Etc { .. } => "etc",
            PolicySpec::Alg1 => "alg1",
            PolicySpec::Alg2 => "alg2",
            PolicySpec::Alg3 => "alg3",
            PolicySpec::Alg4 { .. } => "alg4",
        }
    }
}

/// One experiment cell: a policy on an environment at one (T, ρ), with the
/// seed bases every pair/run index is derived from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub policy: PolicySpec,
    pub environment: EnvironmentSpec,
    pub horizon: u64,
    pub rho: f64,
    /// Paired executions for repro tests; independent runs for regret rows.
    pub runs: u64,
    #[serde(default)]
    pub shared_seed_base: u64,
    #[serde(default = "default_reward_seed_base")]
    pub reward_seed_base: u64,
    /// Environment label for result tables; defaults to the policy id.
    #[serde(default)]
    pub label: Option<String>,
}

fn default_reward_seed_base() -> u64 {
    0x5eed
}

impl ExperimentConfig {
    /// Seeds of pair `k`: one shared ξ, two distinct reward streams.
    pub fn pair_seeds(&self, k: u64) -> (RunSeeds, RunSeeds) {
        let shared = self.shared_seed_base.wrapping_add(k);
        (
            RunSeeds::new(shared, self.reward_seed_base.wrapping_add(2 * k)),
            RunSeeds::new(shared, self.reward_seed_base.wrapping_add(2 * k + 1)),
        )
    }

    /// Seeds of standalone run `k` (regret rows): everything distinct.
    pub fn run_seeds(&self, k: u64) -> RunSeeds {
        RunSeeds::new(
            self.shared_seed_base.wrapping_add(k),
            self.reward_seed_base.wrapping_add(2 * k),
        )
    }

    fn env_label(&self) -> String {
        self.label.clone().unwrap_or_else(|| match &self.environment {
            EnvironmentSpec::Mab { means, .. } => format!("mab{}", means.len()),
            EnvironmentSpec::Linear { theta, .. } => format!("lin{}", theta.len()),
        })
    }
}

/// One-sided 95% Clopper–Pearson lower confidence bound on a binomial
/// proportion, i.e. the lower limit of the central 95% interval:
/// `Beta⁻¹(0.025; s, n−s+1)`, with the closed-form edges `0` at s=0 and
/// `0.025^{1/n}` at s=n.
pub fn clopper_pearson_lower(successes: u64, trials: u64) -> f64 {
    assert!(successes <= trials && trials > 0, "need 0 ≤ s ≤ n, n > 0");
    const ALPHA: f64 = 0.025;
    if successes == 0 {
        return 0.0;
    }
    if successes == trials {
        return ALPHA.powf(1.0 / trials as f64);
    }
    let beta = Beta::new(successes as f64, (trials - successes + 1) as f64)
        .expect("shape parameters are positive");
    beta.inverse_cdf(ALPHA)
}

/// Pseudo-regret of a trace: `T·μ* − Σ_t μ_{a_t}` with the environment's
/// true means — for linear runs `μ_a = ⟨θ*, a⟩` through the trace's action
/// table, against the exact best mean over the declared action set.
pub fn pseudo_regret(trace: &ExecutionTrace, env: &Environment) -> Result<f64> {
    let t = trace.arms.len() as f64;
    match env {
        Environment::Mab(mab) => {
            let means = mab.arm_means();
            let mut counts = vec![0u64; means.len()];
            for &a in &trace.arms {
                let a = a as usize;
                if a >= means.len() {
                    return Err(BanditError::InvalidArm {
                        index: a,
                        count: means.len(),
                    });
                }
                counts[a] += 1;
            }
            let collected: f64 = counts
                .iter()
                .zip(means)
                .map(|(c, m)| *c as f64 * m)
                .sum();
            Ok(t * mab.best_mean() - collected)
        }
        Environment::Linear(lin) => {
            let actions = trace.actions.as_ref().ok_or_else(|| {
                BanditError::InvalidConfig {
                    reason: "linear trace carries no action table".into(),
                }
            })?;
            let means: Vec<f64> = actions
                .iter()
                .map(|a| lin.mean_reward(&DVector::from_column_slice(a)))
                .collect();
            let mut counts = vec![0u64; means.len()];
            for &a in &trace.arms {
                let a = a as usize;
                if a >= means.len() {
                    return Err(BanditError::InvalidArm {
                        index: a,
                        count: means.len(),
                    });
                }
                counts[a] += 1;
            }
            let collected: f64 = counts
                .iter()
                .zip(&means)
                .map(|(c, m)| *c as f64 * m)
                .sum();
            Ok(t * lin.best_mean_reward() - collected)
        }
    }
}

/// Runs `config.policy` once on `env` with the given seeds. The policy and
/// environment families must match (MAB policies on MAB environments,
/// linear policies on linear ones).
pub fn run_policy(
    config: &ExperimentConfig,
    env: &Environment,
    seeds: RunSeeds,
    opts: &TraceOptions,
) -> Result<ExecutionTrace> {
    let (horizon, rho) = (config.horizon, config.rho);
    match (&config.policy, env) {
        (PolicySpec::Etc { gap }, Environment::Mab(m)) => {
            run_etc(m, horizon, rho, *gap, seeds, opts)
        }
        (PolicySpec::Alg1, Environment::Mab(m)) => run_alg1(m, horizon, rho, seeds, opts),
        (PolicySpec::Alg2, Environment::Mab(m)) => run_alg2(m, horizon, rho, seeds, opts),
        (PolicySpec::Alg3, Environment::Linear(l)) => run_alg3(l, horizon, rho, seeds, opts),
        (PolicySpec::Alg4 {
            net_eta,
            even_split,
        }, Environment::Linear(l)) => {
            run_alg4(l, horizon, rho, seeds, *net_eta, *even_split, opts)
        }
        (p, _) => Err(BanditError::InvalidConfig {
            reason: format!("policy {} does not run on this environment family", p.id()),
        }),
    }
}

/// One paired execution: the same ξ, two independent reward streams,
/// compared element-wise on arm identifiers.
pub fn run_paired(config: &ExperimentConfig, opts: &TraceOptions) -> Result<PairedRunReport> {
    let env = config.environment.build()?;
    let (sa, sb) = config.pair_seeds(0);
    let a = run_policy(config, &env, sa, opts)?;
    let b = run_policy(config, &env, sb, opts)?;
    let first_divergence = a.first_divergence(&b);
    Ok(PairedRunReport {
        identical: first_divergence.is_none(),
        first_divergence,
        traces: (a, b),
    })
}

/// One pair's row in a certification table.
#[derive(Debug, Clone, Serialize)]
pub struct PairOutcome {
    pub pair_id: u64,
    pub identical: bool,
    pub first_divergence: Option<usize>,
    /// Pseudo-regret of the two executions.
    pub regret: (f64, f64),
}

/// A reproducibility certificate: per-pair outcomes plus the agreement rate
/// and its one-sided 95% lower confidence bound.
#[derive(Debug, Clone)]
pub struct ReproEstimate {
    pub outcomes: Vec<PairOutcome>,
    pub rate: f64,
    pub lower_bound: f64,
}

impl ReproEstimate {
    pub fn identical_pairs(&self) -> u64 {
        self.outcomes.iter().filter(|o| o.identical).count() as u64
    }

    pub fn mean_regret(&self) -> f64 {
        let n = (2 * self.outcomes.len()) as f64;
        self.outcomes
            .iter()
            .map(|o| o.regret.0 + o.regret.1)
            .sum::<f64>()
            / n
    }
}

/// Runs `n_pairs` paired executions (pair k at shared seed base+k) in
/// parallel and certifies the agreement rate from below. Traces are
/// dropped as soon as each pair is compared, so memory stays flat over
/// long certification runs.
pub fn estimate_repro_rate(config: &ExperimentConfig, n_pairs: u64) -> Result<ReproEstimate> {
    if n_pairs < 30 {
        return Err(BanditError::InvalidConfig {
            reason: format!("certification needs at least 30 pairs, got {n_pairs}"),
        });
    }
    let env = config.environment.build()?;
    let opts = TraceOptions::arms_only();
    let outcomes: Vec<PairOutcome> = (0..n_pairs)
        .into_par_iter()
        .map(|k| {
            let (sa, sb) = config.pair_seeds(k);
            let a = run_policy(config, &env, sa, &opts)?;
            let b = run_policy(config, &env, sb, &opts)?;
            let first_divergence = a.first_divergence(&b);
            Ok(PairOutcome {
                pair_id: k,
                identical: first_divergence.is_none(),
                first_divergence,
                regret: (pseudo_regret(&a, &env)?, pseudo_regret(&b, &env)?),
            })
        })
        .collect::<Result<_>>()?;
    let identical = outcomes.iter().filter(|o| o.identical).count() as u64;
    Ok(ReproEstimate {
        rate: identical as f64 / n_pairs as f64,
        lower_bound: clopper_pearson_lower(identical, n_pairs),
        outcomes,
    })
}

/// Mean pseudo-regret of `config` at each horizon, `config.runs`
/// independent executions per point.
pub fn regret_curve(config: &ExperimentConfig, horizons: &[u64]) -> Result<RegretCurve> {
    let env = config.environment.build()?;
    let opts = TraceOptions::arms_only();
    let mut means = Vec::with_capacity(horizons.len());
    let mut cis = Vec::with_capacity(horizons.len());
    for &t in horizons {
        let mut point = config.clone();
        point.horizon = t;
        let regrets: Vec<f64> = (0..config.runs)
            .into_par_iter()
            .map(|k| {
                let trace = run_policy(&point, &env, point.run_seeds(k), &opts)?;
                pseudo_regret(&trace, &env)
            })
            .collect::<Result<_>>()?;
        let n = regrets.len() as f64;
        let mean = regrets.iter().sum::<f64>() / n;
        let var = regrets.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        means.push(mean);
        cis.push(1.96 * (var / n).sqrt());
    }
    Ok(RegretCurve {
        horizons: horizons.to_vec(),
        mean_pseudo_regret: means,
        ci_halfwidth: cis,
        runs_per_point: config.runs,
    })
}

/// One aggregated row of a sweep table.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub policy: String,
    pub horizon: u64,
    pub rho: f64,
    pub env: String,
    pub mean_regret: f64,
    pub ci: f64,
    /// Present iff this cell failed; metric fields are then NaN.
    pub error: Option<String>,
}

/// Runs every config and aggregates one regret row per cell, in config
/// order. A failing cell is recorded and the sweep continues.
pub fn sweep(configs: &[ExperimentConfig]) -> Result<Vec<SweepRow>> {
    if configs.is_empty() {
        return Err(BanditError::InvalidConfig {
            reason: "a sweep needs at least one config".into(),
        });
    }
    Ok(configs
        .iter()
        .map(|config| {
            let base = SweepRow {
                policy: config.policy.id().to_string(),
                horizon: config.horizon,
                rho: config.rho,
                env: config.env_label(),
                mean_regret: f64::NAN,
                ci: f64::NAN,
                error: None,
            };
            match regret_curve(config, &[config.horizon]) {
                Ok(curve) => SweepRow {
                    mean_regret: curve.mean_pseudo_regret[0],
                    ci: curve.ci_halfwidth[0],
                    ..base
                },
                Err(e) => SweepRow {
                    error: Some(e.to_string()),
                    ..base
                },
            }
        })
        .collect())
}

/// Writes `pair_id, identical, first_divergence` rows.
pub fn write_pairs_csv<W: io::Write>(out: W, outcomes: &[PairOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["pair_id", "identical", "first_divergence"])
        .map_err(csv_error)?;
    for o in outcomes {
        w.write_record([
            o.pair_id.to_string(),
            o.identical.to_string(),
            o.first_divergence.map(|i| i.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(io_error)?;
    Ok(())
}

/// Writes `policy, T, rho, mean_regret, ci` rows.
pub fn write_regret_csv<W: io::Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["policy", "T", "rho", "mean_regret", "ci", "error"])
        .map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.policy.clone(),
            r.horizon.to_string(),
            r.rho.to_string(),
            r.mean_regret.to_string(),
            r.ci.to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(io_error)?;
    Ok(())
}

/// Writes `t, arm, reward` rows; the reward column is empty when the trace
/// was taken without reward recording.
pub fn write_trace_csv<W: io::Write>(out: W, trace: &ExecutionTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "arm", "reward"]).map_err(csv_error)?;
    for (t, &arm) in trace.arms.iter().enumerate() {
        w.write_record([
            t.to_string(),
            arm.to_string(),
            trace
                .rewards
                .get(t)
                .map(|r| r.to_string())
                .unwrap_or_default(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(io_error)?;
    Ok(())
}

fn csv_error(e: csv::Error) -> BanditError {
    BanditError::InvalidConfig {
        reason: format!("CSV write failed: {e}"),
    }
}

fn io_error(e: io::Error) -> BanditError {
    BanditError::InvalidConfig {
        reason: format!("output write failed: {e}"),
    }
}
