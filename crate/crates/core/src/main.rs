//! Command-line front end: single traces, paired reproducibility
//! certification, G-optimal designs, and regret sweeps, all emitting CSV.
//!
//! Exit codes: 0 on success, 1 when a certification run misses its
//! agreement bound, 2 on configuration or runtime errors.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rayon::prelude::*;

use repro_bandits::environments::{EnvironmentSpec, MabEnvironment, MabRewardStream, pull_mab};
use repro_bandits::error::BanditError;
use repro_bandits::harness::{
    estimate_repro_rate, run_policy, write_pairs_csv, write_regret_csv, write_trace_csv,
    ExperimentConfig, PairOutcome, PolicySpec, RunSeeds, TraceOptions,
};
use repro_bandits::optimal_design::{frank_wolfe_design, ky_initialize};
use repro_bandits::repro_sq::SqRequest;
use repro_bandits::shared_randomness::{SharedSeed, StreamPurpose, SubstreamKey};

#[derive(Parser)]
#[command(name = "repro-bandits", version, about = "Reproducible bandit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one policy execution and write its trace CSV (`t, arm, reward`).
    Simulate(SimulateArgs),
    /// Paired executions sharing internal randomness; certify agreement.
    #[command(name = "repro-test")]
    ReproTest(ReproTestArgs),
    /// Compute an approximately G-optimal design over a finite arm list.
    Design(DesignArgs),
    /// Run a batch of experiment configs into one regret table.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct PolicyArgs {
    /// Policy id: etc, alg1, alg2, alg3, or alg4.
    #[arg(long)]
    policy: String,
    /// Environment JSON file, e.g. {"kind":"mab","means":[0.9,0.6]}.
    #[arg(long)]
    env: PathBuf,
    /// Horizon T.
    #[arg(long = "T", visible_alias = "horizon")]
    horizon: u64,
    /// Target reproducibility parameter ρ ∈ (0, 1].
    #[arg(long)]
    rho: f64,
    /// Known gap (etc only).
    #[arg(long)]
    gap: Option<f64>,
    /// Net resolution η (alg4; default T^{-1/(4d+2)}).
    #[arg(long)]
    net_eta: Option<f64>,
    /// Split each batch's pulls evenly over the core set (alg4).
    #[arg(long)]
    even_split: bool,
}

fn parse_policy(
    name: &str,
    gap: Option<f64>,
    net_eta: Option<f64>,
    even_split: bool,
) -> Result<PolicySpec, BanditError> {
    match name {
        "etc" => {
            let gap = gap.ok_or_else(|| BanditError::InvalidConfig {
                reason: "etc needs --gap".into(),
            })?;
            Ok(PolicySpec::Etc { gap })
        }
        "alg1" => Ok(PolicySpec::Alg1),
        "alg2" => Ok(PolicySpec::Alg2),
        "alg3" => Ok(PolicySpec::Alg3),
        "alg4" => Ok(PolicySpec::Alg4 {
            net_eta,
            even_split,
        }),
        other => Err(BanditError::InvalidConfig {
            reason: format!("unknown policy '{other}'"),
        }),
    }
}

impl PolicyArgs {
    fn config(&self, shared: u64, reward: u64, runs: u64) -> Result<ExperimentConfig, BanditError> {
        let environment: EnvironmentSpec = read_json(&self.env)?;
        Ok(ExperimentConfig {
            policy: parse_policy(&self.policy, self.gap, self.net_eta, self.even_split)?,
            environment,
            horizon: self.horizon,
            rho: self.rho,
            runs,
            shared_seed_base: shared,
            reward_seed_base: reward,
            label: None,
        })
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long, default_value_t = 1)]
    shared_seed: u64,
    #[arg(long, default_value_t = 1)]
    reward_seed: u64,
    /// Trace CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Also write per-batch records as JSON lines.
    #[arg(long)]
    batch_log: Option<PathBuf>,
}

#[derive(Args)]
struct ReproTestArgs {
    /// Check the reproducible-mean primitive instead of a policy.
    #[arg(long, value_parser = ["mean"])]
    primitive: Option<String>,

    /// Policy id (policy mode): etc, alg1, alg2, alg3, or alg4.
    #[arg(long)]
    policy: Option<String>,
    /// Environment JSON file (policy mode).
    #[arg(long)]
    env: Option<PathBuf>,
    /// Horizon T (policy mode).
    #[arg(long = "T", visible_alias = "horizon")]
    horizon: Option<u64>,
    /// Known gap (etc only).
    #[arg(long)]
    gap: Option<f64>,
    /// Net resolution η (alg4).
    #[arg(long)]
    net_eta: Option<f64>,
    /// Split pulls evenly over the core set (alg4).
    #[arg(long)]
    even_split: bool,

    /// Reproducibility targets ρ; policy mode takes exactly one, the
    /// primitive matrix accepts a comma-separated list.
    #[arg(long, value_delimiter = ',', required = true)]
    rho: Vec<f64>,
    /// Accuracy targets τ (primitive mode; comma-separated).
    #[arg(long, value_delimiter = ',')]
    tau: Vec<f64>,
    /// Failure budgets δ (primitive mode; comma-separated).
    #[arg(long, value_delimiter = ',')]
    delta: Vec<f64>,
    /// Bernoulli mean the primitive estimates (primitive mode).
    #[arg(long, default_value_t = 0.3)]
    mu: f64,

    /// Paired executions per setting.
    #[arg(long, default_value_t = 100)]
    pairs: u64,
    #[arg(long, default_value_t = 1)]
    shared_seed: u64,
    /// Reward-seed base; pair k uses base+2k and base+2k+1.
    #[arg(long, default_value_t = 0x5eed)]
    reward_seed: u64,
    /// Explicit reward seeds for a single diagnostic pair.
    #[arg(long, requires = "reward_seed_b")]
    reward_seed_a: Option<u64>,
    #[arg(long, requires = "reward_seed_a")]
    reward_seed_b: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DesignArgs {
    /// JSON file holding the arm list as an array of vectors.
    #[arg(long)]
    arms: PathBuf,
    /// Optimality target for g(π) = max_a ‖a‖²_{V(π)⁻¹}; default 2d.
    #[arg(long)]
    target_g: Option<f64>,
    /// Seed for the initialization directions.
    #[arg(long, default_value_t = 1)]
    shared_seed: u64,
    #[arg(long, default_value_t = 20_000)]
    max_iters: usize,
    /// Design JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON file holding a list of experiment configs.
    #[arg(long)]
    config: PathBuf,
    /// Regret CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, BanditError> {
    let file = File::open(path).map_err(|e| BanditError::InvalidConfig {
        reason: format!("cannot open {}: {e}", path.display()),
    })?;
    serde_json::from_reader(file).map_err(|e| BanditError::InvalidConfig {
        reason: format!("cannot parse {}: {e}", path.display()),
    })
}

fn create(path: &PathBuf) -> Result<BufWriter<File>, BanditError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| BanditError::InvalidConfig {
            reason: format!("cannot create {}: {e}", path.display()),
        })
}

fn simulate(args: &SimulateArgs) -> Result<ExitCode, BanditError> {
    let config = args.policy.config(args.shared_seed, args.reward_seed, 1)?;
    let env = config.environment.build()?;
    let opts = TraceOptions {
        record_rewards: true,
        batch_log: args.batch_log.is_some(),
    };
    let seeds = RunSeeds::new(args.shared_seed, args.reward_seed);
    let trace = run_policy(&config, &env, seeds, &opts)?;
    write_trace_csv(create(&args.out)?, &trace)?;
    if let Some(path) = &args.batch_log {
        let mut w = create(path)?;
        for record in &trace.batch_log {
            let line = serde_json::to_string(record).map_err(|e| BanditError::InvalidConfig {
                reason: format!("batch log serialization failed: {e}"),
            })?;
            writeln!(w, "{line}").map_err(|e| BanditError::InvalidConfig {
                reason: format!("batch log write failed: {e}"),
            })?;
        }
    }
    println!(
        "wrote {} rounds ({} batches logged) to {}",
        trace.len(),
        trace.batch_log.len(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

/// One paired primitive call: both executions share ξ, draw independent
/// Bernoulli samples, and release a grid-rounded mean each.
fn paired_mean_call(
    req: &SqRequest,
    n: u64,
    mu: f64,
    shared: SharedSeed,
    reward_seeds: (u64, u64),
) -> Result<(f64, f64), BanditError> {
    let env = MabEnvironment::bernoulli(vec![mu])?;
    let run = |seed: u64| -> Result<f64, BanditError> {
        let mut stream = MabRewardStream::new(seed, 1);
        let mut sum = 0.0;
        for _ in 0..n {
            sum += pull_mab(&env, 0, &mut stream)?;
        }
        repro_bandits::repro_sq::repro_mean_from_stats(sum, n, req, shared)
    };
    Ok((run(reward_seeds.0)?, run(reward_seeds.1)?))
}

fn repro_test_primitive(args: &ReproTestArgs) -> Result<ExitCode, BanditError> {
    if args.tau.is_empty() || args.rho.is_empty() || args.delta.is_empty() {
        return Err(BanditError::InvalidConfig {
            reason: "primitive mode needs --tau, --rho and --delta".into(),
        });
    }
    let mut w = create(&args.out)?;
    writeln!(w, "tau,rho,delta,agreement_rate,accuracy_rate").map_err(|e| {
        BanditError::InvalidConfig {
            reason: format!("output write failed: {e}"),
        }
    })?;
    let mut all_pass = true;
    for &tau in &args.tau {
        for &rho in &args.rho {
            for &delta in &args.delta {
                let key = SubstreamKey::new(StreamPurpose::Other, 0, 0);
                let req = SqRequest::new(tau, rho, delta, key);
                let n = repro_bandits::repro_sq::required_samples(&req)?;
                let results: Vec<(bool, bool, bool)> = (0..args.pairs)
                    .into_par_iter()
                    .map(|k| {
                        let shared = SharedSeed(args.shared_seed.wrapping_add(k));
                        let rewards = (
                            args.reward_seed.wrapping_add(2 * k),
                            args.reward_seed.wrapping_add(2 * k + 1),
                        );
                        let (va, vb) = paired_mean_call(&req, n, args.mu, shared, rewards)?;
                        Ok((
                            va.to_bits() == vb.to_bits(),
                            (va - args.mu).abs() <= tau,
                            (vb - args.mu).abs() <= tau,
                        ))
                    })
                    .collect::<Result<_, BanditError>>()?;
                let agree = results.iter().filter(|r| r.0).count() as f64;
                let accurate =
                    results.iter().map(|r| r.1 as u64 + r.2 as u64).sum::<u64>() as f64;
                let agreement_rate = agree / args.pairs as f64;
                let accuracy_rate = accurate / (2 * args.pairs) as f64;
                writeln!(
                    w,
                    "{tau},{rho},{delta},{agreement_rate},{accuracy_rate}"
                )
                .map_err(|e| BanditError::InvalidConfig {
                    reason: format!("output write failed: {e}"),
                })?;
                if agreement_rate < 1.0 - rho {
                    all_pass = false;
                    eprintln!(
                        "FAIL: tau={tau} rho={rho} delta={delta}: agreement {agreement_rate} < {}",
                        1.0 - rho
                    );
                }
            }
        }
    }
    w.flush().map_err(|e| BanditError::InvalidConfig {
        reason: format!("output write failed: {e}"),
    })?;
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn repro_test_policy(args: &ReproTestArgs) -> Result<ExitCode, BanditError> {
    let (Some(policy), Some(env_path), Some(horizon)) =
        (&args.policy, &args.env, args.horizon)
    else {
        return Err(BanditError::InvalidConfig {
            reason: "policy mode needs --policy, --env and --T".into(),
        });
    };
    let [rho] = args.rho[..] else {
        return Err(BanditError::InvalidConfig {
            reason: "policy mode takes exactly one --rho".into(),
        });
    };
    let config = ExperimentConfig {
        policy: parse_policy(policy, args.gap, args.net_eta, args.even_split)?,
        environment: read_json(env_path)?,
        horizon,
        rho,
        runs: args.pairs,
        shared_seed_base: args.shared_seed,
        reward_seed_base: args.reward_seed,
        label: None,
    };

    // Explicit reward seeds: one diagnostic pair, no certification.
    if let (Some(a), Some(b)) = (args.reward_seed_a, args.reward_seed_b) {
        let env = config.environment.build()?;
        let opts = TraceOptions::arms_only();
        let shared = SharedSeed(args.shared_seed);
        let ta = run_policy(&config, &env, RunSeeds { shared, reward: a }, &opts)?;
        let tb = run_policy(&config, &env, RunSeeds { shared, reward: b }, &opts)?;
        let first_divergence = ta.first_divergence(&tb);
        let outcome = PairOutcome {
            pair_id: 0,
            identical: first_divergence.is_none(),
            first_divergence,
            regret: (
                repro_bandits::harness::pseudo_regret(&ta, &env)?,
                repro_bandits::harness::pseudo_regret(&tb, &env)?,
            ),
        };
        println!(
            "single pair: identical = {}, first divergence = {:?}",
            outcome.identical, outcome.first_divergence
        );
        write_pairs_csv(create(&args.out)?, &[outcome])?;
        return Ok(ExitCode::SUCCESS);
    }

    let estimate = estimate_repro_rate(&config, args.pairs)?;
    write_pairs_csv(create(&args.out)?, &estimate.outcomes)?;
    let target = 1.0 - config.rho;
    println!(
        "{} pairs: agreement {} (95% lower bound {:.4}), target ≥ {target}",
        args.pairs, estimate.rate, estimate.lower_bound
    );
    if estimate.lower_bound < target {
        eprintln!("FAIL: certification bound not met");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn design(args: &DesignArgs) -> Result<ExitCode, BanditError> {
    let raw: Vec<Vec<f64>> = read_json(&args.arms)?;
    let arms: Vec<DVector<f64>> = raw.iter().map(|v| DVector::from_column_slice(v)).collect();
    let d = arms.first().map(|a| a.len()).unwrap_or(0);
    let target = args.target_g.unwrap_or(2.0 * d as f64);
    let init = ky_initialize(&arms, SharedSeed(args.shared_seed), 0)?;
    let solve = frank_wolfe_design(&arms, init, target, args.max_iters)?;
    let json = serde_json::json!({
        "support": solve
            .design
            .support
            .iter()
            .map(|a| a.iter().copied().collect::<Vec<f64>>())
            .collect::<Vec<_>>(),
        "weights": solve.design.weights,
        "achieved_g": solve.achieved_g,
        "converged": solve.converged,
        "iterations": solve.iterations,
    });
    let mut w = create(&args.out)?;
    serde_json::to_writer_pretty(&mut w, &json).map_err(|e| BanditError::InvalidConfig {
        reason: format!("design serialization failed: {e}"),
    })?;
    w.flush().map_err(|e| BanditError::InvalidConfig {
        reason: format!("output write failed: {e}"),
    })?;
    println!(
        "core set of {} arms, g = {:.6} (target {target})",
        solve.design.len(),
        solve.achieved_g
    );
    Ok(ExitCode::SUCCESS)
}

fn run_sweep(args: &SweepArgs) -> Result<ExitCode, BanditError> {
    let configs: Vec<ExperimentConfig> = read_json(&args.config)?;
    let rows = repro_bandits::harness::sweep(&configs)?;
    write_regret_csv(create(&args.out)?, &rows)?;
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{} rows written to {} ({failures} failed cells)",
        rows.len(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::ReproTest(args) => {
            if args.primitive.is_some() {
                repro_test_primitive(args)
            } else {
                repro_test_policy(args)
            }
        }
        Command::Design(args) => design(args),
        Command::Sweep(args) => run_sweep(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
