//! G-optimal experimental design over finite arm sets.
//!
//! [`ky_initialize`] seeds a design with at most `2d` arms by sweeping random
//! directions through the orthogonal complement of the differences picked so
//! far, [`frank_wolfe_design`] refines it with the closed-form D-optimal step
//! until the worst-case leverage `g(π) = max_a ‖a‖²_{V(π)⁻¹}` drops below a
//! target, and [`effective_support`] rebalances the result so no core arm
//! keeps a vanishing share. Direction draws flow through [`SharedSeed`]
//! substreams, so paired executions construct bit-identical designs; the
//! Frank-Wolfe refinement itself consumes no randomness at all.

use nalgebra::{DMatrix, DVector};

use crate::error::{BanditError, Result};
use crate::shared_randomness::{SharedSeed, StreamPurpose, SubstreamKey};

/// Residual threshold below which a vector is treated as lying in the span
/// of the vectors already collected.
const SPAN_EPS: f64 = 1e-9;

/// How many fresh Gaussian directions to try before declaring that the
/// remaining complement carries no arm spread.
const DIRECTION_ATTEMPTS: u64 = 8;

/// A weighted arm multiset: the core set `C` together with `π(a) ≥ 0`
/// summing to one.
#[derive(Debug, Clone)]
pub struct Design {
    pub support: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
}

impl Design {
    /// Validates dimensions, non-negativity, and that the weights sum to one.
    pub fn new(support: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != weights.len() {
            return Err(BanditError::InvalidConfig {
                reason: format!(
                    "design needs matching support/weight lists, got {}/{}",
                    support.len(),
                    weights.len()
                ),
            });
        }
        let d = support[0].len();
        if d == 0 {
            return Err(BanditError::InvalidConfig {
                reason: "design vectors must have dimension at least 1".into(),
            });
        }
        for a in &support {
            if a.len() != d || a.iter().any(|x| !x.is_finite()) {
                return Err(BanditError::InvalidConfig {
                    reason: "design support must be finite vectors of one dimension".into(),
                });
            }
        }
        let mut sum = 0.0;
        for w in &weights {
            if !w.is_finite() || *w < -1e-12 {
                return Err(BanditError::InvalidConfig {
                    reason: format!("design weight {w} is negative or not finite"),
                });
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(BanditError::InvalidConfig {
                reason: format!("design weights sum to {sum}, expected 1"),
            });
        }
        Ok(Self { support, weights })
    }

    pub fn dim(&self) -> usize {
        self.support[0].len()
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Information matrix `V(π) = Σ π(a)·a·aᵀ`.
    pub fn info_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut v = DMatrix::zeros(d, d);
        for (a, w) in self.support.iter().zip(&self.weights) {
            if *w > 0.0 {
                v += *w * a * a.transpose();
            }
        }
        v
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Outcome of a Frank-Wolfe refinement: the final iterate, its exactly
/// re-evaluated `g`, and whether the target was actually met.
#[derive(Debug, Clone)]
pub struct DesignSolve {
    pub design: Design,
    pub achieved_g: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn check_arms(arms: &[DVector<f64>]) -> Result<usize> {
    let Some(first) = arms.first() else {
        return Err(BanditError::InvalidConfig {
            reason: "arm list is empty".into(),
        });
    };
    let d = first.len();
    if d == 0 {
        return Err(BanditError::InvalidConfig {
            reason: "arms must have dimension at least 1".into(),
        });
    }
    for a in arms {
        if a.len() != d || a.iter().any(|x| !x.is_finite()) {
            return Err(BanditError::InvalidConfig {
                reason: "arms must be finite vectors of a single dimension".into(),
            });
        }
    }
    Ok(d)
}

/// Gram-Schmidt residual of `v` against an orthonormal `basis`.
fn residual(v: &DVector<f64>, basis: &[DVector<f64>]) -> DVector<f64> {
    let mut r = v.clone();
    for q in basis {
        let c = q.dot(&r);
        r -= c * q;
    }
    r
}

fn span_rank(vectors: &[&DVector<f64>]) -> usize {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for v in vectors {
        let scale = v.norm().max(1.0);
        let r = residual(v, &basis);
        if r.norm() > SPAN_EPS * scale {
            basis.push(r.normalize());
        }
    }
    basis.len()
}

/// Sparse randomized initialization: for each of `d` sweeps, draw a Gaussian
/// direction in the orthogonal complement of the difference vectors collected
/// so far and keep the two arms with extreme correlation along it. Duplicated
/// picks merge their weight, and a repair pass swaps redundant picks for
/// rank-extending arms so the returned support always spans `ℝ^d`.
///
/// Directions are read from the `(ky_direction, batch, sweep)` substream, one
/// coordinate per ordinal, so the initialization replays identically for any
/// execution holding the same [`SharedSeed`].
pub fn ky_initialize(arms: &[DVector<f64>], seed: SharedSeed, batch: u32) -> Result<Design> {
    let d = check_arms(arms)?;
    if arms.len() < 2 {
        return Err(BanditError::DegenerateArmSet {
            reason: format!("initialization needs at least 2 arms, got {}", arms.len()),
        });
    }

    let mut picks: Vec<usize> = Vec::with_capacity(2 * d);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    'sweep: for sweep in 0..d {
        if basis.len() == d {
            break;
        }
        let key = SubstreamKey::new(StreamPurpose::KyDirection, batch, sweep as u32);
        for attempt in 0..DIRECTION_ATTEMPTS {
            let raw = DVector::from_fn(d, |j, _| {
                seed.normal_at(key, attempt * d as u64 + j as u64)
            });
            let dir = residual(&raw, &basis);
            if dir.norm() <= 1e-12 * raw.norm().max(1.0) {
                continue;
            }
            let mut hi = 0usize;
            let mut lo = 0usize;
            for (i, a) in arms.iter().enumerate() {
                let c = a.dot(&dir);
                if c > arms[hi].dot(&dir) {
                    hi = i;
                }
                if c < arms[lo].dot(&dir) {
                    lo = i;
                }
            }
            let spread = (arms[hi].dot(&dir) - arms[lo].dot(&dir)).abs();
            if spread <= 1e-12 {
                // Every arm is flat along this direction; try a fresh draw.
                continue;
            }
            picks.push(hi);
            picks.push(lo);
            let diff = &arms[hi] - &arms[lo];
            let r = residual(&diff, &basis);
            if r.norm() > SPAN_EPS * diff.norm().max(1.0) {
                basis.push(r.normalize());
            }
            continue 'sweep;
        }
        // The complement carries no spread at all: the arm set is flat
        // beyond the current basis and the repair pass below decides
        // whether that is fatal.
        break;
    }
    if picks.is_empty() {
        picks.push(0);
        picks.push(1 % arms.len());
    }

    // Repair: while the picks do not span, replace a redundant pick with the
    // first arm that extends the span. Each step raises the rank by one, so
    // this terminates in at most d steps (or proves the arms never spanned).
    loop {
        let pick_vecs: Vec<&DVector<f64>> = picks.iter().map(|&i| &arms[i]).collect();
        let rank = span_rank(&pick_vecs);
        if rank == d {
            break;
        }
        let mut pick_basis: Vec<DVector<f64>> = Vec::new();
        for v in &pick_vecs {
            let r = residual(v, &pick_basis);
            if r.norm() > SPAN_EPS * v.norm().max(1.0) {
                pick_basis.push(r.normalize());
            }
        }
        let extender = arms.iter().position(|a| {
            residual(a, &pick_basis).norm() > SPAN_EPS * a.norm().max(1.0)
        });
        let Some(new_arm) = extender else {
            return Err(BanditError::DegenerateArmSet {
                reason: format!("arms span only {rank} of {d} dimensions"),
            });
        };
        let mut replaced = false;
        for slot in 0..picks.len() {
            let mut trial: Vec<&DVector<f64>> = Vec::with_capacity(picks.len());
            for (j, &p) in picks.iter().enumerate() {
                trial.push(if j == slot { &arms[new_arm] } else { &arms[p] });
            }
            if span_rank(&trial) > rank {
                picks[slot] = new_arm;
                replaced = true;
                break;
            }
        }
        debug_assert!(replaced, "a 2d-element pick list always has a redundant slot");
        if !replaced {
            return Err(BanditError::DegenerateArmSet {
                reason: "failed to repair a rank-deficient initialization".into(),
            });
        }
    }

    // Merge duplicate picks: weight per slot is 1/|picks|, summed per arm.
    let share = 1.0 / picks.len() as f64;
    let mut merged: Vec<(usize, f64)> = Vec::new();
    for &p in &picks {
        match merged.iter_mut().find(|(i, _)| *i == p) {
            Some((_, w)) => *w += share,
            None => merged.push((p, share)),
        }
    }
    merged.sort_by_key(|(i, _)| *i);
    let support = merged.iter().map(|(i, _)| arms[*i].clone()).collect();
    let weights = merged.iter().map(|(_, w)| *w).collect();
    Design::new(support, weights)
}

fn quad_form(v_inv: &DMatrix<f64>, a: &DVector<f64>) -> f64 {
    (v_inv * a).dot(a)
}

fn invert_info(design_v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    design_v
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| BanditError::SingularDesign {
            reason: "information matrix is not positive definite".into(),
        })
}

/// Exact worst-case leverage `g = max_a ‖a‖²_{V(π)⁻¹}` of `design` over
/// `arms`, evaluated from a fresh factorization.
pub fn g_value(arms: &[DVector<f64>], design: &Design) -> Result<f64> {
    let d = check_arms(arms)?;
    if d != design.dim() {
        return Err(BanditError::InvalidConfig {
            reason: format!("arms have dimension {d}, design has {}", design.dim()),
        });
    }
    let v_inv = invert_info(&design.info_matrix())?;
    Ok(arms
        .iter()
        .map(|a| quad_form(&v_inv, a))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Frank-Wolfe refinement toward `g(π) ≤ target_g`.
///
/// Each step moves mass onto the arm with the largest leverage using the
/// closed-form step `γ = (g/d − 1)/(g − 1)`, maintaining `V⁻¹` by rank-one
/// Sherman-Morrison updates with a full re-factorization every 50 iterations
/// to keep drift in check. The final iterate is pruned of numerically dead
/// support and its `g` re-evaluated exactly, so `achieved_g` can be trusted
/// to full precision. Entirely deterministic given `init`.
pub fn frank_wolfe_design(
    arms: &[DVector<f64>],
    init: Design,
    target_g: f64,
    max_iters: usize,
) -> Result<DesignSolve> {
    let d = check_arms(arms)?;
    if d != init.dim() {
        return Err(BanditError::InvalidConfig {
            reason: format!("arms have dimension {d}, init design has {}", init.dim()),
        });
    }
    if !target_g.is_finite() || target_g < d as f64 - 1e-9 {
        return Err(BanditError::OutOfRange {
            name: "target_g",
            value: target_g,
            range: "≥ d (the worst-case leverage can never fall below d)",
        });
    }

    // Working state: support vectors with weights, plus a map from arm index
    // to its slot so repeated selections accumulate in place. Init support
    // vectors are matched to arms bitwise; unmatched ones simply decay.
    let mut support: Vec<DVector<f64>> = init.support.clone();
    let mut weights: Vec<f64> = init.weights.clone();
    let mut slot_of_arm: Vec<Option<usize>> = vec![None; arms.len()];
    for (k, a) in arms.iter().enumerate() {
        if let Some(s) = support.iter().position(|v| {
            v.len() == a.len() && v.iter().zip(a.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
        }) {
            slot_of_arm[k] = Some(s);
        }
    }

    let rebuild = |support: &[DVector<f64>], weights: &[f64]| -> Result<DMatrix<f64>> {
        let mut v = DMatrix::zeros(d, d);
        for (a, w) in support.iter().zip(weights) {
            if *w > 0.0 {
                v += *w * a * a.transpose();
            }
        }
        invert_info(&v)
    };

    let mut v_inv = rebuild(&support, &weights)?;
    let mut iterations = 0usize;
    let mut converged = false;
    while iterations < max_iters {
        let mut g = f64::NEG_INFINITY;
        let mut best = 0usize;
        for (k, a) in arms.iter().enumerate() {
            let n = quad_form(&v_inv, a);
            if n > g {
                g = n;
                best = k;
            }
        }
        if g <= target_g {
            converged = true;
            break;
        }
        let gamma = (g / d as f64 - 1.0) / (g - 1.0);
        if !gamma.is_finite() || gamma <= 1e-16 {
            // Already at (or numerically indistinguishable from) the optimum.
            break;
        }
        let gamma = gamma.min(1.0 - 1e-9);
        for w in weights.iter_mut() {
            *w *= 1.0 - gamma;
        }
        match slot_of_arm[best] {
            Some(s) => weights[s] += gamma,
            None => {
                support.push(arms[best].clone());
                weights.push(gamma);
                slot_of_arm[best] = Some(support.len() - 1);
            }
        }
        // Sherman-Morrison: V ← (1−γ)V + γaaᵀ.
        let a = &arms[best];
        let u = &v_inv * a;
        let denom = (1.0 - gamma) + gamma * g;
        v_inv = (&v_inv - (gamma / denom) * &u * u.transpose()) / (1.0 - gamma);
        iterations += 1;

        if iterations % 50 == 0 {
            v_inv = rebuild(&support, &weights)?;
        }
    }

    // Prune dead slots, renormalize, and report an exactly evaluated g.
    let mut kept: Vec<(DVector<f64>, f64)> = support
        .into_iter()
        .zip(weights)
        .filter(|(_, w)| *w > 1e-12)
        .collect();
    let total: f64 = kept.iter().map(|(_, w)| w).sum();
    for (_, w) in kept.iter_mut() {
        *w /= total;
    }
    let design = Design::new(
        kept.iter().map(|(a, _)| a.clone()).collect(),
        kept.iter().map(|(_, w)| *w).collect(),
    )?;
    let achieved_g = g_value(arms, &design)?;
    if achieved_g <= target_g {
        converged = true;
    }
    Ok(DesignSolve {
        design,
        achieved_g,
        converged,
        iterations,
    })
}

/// Mixing share used by [`effective_support`]: `x = 1/(4·d·ln(max{d,2}))`.
fn mixing_share(d: usize) -> f64 {
    1.0 / (4.0 * d as f64 * (d.max(2) as f64).ln())
}

/// Smallest weight [`effective_support`] promises on its output, namely
/// `1/(8·d·ln(max{d,2}))` — half the mixing share.
pub fn min_weight_floor(d: usize) -> f64 {
    mixing_share(d) / 2.0
}

/// Rebalances a design so every support arm keeps a non-vanishing share.
///
/// Arms whose input weight sits below [`min_weight_floor`] each receive one
/// mixing step `π ← (1−x)·π + x·δ_a` with `x = 1/(4·d·ln(max{d,2}))`, applied
/// in one pass in support order; a design already above the floor is returned
/// unchanged. One step multiplies every leverage by at most `1/(1−x)`, so a
/// 2d-approximate input stays within `4d` as long as only a handful of arms
/// need lifting — the regime the rebalancing is meant for. With many starved
/// arms the later steps erode the earlier lifts and the floor degrades
/// accordingly.
pub fn effective_support(design: &Design) -> Design {
    let d = design.dim();
    let x = mixing_share(d);
    let floor = min_weight_floor(d);
    let starved: Vec<usize> = design
        .weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w < floor)
        .map(|(i, _)| i)
        .collect();
    if starved.is_empty() {
        return design.clone();
    }
    let mut weights = design.weights.clone();
    for idx in starved {
        for w in weights.iter_mut() {
            *w *= 1.0 - x;
        }
        weights[idx] += x;
    }
    Design {
        support: design.support.clone(),
        weights,
    }
}

/// Rounds a design into integer pull counts `n_a = ⌈π(a)·N⌉` sized for
/// accuracy `ε` at confidence `1−δ`, with `N = ⌈8·d·ln(1/δ)/ε²⌉`.
/// The total overshoots `N` by at most one pull per support arm.
pub fn design_to_multiset(design: &Design, epsilon: f64, delta: f64) -> Result<(Vec<u64>, u64)> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(BanditError::OutOfRange {
            name: "epsilon",
            value: epsilon,
            range: "(0, ∞)",
        });
    }
    if !delta.is_finite() || delta <= 0.0 || delta >= 1.0 {
        return Err(BanditError::OutOfRange {
            name: "delta",
            value: delta,
            range: "(0, 1)",
        });
    }
    let d = design.dim() as f64;
    let raw = 8.0 * d * (1.0 / delta).ln() / (epsilon * epsilon);
    if raw >= u64::MAX as f64 / 2.0 {
        return Err(BanditError::OutOfRange {
            name: "epsilon",
            value: epsilon,
            range: "large enough that the pull budget fits in u64",
        });
    }
    let n = (raw.ceil() as u64).max(1);
    let counts = design
        .weights
        .iter()
        .map(|w| (w * n as f64).ceil() as u64)
        .collect();
    Ok((counts, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn basis(d: usize) -> Vec<DVector<f64>> {
        (0..d)
            .map(|i| DVector::from_fn(d, |j, _| if i == j { 1.0 } else { 0.0 }))
            .collect()
    }

    fn cross_polytope(d: usize) -> Vec<DVector<f64>> {
        let mut arms = basis(d);
        arms.extend(basis(d).iter().map(|e| -e));
        arms
    }

    fn random_unit_arms(d: usize, count: usize, rng_seed: u64) -> Vec<DVector<f64>> {
        let mut rng = StdRng::seed_from_u64(rng_seed);
        (0..count)
            .map(|_| {
                let v = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
                if v.norm() < 1e-6 {
                    basis(d)[0].clone()
                } else {
                    v.normalize()
                }
            })
            .collect()
    }

    #[test]
    fn cross_polytope_support_is_exact() {
        let d = 3;
        let arms = cross_polytope(d);
        let design = ky_initialize(&arms, SharedSeed(41), 0).unwrap();
        assert_eq!(design.len(), 2 * d);
        for w in &design.weights {
            assert!((w - 1.0 / (2.0 * d as f64)).abs() < 1e-15);
        }
        // Every ±e_i must appear exactly once.
        for arm in &arms {
            let hits = design
                .support
                .iter()
                .filter(|s| (*s - arm).norm() < 1e-12)
                .count();
            assert_eq!(hits, 1, "arm {arm} should appear exactly once");
        }
        let g = g_value(&arms, &design).unwrap();
        assert!((g - d as f64).abs() < 1e-9, "cross-polytope init is optimal, g={g}");
    }

    #[test]
    fn one_dimensional_extremes() {
        let arms = vec![
            DVector::from_element(1, 0.2),
            DVector::from_element(1, 0.9),
            DVector::from_element(1, -0.5),
        ];
        for seed in 0..32 {
            let design = ky_initialize(&arms, SharedSeed(seed), 0).unwrap();
            assert_eq!(design.len(), 2);
            let mut picked: Vec<f64> = design.support.iter().map(|v| v[0]).collect();
            picked.sort_by(f64::total_cmp);
            assert_eq!(picked, vec![-0.5, 0.9]);
            assert!((design.weights[0] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn random_arms_nonsingular_every_seed() {
        let arms = random_unit_arms(3, 50, 7);
        for seed in 0..1000 {
            let design = ky_initialize(&arms, SharedSeed(seed), 0).unwrap();
            let sum: f64 = design.weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(
                design.info_matrix().cholesky().is_some(),
                "seed {seed} produced a singular initialization"
            );
        }
    }

    #[test]
    fn ky_is_reproducible_bit_for_bit() {
        let arms = random_unit_arms(4, 30, 9);
        let a = ky_initialize(&arms, SharedSeed(123), 5).unwrap();
        let b = ky_initialize(&arms, SharedSeed(123), 5).unwrap();
        assert_eq!(a.len(), b.len());
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert_eq!(wa.to_bits(), wb.to_bits());
        }
        for (va, vb) in a.support.iter().zip(&b.support) {
            assert_eq!(va, vb);
        }
    }

    #[test]
    fn ky_rejects_non_spanning_arms() {
        // Five arms stuck in the xy-plane of ℝ³.
        let mut rng = StdRng::seed_from_u64(3);
        let arms: Vec<DVector<f64>> = (0..5)
            .map(|_| {
                DVector::from_vec(vec![
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    0.0,
                ])
            })
            .collect();
        match ky_initialize(&arms, SharedSeed(0), 0) {
            Err(BanditError::DegenerateArmSet { .. }) => {}
            other => panic!("expected DegenerateArmSet, got {other:?}"),
        }
        let dup = vec![basis(2)[0].clone(), basis(2)[0].clone()];
        assert!(matches!(
            ky_initialize(&dup, SharedSeed(0), 0),
            Err(BanditError::DegenerateArmSet { .. })
        ));
    }

    #[test]
    fn two_arm_planar_set_still_spans() {
        // {e₁, e₂}: the second sweep sees equal correlations everywhere, so
        // the spanning repair has to finish the job.
        let arms = basis(2);
        for seed in 0..64 {
            let design = ky_initialize(&arms, SharedSeed(seed), 0).unwrap();
            let g = g_value(&arms, &design).unwrap();
            assert!((g - 2.0).abs() < 1e-9, "seed {seed}: g={g}");
        }
    }

    #[test]
    fn basis_design_terminates_at_optimum() {
        let d = 4;
        let arms = basis(d);
        for seed in [1u64, 17, 92] {
            let init = ky_initialize(&arms, SharedSeed(seed), 0).unwrap();
            let solve =
                frank_wolfe_design(&arms, init.clone(), 2.0 * d as f64, 1000).unwrap();
            assert!(solve.converged);
            assert_eq!(solve.iterations, 0, "a repaired basis init already meets 2d");
            // Sharp target: the solver must actually reach the optimum g = d.
            let tight = frank_wolfe_design(&arms, init, d as f64 + 1e-9, 200_000).unwrap();
            assert!(tight.converged, "seed {seed} did not reach g = d + 1e-9");
            assert!(tight.achieved_g <= d as f64 + 1e-9);
            assert!(tight.achieved_g >= d as f64 - 1e-9);
            for w in &tight.design.weights {
                assert!((w - 0.25).abs() < 1e-4, "weights should even out, got {w}");
            }
        }
    }

    #[test]
    fn twenty_random_unit_vectors_reach_2d() {
        let d = 3;
        let arms = random_unit_arms(d, 20, 11);
        let init = ky_initialize(&arms, SharedSeed(5), 0).unwrap();
        let solve = frank_wolfe_design(&arms, init, 2.0 * d as f64, 10_000).unwrap();
        assert!(solve.converged);
        assert!(solve.achieved_g <= 2.0 * d as f64 + 1e-12);
        // Exhaustive re-check of the reported leverage.
        let v_inv = solve
            .design
            .info_matrix()
            .cholesky()
            .expect("final design must be nonsingular")
            .inverse();
        let manual = arms
            .iter()
            .map(|a| (&v_inv * a).dot(a))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((manual - solve.achieved_g).abs() < 1e-12);
    }

    #[test]
    fn planted_simplex_optimum_via_grid() {
        // Arms e₁, e₂, (e₁+e₂)/√2: the optimum puts nothing on the diagonal
        // arm and reaches g = 2 exactly; a grid search over the weight
        // simplex confirms no design does better.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let arms = vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
            DVector::from_vec(vec![s, s]),
        ];
        let init = ky_initialize(&arms, SharedSeed(2), 0).unwrap();
        let solve = frank_wolfe_design(&arms, init, 4.0, 50_000).unwrap();
        assert!(solve.converged);
        assert!(solve.achieved_g >= 2.0 - 1e-9, "Kiefer-Wolfowitz floor");
        assert!(solve.achieved_g <= 4.0 + 1e-12);

        let mut grid_best = f64::INFINITY;
        let steps = 500;
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let w = [
                    i as f64 / steps as f64,
                    j as f64 / steps as f64,
                    (steps - i - j) as f64 / steps as f64,
                ];
                let mut v = DMatrix::zeros(2, 2);
                for (a, wi) in arms.iter().zip(&w) {
                    v += *wi * a * a.transpose();
                }
                let Some(chol) = v.cholesky() else { continue };
                let v_inv = chol.inverse();
                let g = arms
                    .iter()
                    .map(|a| (&v_inv * a).dot(a))
                    .fold(f64::NEG_INFINITY, f64::max);
                grid_best = grid_best.min(g);
            }
        }
        // The true optimum puts all mass on {e₁, e₂} and achieves exactly 2.
        assert!((grid_best - 2.0).abs() <= 2e-3);
        assert!(solve.achieved_g >= grid_best - 2e-3);
    }

    #[test]
    fn kiefer_wolfowitz_floor_holds() {
        for d in 2..=4usize {
            let arms = random_unit_arms(d, 25, 100 + d as u64);
            for seed in 0..50 {
                let design = ky_initialize(&arms, SharedSeed(seed), 0).unwrap();
                let g = g_value(&arms, &design).unwrap();
                assert!(g >= d as f64 - 1e-9, "d={d} seed={seed} g={g}");
            }
        }
    }

    #[test]
    fn frank_wolfe_is_deterministic_and_ascends() {
        let arms = random_unit_arms(3, 25, 13);
        let init = ky_initialize(&arms, SharedSeed(8), 0).unwrap();
        let a = frank_wolfe_design(&arms, init.clone(), 3.0 + 1e-9, 40).unwrap();
        let b = frank_wolfe_design(&arms, init.clone(), 3.0 + 1e-9, 40).unwrap();
        assert_eq!(a.iterations, b.iterations);
        for (wa, wb) in a.design.weights.iter().zip(&b.design.weights) {
            assert_eq!(wa.to_bits(), wb.to_bits());
        }

        // log det V never decreases along the iterate sequence.
        let mut last = f64::NEG_INFINITY;
        for cap in 0..30 {
            let solve = frank_wolfe_design(&arms, init.clone(), 3.0 + 1e-12, cap).unwrap();
            let logdet = solve
                .design
                .info_matrix()
                .cholesky()
                .expect("iterates stay nonsingular")
                .l()
                .diagonal()
                .iter()
                .map(|x| 2.0 * x.ln())
                .sum::<f64>();
            assert!(
                logdet >= last - 1e-9,
                "cap {cap}: log det fell from {last} to {logdet}"
            );
            last = logdet;
        }
    }

    #[test]
    fn rejects_target_below_dimension() {
        let arms = basis(3);
        let init = ky_initialize(&arms, SharedSeed(1), 0).unwrap();
        assert!(matches!(
            frank_wolfe_design(&arms, init, 2.5, 10),
            Err(BanditError::OutOfRange { name: "target_g", .. })
        ));
    }

    #[test]
    fn g_value_rejects_singular_designs() {
        let arms = basis(2);
        let design = Design::new(vec![arms[0].clone()], vec![1.0]).unwrap();
        assert!(matches!(
            g_value(&arms, &design),
            Err(BanditError::SingularDesign { .. })
        ));
    }

    #[test]
    fn effective_support_worked_numbers() {
        let design = Design::new(basis(2), vec![0.999, 0.001]).unwrap();
        let fixed = effective_support(&design);
        let x = 1.0 / (4.0 * 2.0 * 2f64.ln());
        let expected = (1.0 - x) * 0.001 + x;
        assert!((fixed.weights[1] - expected).abs() < 1e-15);
        assert!((fixed.weights[1] - 0.18116).abs() < 5e-5);
        let sum: f64 = fixed.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        let floor = min_weight_floor(2);
        assert!(fixed.weights.iter().all(|w| *w >= floor));
        let g = g_value(&basis(2), &fixed).unwrap();
        assert!((g - 5.52).abs() < 5e-3, "g after one mixing step, got {g}");
        assert!(g <= 8.0, "a 2d-approximate input must stay within 4d");
    }

    #[test]
    fn effective_support_noop_branch() {
        let design = Design::new(basis(2), vec![0.3, 0.7]).unwrap();
        let out = effective_support(&design);
        for (a, b) in out.weights.iter().zip(&design.weights) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn mixing_step_inflates_leverage_by_at_most_one_over_one_minus_x() {
        let design = Design::new(basis(2), vec![0.999, 0.001]).unwrap();
        let fixed = effective_support(&design);
        let x = 1.0 / (4.0 * 2.0 * 2f64.ln());
        let before = design.info_matrix().try_inverse().unwrap();
        let after = fixed.info_matrix().try_inverse().unwrap();
        let probes = vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
            DVector::from_vec(vec![0.6, 0.8]),
            DVector::from_vec(vec![-0.3, 0.4]),
        ];
        for a in &probes {
            let n_before = (&before * a).dot(a);
            let n_after = (&after * a).dot(a);
            assert!(
                n_after <= n_before / (1.0 - x) + 1e-12,
                "probe {a}: {n_after} vs bound {}",
                n_before / (1.0 - x)
            );
        }
    }

    #[test]
    fn multiset_counts_round_up() {
        // δ = e⁻¹ and ε² = 0.32 make N = ⌈8·4/0.32⌉ = 100 exactly.
        let design = Design::new(basis(4), vec![0.25; 4]).unwrap();
        let eps = 0.32f64.sqrt();
        let (counts, n) = design_to_multiset(&design, eps, (-1.0f64).exp()).unwrap();
        assert_eq!(n, 100);
        assert_eq!(counts, vec![25, 25, 25, 25]);
        let total: u64 = counts.iter().sum();
        assert!(total >= n && total <= n + design.len() as u64);

        let skew = Design::new(basis(2), vec![0.999, 0.001]).unwrap();
        let (counts, n) = design_to_multiset(&skew, 0.1, 0.01).unwrap();
        let expected_n = (8.0 * 2.0 * 100f64.ln() / 0.01).ceil() as u64;
        assert_eq!(n, expected_n);
        assert_eq!(counts[0], (0.999 * n as f64).ceil() as u64);
        assert_eq!(counts[1], (0.001 * n as f64).ceil() as u64);
        let total: u64 = counts.iter().sum();
        assert!(total >= n && total <= n + 2);
    }

    #[test]
    fn multiset_accuracy_scaling() {
        let design = Design::new(basis(3), vec![1.0 / 3.0; 3]).unwrap();
        let (_, n1) = design_to_multiset(&design, 0.2, 0.05).unwrap();
        let (_, n2) = design_to_multiset(&design, 0.1, 0.05).unwrap();
        assert_eq!(n1, (8.0 * 3.0 * 20f64.ln() / 0.04).ceil() as u64);
        assert_eq!(n2, (8.0 * 3.0 * 20f64.ln() / 0.01).ceil() as u64);
        assert!(n2 >= 4 * n1 - 4 && n2 <= 4 * n1 + 4);
    }

    #[test]
    fn min_weight_floor_formula() {
        assert!((min_weight_floor(1) - 1.0 / (8.0 * 2f64.ln())).abs() < 1e-15);
        assert!((min_weight_floor(2) - 1.0 / (16.0 * 2f64.ln())).abs() < 1e-15);
        assert!((min_weight_floor(5) - 1.0 / (40.0 * 5f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn core_set_stays_small() {
        // Support growth is bounded by the initialization (2d) plus the few
        // Frank-Wolfe additions needed to reach 2d-approximation.
        let c2 = 3.0;
        for d in 2..=6usize {
            let arms = random_unit_arms(d, 40, 200 + d as u64);
            let init = ky_initialize(&arms, SharedSeed(d as u64), 0).unwrap();
            let solve = frank_wolfe_design(&arms, init, 2.0 * d as f64, 10_000).unwrap();
            assert!(solve.converged, "d={d}");
            let bound = c2 * d as f64 * ((d as f64).ln() + std::f64::consts::E).ln()
                + 2.0 * d as f64;
            assert!(
                (solve.design.len() as f64) <= bound,
                "d={d}: support {} exceeds bound {bound}",
                solve.design.len()
            );
        }
    }
}
