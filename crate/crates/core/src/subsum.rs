//! Subset-sum approximation: the solver that drives every pruning step, and
//! Monte Carlo checks of the probabilistic guarantees behind it.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TicketError};
use crate::rng::substream;

/// Exhaustive enumeration is capped at 2^25 subsets.
pub const EXACT_CAP: usize = 25;
/// Default cardinality cap of the cheap solver.
pub const DEFAULT_MAX_SUBSET: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSumInstance {
    pub ground: Vec<f64>,
    pub target: f64,
    pub tolerance: f64,
    /// Cardinality cap on the chosen subset; 0 means unbounded.
    pub max_subset: usize,
}

impl SubsetSumInstance {
    pub fn new(ground: Vec<f64>, target: f64, tolerance: f64) -> Self {
        SubsetSumInstance { ground, target, tolerance, max_subset: DEFAULT_MAX_SUBSET }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSumSolution {
    /// Chosen indices, ascending.
    pub indices: Vec<usize>,
    /// |target − Σ chosen|.
    pub achieved: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Global minimum over every subset allowed by `max_subset`.
    Exact,
    /// Minimum over subsets of at most `max_subset` elements.
    BestK,
}

struct Best {
    err: f64,
    indices: Vec<usize>,
}

impl Best {
    /// Ties break toward fewer elements, then lexicographically smaller
    /// index lists, so results are deterministic.
    fn offer(&mut self, err: f64, indices: &[usize]) {
        let better = err < self.err
            || (err == self.err
                && (indices.len() < self.indices.len()
                    || (indices.len() == self.indices.len()
                        && indices < self.indices.as_slice())));
        if better {
            self.err = err;
            self.indices = indices.to_vec();
        }
    }
}

fn dfs(ground: &[f64], target: f64, cap: usize, start: usize, sum: f64, stack: &mut Vec<usize>, best: &mut Best) {
    best.offer((target - sum).abs(), stack);
    if stack.len() == cap {
        return;
    }
    for i in start..ground.len() {
        stack.push(i);
        dfs(ground, target, cap, i + 1, sum + ground[i], stack, best);
        stack.pop();
    }
}

/// Minimize |target − Σ_{i∈S} X_i| over subsets S.
pub fn solve(inst: &SubsetSumInstance, strategy: Strategy) -> Result<SubsetSumSolution> {
    let n = inst.ground.len();
    if !(inst.tolerance > 0.0) {
        return Err(TicketError::BadParameter("tolerance must be positive".into()));
    }
    let mut best = Best { err: inst.target.abs(), indices: Vec::new() };
    match strategy {
        Strategy::Exact => {
            if n > EXACT_CAP {
                return Err(TicketError::GroundTooLarge { n, cap: EXACT_CAP });
            }
            let cap = if inst.max_subset == 0 { n } else { inst.max_subset.min(n) };
            let mut indices = Vec::with_capacity(n);
            for mask in 0u64..(1u64 << n) {
                if (mask.count_ones() as usize) > cap {
                    continue;
                }
                indices.clear();
                let mut sum = 0.0;
                for i in 0..n {
                    if mask >> i & 1 == 1 {
                        indices.push(i);
                        sum += inst.ground[i];
                    }
                }
                best.offer((inst.target - sum).abs(), &indices);
            }
        }
        Strategy::BestK => {
            let cap = if inst.max_subset == 0 { n } else { inst.max_subset.min(n) };
            let mut stack = Vec::with_capacity(cap);
            dfs(&inst.ground, inst.target, cap, 0, 0.0, &mut stack, &mut best);
        }
    }
    Ok(SubsetSumSolution {
        feasible: best.err <= inst.tolerance,
        achieved: best.err,
        indices: best.indices,
    })
}

/// Ground-set size bound: n ≥ C · (max{1, m/h} / α) · log(B / min(δ/max{1, m/h}, ε/max{m, h})).
pub fn required_ground_size(
    m: f64,
    h: f64,
    alpha: f64,
    bound: f64,
    eps: f64,
    delta: f64,
    c: f64,
) -> usize {
    let ratio = (m / h).max(1.0);
    let arg = bound / (delta / ratio).min(eps / m.max(h));
    (c * ratio / alpha * arg.ln()).ceil().max(0.0) as usize
}

/// Mixed-distribution variant with the larger log argument:
/// n ≥ C · (h·m / α) · log(B·m / min(δ, ε)). Kept separate from
/// `required_ground_size`; the two bounds do not coincide even at h = 1.
pub fn required_ground_size_mixed(
    m: f64,
    h: f64,
    alpha: f64,
    bound: f64,
    eps: f64,
    delta: f64,
    c: f64,
) -> usize {
    let arg = bound * m / delta.min(eps);
    (c * h * m / alpha * arg.ln()).ceil().max(0.0) as usize
}

/// Named ground-set value distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum GroundLaw {
    /// U[-1, 1]
    Uniform,
    /// N(0, 1)
    Normal,
    /// V₂V₁ with V₁ ~ U[0,1], V₂ ~ U[-2,2]; the law of w·φ(a) in the
    /// canonical frame.
    ProductUniform,
    /// V₂V₁ with V₁ ~ |N(0, σ₁²)|, V₂ ~ N(0, 4).
    ProductNormal { sigma1: f64 },
}

impl GroundLaw {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            GroundLaw::Uniform => rng.gen_range(-1.0..1.0),
            GroundLaw::Normal => Normal::new(0.0, 1.0).unwrap().sample(rng),
            GroundLaw::ProductUniform => rng.gen_range(0.0..1.0) * rng.gen_range(-2.0..2.0),
            GroundLaw::ProductNormal { sigma1 } => {
                let v1 = Normal::new(0.0, sigma1).unwrap().sample(rng).abs();
                let v2 = Normal::new(0.0, 2.0).unwrap().sample(rng);
                v1 * v2
            }
        }
    }

    /// Support bound for the bounded laws; unbounded laws are truncated to
    /// |X| ≤ 2 when drawing ground sets.
    pub fn bound(&self) -> f64 {
        match self {
            GroundLaw::Uniform => 1.0,
            GroundLaw::ProductUniform => 2.0,
            GroundLaw::Normal | GroundLaw::ProductNormal { .. } => 2.0,
        }
    }

    fn unbounded(&self) -> bool {
        matches!(self, GroundLaw::Normal | GroundLaw::ProductNormal { .. })
    }
}

/// Draw `n` values; for unbounded laws, samples with |X| > 2 are discarded
/// (not redrawn), so the returned set may be smaller than `n`.
pub fn draw_ground<R: Rng>(law: GroundLaw, n: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let x = law.sample(rng);
        if law.unbounded() && x.abs() > law.bound() {
            continue;
        }
        out.push(x);
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub claimed_alpha: f64,
    /// 2h × (histogram density floor on [-h, h]).
    pub empirical_alpha: f64,
    pub trials: usize,
    pub pass: bool,
}

/// Histogram lower bound on the density floor over [-h, h]: the law contains
/// α·U[-h,h] iff its density is ≥ α/(2h) there. Passes when the empirical
/// floor reaches the claim minus 0.02.
pub fn contains_uniform_check(
    law: GroundLaw,
    h: f64,
    claimed_alpha: f64,
    trials: usize,
    seed: u64,
) -> Result<ContainmentReport> {
    if trials < 100_000 {
        return Err(TicketError::BadParameter("containment check needs at least 1e5 trials".into()));
    }
    const BINS: usize = 20;
    let mut rng = substream(seed, &[0x616c_7068_61]);
    let mut hist = [0usize; BINS];
    for _ in 0..trials {
        let x = law.sample(&mut rng);
        if x.abs() <= h {
            let mut b = ((x + h) / (2.0 * h) * BINS as f64) as usize;
            if b == BINS {
                b -= 1;
            }
            hist[b] += 1;
        }
    }
    let bin_width = 2.0 * h / BINS as f64;
    let floor = hist.iter().copied().min().unwrap() as f64 / trials as f64 / bin_width;
    let empirical_alpha = 2.0 * h * floor;
    Ok(ContainmentReport {
        claimed_alpha,
        empirical_alpha,
        trials,
        pass: empirical_alpha >= claimed_alpha - 0.02,
    })
}

/// Fraction of seeded trials where a fresh ground set of `n` values admits a
/// subset within `eps` of a target drawn from U[-m, m].
pub fn success_rate(
    law: GroundLaw,
    n: usize,
    m: f64,
    eps: f64,
    trials: usize,
    strategy: Strategy,
    max_subset: usize,
    seed: u64,
) -> Result<f64> {
    if trials < 100 {
        return Err(TicketError::BadParameter("success_rate needs at least 100 trials".into()));
    }
    let mut ok = 0usize;
    for t in 0..trials {
        let mut rng = substream(seed, &[0x7375_6363, t as u64]);
        let ground = draw_ground(law, n, &mut rng);
        let target = rng.gen_range(-m..m);
        let inst = SubsetSumInstance { ground, target, tolerance: eps, max_subset };
        if solve(&inst, strategy)?.feasible {
            ok += 1;
        }
    }
    Ok(ok as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_target_takes_empty_set() {
        let inst = SubsetSumInstance::new(vec![0.3, -0.7, 1.1], 0.0, 1e-9);
        for strat in [Strategy::Exact, Strategy::BestK] {
            let sol = solve(&inst, strat).unwrap();
            assert!(sol.indices.is_empty());
            assert_eq!(sol.achieved, 0.0);
            assert!(sol.feasible);
        }
    }

    #[test]
    fn hand_instance_exact_zero() {
        let inst = SubsetSumInstance::new(vec![0.5, -0.25, 1.0, 0.125], 0.875, 1e-12);
        let mut inst = inst;
        inst.max_subset = 0;
        let sol = solve(&inst, Strategy::Exact).unwrap();
        assert_eq!(sol.indices, vec![1, 2, 3]);
        assert_eq!(sol.achieved, 0.0);
        let sol = solve(&inst, Strategy::BestK).unwrap();
        assert_eq!(sol.indices, vec![1, 2, 3]);
    }

    #[test]
    fn exact_cap_enforced() {
        let inst = SubsetSumInstance::new(vec![0.1; 26], 0.5, 0.1);
        assert!(matches!(
            solve(&inst, Strategy::Exact),
            Err(TicketError::GroundTooLarge { n: 26, cap: 25 })
        ));
    }

    #[test]
    fn best_k_matches_exact_at_full_cap() {
        for seed in 0..20u64 {
            let mut rng = substream(seed, &[1]);
            let ground = draw_ground(GroundLaw::ProductUniform, 14, &mut rng);
            let target = rng.gen_range(-1.0..1.0);
            let mut inst = SubsetSumInstance::new(ground, target, 1e-3);
            inst.max_subset = 0;
            let a = solve(&inst, Strategy::Exact).unwrap();
            let b = solve(&inst, Strategy::BestK).unwrap();
            assert_eq!(a.indices, b.indices, "seed {seed}");
            assert_eq!(a.achieved, b.achieved);
        }
    }

    #[test]
    fn achieved_monotone_in_cardinality_cap() {
        let mut rng = substream(9, &[2]);
        let ground = draw_ground(GroundLaw::ProductUniform, 18, &mut rng);
        let mut prev = f64::INFINITY;
        for cap in 1..=6 {
            let inst = SubsetSumInstance {
                ground: ground.clone(),
                target: 1.3,
                tolerance: 1e-3,
                max_subset: cap,
            };
            let err = solve(&inst, Strategy::BestK).unwrap().achieved;
            assert!(err <= prev, "cap {cap}: {err} > {prev}");
            prev = err;
        }
    }

    #[test]
    fn best5_hits_milli_precision_on_25_products() {
        // 25 product-of-uniform values, target 1.3: the ≤5-element solver
        // should land within 1e-3 in at least 99 of 100 seeds.
        let mut hits = 0;
        for seed in 0..100u64 {
            let mut rng = substream(seed, &[3]);
            let ground = draw_ground(GroundLaw::ProductUniform, 25, &mut rng);
            let inst = SubsetSumInstance::new(ground, 1.3, 1e-3);
            if solve(&inst, Strategy::BestK).unwrap().feasible {
                hits += 1;
            }
        }
        assert!(hits >= 99, "only {hits}/100 seeds within 1e-3");
    }

    #[test]
    fn ground_size_formula_values() {
        assert_eq!(required_ground_size(1.0, 1.0, 1.0, 1.0, 0.5, 0.5, 1.0), 1);
        assert_eq!(required_ground_size(2.0, 1.0, 0.25, 2.0, 0.01, 0.01, 1.0), 48);
    }

    #[test]
    fn mixed_formula_differs_by_log_argument() {
        // Same inputs, larger log argument (B·m / min(δ,ε) vs the split form).
        let a = required_ground_size(2.0, 1.0, 0.25, 2.0, 0.01, 0.01, 1.0);
        let b = required_ground_size_mixed(2.0, 1.0, 0.25, 2.0, 0.01, 0.01, 1.0);
        assert_eq!(b, 48); // ceil(8 · ln(400)) happens to coincide here
        assert_eq!(a, b);
        // ...but not in general:
        let a = required_ground_size(4.0, 2.0, 0.25, 2.0, 0.01, 0.01, 1.0);
        let b = required_ground_size_mixed(4.0, 2.0, 0.25, 2.0, 0.01, 0.01, 1.0);
        assert_ne!(a, b);
    }

    #[test]
    fn empty_ground_fails_far_targets() {
        let rate = success_rate(GroundLaw::Uniform, 0, 1.0, 1e-6, 100, Strategy::BestK, 5, 1)
            .unwrap();
        assert_eq!(rate, 0.0);
    }

    #[test]
    fn normal_ground_is_truncated() {
        let mut rng = substream(4, &[4]);
        let g = draw_ground(GroundLaw::Normal, 10_000, &mut rng);
        assert!(g.len() < 10_000); // some samples dropped
        assert!(g.iter().all(|x| x.abs() <= 2.0));
        let g = draw_ground(GroundLaw::ProductUniform, 10_000, &mut rng);
        assert_eq!(g.len(), 10_000); // bounded law keeps everything
    }

    #[test]
    fn containment_requires_enough_trials() {
        assert!(contains_uniform_check(GroundLaw::Normal, 1.0, 0.4, 1000, 0).is_err());
    }

    #[test]
    fn uniform_contains_itself() {
        let rep = contains_uniform_check(GroundLaw::Uniform, 1.0, 1.0, 200_000, 5).unwrap();
        assert!(rep.pass, "empirical alpha {}", rep.empirical_alpha);
    }
}
