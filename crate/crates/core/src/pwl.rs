//! Piecewise-linear targets in sum-of-ramps form, the knot-count formulas,
//! and the parameter-perturbation error budgets that drive pruning
//! tolerances.
//!
//! A rep with N knots holds 2N+1 parameters and evaluates as
//! `f(x) = Σ_{i<N} a_i · φ(x − s_i) + a_N`, constant below the first knot.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TicketError};
use crate::grid::linspace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwlRep {
    /// Knots s_0 < … < s_{N−1}.
    pub knots: Vec<f64>,
    /// Ramp coefficients a_0 … a_{N−1}, then the constant a_N.
    pub coeffs: Vec<f64>,
}

impl PwlRep {
    pub fn new(knots: Vec<f64>, coeffs: Vec<f64>) -> Result<Self> {
        if knots.is_empty() || coeffs.len() != knots.len() + 1 {
            return Err(TicketError::BadParameter(format!(
                "{} coefficients for {} knots (need N+1)",
                coeffs.len(),
                knots.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(TicketError::BadParameter("knots must be strictly increasing".into()));
        }
        if knots.iter().chain(&coeffs).any(|v| !v.is_finite()) {
            return Err(TicketError::BadParameter("non-finite rep parameter".into()));
        }
        Ok(PwlRep { knots, coeffs })
    }

    pub fn n(&self) -> usize {
        self.knots.len()
    }

    /// The constant term a_N (also the value everywhere below s_0).
    pub fn constant(&self) -> f64 {
        *self.coeffs.last().unwrap()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    /// Knot spacing (maximum, though every builder here is equidistant).
    pub fn delta(&self) -> f64 {
        self.knots.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut y = self.constant();
        for (s, a) in self.knots.iter().zip(&self.coeffs) {
            y += a * (x - s).max(0.0);
        }
        y
    }

    /// Interpolate `f` on `n ≥ 2` equidistant knots over [lo, hi]. Matches f
    /// exactly at every knot, is affine in between, and extends flat on both
    /// sides (value f(lo) below, f(hi) above) — which is precisely the
    /// clamping the exp target needs.
    pub fn from_samples(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(TicketError::BadParameter("from_samples needs N >= 2 knots".into()));
        }
        if !(lo < hi) {
            return Err(TicketError::BadParameter("empty sample interval".into()));
        }
        let knots = linspace(lo, hi, n);
        let values: Vec<f64> = knots.iter().map(|&s| f(s)).collect();
        let slopes: Vec<f64> = (0..n - 1)
            .map(|i| (values[i + 1] - values[i]) / (knots[i + 1] - knots[i]))
            .collect();
        let mut coeffs = Vec::with_capacity(n + 1);
        coeffs.push(slopes[0]);
        for i in 1..n - 1 {
            coeffs.push(slopes[i] - slopes[i - 1]);
        }
        // cancel the final slope: flat extension beyond the last knot
        coeffs.push(-slopes[n - 2]);
        coeffs.push(values[0]);
        PwlRep::new(knots, coeffs)
    }

    /// Sup |rep − f| over the knot span, measured on a grid 100× finer than
    /// the knot spacing.
    pub fn sup_error_against(&self, f: impl Fn(f64) -> f64) -> f64 {
        let (lo, hi) = self.domain();
        let points = 100 * (self.n() - 1).max(1) + 1;
        linspace(lo, hi, points)
            .into_iter()
            .map(|x| (self.eval(x) - f(x)).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetFamily {
    Log,
    Exp,
    Sin,
}

/// Knot counts that push the interpolation error below `eps` for each target
/// family ((t, k, m) are the exponent bound, feature count, and output count;
/// sin only reads `eps`).
pub fn choose_n(family: TargetFamily, eps: f64, t: f64, k: f64, m: f64) -> usize {
    let extra = match family {
        TargetFamily::Log => (t * k * m / eps).sqrt().ceil(),
        TargetFamily::Exp => (t * (k * m / (4.0 * eps)).sqrt()).ceil(),
        TargetFamily::Sin => (std::f64::consts::PI / (eps / 2.0).asin()).ceil(),
    };
    1 + extra as usize
}

/// ln((1+x)/2) on [0, 1].
pub fn target_log(n: usize) -> Result<PwlRep> {
    PwlRep::from_samples(|x| ((1.0 + x) / 2.0).ln(), 0.0, 1.0, n)
}

/// e^y on [−t·ln 2, 0]; the flat extensions realize the clamps
/// (0.5^t below the domain, 1 above it).
pub fn target_exp(t: f64, n: usize) -> Result<PwlRep> {
    PwlRep::from_samples(f64::exp, -t * std::f64::consts::LN_2, 0.0, n)
}

/// sin(2πx) + 1 on [0, len]; the +1 keeps the target positive and is
/// reported as an offset for the trained constant to absorb.
pub fn target_sin(len: f64, n: usize) -> Result<PwlRep> {
    PwlRep::from_samples(|x| (2.0 * std::f64::consts::PI * x).sin() + 1.0, 0.0, len, n)
}

/// Interpolation error bound 4·sin(πΔ) for sin targets at spacing
/// Δ = len/(N−1), valid for Δ ≤ 1/2.
pub fn sin_error_bound(n: usize, domain_length: f64) -> Result<f64> {
    if n < 2 {
        return Err(TicketError::BadParameter("need at least two knots".into()));
    }
    let delta = domain_length / (n - 1) as f64;
    if delta > 0.5 {
        return Err(TicketError::Infeasible(format!(
            "sin bound needs spacing <= 1/2, got {delta}"
        )));
    }
    Ok(4.0 * (std::f64::consts::PI * delta).sin())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBudget {
    /// Allowed perturbation of every coefficient a_0 … a_N.
    pub eps_a: f64,
    /// Allowed perturbation of every knot s_i.
    pub eps_s: f64,
    /// True when max{|s_0|, |s_{N−1}|} < 1 and the budget fell back to the
    /// max{1, ·} form the derivation assumes.
    pub domain_clamped: bool,
}

/// Per-parameter tolerances keeping the realized function within `eps` of
/// the rep in sup norm over the knot span:
/// ε_a = ε / 2((N+1)·max{1,|s_0|,|s_{N−1}|} + Σ|s_i|),
/// ε_s = ε / 2(N + Σ_{i<N} |a_i|).
pub fn error_budget(rep: &PwlRep, eps: f64) -> ParamBudget {
    let n = rep.n();
    let ends = rep.knots[0].abs().max(rep.knots[n - 1].abs());
    let m = ends.max(1.0);
    let knot_mass: f64 = rep.knots.iter().map(|s| s.abs()).sum();
    let ramp_mass: f64 = rep.coeffs[..n].iter().map(|a| a.abs()).sum();
    ParamBudget {
        eps_a: eps / (2.0 * ((n + 1) as f64 * m + knot_mass)),
        eps_s: eps / (2.0 * (n as f64 + ramp_mass)),
        domain_clamped: ends < 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn single_ramp() {
        let rep = PwlRep::new(vec![0.0], vec![1.0, 0.0]).unwrap();
        assert_eq!(rep.eval(2.0), 2.0);
        assert_eq!(rep.eval(-1.0), 0.0);
    }

    #[test]
    fn interpolates_at_knots() {
        let f = |x: f64| (x - 0.5).abs();
        let rep = PwlRep::from_samples(f, 0.0, 0.5, 2).unwrap();
        assert_eq!(rep.eval(0.0), 0.5);
        assert_eq!(rep.eval(0.5), 0.0);
        for n in [2usize, 5, 21] {
            let rep = PwlRep::from_samples(f64::sin, -1.0, 2.0, n).unwrap();
            for &s in &rep.knots {
                assert!((rep.eval(s) - s.sin()).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn eval_matches_independent_oracle() {
        let mut rng = substream(13, &[0]);
        let mut knots: Vec<f64> = (0..7).map(|_| rng.gen_range(-3.0..3.0)).collect();
        knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let coeffs: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let rep = PwlRep::new(knots.clone(), coeffs.clone()).unwrap();
        for _ in 0..100 {
            let x = rng.gen_range(-4.0..4.0);
            // second evaluator: plain indexed loop over ramps
            let mut y = coeffs[7];
            for i in 0..7 {
                y += coeffs[i] * f64::max(x - knots[i], 0.0);
            }
            assert_eq!(rep.eval(x).to_bits(), y.to_bits());
        }
    }

    #[test]
    fn reproduces_affine_functions() {
        let f = |x: f64| 2.0 * x - 3.0;
        for n in [2usize, 3, 17] {
            let rep = PwlRep::from_samples(f, -1.0, 4.0, n).unwrap();
            assert!(rep.sup_error_against(f) <= 1e-12);
        }
    }

    #[test]
    fn log_and_exp_interpolation_bounds() {
        let rep = target_log(11).unwrap();
        let d = rep.delta();
        let err = rep.sup_error_against(|x| ((1.0 + x) / 2.0).ln());
        assert!(err <= 0.25 * d * d, "log err {err} vs {}", 0.25 * d * d);

        let rep = target_exp(4.0, 41).unwrap();
        let d = rep.delta();
        let err = rep.sup_error_against(f64::exp);
        assert!(err <= d * d / 8.0, "exp err {err} vs {}", d * d / 8.0);
    }

    #[test]
    fn knot_count_formulas() {
        assert_eq!(choose_n(TargetFamily::Log, 1.0, 1.0, 1.0, 1.0), 2);
        assert_eq!(choose_n(TargetFamily::Exp, 0.25, 2.0, 1.0, 1.0), 3);
        assert_eq!(choose_n(TargetFamily::Sin, 0.02, 1.0, 1.0, 1.0), 316);
    }

    #[test]
    fn sin_bound_values() {
        assert!((sin_error_bound(3, 1.0).unwrap() - 4.0).abs() < 1e-12);
        assert!(sin_error_bound(2, 1.0).is_err()); // spacing 1 > 1/2
        let mut prev = f64::INFINITY;
        for n in [3usize, 5, 11, 21, 51] {
            let b = sin_error_bound(n, 1.0).unwrap();
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn exp_clamps_flat_on_both_sides() {
        let rep = target_exp(4.0, 41).unwrap();
        assert!((rep.eval(0.5) - 1.0).abs() <= 1e-12);
        assert!((rep.eval(7.0) - 1.0).abs() <= 1e-12);
        assert_eq!(rep.eval(-5.0), rep.constant());
        assert!((rep.constant() - 0.5f64.powi(4)).abs() <= 1e-12);
    }

    #[test]
    fn budget_example() {
        let rep = PwlRep::new(vec![0.0, 1.0], vec![1.0, -2.0, 0.0]).unwrap();
        let b = error_budget(&rep, 0.1);
        assert!((b.eps_a - 0.0125).abs() < 1e-15);
        assert!((b.eps_s - 0.01).abs() < 1e-15);
        assert!(!b.domain_clamped);

        let small = PwlRep::new(vec![0.0, 0.5], vec![1.0, -2.0, 0.0]).unwrap();
        assert!(error_budget(&small, 0.1).domain_clamped);
    }

    #[test]
    fn piecewise_affine_between_knots() {
        let rep = PwlRep::from_samples(|x| x.sin(), 0.0, 1.0, 5).unwrap();
        let h = 1e-3;
        for x in linspace(0.01, 0.99, 197) {
            let near_knot = rep.knots.iter().any(|s| (x - s).abs() <= 2.0 * h);
            if near_knot {
                continue;
            }
            let d2 = rep.eval(x + h) - 2.0 * rep.eval(x) + rep.eval(x - h);
            assert!(d2.abs() <= 1e-12, "curvature {d2} at {x}");
        }
    }

    #[test]
    fn serde_round_trip() {
        let rep = target_sin(1.0, 21).unwrap();
        let s = serde_json::to_string(&rep).unwrap();
        let back: PwlRep = serde_json::from_str(&s).unwrap();
        assert_eq!(rep, back);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn perturbations_at_budget_stay_within_eps(
            seed in 0u64..1_000_000,
            n in 2usize..8,
            eps in 0.01f64..0.5,
        ) {
            let mut rng = substream(seed, &[42]);
            let lo = rng.gen_range(-2.0..1.0);
            let hi = lo + rng.gen_range(0.5..3.0);
            let knots = linspace(lo, hi, n);
            let coeffs: Vec<f64> = (0..=n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let rep = PwlRep::new(knots, coeffs).unwrap();
            let budget = error_budget(&rep, eps);

            // worst-style perturbation: full budget, random signs
            let pk: Vec<f64> = rep.knots.iter()
                .map(|&s| s + budget.eps_s * if rng.gen::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let pc: Vec<f64> = rep.coeffs.iter()
                .map(|&a| a + budget.eps_a * if rng.gen::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let perturbed_eval = |x: f64| -> f64 {
                let mut y = pc[n];
                for i in 0..n {
                    y += pc[i] * f64::max(x - pk[i], 0.0);
                }
                y
            };
            for x in linspace(lo, hi, 400) {
                let gap = (rep.eval(x) - perturbed_eval(x)).abs();
                prop_assert!(gap <= eps + 1e-12, "gap {gap} > eps {eps}");
            }
        }
    }
}
