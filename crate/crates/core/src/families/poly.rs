//! The polynomial family b(x) = ∏ᵢ 0.5^{rᵢ}(1+xᵢ)^{rᵢ}, realized as
//! exp(Σᵢ rᵢ·log((1+xᵢ)/2)): a shared log stage per input coordinate, one
//! dense combination stage, and a shared exp stage per basis channel.
//!
//! Stage outputs are kept nonnegative by shifting the frame: the log stage
//! emits ĥ(x) = log(1+x) ∈ [0, log 2], the combination stage emits
//! z_j = log 2·Σᵢ r_ji − Σᵢ r_ji·ĥ(xᵢ) ∈ [0, t·log 2], and the exp stage
//! approximates e^{−z}, whose value at z_j is exactly b_j(x). The exp
//! target's constant e⁰ = 1 is reported as the ticket offset.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use super::{
    composite_ticket, conjugate_rep, prune_shared_stage, stage_error, FamilyNet, FamilyTicket,
    StageReport, StageSheet,
};
use crate::error::{Result, TicketError};
use crate::net::LayerKind;
use crate::prune::{prune_linear, ConstantMode, PruneOptions};
use crate::pwl::PwlRep;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyFamilySpec {
    pub d: usize,
    /// One exponent vector r^{(j)} per basis function, entries ≥ 0. The
    /// theorems assume integers; the pipeline itself is happy with reals.
    pub exponents: Vec<Vec<f64>>,
    pub eps: f64,
    pub delta: f64,
    /// Output dimension of the downstream functions the ticket serves.
    pub m: usize,
}

impl PolyFamilySpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(TicketError::BadParameter("input dimension must be positive".into()));
        }
        if self.exponents.is_empty() {
            return Err(TicketError::BadParameter("need at least one basis function".into()));
        }
        if self.exponents.iter().any(|r| r.len() != self.d) {
            return Err(TicketError::ShapeMismatch(format!(
                "exponent vectors must have {} entries",
                self.d
            )));
        }
        if self.exponents.iter().flatten().any(|&r| !r.is_finite() || r < 0.0) {
            return Err(TicketError::BadParameter("exponents must be finite and >= 0".into()));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) || !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(TicketError::BadParameter("eps and delta must lie in (0, 1)".into()));
        }
        if self.m == 0 {
            return Err(TicketError::BadParameter("output dimension must be positive".into()));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.exponents.len()
    }

    /// Largest single exponent q.
    pub fn degree_bound(&self) -> f64 {
        self.exponents.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Largest total degree t = max_j Σᵢ r_ji.
    pub fn total_degree(&self) -> f64 {
        self.exponents.iter().map(|r| r.iter().sum()).fold(0.0, f64::max)
    }

    /// Whether every exponent is an integer, i.e. the family sits inside
    /// the theorem's basis rather than the wider log/exp-expressible set.
    pub fn integer_exponents(&self) -> bool {
        self.exponents.iter().flatten().all(|r| r.fract() == 0.0)
    }
}

/// Three-stage polynomial target: the two knotted reps, the combination
/// matrix, and the per-stage parameter sheets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyTarget {
    pub spec: PolyFamilySpec,
    /// ĥ(x) = log(1+x) on [0, 1]; constant term exactly 0.
    pub log_rep: PwlRep,
    /// e^{−z} on [0, t·log 2]; flat extensions realize the clamps.
    pub exp_rep: PwlRep,
    /// Combination matrix −r (k×d) over the ĥ channels.
    pub linear_w: Vec<Vec<f64>>,
    /// Per-channel bias log 2·Σᵢ r_ji.
    pub linear_b: Vec<f64>,
    pub log_sheet: StageSheet,
    pub multi_sheet: StageSheet,
    pub exp_sheet: StageSheet,
}

pub fn build_poly_target(spec: &PolyFamilySpec) -> Result<PolyTarget> {
    spec.validate()?;
    let (k, m, d) = (spec.k() as f64, spec.m as f64, spec.d as f64);
    let eps = spec.eps;
    let q = spec.degree_bound();
    let t = spec.total_degree().max(1.0);
    let delta_stage = 1.0 - (1.0 - spec.delta).cbrt();

    let n_log = 1 + (t * k * m / eps).sqrt().ceil() as usize;
    let n_exp = 1 + (t * (k * m / (4.0 * eps)).sqrt()).ceil() as usize;
    let log_sheet =
        StageSheet { eps: eps / (6.0 * t * k * m), delta: delta_stage, n: n_log, m: 2.0, q: 1.0 };
    let multi_sheet = StageSheet {
        eps: eps / (6.0 * k * m),
        delta: delta_stage,
        n: spec.k() * spec.d,
        m: q,
        q: d,
    };
    let exp_sheet = StageSheet {
        eps: eps / (6.0 * k * m),
        delta: delta_stage,
        n: n_exp,
        m: 2.0,
        q: t * LN_2,
    };

    let linear_w = spec.exponents.iter().map(|r| r.iter().map(|&v| -v).collect()).collect();
    let linear_b = spec.exponents.iter().map(|r| r.iter().sum::<f64>() * LN_2).collect();

    Ok(PolyTarget {
        spec: spec.clone(),
        log_rep: hhat_rep(n_log)?,
        exp_rep: decay_rep(t, n_exp)?,
        linear_w,
        linear_b,
        log_sheet,
        multi_sheet,
        exp_sheet,
    })
}

fn hhat_rep(n: usize) -> Result<PwlRep> {
    PwlRep::from_samples(|x| (1.0 + x).ln(), 0.0, 1.0, n)
}

fn decay_rep(t: f64, n: usize) -> Result<PwlRep> {
    PwlRep::from_samples(|z| (-z).exp(), 0.0, t * LN_2, n)
}

impl PolyTarget {
    /// Rebuild the knotted reps at explicit counts (the reproduction runs
    /// fix these independently of the theorem formulas).
    pub fn with_knot_counts(mut self, n_log: usize, n_exp: usize) -> Result<Self> {
        self.log_rep = hhat_rep(n_log)?;
        self.exp_rep = decay_rep(self.exp_sheet.q / LN_2, n_exp)?;
        self.log_sheet.n = n_log;
        self.exp_sheet.n = n_exp;
        Ok(self)
    }

    /// True basis values ∏ᵢ (0.5(1+xᵢ))^{r_ji}.
    pub fn basis(&self, x: &[f64]) -> Vec<f64> {
        self.spec
            .exponents
            .iter()
            .map(|r| {
                r.iter()
                    .zip(x)
                    .map(|(&rji, &xi)| (0.5 * (1.0 + xi)).powf(rji))
                    .product()
            })
            .collect()
    }

    /// Values of the knotted pipeline: log and exp replaced by their
    /// interpolants, the combination stage exact.
    pub fn composed_pwl(&self, x: &[f64]) -> Vec<f64> {
        let hhat: Vec<f64> = x.iter().map(|&xi| self.log_rep.eval(xi)).collect();
        self.linear_w
            .iter()
            .zip(&self.linear_b)
            .map(|(row, b)| {
                let z = b + row.iter().zip(&hhat).map(|(w, h)| w * h).sum::<f64>();
                self.exp_rep.eval(z)
            })
            .collect()
    }

    /// Prune a log → combination → exp pipeline down to this target.
    pub fn prune(&self, net: &FamilyNet, options: &PruneOptions) -> Result<FamilyTicket> {
        let spec = &self.spec;
        let (d, k) = (spec.d, spec.k());
        if net.stages.len() != 3 {
            return Err(TicketError::BadArchitecture(format!(
                "polynomial pipeline wants log, combination, exp stages; got {} stages",
                net.stages.len()
            )));
        }
        let log_stage = &net.stages[0];
        let multi_stage = &net.stages[1];
        let exp_stage = &net.stages[2];

        let la = &log_stage.architecture;
        if la.input_positions != d {
            return Err(TicketError::BadArchitecture(format!(
                "log stage runs at {} positions for {d} inputs",
                la.input_positions
            )));
        }
        let c0 = *la.widths.last().unwrap();
        let ma = &multi_stage.architecture;
        if ma.layer_kinds.iter().any(|&kk| kk != LayerKind::Dense) {
            return Err(TicketError::BadArchitecture("combination stage must be dense".into()));
        }
        if ma.output_len() != k {
            return Err(TicketError::ShapeMismatch(format!(
                "combination stage emits {} channels for {k} basis functions",
                ma.output_len()
            )));
        }
        let ea = &exp_stage.architecture;
        if ea.input_positions != k || *ea.widths.last().unwrap() != 1 {
            return Err(TicketError::BadArchitecture(
                "exp stage wants one position and one output channel per basis function".into(),
            ));
        }

        let log_report = prune_shared_stage(
            "log",
            log_stage,
            &self.log_rep,
            self.log_sheet.eps,
            self.log_sheet.delta,
            ConstantMode::Carrier,
            options,
        )?;
        let lam1 = log_report.lambda;

        // The ĥ values ride channel 0 of each log-stage position; the rest
        // of the flattened block is dead and pinned to a degenerate domain.
        let mut w = vec![vec![0.0; d * c0]; k];
        for (j, row) in self.linear_w.iter().enumerate() {
            for (p, &v) in row.iter().enumerate() {
                w[j][p * c0] = v;
            }
        }
        let b: Vec<f64> = self.linear_b.iter().map(|v| v / lam1).collect();
        let hi = LN_2 / lam1;
        let mut domain = vec![(0.0, 0.0); d * c0];
        for p in 0..d {
            domain[p * c0] = (0.0, hi);
        }
        let q_bound = self.multi_sheet.q.max(d as f64 * hi + 1.0);
        let mut o = options.clone();
        o.domain = domain;
        let multi_report = prune_linear(
            multi_stage,
            &w,
            &b,
            self.multi_sheet.eps / lam1,
            self.multi_sheet.delta,
            q_bound,
            &o,
        )
        .map_err(|e| stage_error("combination", e))?;
        let lam2 = lam1 * multi_report.lambda;

        let exp_target = conjugate_rep(&self.exp_rep, lam2)?;
        let exp_report = prune_shared_stage(
            "exp",
            exp_stage,
            &exp_target,
            self.exp_sheet.eps / lam2,
            self.exp_sheet.delta,
            ConstantMode::Absorb,
            options,
        )?;
        let lambda = lam2 * exp_report.lambda;
        let offset = lam2 * exp_report.offset;

        let stages = vec![
            StageReport { name: "log".into(), report: log_report },
            StageReport { name: "combination".into(), report: multi_report },
            StageReport { name: "exp".into(), report: exp_report },
        ];
        composite_ticket(
            net,
            stages,
            lambda,
            offset,
            spec.eps,
            spec.delta,
            k,
            spec.m,
            &|x| self.composed_pwl(x),
            &|x| self.basis(x),
            options,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::eval_grid;
    use crate::init::InitFamily;
    use crate::net::Architecture;

    fn spec(d: usize, exponents: Vec<Vec<f64>>, eps: f64) -> PolyFamilySpec {
        PolyFamilySpec { d, exponents, eps, delta: 0.3, m: 1 }
    }

    #[test]
    fn sheet_follows_the_stage_formulas() {
        let target = build_poly_target(&spec(2, vec![vec![1.0, 0.0], vec![0.0, 2.0]], 0.2)).unwrap();
        // t = 2, q = 2, k = 2, m = 1
        assert!((target.log_sheet.eps - 0.2 / 24.0).abs() < 1e-15);
        assert!((target.multi_sheet.eps - 0.2 / 12.0).abs() < 1e-15);
        assert!((target.exp_sheet.eps - 0.2 / 12.0).abs() < 1e-15);
        assert_eq!(target.log_sheet.n, 1 + (2.0f64 * 2.0 / 0.2).sqrt().ceil() as usize);
        assert_eq!(target.exp_sheet.n, 1 + (2.0 * (2.0f64 / 0.8).sqrt()).ceil() as usize);
        assert_eq!(target.multi_sheet.n, 4);
        assert_eq!(target.multi_sheet.m, 2.0);
        assert_eq!(target.multi_sheet.q, 2.0);
        assert!((target.exp_sheet.q - 2.0 * LN_2).abs() < 1e-15);
        // the three stage confidences compose back to the requested one
        let residual = (1.0 - target.log_sheet.delta).powi(3);
        assert!((residual - 0.7).abs() < 1e-12);
        assert_eq!(target.log_rep.n(), target.log_sheet.n);
        assert_eq!(target.exp_rep.n(), target.exp_sheet.n);
        assert_eq!(target.log_rep.constant(), 0.0);
    }

    #[test]
    fn single_linear_monomial_composes_to_the_affine_map() {
        let target = build_poly_target(&spec(2, vec![vec![1.0, 0.0]], 0.1)).unwrap();
        let bound = 0.1 / 2.0;
        for x in eval_grid(&[(0.0, 1.0), (0.0, 1.0)], 400) {
            let basis = target.basis(&x);
            assert!((basis[0] - 0.5 * (1.0 + x[0])).abs() < 1e-14);
            let composed = target.composed_pwl(&x);
            assert!(
                (composed[0] - basis[0]).abs() <= bound,
                "deviation {} at {x:?}",
                (composed[0] - basis[0]).abs()
            );
        }
    }

    #[test]
    fn knot_count_overrides_rebuild_the_reps() {
        let target = build_poly_target(&spec(1, vec![vec![2.0]], 0.2))
            .unwrap()
            .with_knot_counts(10, 20)
            .unwrap();
        assert_eq!(target.log_rep.n(), 10);
        assert_eq!(target.exp_rep.n(), 20);
        assert_eq!(target.log_sheet.n, 10);
        assert_eq!(target.exp_sheet.n, 20);
        let (lo, hi) = target.exp_rep.domain();
        assert_eq!(lo, 0.0);
        assert!((hi - 2.0 * LN_2).abs() < 1e-15);
    }

    #[test]
    fn real_exponents_are_legal_but_flagged_noninteger() {
        let s = spec(2, vec![vec![0.5, 0.5], vec![1.0, 1.0]], 0.2);
        assert!(!s.integer_exponents());
        assert!(spec(2, vec![vec![1.0, 2.0]], 0.2).integer_exponents());
        let target = build_poly_target(&s).unwrap();
        for x in eval_grid(&[(0.0, 1.0), (0.0, 1.0)], 100) {
            let b = target.basis(&x);
            let direct = (0.5 * (1.0 + x[0])).sqrt() * (0.5 * (1.0 + x[1])).sqrt();
            assert!((b[0] - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn pipeline_prunes_end_to_end() {
        let s = spec(2, vec![vec![1.0, 0.0], vec![1.0, 1.0]], 0.25);
        let target = build_poly_target(&s).unwrap();
        let archs = [
            Architecture::shared(vec![1, 150, target.log_sheet.n, 150, 4], 2),
            Architecture::dense(vec![8, 150, 2]),
            Architecture::shared(vec![1, 150, target.exp_sheet.n, 150, 1], 2),
        ];
        let net = FamilyNet::sample(&archs, InitFamily::Uniform, 11).unwrap();
        let options = PruneOptions { ground_cap: 30, max_subset: 6, ..PruneOptions::default() };
        let ticket = target.prune(&net, &options).unwrap();

        assert_eq!(ticket.stages.len(), 3);
        assert_eq!(ticket.stages[0].name, "log");
        assert_eq!(ticket.stages[2].name, "exp");
        assert!(ticket.success, "flags: {:?}", ticket.stages.iter().map(|s| &s.report.flags).collect::<Vec<_>>());
        assert!(ticket.basis_error <= 0.25 / 2.0, "basis error {}", ticket.basis_error);
        assert!(
            ticket.basis_error <= ticket.pruning_error + ticket.approx_error + 1e-12,
            "triangle violated: {} > {} + {}",
            ticket.basis_error,
            ticket.pruning_error,
            ticket.approx_error
        );
        assert!((ticket.lambda - 1.0).abs() < 1e-12);
        assert!((ticket.offset - 1.0).abs() < 1e-12);
        assert!(ticket.surviving_fraction > 0.0 && ticket.surviving_fraction < 0.25);
    }

    #[test]
    fn trivial_monomial_prunes_to_the_constant_one() {
        let s = spec(2, vec![vec![0.0, 0.0]], 0.3);
        let target = build_poly_target(&s).unwrap();
        assert_eq!(target.linear_b, vec![0.0]);
        let archs = [
            Architecture::shared(vec![1, 120, target.log_sheet.n, 120, 2], 2),
            Architecture::dense(vec![4, 60, 1]),
            Architecture::shared(vec![1, 120, target.exp_sheet.n, 120, 1], 1),
        ];
        let net = FamilyNet::sample(&archs, InitFamily::Uniform, 5).unwrap();
        let ticket = target.prune(&net, &PruneOptions::default()).unwrap();
        assert!(ticket.basis_error <= 0.3, "basis error {}", ticket.basis_error);
        let masks = ticket.masks();
        let raw = net.forward_masked(&[0.4, 0.7], &masks).unwrap();
        let value = ticket.lambda * raw[0] + ticket.offset;
        assert!((value - 1.0).abs() <= 0.3);
    }

    #[test]
    fn stage_failures_carry_the_stage_name() {
        let s = spec(1, vec![vec![1.0]], 0.25);
        let target = build_poly_target(&s).unwrap();
        let archs = [
            Architecture::dense(vec![1, 150, target.log_sheet.n, 150, 4]),
            Architecture::dense(vec![4, 80, 1]),
            Architecture::shared(vec![1, 150, target.exp_sheet.n, 150, 1], 1),
        ];
        let net = FamilyNet::sample(&archs, InitFamily::Uniform, 3).unwrap();
        let err = target.prune(&net, &PruneOptions::default()).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("log stage"), "got: {text}");
        assert!(matches!(err, TicketError::Stage { stage: "log", .. }));
    }
}
