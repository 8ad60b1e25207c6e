//! The Fourier family b(x) = sin(2π(Σᵢ n_i·x_i + c)): a dense frequency
//! stage mapping x to the phases y_j = Σᵢ n_ji·x_i + c_j ≥ 0, then a shared
//! sin stage approximating sin(2πy) + 1 once for all channels. The +1 shift
//! keeps the stage target nonnegative and is reported as the ticket offset.
//!
//! A single-stage pipeline is accepted when the frequency map is the
//! identity (d = k = 1, n = (1), c = 0), where y = x and the dense stage
//! would be a no-op.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{
    composite_ticket, conjugate_rep, prune_shared_stage, stage_error, FamilyNet, FamilyTicket,
    StageReport, StageSheet,
};
use crate::error::{Result, TicketError};
use crate::net::LayerKind;
use crate::prune::{prune_linear, prune_univariate, ConstantMode, PruneOptions};
use crate::pwl::{target_sin, PwlRep};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FourierFamilySpec {
    pub d: usize,
    /// One frequency vector n^{(j)} per basis function, entries in 1..=M.
    pub frequencies: Vec<Vec<u32>>,
    /// Phase offsets c_j ∈ [0, 1].
    pub phases: Vec<f64>,
    pub eps: f64,
    pub delta: f64,
    pub m: usize,
}

impl FourierFamilySpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(TicketError::BadParameter("input dimension must be positive".into()));
        }
        if self.frequencies.is_empty() {
            return Err(TicketError::BadParameter("need at least one basis function".into()));
        }
        if self.frequencies.iter().any(|n| n.len() != self.d) {
            return Err(TicketError::ShapeMismatch(format!(
                "frequency vectors must have {} entries",
                self.d
            )));
        }
        if self.frequencies.iter().flatten().any(|&n| n == 0) {
            return Err(TicketError::BadParameter("frequencies must be at least 1".into()));
        }
        if self.phases.len() != self.frequencies.len() {
            return Err(TicketError::ShapeMismatch(format!(
                "{} phases for {} frequency vectors",
                self.phases.len(),
                self.frequencies.len()
            )));
        }
        if self.phases.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(TicketError::BadParameter("phases must lie in [0, 1]".into()));
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
        self.frequencies.len()
    }

    /// Largest frequency entry M.
    pub fn frequency_bound(&self) -> u32 {
        self.frequencies.iter().flatten().copied().max().unwrap_or(1)
    }

    /// True when the frequency map adds nothing: one basis function reading
    /// one coordinate at frequency 1 with zero phase.
    pub fn is_identity_map(&self) -> bool {
        self.d == 1 && self.frequencies == [[1].as_slice()] && self.phases == [0.0]
    }
}

/// Two-stage Fourier target: the frequency matrix and the shared knotted
/// sine, with per-stage parameter sheets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FourierTarget {
    pub spec: FourierFamilySpec,
    /// sin(2πy) + 1 on [0, max_j(Σᵢ n_ji + c_j)].
    pub sin_rep: PwlRep,
    /// Frequency matrix n (k×d).
    pub linear_w: Vec<Vec<f64>>,
    /// Phases c (k).
    pub linear_b: Vec<f64>,
    pub multi_sheet: StageSheet,
    pub sin_sheet: StageSheet,
}

pub fn build_fourier_target(spec: &FourierFamilySpec) -> Result<FourierTarget> {
    spec.validate()?;
    let (k, m, d) = (spec.k() as f64, spec.m as f64, spec.d as f64);
    let big_m = spec.frequency_bound() as f64;
    let delta_stage = 1.0 - (1.0 - spec.delta).sqrt();
    let eps_sin = spec.eps / (4.0 * k * m);
    let n_sin = 1 + (PI / (eps_sin / 2.0).asin()).ceil() as usize;
    let multi_sheet = StageSheet {
        eps: spec.eps / (8.0 * k * m * PI),
        delta: delta_stage,
        n: spec.d * spec.k(),
        m: 1.0 + big_m,
        q: d,
    };
    let sin_sheet = StageSheet {
        eps: eps_sin,
        delta: delta_stage,
        n: n_sin,
        m: 1.0 + (d + 1.0) * big_m,
        q: (d + 1.0) * big_m,
    };

    let linear_w: Vec<Vec<f64>> =
        spec.frequencies.iter().map(|n| n.iter().map(|&v| v as f64).collect()).collect();
    let linear_b = spec.phases.clone();
    let len = phase_span(&linear_w, &linear_b);

    Ok(FourierTarget {
        spec: spec.clone(),
        sin_rep: target_sin(len, n_sin)?,
        linear_w,
        linear_b,
        multi_sheet,
        sin_sheet,
    })
}

fn phase_span(w: &[Vec<f64>], b: &[f64]) -> f64 {
    w.iter()
        .zip(b)
        .map(|(row, c)| row.iter().sum::<f64>() + c)
        .fold(0.0, f64::max)
}

impl FourierTarget {
    pub fn with_knot_count(mut self, n_sin: usize) -> Result<Self> {
        let len = phase_span(&self.linear_w, &self.linear_b);
        self.sin_rep = target_sin(len, n_sin)?;
        self.sin_sheet.n = n_sin;
        Ok(self)
    }

    /// Shifted basis values sin(2π(Σᵢ n_ji·x_i + c_j)) + 1, matching the
    /// positive frame the ticket works in.
    pub fn basis(&self, x: &[f64]) -> Vec<f64> {
        self.linear_w
            .iter()
            .zip(&self.linear_b)
            .map(|(row, c)| {
                let y = c + row.iter().zip(x).map(|(n, xi)| n * xi).sum::<f64>();
                (2.0 * PI * y).sin() + 1.0
            })
            .collect()
    }

    /// Values of the knotted pipeline: sine replaced by its interpolant,
    /// the frequency stage exact.
    pub fn composed_pwl(&self, x: &[f64]) -> Vec<f64> {
        self.linear_w
            .iter()
            .zip(&self.linear_b)
            .map(|(row, c)| {
                let y = c + row.iter().zip(x).map(|(n, xi)| n * xi).sum::<f64>();
                self.sin_rep.eval(y)
            })
            .collect()
    }

    /// Prune a frequency → sin pipeline (or a bare sin stage for the
    /// identity map) down to this target.
    pub fn prune(&self, net: &FamilyNet, options: &PruneOptions) -> Result<FamilyTicket> {
        let spec = &self.spec;
        let k = spec.k();
        match net.stages.len() {
            1 => {
                if !spec.is_identity_map() {
                    return Err(TicketError::BadArchitecture(
                        "a single-stage pipeline needs the identity frequency map".into(),
                    ));
                }
                let stage = &net.stages[0];
                let report = if stage
                    .architecture
                    .layer_kinds
                    .iter()
                    .all(|&kk| kk == LayerKind::Dense)
                {
                    let mut o = options.clone();
                    o.constant_mode = ConstantMode::Absorb;
                    o.domain = Vec::new();
                    prune_univariate(
                        stage,
                        &self.sin_rep,
                        self.sin_sheet.eps,
                        self.sin_sheet.delta,
                        &o,
                    )
                    .map_err(|e| stage_error("sin", e))?
                } else {
                    prune_shared_stage(
                        "sin",
                        stage,
                        &self.sin_rep,
                        self.sin_sheet.eps,
                        self.sin_sheet.delta,
                        ConstantMode::Absorb,
                        options,
                    )?
                };
                let lambda = report.lambda;
                let offset = report.offset;
                let stages = vec![StageReport { name: "sin".into(), report }];
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
            2 => {
                let multi_stage = &net.stages[0];
                let sin_stage = &net.stages[1];
                let ma = &multi_stage.architecture;
                if ma.input_len() != spec.d || ma.output_len() != k {
                    return Err(TicketError::ShapeMismatch(format!(
                        "frequency stage maps {}→{}, want {}→{k}",
                        ma.input_len(),
                        ma.output_len(),
                        spec.d
                    )));
                }
                let sa = &sin_stage.architecture;
                if sa.input_positions != k || *sa.widths.last().unwrap() != 1 {
                    return Err(TicketError::BadArchitecture(
                        "sin stage wants one position and one output channel per basis function"
                            .into(),
                    ));
                }

                let mut o = options.clone();
                o.domain = vec![(0.0, 1.0); spec.d];
                let q_bound = self.multi_sheet.q.max(spec.d as f64 + 1.0);
                let multi_report = prune_linear(
                    multi_stage,
                    &self.linear_w,
                    &self.linear_b,
                    self.multi_sheet.eps,
                    self.multi_sheet.delta,
                    q_bound,
                    &o,
                )
                .map_err(|e| stage_error("frequency", e))?;
                let lam1 = multi_report.lambda;

                let sin_target = conjugate_rep(&self.sin_rep, lam1)?;
                let sin_report = prune_shared_stage(
                    "sin",
                    sin_stage,
                    &sin_target,
                    self.sin_sheet.eps / lam1,
                    self.sin_sheet.delta,
                    ConstantMode::Absorb,
                    options,
                )?;
                let lambda = lam1 * sin_report.lambda;
                let offset = lam1 * sin_report.offset;

                let stages = vec![
                    StageReport { name: "frequency".into(), report: multi_report },
                    StageReport { name: "sin".into(), report: sin_report },
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
            n => Err(TicketError::BadArchitecture(format!(
                "fourier pipeline wants a frequency stage and a sin stage; got {n} stages"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::InitFamily;
    use crate::net::Architecture;

    fn spec(
        d: usize,
        frequencies: Vec<Vec<u32>>,
        phases: Vec<f64>,
        eps: f64,
    ) -> FourierFamilySpec {
        FourierFamilySpec { d, frequencies, phases, eps, delta: 0.3, m: 1 }
    }

    #[test]
    fn sheet_follows_the_stage_formulas() {
        let s = spec(2, vec![vec![1, 2], vec![2, 1]], vec![0.25, 0.0], 0.4);
        let target = build_fourier_target(&s).unwrap();
        // k = 2, m = 1, M = 2
        assert!((target.multi_sheet.eps - 0.4 / (16.0 * PI)).abs() < 1e-15);
        assert!((target.sin_sheet.eps - 0.05).abs() < 1e-15);
        assert_eq!(target.multi_sheet.n, 4);
        assert_eq!(target.multi_sheet.m, 3.0);
        assert_eq!(target.sin_sheet.m, 7.0);
        assert_eq!(target.sin_sheet.q, 6.0);
        assert_eq!(target.sin_sheet.n, 1 + (PI / 0.025f64.asin()).ceil() as usize);
        let residual = (1.0 - target.sin_sheet.delta).powi(2);
        assert!((residual - 0.7).abs() < 1e-12);
        // domain covers the largest phase: 1+2+0.25
        assert!((target.sin_rep.domain().1 - 3.25).abs() < 1e-12);
    }

    #[test]
    fn sin_knot_formula_hits_the_reference_count() {
        // ε_sin = 0.02 ⇒ ε = 0.08 at k = m = 1
        let s = spec(1, vec![vec![1]], vec![0.0], 0.08);
        let target = build_fourier_target(&s).unwrap();
        assert!((target.sin_sheet.eps - 0.02).abs() < 1e-15);
        assert_eq!(target.sin_sheet.n, 316);
    }

    #[test]
    fn bare_sin_pipeline_matches_the_shifted_wave() {
        let s = spec(1, vec![vec![1]], vec![0.0], 0.05);
        assert!(s.is_identity_map());
        let target = build_fourier_target(&s).unwrap().with_knot_count(21).unwrap();
        let archs = [Architecture::dense(vec![1, 250, 21, 250, 1])];
        let net = FamilyNet::sample(&archs, InitFamily::Uniform, 1).unwrap();
        let ticket = target.prune(&net, &PruneOptions::default()).unwrap();
        assert_eq!(ticket.stages.len(), 1);
        assert!(ticket.approx_error <= 0.05 / 2.0, "approx {}", ticket.approx_error);
        assert!(ticket.basis_error <= 0.05, "basis {}", ticket.basis_error);
        assert!((ticket.offset - 1.0).abs() < 1e-12);
        assert!(ticket.surviving_fraction < 0.06);
    }

    #[test]
    fn two_stage_pipeline_prunes_both() {
        let s = spec(2, vec![vec![1, 1]], vec![0.0], 0.3);
        let target = build_fourier_target(&s).unwrap().with_knot_count(21).unwrap();
        let archs = [
            Architecture::dense(vec![2, 150, 1]),
            Architecture::shared(vec![1, 150, 21, 150, 1], 1),
        ];
        let net = FamilyNet::sample(&archs, InitFamily::Uniform, 8).unwrap();
        let options = PruneOptions { ground_cap: 30, max_subset: 6, ..PruneOptions::default() };
        let ticket = target.prune(&net, &options).unwrap();
        assert_eq!(ticket.stages.len(), 2);
        assert_eq!(ticket.stages[0].name, "frequency");
        assert!(ticket.success, "flags: {:?}", ticket.stages.iter().map(|s| &s.report.flags).collect::<Vec<_>>());
        assert!(ticket.basis_error <= 0.3, "basis {}", ticket.basis_error);
        assert!(
            ticket.basis_error <= ticket.pruning_error + ticket.approx_error + 1e-12
        );
    }

    #[test]
    fn single_stage_requires_the_identity_map() {
        let s = spec(1, vec![vec![1]], vec![0.5], 0.3);
        assert!(!s.is_identity_map());
        let target = build_fourier_target(&s).unwrap().with_knot_count(9).unwrap();
        let archs = [Architecture::dense(vec![1, 120, 9, 120, 1])];
        let net = FamilyNet::sample(&archs, InitFamily::Uniform, 2).unwrap();
        let err = target.prune(&net, &PruneOptions::default()).unwrap_err();
        assert!(matches!(err, TicketError::BadArchitecture(_)));
    }

    #[test]
    fn validation_rejects_zero_frequencies_and_bad_phases() {
        assert!(spec(2, vec![vec![1, 0]], vec![0.0], 0.3).validate().is_err());
        assert!(spec(1, vec![vec![1]], vec![1.5], 0.3).validate().is_err());
        assert!(spec(1, vec![vec![1], vec![2]], vec![0.0], 0.3).validate().is_err());
    }
}
