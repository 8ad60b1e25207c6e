//! Function-family pipelines: polynomial and Fourier basis targets, the
//! multi-stage mother nets that host them, pruning orchestration, and the
//! last-layer fit that turns a ticket into a trained approximator.
//!
//! A pipeline is a list of independently sampled stage nets; each stage's
//! flattened output feeds the next stage through a ReLU. Every stage target
//! is arranged to be nonnegative on its domain, so the boundary ReLU is
//! exact on the target and only ever clips pruning noise toward it. Shared
//! stages are pruned once through a single-position dense view and the mask
//! is lifted back onto the stage's tied storage, which keeps every position
//! on the identical bit pattern for free.

mod fourier;
mod poly;

pub use fourier::{build_fourier_target, FourierFamilySpec, FourierTarget};
pub use poly::{build_poly_target, PolyFamilySpec, PolyTarget};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TicketError};
use crate::grid;
use crate::init::{InitFamily, InitSpec};
use crate::net::{Architecture, LayerKind, MotherNet, PruneMask};
use crate::prune::{prune_univariate, ConstantMode, GridSpec, PruneOptions, TicketReport};
use crate::pwl::PwlRep;
use crate::rng::substream;

/// Per-stage (ε, δ, N, M, Q) assignment from the family theorems: stage
/// tolerance and confidence, knot or linear-form count, parameter magnitude
/// bound, and input magnitude bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSheet {
    pub eps: f64,
    pub delta: f64,
    pub n: usize,
    pub m: f64,
    pub q: f64,
}

/// A multi-stage mother net. Kept as a list because shared stages may not
/// follow dense ones inside a single `Architecture`; chaining separate nets
/// expresses the same network with the stage boundaries explicit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyNet {
    pub stages: Vec<MotherNet>,
}

impl FamilyNet {
    pub fn new(stages: Vec<MotherNet>) -> Result<Self> {
        if stages.is_empty() {
            return Err(TicketError::BadArchitecture("a family net needs at least one stage".into()));
        }
        for stage in &stages {
            stage.validate()?;
        }
        for (i, pair) in stages.windows(2).enumerate() {
            let out = pair[0].architecture.output_len();
            let inp = pair[1].architecture.input_len();
            if out != inp {
                return Err(TicketError::ShapeMismatch(format!(
                    "stage {i} emits {out} values but stage {} expects {inp}",
                    i + 1
                )));
            }
        }
        Ok(FamilyNet { stages })
    }

    /// Sample every stage at canonical scale, each from its own substream of
    /// the master seed.
    pub fn sample(archs: &[Architecture], family: InitFamily, seed: u64) -> Result<Self> {
        let stages = archs
            .iter()
            .enumerate()
            .map(|(s, arch)| {
                let stage_seed = substream(seed, &[40, s as u64]).gen::<u64>();
                crate::init::sample(arch, &InitSpec::canonical(family, arch.depth(), stage_seed))
            })
            .collect::<Result<Vec<_>>>()?;
        FamilyNet::new(stages)
    }

    pub fn input_len(&self) -> usize {
        self.stages[0].architecture.input_len()
    }

    pub fn output_len(&self) -> usize {
        self.stages.last().unwrap().architecture.output_len()
    }

    pub fn stored_params(&self) -> usize {
        self.stages.iter().map(|s| s.architecture.stored_params()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut cur = x.to_vec();
        for (i, stage) in self.stages.iter().enumerate() {
            cur = stage.forward(&cur)?;
            if i + 1 < self.stages.len() {
                relu(&mut cur);
            }
        }
        Ok(cur)
    }

    pub fn forward_masked(&self, x: &[f64], masks: &[&PruneMask]) -> Result<Vec<f64>> {
        if masks.len() != self.stages.len() {
            return Err(TicketError::ShapeMismatch(format!(
                "{} masks for {} stages",
                masks.len(),
                self.stages.len()
            )));
        }
        let mut cur = x.to_vec();
        for (i, (stage, mask)) in self.stages.iter().zip(masks).enumerate() {
            cur = stage.forward_masked(&cur, mask)?;
            if i + 1 < self.stages.len() {
                relu(&mut cur);
            }
        }
        Ok(cur)
    }
}

fn relu(v: &mut [f64]) {
    for x in v {
        *x = x.max(0.0);
    }
}

/// One pruned stage inside a composite ticket.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub report: TicketReport,
}

/// Composite result of pruning a family pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyTicket {
    pub stages: Vec<StageReport>,
    /// Product of the stage scale corrections; λ·(masked output) + offset
    /// lives on the basis functions' scale.
    pub lambda: f64,
    pub offset: f64,
    pub eps: f64,
    pub delta: f64,
    /// sup over grid and channels of |λ·f + offset − f_N|, the deviation
    /// from the knotted pipeline the stages were pruned toward.
    pub pruning_error: f64,
    /// sup of |f_N − b|: the knotted pipeline against the true basis.
    pub approx_error: f64,
    /// sup of |λ·f + offset − b|; what the trained readout inherits.
    pub basis_error: f64,
    pub per_channel_error: Vec<f64>,
    pub surviving_fraction: f64,
    pub success: bool,
    pub grid: GridSpec,
}

impl FamilyTicket {
    pub fn masks(&self) -> Vec<&PruneMask> {
        self.stages.iter().map(|s| &s.report.mask).collect()
    }
}

/// Family spec wrapper for config files and the single pruning entry point.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum FamilySpec {
    Poly(PolyFamilySpec),
    Fourier(FourierFamilySpec),
}

/// Build the family target at the theorem's knot counts and prune `net`
/// down to it.
pub fn prune_family(
    spec: &FamilySpec,
    net: &FamilyNet,
    options: &PruneOptions,
) -> Result<FamilyTicket> {
    match spec {
        FamilySpec::Poly(s) => build_poly_target(s)?.prune(net, options),
        FamilySpec::Fourier(s) => build_fourier_target(s)?.prune(net, options),
    }
}

/// Least-squares last-layer fit (Wx + c per output) on raw ticket outputs,
/// with the sup residual measured on a held-out grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub w: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub residual: f64,
    /// Set when the design matrix is rank-deficient (collinear ticket
    /// outputs); the returned solution is then the minimum-norm one.
    pub condition_warning: bool,
}

pub fn fit_last_layer(
    outputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    holdout_outputs: &[Vec<f64>],
    holdout_targets: &[Vec<f64>],
) -> Result<FitResult> {
    let n = outputs.len();
    if n == 0 || targets.len() != n {
        return Err(TicketError::ShapeMismatch(format!(
            "{} target rows for {n} output rows",
            targets.len()
        )));
    }
    let k = outputs[0].len();
    let m = targets[0].len();
    if outputs.iter().any(|r| r.len() != k) || targets.iter().any(|r| r.len() != m) {
        return Err(TicketError::ShapeMismatch("ragged sample matrix".into()));
    }
    if n < 10 * (k + 1) {
        return Err(TicketError::BadParameter(format!(
            "{n} sample points for {k} features; the fit wants at least {}",
            10 * (k + 1)
        )));
    }
    if holdout_outputs.is_empty()
        || holdout_outputs.len() != holdout_targets.len()
        || holdout_outputs.iter().any(|r| r.len() != k)
        || holdout_targets.iter().any(|r| r.len() != m)
    {
        return Err(TicketError::ShapeMismatch("held-out grid must be non-empty and match".into()));
    }

    let design = DMatrix::from_fn(n, k + 1, |i, j| if j < k { outputs[i][j] } else { 1.0 });
    let rhs = DMatrix::from_fn(n, m, |i, j| targets[i][j]);
    let svd = design.svd(true, true);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = sigma_max * (n.max(k + 1) as f64) * f64::EPSILON;
    let condition_warning = svd.rank(tol) < k + 1;
    let sol = svd.solve(&rhs, tol).map_err(|e| TicketError::BadParameter(e.into()))?;

    let w: Vec<Vec<f64>> = (0..m).map(|i| (0..k).map(|j| sol[(j, i)]).collect()).collect();
    let c: Vec<f64> = (0..m).map(|i| sol[(k, i)]).collect();

    let mut residual = 0.0f64;
    for (out, t) in holdout_outputs.iter().zip(holdout_targets) {
        for i in 0..m {
            let pred: f64 = w[i].iter().zip(out).map(|(wij, oj)| wij * oj).sum::<f64>() + c[i];
            residual = residual.max((pred - t[i]).abs());
        }
    }
    Ok(FitResult { w, c, residual, condition_warning })
}

/// Evaluate the pruned pipeline's raw outputs at each point (no λ, no
/// offset — the fit's W and c absorb both).
pub fn ticket_outputs(
    net: &FamilyNet,
    ticket: &FamilyTicket,
    points: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let masks = ticket.masks();
    points.iter().map(|x| net.forward_masked(x, &masks)).collect()
}

/// Dense single-position view of one shared stage: identical parameter
/// storage for every layer but the last, whose view row is the stage's
/// channel-0 output row.
fn stage_view(stage: &MotherNet) -> Result<MotherNet> {
    let arch = &stage.architecture;
    if arch.layer_kinds.iter().any(|&k| k != LayerKind::Shared) {
        return Err(TicketError::BadArchitecture("stage view wants an all-shared stage".into()));
    }
    if arch.widths[0] != 1 {
        return Err(TicketError::BadArchitecture(format!(
            "shared stage reads {} channels per position, want 1",
            arch.widths[0]
        )));
    }
    let mut widths = arch.widths.clone();
    *widths.last_mut().unwrap() = 1;
    let last = arch.depth() - 1;
    let cols = arch.widths[last];
    let mut weights = stage.weights.clone();
    let mut biases = stage.biases.clone();
    weights[last] = stage.weights[last][..cols].to_vec();
    biases[last] = vec![stage.biases[last][0]];
    let view = MotherNet {
        architecture: Architecture::dense(widths),
        weights,
        biases,
        sigma_w: stage.sigma_w.clone(),
    };
    view.validate()?;
    Ok(view)
}

fn lift_stage_mask(view: &PruneMask, arch: &Architecture) -> PruneMask {
    let mut mask = PruneMask::all_zero(arch);
    let last = arch.depth() - 1;
    for l in 0..last {
        mask.weights[l].copy_from_slice(&view.weights[l]);
        mask.biases[l].copy_from_slice(&view.biases[l]);
    }
    let cols = arch.widths[last];
    mask.weights[last][..cols].copy_from_slice(&view.weights[last]);
    mask.biases[last][0] = view.biases[last][0];
    mask
}

/// Prune one shared stage toward `rep` through its dense view, then lift
/// the mask back onto the tied storage.
pub(crate) fn prune_shared_stage(
    name: &'static str,
    stage: &MotherNet,
    rep: &PwlRep,
    eps: f64,
    delta: f64,
    mode: ConstantMode,
    options: &PruneOptions,
) -> Result<TicketReport> {
    let view = stage_view(stage).map_err(|e| stage_error(name, e))?;
    let mut o = options.clone();
    o.constant_mode = mode;
    o.domain = Vec::new();
    let report =
        prune_univariate(&view, rep, eps, delta, &o).map_err(|e| stage_error(name, e))?;
    let mask = lift_stage_mask(&report.mask, &stage.architecture);
    mask.check_shapes(&stage.architecture).map_err(|e| stage_error(name, e))?;
    let surviving_fraction = mask.surviving_fraction();
    Ok(TicketReport { mask, surviving_fraction, ..report })
}

pub(crate) fn stage_error(name: &'static str, e: TicketError) -> TicketError {
    TicketError::Stage { stage: name, source: Box::new(e) }
}

/// Rescale a stage target for a pipeline whose preceding stages deliver
/// their value divided by `lam`: T'(u) = T(lam·u)/lam, which moves knots and
/// the constant by 1/lam and leaves ramp coefficients untouched.
pub(crate) fn conjugate_rep(rep: &PwlRep, lam: f64) -> Result<PwlRep> {
    if lam == 1.0 {
        return Ok(rep.clone());
    }
    let knots = rep.knots.iter().map(|s| s / lam).collect();
    let mut coeffs = rep.coeffs.clone();
    let n = rep.n();
    coeffs[n] /= lam;
    PwlRep::new(knots, coeffs)
}

/// Measure the composite ticket against the knotted pipeline and the true
/// basis over the input box, and assemble the report.
#[allow(clippy::too_many_arguments)]
pub(crate) fn composite_ticket(
    net: &FamilyNet,
    stages: Vec<StageReport>,
    lambda: f64,
    offset: f64,
    eps: f64,
    delta: f64,
    k: usize,
    m: usize,
    composed: &dyn Fn(&[f64]) -> Vec<f64>,
    basis: &dyn Fn(&[f64]) -> Vec<f64>,
    options: &PruneOptions,
) -> Result<FamilyTicket> {
    let dim = net.input_len();
    let domain = vec![(0.0, 1.0); dim];
    let budget =
        if options.grid_budget == 0 { grid::default_budget(dim) } else { options.grid_budget };
    let points = grid::eval_grid(&domain, budget);
    let masks: Vec<&PruneMask> = stages.iter().map(|s| &s.report.mask).collect();

    let mut pruning_error = 0.0f64;
    let mut approx_error = 0.0f64;
    let mut per_channel_error = vec![0.0f64; k];
    for x in &points {
        let raw = net.forward_masked(x, &masks)?;
        let pipeline = composed(x);
        let truth = basis(x);
        for j in 0..k {
            let v = lambda * raw[j] + offset;
            pruning_error = pruning_error.max((v - pipeline[j]).abs());
            approx_error = approx_error.max((pipeline[j] - truth[j]).abs());
            per_channel_error[j] = per_channel_error[j].max((v - truth[j]).abs());
        }
    }
    let basis_error = per_channel_error.iter().copied().fold(0.0, f64::max);

    let kept: usize = stages.iter().map(|s| s.report.mask.kept_params()).sum();
    let surviving_fraction = kept as f64 / net.stored_params() as f64;
    let success = stages.iter().all(|s| s.report.success)
        && basis_error <= eps / (k as f64 * m as f64);

    Ok(FamilyTicket {
        stages,
        lambda,
        offset,
        eps,
        delta,
        pruning_error,
        approx_error,
        basis_error,
        per_channel_error,
        surviving_fraction,
        success,
        grid: GridSpec { domain, budget },
    })
}
