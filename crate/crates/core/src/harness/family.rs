//! Seed sweeps over family pipelines and raw univariate targets, plus the
//! random-combination fit sweep that checks the trained-readout guarantee.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TicketError};
use crate::families::{
    build_fourier_target, build_poly_target, fit_last_layer, ticket_outputs, FamilyNet,
    FamilySpec, FamilyTicket, FourierTarget, PolyTarget, StageReport,
};
use crate::grid::{eval_grid, halton};
use crate::init::{sample, InitSpec};
use crate::net::MotherNet;
use crate::prune::{prune_univariate, PruneOptions};
use crate::pwl::PwlRep;
use crate::rng::substream;

use super::{with_pool, ExperimentConfig, KnotOverrides, RunResults, SeedOutcome};

/// Uniform face of the two family targets.
enum Target {
    Poly(PolyTarget),
    Fourier(FourierTarget),
}

impl Target {
    fn build(spec: &FamilySpec, knots: &KnotOverrides) -> Result<Target> {
        match spec {
            FamilySpec::Poly(s) => {
                let mut target = build_poly_target(s)?;
                if knots.log > 0 || knots.exp > 0 {
                    let n_log = if knots.log > 0 { knots.log } else { target.log_sheet.n };
                    let n_exp = if knots.exp > 0 { knots.exp } else { target.exp_sheet.n };
                    target = target.with_knot_counts(n_log, n_exp)?;
                }
                Ok(Target::Poly(target))
            }
            FamilySpec::Fourier(s) => {
                let mut target = build_fourier_target(s)?;
                if knots.sin > 0 {
                    target = target.with_knot_count(knots.sin)?;
                }
                Ok(Target::Fourier(target))
            }
        }
    }

    fn prune(&self, net: &FamilyNet, options: &PruneOptions) -> Result<FamilyTicket> {
        match self {
            Target::Poly(t) => t.prune(net, options),
            Target::Fourier(t) => t.prune(net, options),
        }
    }

    fn basis(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Target::Poly(t) => t.basis(x),
            Target::Fourier(t) => t.basis(x),
        }
    }

    fn dim(&self) -> usize {
        match self {
            Target::Poly(t) => t.spec.d,
            Target::Fourier(t) => t.spec.d,
        }
    }

    fn eps(&self) -> f64 {
        match self {
            Target::Poly(t) => t.spec.eps,
            Target::Fourier(t) => t.spec.eps,
        }
    }
}

/// Sample points the last-layer fit trains on and is scored against.
struct FitGrids {
    train: Vec<Vec<f64>>,
    train_basis: Vec<Vec<f64>>,
    holdout: Vec<Vec<f64>>,
    holdout_basis: Vec<Vec<f64>>,
}

const FIT_TRAIN_POINTS: usize = 2_500;
const FIT_HOLDOUT_POINTS: usize = 2_000;

impl FitGrids {
    fn for_target(target: &Target) -> FitGrids {
        let unit_box = vec![(0.0, 1.0); target.dim()];
        let train = eval_grid(&unit_box, FIT_TRAIN_POINTS);
        let holdout = halton(&unit_box, FIT_HOLDOUT_POINTS);
        let train_basis = train.iter().map(|x| target.basis(x)).collect();
        let holdout_basis = holdout.iter().map(|x| target.basis(x)).collect();
        FitGrids { train, train_basis, holdout, holdout_basis }
    }
}

fn seed_for(master: u64, index: u32) -> u64 {
    substream(master, &[50, index as u64]).gen()
}

fn failed_outcome(index: u32, seed: u64, err: TicketError) -> SeedOutcome {
    SeedOutcome {
        index,
        seed,
        success: false,
        error: Some(err.to_string()),
        pruning_error: 0.0,
        basis_error: None,
        fit_residual: None,
        surviving_fraction: 0.0,
        lambda: 1.0,
        offset: 0.0,
        stages: Vec::new(),
    }
}

pub(super) fn run_family(config: &ExperimentConfig) -> Result<(RunResults, Vec<f64>)> {
    let spec = config.family.as_ref().expect("validated");
    let target = Target::build(spec, &config.knots)?;
    let options = config.options.build(config.run.grid);
    let grids = FitGrids::for_target(&target);
    let archs: Vec<_> = config.stages.iter().map(|s| s.to_architecture()).collect();
    let stored_net: Option<FamilyNet> = match &config.net_file {
        Some(path) => Some(serde_json::from_str(&std::fs::read_to_string(path)?)?),
        None => None,
    };

    let one_seed = |index: u32| -> (SeedOutcome, f64) {
        let seed = seed_for(config.run.master_seed, index);
        let start = Instant::now();
        let net = match &stored_net {
            Some(net) => Ok(net.clone()),
            None => FamilyNet::sample(&archs, config.init, seed),
        };
        let outcome = net
            .and_then(|net| {
                let ticket = target.prune(&net, &options)?;
                let outs = ticket_outputs(&net, &ticket, &grids.train)?;
                let houts = ticket_outputs(&net, &ticket, &grids.holdout)?;
                let fit = fit_last_layer(&outs, &grids.train_basis, &houts, &grids.holdout_basis)?;
                Ok(SeedOutcome {
                    index,
                    seed,
                    success: ticket.success,
                    error: None,
                    pruning_error: ticket.pruning_error,
                    basis_error: Some(ticket.basis_error),
                    fit_residual: Some(fit.residual),
                    surviving_fraction: ticket.surviving_fraction,
                    lambda: ticket.lambda,
                    offset: ticket.offset,
                    stages: ticket.stages,
                })
            })
            .unwrap_or_else(|e| failed_outcome(index, seed, e));
        (outcome, start.elapsed().as_secs_f64())
    };

    let pairs: Vec<(SeedOutcome, f64)> = with_pool(config.run.jobs, || {
        (0..config.run.seeds).into_par_iter().map(one_seed).collect()
    })?;
    let (outcomes, seconds) = pairs.into_iter().unzip();
    Ok((RunResults::Sweep { outcomes }, seconds))
}

pub(super) fn run_univariate(config: &ExperimentConfig) -> Result<(RunResults, Vec<f64>)> {
    let path = config.target_file.as_ref().expect("validated");
    let raw: PwlRep = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let rep = PwlRep::new(raw.knots, raw.coeffs)?;
    let (eps, delta) = (config.eps.expect("validated"), config.delta.expect("validated"));
    let options = config.options.build(config.run.grid);
    let stored_net: Option<MotherNet> = match &config.net_file {
        Some(path) => Some(serde_json::from_str(&std::fs::read_to_string(path)?)?),
        None => None,
    };

    let one_seed = |index: u32| -> (SeedOutcome, f64) {
        let seed = seed_for(config.run.master_seed, index);
        let start = Instant::now();
        let net = match &stored_net {
            Some(net) => Ok(net.clone()),
            None => {
                let arch = config.stages[0].to_architecture();
                let spec = InitSpec::canonical(config.init, arch.depth(), seed);
                sample(&arch, &spec)
            }
        };
        let outcome = net
            .and_then(|net| prune_univariate(&net, &rep, eps, delta, &options))
            .map(|report| SeedOutcome {
                index,
                seed,
                success: report.success,
                error: None,
                pruning_error: report.sup_error,
                basis_error: None,
                fit_residual: None,
                surviving_fraction: report.surviving_fraction,
                lambda: report.lambda,
                offset: report.offset,
                stages: vec![StageReport { name: "target".into(), report }],
            })
            .unwrap_or_else(|e| failed_outcome(index, seed, e));
        (outcome, start.elapsed().as_secs_f64())
    };

    let pairs: Vec<(SeedOutcome, f64)> = with_pool(config.run.jobs, || {
        (0..config.run.seeds).into_par_iter().map(one_seed).collect()
    })?;
    let (outcomes, seconds) = pairs.into_iter().unzip();
    Ok((RunResults::Sweep { outcomes }, seconds))
}

/// Residuals of fitting random bounded combinations of the basis through one
/// pruned ticket.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSweep {
    pub combos: usize,
    pub eps: f64,
    /// Sup residual on the holdout grid, one entry per combination.
    pub residuals: Vec<f64>,
    /// Residuals at or below eps.
    pub passes: usize,
    /// Whether at least 96% of the combinations passed.
    pub pass: bool,
    pub prune_success: bool,
}

/// Prune one ticket (first sweep seed) and fit `combos` random combinations
/// `w·b(x) + c` with `w, c` uniform in [-1, 1].
pub fn fit_sweep(config: &ExperimentConfig, combos: usize) -> Result<FitSweep> {
    if combos == 0 {
        return Err(TicketError::BadParameter("fit sweep needs at least one combination".into()));
    }
    let spec = config
        .family
        .as_ref()
        .ok_or_else(|| TicketError::Config("fit sweep needs a family config".into()))?;
    let target = Target::build(spec, &config.knots)?;
    let options = config.options.build(config.run.grid);
    let archs: Vec<_> = config.stages.iter().map(|s| s.to_architecture()).collect();
    let seed = seed_for(config.run.master_seed, 0);
    let net = FamilyNet::sample(&archs, config.init, seed)?;
    let ticket = target.prune(&net, &options)?;
    let grids = FitGrids::for_target(&target);
    let outs = ticket_outputs(&net, &ticket, &grids.train)?;
    let houts = ticket_outputs(&net, &ticket, &grids.holdout)?;

    let k = grids.train_basis[0].len();
    let eps = target.eps();
    let mut residuals = Vec::with_capacity(combos);
    for combo in 0..combos {
        let mut rng = substream(config.run.master_seed, &[90, combo as u64]);
        let w: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: f64 = rng.gen_range(-1.0..1.0);
        let combine = |basis: &[Vec<f64>]| -> Vec<Vec<f64>> {
            basis
                .iter()
                .map(|b| vec![b.iter().zip(&w).map(|(bi, wi)| bi * wi).sum::<f64>() + c])
                .collect()
        };
        let fit = fit_last_layer(
            &outs,
            &combine(&grids.train_basis),
            &houts,
            &combine(&grids.holdout_basis),
        )?;
        residuals.push(fit.residual);
    }
    let passes = residuals.iter().filter(|&&r| r <= eps).count();
    let need = (combos as f64 * 0.96).ceil() as usize;
    Ok(FitSweep {
        combos,
        eps,
        residuals,
        passes,
        pass: passes >= need,
        prune_success: ticket.success,
    })
}
