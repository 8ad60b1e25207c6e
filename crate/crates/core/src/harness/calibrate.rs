//! Constant calibration: find the smallest C for which formula-sized runs
//! hit their success targets on every point of an ε×δ grid. The search
//! brackets by doubling from a floor of 0.1 and bisects to three digits;
//! C is always rounded up, so the returned constant stays feasible.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TicketError};
use crate::init::{sample, InitFamily, InitSpec};
use crate::net::Architecture;
use crate::prune::{
    prune_linear, prune_univariate, required_width, PruneOptions, WidthKind,
};
use crate::pwl::PwlRep;
use crate::rng::substream;
use crate::subsum::{
    draw_ground, required_ground_size, required_ground_size_mixed, solve, GroundLaw, Strategy,
    SubsetSumInstance,
};

/// Which size formula a calibration exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationFormula {
    /// Ground-set size for subset-sum approximation.
    Ground,
    /// Ground-set size under a mixed value distribution.
    GroundMixed,
    /// Hidden width for linear-map pruning.
    WidthLinear,
    /// Hidden width for piecewise-linear pruning.
    WidthUnivariate,
}

impl CalibrationFormula {
    fn id(self) -> &'static str {
        match self {
            CalibrationFormula::Ground => "ground",
            CalibrationFormula::GroundMixed => "ground_mixed",
            CalibrationFormula::WidthLinear => "width_linear",
            CalibrationFormula::WidthUnivariate => "width_univariate",
        }
    }

    fn is_ground(self) -> bool {
        matches!(self, CalibrationFormula::Ground | CalibrationFormula::GroundMixed)
    }
}

fn default_m() -> f64 {
    1.0
}

fn default_h() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    1.0
}

fn default_trials() -> usize {
    200
}

fn default_max_subset() -> usize {
    5
}

/// A calibration problem: the formula, the distribution its runs draw from,
/// and the grid of (ε, δ) points every candidate constant must satisfy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSpec {
    pub formula: CalibrationFormula,
    /// Ground-set law, for the ground formulas.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<GroundLaw>,
    /// Mother-net initialization, for the width formulas.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitFamily>,
    pub eps_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    /// Target magnitude bound for ground runs.
    #[serde(default = "default_m")]
    pub m: f64,
    /// Threshold magnitude bound in the ground-size formulas.
    #[serde(default = "default_h")]
    pub h: f64,
    /// Uniform-containment constant of the law.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default = "default_max_subset")]
    pub max_subset: usize,
}

impl CalibrationSpec {
    /// Key the constant is stored under: formula id plus distribution id.
    pub fn key(&self) -> String {
        let suffix = if self.formula.is_ground() {
            match self.law.expect("validated") {
                GroundLaw::Uniform => "uniform".to_string(),
                GroundLaw::Normal => "normal".to_string(),
                GroundLaw::ProductUniform => "product_uniform".to_string(),
                GroundLaw::ProductNormal { .. } => "product_normal".to_string(),
            }
        } else {
            format!("{:?}", self.init.expect("validated")).to_lowercase()
        };
        format!("{}/{}", self.formula.id(), suffix)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, grid) in [("eps_grid", &self.eps_grid), ("delta_grid", &self.delta_grid)] {
            if grid.len() < 3 {
                return Err(TicketError::Config(format!(
                    "calibration {name} needs at least 3 points, got {}",
                    grid.len()
                )));
            }
            if grid.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
                return Err(TicketError::Config(format!(
                    "calibration {name} values must lie in (0,1)"
                )));
            }
        }
        if self.formula.is_ground() {
            if self.law.is_none() {
                return Err(TicketError::Config("ground calibration needs a law".into()));
            }
            if self.trials < 100 {
                return Err(TicketError::Config(
                    "ground calibration needs at least 100 trials".into(),
                ));
            }
            if !(self.m > 0.0) || !(self.h > 0.0) || !(self.alpha > 0.0 && self.alpha <= 1.0) {
                return Err(TicketError::Config(
                    "ground calibration needs m > 0, h > 0, alpha in (0,1]".into(),
                ));
            }
            if self.max_subset == 0 {
                return Err(TicketError::Config("max_subset must be at least 1".into()));
            }
        } else {
            if self.init.is_none() {
                return Err(TicketError::Config("width calibration needs an init family".into()));
            }
            if self.trials < 10 {
                return Err(TicketError::Config(
                    "width calibration needs at least 10 trials".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Outcome of one calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Storage key, `<formula>/<distribution>`.
    pub formula: String,
    pub c: f64,
    /// Feasibility checks the search spent.
    pub evaluations: usize,
    /// The floor 0.1 was already feasible; `c` is an upper bound only.
    pub at_floor: bool,
}

/// Ground sets larger than this cannot be solved at interactive speed.
const GROUND_GUARD: usize = 64;
/// Probe nets wider than this make per-trial pruning impractical.
const WIDTH_GUARD: usize = 4_096;

const SEARCH_FLOOR: f64 = 0.1;
const SEARCH_CEIL: f64 = 100.0;

/// Success-rate check with early exit in both directions: stops as soon as
/// the remaining trials cannot change the verdict.
fn rate_clears<F: FnMut(u64) -> Result<bool>>(
    trials: usize,
    delta: f64,
    mut trial: F,
) -> Result<bool> {
    let need = ((1.0 - delta) * trials as f64).ceil() as usize;
    let allowed = trials - need;
    let mut successes = 0usize;
    let mut failures = 0usize;
    for t in 0..trials {
        if trial(t as u64)? {
            successes += 1;
        } else {
            failures += 1;
        }
        if successes >= need {
            return Ok(true);
        }
        if failures > allowed {
            return Ok(false);
        }
    }
    Ok(successes >= need)
}

fn ground_point(spec: &CalibrationSpec, c: f64, eps: f64, delta: f64, seed: u64) -> Result<bool> {
    let law = spec.law.expect("validated");
    let n = match spec.formula {
        CalibrationFormula::Ground => {
            required_ground_size(spec.m, spec.h, spec.alpha, law.bound(), eps, delta, c)
        }
        CalibrationFormula::GroundMixed => {
            required_ground_size_mixed(spec.m, spec.h, spec.alpha, law.bound(), eps, delta, c)
        }
        _ => unreachable!(),
    };
    if n == 0 {
        return Ok(false);
    }
    if n > GROUND_GUARD {
        return Err(TicketError::Calibration(format!(
            "formula asks for {n} ground elements at C = {c:.3}; solver cap is {GROUND_GUARD}"
        )));
    }
    rate_clears(spec.trials, delta, |t| {
        let mut rng = substream(seed, &[t]);
        let ground = draw_ground(law, n, &mut rng);
        let target = rng.gen_range(-spec.m..spec.m);
        let inst =
            SubsetSumInstance { ground, target, tolerance: eps, max_subset: spec.max_subset };
        Ok(solve(&inst, Strategy::BestK)?.feasible)
    })
}

/// Fixed probe for the linear width formula: x ↦ [0.7, −1.1]·x + 0.4 on
/// [−1,1]², so M = 2, N = 3, Q = 3.
fn width_point_linear(
    spec: &CalibrationSpec,
    c: f64,
    eps: f64,
    delta: f64,
    seed: u64,
) -> Result<bool> {
    let init = spec.init.expect("validated");
    let width = required_width(WidthKind::Linear, 2.0, 3.0, 3.0, 2, 1, 2, eps, delta, c)?;
    if width > WIDTH_GUARD {
        return Err(TicketError::Calibration(format!(
            "formula asks for width {width} at C = {c:.3}; probe cap is {WIDTH_GUARD}"
        )));
    }
    let arch = Architecture::dense(vec![2, width, 1]);
    let options = PruneOptions {
        ground_cap: (width / 6).clamp(4, 32),
        grid_budget: 500,
        ..PruneOptions::default()
    };
    let w = vec![vec![0.7, -1.1]];
    let b = vec![0.4];
    rate_clears(spec.trials, delta, |t| {
        let net_seed: u64 = substream(seed, &[t]).gen();
        let net = sample(&arch, &InitSpec::canonical(init, arch.depth(), net_seed))?;
        let report = prune_linear(&net, &w, &b, eps, delta, 3.0, &options)?;
        Ok(report.success && report.sup_error <= eps)
    })
}

/// Fixed probe for the univariate width formula: ln(1+x) on 5 knots over
/// [0,1] through a depth-3 net, so M = 1, N = 5, Q = 1, L₀ = 3. (The
/// depth-2 construction places knots by rejection and only fills its bins
/// at widths far beyond desk scale.)
fn width_point_univariate(
    spec: &CalibrationSpec,
    c: f64,
    eps: f64,
    delta: f64,
    seed: u64,
) -> Result<bool> {
    let init = spec.init.expect("validated");
    let target = PwlRep::from_samples(|x| (1.0 + x).ln(), 0.0, 1.0, 5)?;
    let width = required_width(WidthKind::Univariate, 1.0, 5.0, 1.0, 1, 1, 3, eps, delta, c)?;
    if width > WIDTH_GUARD {
        return Err(TicketError::Calibration(format!(
            "formula asks for width {width} at C = {c:.3}; probe cap is {WIDTH_GUARD}"
        )));
    }
    let arch = Architecture::dense(vec![1, width, width, 1]);
    let options = PruneOptions {
        ground_cap: (width / 8).clamp(8, 32),
        grid_budget: 500,
        ..PruneOptions::default()
    };
    rate_clears(spec.trials, delta, |t| {
        let net_seed: u64 = substream(seed, &[t]).gen();
        let net = sample(&arch, &InitSpec::canonical(init, arch.depth(), net_seed))?;
        let report = prune_univariate(&net, &target, eps, delta, &options)?;
        Ok(report.success && report.sup_error <= eps)
    })
}

fn feasible(spec: &CalibrationSpec, c: f64) -> Result<bool> {
    let points: Vec<(u64, f64, u64, f64)> = spec
        .eps_grid
        .iter()
        .enumerate()
        .flat_map(|(i, &eps)| {
            spec.delta_grid.iter().enumerate().map(move |(j, &delta)| (i as u64, eps, j as u64, delta))
        })
        .collect();
    // Grid points run in parallel; a failed point flips the flag so the
    // remaining ones bail out early instead of finishing their trials.
    let still_feasible = AtomicBool::new(true);
    points.par_iter().try_for_each(|&(i, eps, j, delta)| -> Result<()> {
        if !still_feasible.load(Ordering::Relaxed) {
            return Ok(());
        }
        let seed: u64 = substream(spec.master_seed, &[80, i, j]).gen();
        let ok = match spec.formula {
            CalibrationFormula::Ground | CalibrationFormula::GroundMixed => {
                ground_point(spec, c, eps, delta, seed)?
            }
            CalibrationFormula::WidthLinear => width_point_linear(spec, c, eps, delta, seed)?,
            CalibrationFormula::WidthUnivariate => {
                width_point_univariate(spec, c, eps, delta, seed)?
            }
        };
        if !ok {
            still_feasible.store(false, Ordering::Relaxed);
        }
        Ok(())
    })?;
    Ok(still_feasible.load(Ordering::Relaxed))
}

/// Smallest feasible constant to three digits. Returns the floor with
/// `at_floor` set when even 0.1 is feasible, and errors when no constant
/// below 100 works.
pub fn calibrate(spec: &CalibrationSpec) -> Result<Calibration> {
    spec.validate()?;
    let mut evaluations = 0usize;
    let mut check = |c: f64| -> Result<bool> {
        evaluations += 1;
        feasible(spec, c)
    };
    if check(SEARCH_FLOOR)? {
        return Ok(Calibration {
            formula: spec.key(),
            c: SEARCH_FLOOR,
            evaluations,
            at_floor: true,
        });
    }
    let mut lo = SEARCH_FLOOR;
    let mut hi = 2.0 * SEARCH_FLOOR;
    while !check(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > SEARCH_CEIL {
            return Err(TicketError::Calibration(format!(
                "no feasible constant below {SEARCH_CEIL} for {}",
                spec.key()
            )));
        }
    }
    while hi - lo > 5e-4 {
        let mid = 0.5 * (lo + hi);
        if check(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let c = (hi * 1000.0).ceil() / 1000.0;
    Ok(Calibration { formula: spec.key(), c, evaluations, at_floor: false })
}

/// Persisted constants, keyed like [`CalibrationSpec::key`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
}

impl CalibrationFile {
    /// Missing files read as empty, so first use needs no setup.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(CalibrationFile::default());
        }
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| TicketError::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| TicketError::Config(format!("calibration file: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn upsert(&mut self, calibration: &Calibration) {
        self.constants.insert(calibration.formula.clone(), calibration.c);
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.constants.get(key).copied()
    }
}
