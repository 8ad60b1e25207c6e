//! Experiment orchestration: config files, seeded sweeps, run reports with
//! CSV tables, and constant calibration.
//!
//! A run is fully determined by its config and master seed: every seed gets
//! its own substream, the worker pool only reorders wall-clock accounting,
//! and reports compare byte-for-byte once the `timing` block is stripped
//! (see [`canonical_json`]).

mod calibrate;
mod family;
mod paths;
mod subsetsum;

pub use calibrate::{
    calibrate, Calibration, CalibrationFile, CalibrationFormula, CalibrationSpec,
};
pub use family::{fit_sweep, FitSweep};
pub use paths::{PathLawStats, PathsResults, PathsSection, StepStats};
pub use subsetsum::{CurvePoint, SubsetSumResults, SubsetSumSection};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TicketError};
use crate::families::{FamilySpec, StageReport};
use crate::init::InitFamily;
use crate::net::Architecture;
use crate::prune::{ConstantMode, PruneOptions};

/// What a config file describes and `run` executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    /// Prune a family pipeline across seeds and fit the last layer.
    Family,
    /// Prune a single net against a piecewise-linear target file.
    Univariate,
    /// Ground-size-vs-precision success curves.
    Subsetsum,
    /// Bounded-weight path statistics.
    Paths,
}

/// One mother-net stage in a config file; `positions` present means a
/// weight-shared stage, absent means dense.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageArch {
    pub widths: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<usize>,
}

impl StageArch {
    pub fn to_architecture(&self) -> Architecture {
        match self.positions {
            Some(p) => Architecture::shared(self.widths.clone(), p),
            None => Architecture::dense(self.widths.clone()),
        }
    }
}

/// Knot-count pins for reproduction runs; zero keeps the theorem's count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnotOverrides {
    #[serde(default)]
    pub log: usize,
    #[serde(default)]
    pub exp: usize,
    #[serde(default)]
    pub sin: usize,
}

/// Seed sweep parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSection {
    pub seeds: u32,
    pub master_seed: u64,
    /// Grid budget for error measurements; 0 keeps the per-dimension default.
    #[serde(default)]
    pub grid: usize,
    /// Worker threads; 0 uses the global pool.
    #[serde(default)]
    pub jobs: usize,
}

/// Pruning knobs as an overlay on [`PruneOptions::default`], so configs only
/// state what they change.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptionsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_subset: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant_mode: Option<ConstantMode>,
}

impl OptionsSection {
    pub fn build(&self, grid: usize) -> PruneOptions {
        let mut options = PruneOptions::default();
        if let Some(v) = self.ground_cap {
            options.ground_cap = v;
        }
        if let Some(v) = self.max_subset {
            options.max_subset = v;
        }
        if let Some(v) = self.path_budget {
            options.path_budget = v;
        }
        if let Some(v) = self.constant_mode {
            options.constant_mode = v;
        }
        options.grid_budget = grid;
        options
    }
}

/// Acceptance gates; the CLI exits 0 iff every stated gate holds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Median sup error against the knotted target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median_pruning_error: Option<f64>,
    /// Median holdout residual after the last-layer fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median_fit_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_rate_min: Option<f64>,
    /// Subset-sum: required rate at the pinned ground size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_floor: Option<f64>,
    /// Paths: required first-step acceptance frequency for every law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_step_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_seconds_max: Option<f64>,
}

/// A complete experiment description, loadable from TOML.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: ExperimentKind,
    #[serde(default = "default_init")]
    pub init: InitFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default)]
    pub knots: KnotOverrides,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageArch>,
    /// Piecewise-linear target as JSON, for univariate runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_file: Option<PathBuf>,
    /// Pre-sampled mother net as JSON; forces a single-seed run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net_file: Option<PathBuf>,
    pub run: RunSection,
    #[serde(default)]
    pub options: OptionsSection,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub calibration: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsetsum: Option<SubsetSumSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<PathsSection>,
}

fn default_init() -> InitFamily {
    InitFamily::Uniform
}

impl ExperimentConfig {
    /// Parse a TOML config; syntax errors keep the parser's line diagnostics.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| TicketError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            TicketError::Config(format!("{}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(TicketError::Config("experiment name is empty".into()));
        }
        for bound in [self.eps, self.delta].into_iter().flatten() {
            if !(bound > 0.0 && bound < 1.0) {
                return Err(TicketError::Config(format!(
                    "eps and delta must lie in (0,1), got {bound}"
                )));
            }
        }
        for file in [&self.target_file, &self.net_file].into_iter().flatten() {
            if !file.exists() {
                return Err(TicketError::Config(format!(
                    "referenced file {} does not exist",
                    file.display()
                )));
            }
        }
        if self.net_file.is_some() && self.run.seeds > 1 {
            return Err(TicketError::Config(
                "a pre-sampled net admits exactly one seed".into(),
            ));
        }
        match self.kind {
            ExperimentKind::Family => {
                let spec = self
                    .family
                    .as_ref()
                    .ok_or_else(|| TicketError::Config("family run needs a [family] table".into()))?;
                match spec {
                    FamilySpec::Poly(s) => s.validate()?,
                    FamilySpec::Fourier(s) => s.validate()?,
                }
                if self.stages.is_empty() && self.net_file.is_none() {
                    return Err(TicketError::Config("family run needs [[stages]]".into()));
                }
            }
            ExperimentKind::Univariate => {
                if self.target_file.is_none() {
                    return Err(TicketError::Config("univariate run needs target_file".into()));
                }
                if self.eps.is_none() || self.delta.is_none() {
                    return Err(TicketError::Config("univariate run needs eps and delta".into()));
                }
                if self.stages.len() != 1 && self.net_file.is_none() {
                    return Err(TicketError::Config(
                        "univariate run needs exactly one [[stages]] entry".into(),
                    ));
                }
            }
            ExperimentKind::Subsetsum => {
                let section = self
                    .subsetsum
                    .as_ref()
                    .ok_or_else(|| TicketError::Config("subsetsum run needs a [subsetsum] table".into()))?;
                section.validate()?;
            }
            ExperimentKind::Paths => {
                let section = self
                    .paths
                    .as_ref()
                    .ok_or_else(|| TicketError::Config("paths run needs a [paths] table".into()))?;
                section.validate()?;
            }
        }
        Ok(())
    }
}

/// Order statistics over one per-seed quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub mean: f64,
}

impl Stats {
    pub fn from_values(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Stats {
            min: sorted[0],
            median: sorted[sorted.len() / 2],
            max: sorted[sorted.len() - 1],
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        })
    }
}

/// One seed's outcome in a pruning sweep. A failed construction keeps its
/// error message and zeroed numbers; it counts against the success rate but
/// not toward the error statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub index: u32,
    pub seed: u64,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub pruning_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_residual: Option<f64>,
    pub surviving_fraction: f64,
    pub lambda: f64,
    pub offset: f64,
    pub stages: Vec<StageReport>,
}

/// Aggregates over the completed seeds of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub success_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pruning_error: Option<Stats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_error: Option<Stats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_residual: Option<Stats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<Stats>,
}

impl Aggregate {
    fn from_outcomes(outcomes: &[SeedOutcome]) -> Aggregate {
        let done: Vec<&SeedOutcome> = outcomes.iter().filter(|o| o.error.is_none()).collect();
        let collect = |f: &dyn Fn(&SeedOutcome) -> Option<f64>| -> Vec<f64> {
            done.iter().filter_map(|o| f(o)).collect()
        };
        let succeeded = outcomes.iter().filter(|o| o.success).count();
        Aggregate {
            success_rate: if outcomes.is_empty() {
                0.0
            } else {
                succeeded as f64 / outcomes.len() as f64
            },
            pruning_error: Stats::from_values(&collect(&|o| Some(o.pruning_error))),
            basis_error: Stats::from_values(&collect(&|o| o.basis_error)),
            fit_residual: Stats::from_values(&collect(&|o| o.fit_residual)),
            fraction: Stats::from_values(&collect(&|o| Some(o.surviving_fraction))),
        }
    }
}

/// Per-kind payload of a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunResults {
    /// Zero-seed run: config echo only.
    DryRun,
    Sweep { outcomes: Vec<SeedOutcome> },
    Subsetsum { results: SubsetSumResults },
    Paths { results: PathsResults },
}

/// Wall-clock accounting; stripped by [`canonical_json`] so that reruns of
/// the same config compare byte-for-byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub timestamp_unix: u64,
    pub wall_seconds: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_seed_seconds: Vec<f64>,
}

/// Everything a run produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub version: String,
    pub calibration_hash: String,
    pub results: RunResults,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<Aggregate>,
    pub thresholds_met: bool,
    pub timing: Timing,
}

/// Report JSON with the `timing` block removed: the determinism contract is
/// equality of this form across reruns.
pub fn canonical_json(report: &RunReport) -> Result<String> {
    let mut value = serde_json::to_value(report)?;
    if let Some(map) = value.as_object_mut() {
        map.remove("timing");
    }
    Ok(value.to_string())
}

/// FNV-1a over the sorted calibration pairs; stamped into every report.
pub fn calibration_hash(calibration: &BTreeMap<String, f64>) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for (key, value) in calibration {
        for byte in key.bytes().chain(format!("={value:.17e};").bytes()) {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{hash:016x}")
}

pub(crate) fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| TicketError::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Execute a config end-to-end. With `out_dir` set, writes
/// `<name>.json` plus the kind's CSV tables into it.
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let (results, per_seed_seconds) = if config.run.seeds == 0
        && matches!(config.kind, ExperimentKind::Family | ExperimentKind::Univariate)
    {
        (RunResults::DryRun, Vec::new())
    } else {
        match config.kind {
            ExperimentKind::Family => family::run_family(config)?,
            ExperimentKind::Univariate => family::run_univariate(config)?,
            ExperimentKind::Subsetsum => (subsetsum::run(config)?, Vec::new()),
            ExperimentKind::Paths => (paths::run(config)?, Vec::new()),
        }
    };
    let aggregate = match &results {
        RunResults::Sweep { outcomes } => Some(Aggregate::from_outcomes(outcomes)),
        _ => None,
    };
    let wall_seconds = start.elapsed().as_secs_f64();
    let thresholds_met = thresholds_met(&config.thresholds, &results, aggregate.as_ref(), wall_seconds);
    let report = RunReport {
        config: config.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        calibration_hash: calibration_hash(&config.calibration),
        results,
        aggregate,
        thresholds_met,
        timing: Timing {
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            wall_seconds,
            per_seed_seconds,
        },
    };
    if let Some(dir) = &config.out_dir {
        write_artifacts(&report, dir)?;
    }
    Ok(report)
}

fn thresholds_met(
    gates: &Thresholds,
    results: &RunResults,
    aggregate: Option<&Aggregate>,
    wall_seconds: f64,
) -> bool {
    if let Some(max) = gates.wall_seconds_max {
        if wall_seconds > max {
            return false;
        }
    }
    match results {
        RunResults::DryRun => true,
        RunResults::Sweep { .. } => {
            let Some(agg) = aggregate else { return false };
            let median = |s: Option<Stats>| s.map(|s| s.median);
            let checks = [
                gates.median_pruning_error.map(|g| median(agg.pruning_error).is_some_and(|v| v <= g)),
                gates.median_fit_error.map(|g| median(agg.fit_residual).is_some_and(|v| v <= g)),
                gates.fraction_min.map(|g| agg.fraction.is_some_and(|s| s.min >= g)),
                gates.fraction_max.map(|g| agg.fraction.is_some_and(|s| s.max <= g)),
                gates.success_rate_min.map(|g| agg.success_rate >= g),
            ];
            checks.into_iter().flatten().all(|ok| ok)
        }
        RunResults::Subsetsum { results } => {
            let pinned_ok = match (gates.rate_floor, results.pinned_rate) {
                (Some(floor), Some(rate)) => rate >= floor,
                (Some(_), None) => false,
                (None, _) => true,
            };
            pinned_ok && results.monotone
        }
        RunResults::Paths { results } => {
            let floor_ok = gates.first_step_floor.map_or(true, |floor| {
                results.per_law.iter().all(|l| l.first_step.frequency >= floor)
            });
            floor_ok && results.per_law.iter().all(|l| l.products_in_range)
        }
    }
}

fn write_artifacts(report: &RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(report)?;
    std::fs::write(dir.join(format!("{}.json", report.config.name)), json)?;
    for (name, table) in tables(report)? {
        std::fs::write(dir.join(name), table)?;
    }
    Ok(())
}

/// CSV tables for a report: a per-seed summary plus per-parameter errors for
/// sweeps, the success curve for subset-sum runs, step statistics for paths.
pub fn tables(report: &RunReport) -> Result<Vec<(String, String)>> {
    let name = &report.config.name;
    let mut out = Vec::new();
    match &report.results {
        RunResults::DryRun => {}
        RunResults::Sweep { outcomes } => {
            let mut summary = csv_writer();
            write_row(
                &mut summary,
                &["seed_index", "seed", "success", "pruning_error", "basis_error", "fit_residual", "surviving_fraction", "error"],
            )?;
            for o in outcomes {
                write_row(
                    &mut summary,
                    &[
                        o.index.to_string(),
                        o.seed.to_string(),
                        o.success.to_string(),
                        format!("{:.6e}", o.pruning_error),
                        o.basis_error.map(|v| format!("{v:.6e}")).unwrap_or_default(),
                        o.fit_residual.map(|v| format!("{v:.6e}")).unwrap_or_default(),
                        format!("{:.6e}", o.surviving_fraction),
                        o.error.clone().unwrap_or_default(),
                    ],
                )?;
            }
            out.push((format!("{name}_summary.csv"), finish(summary)?));

            let mut params = csv_writer();
            write_row(&mut params, &["seed_index", "stage", "param", "target", "achieved", "error", "budget", "within_budget"])?;
            for o in outcomes {
                for stage in &o.stages {
                    for p in &stage.report.param_errors {
                        write_row(
                            &mut params,
                            &[
                                o.index.to_string(),
                                stage.name.clone(),
                                p.param.clone(),
                                format!("{:.6e}", p.target),
                                format!("{:.6e}", p.achieved),
                                format!("{:.6e}", p.error()),
                                format!("{:.6e}", p.budget),
                                p.within_budget().to_string(),
                            ],
                        )?;
                    }
                }
            }
            out.push((format!("{name}_params.csv"), finish(params)?));
        }
        RunResults::Subsetsum { results } => {
            let mut curve = csv_writer();
            write_row(&mut curve, &["eps", "log_inv_eps", "n_required", "rate"])?;
            for p in &results.curve {
                write_row(
                    &mut curve,
                    &[
                        format!("{:e}", p.eps),
                        format!("{:.6}", p.log_inv_eps),
                        p.n_required.map(|n| n.to_string()).unwrap_or_default(),
                        format!("{:.4}", p.rate),
                    ],
                )?;
            }
            out.push((format!("{name}_curve.csv"), finish(curve)?));
        }
        RunResults::Paths { results } => {
            let mut steps = csv_writer();
            write_row(&mut steps, &["law", "context", "step", "accepted", "examined", "frequency"])?;
            for law in &results.per_law {
                write_row(
                    &mut steps,
                    &[
                        law.law.clone(),
                        "first_step".into(),
                        "0".into(),
                        law.first_step.accepted.to_string(),
                        law.first_step.examined.to_string(),
                        format!("{:.5}", law.first_step.frequency),
                    ],
                )?;
                for (i, s) in law.per_step.iter().enumerate() {
                    write_row(
                        &mut steps,
                        &[
                            law.law.clone(),
                            "multi_step".into(),
                            i.to_string(),
                            s.accepted.to_string(),
                            s.examined.to_string(),
                            format!("{:.5}", s.frequency),
                        ],
                    )?;
                }
            }
            out.push((format!("{name}_steps.csv"), finish(steps)?));
        }
    }
    Ok(out)
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn write_row<S: AsRef<str>>(w: &mut csv::Writer<Vec<u8>>, fields: &[S]) -> Result<()> {
    w.write_record(fields.iter().map(|f| f.as_ref()))
        .map_err(|e| TicketError::Config(format!("csv: {e}")))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| TicketError::Config(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| TicketError::Config(format!("csv: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke_toml() -> &'static str {
        r#"
            name = "smoke"
            kind = "family"

            [family]
            family = "fourier"
            d = 1
            frequencies = [[1]]
            phases = [0.0]
            eps = 0.1
            delta = 0.3
            m = 1

            [knots]
            sin = 9

            [[stages]]
            widths = [1, 120, 9, 120, 1]

            [run]
            seeds = 2
            master_seed = 7
        "#
    }

    #[test]
    fn toml_round_trip_keeps_the_config() {
        let config = ExperimentConfig::from_toml_str(smoke_toml()).unwrap();
        assert_eq!(config.kind, ExperimentKind::Family);
        assert_eq!(config.knots.sin, 9);
        assert_eq!(config.stages[0].widths, vec![1, 120, 9, 120, 1]);
        assert_eq!(config.run.master_seed, 7);
        let echoed = toml::to_string(&config).unwrap();
        let back = ExperimentConfig::from_toml_str(&echoed).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), serde_json::to_string(&config).unwrap());
    }

    #[test]
    fn validation_rejects_missing_sections_and_bad_bounds() {
        let mut config = ExperimentConfig::from_toml_str(smoke_toml()).unwrap();
        config.family = None;
        assert!(matches!(config.validate(), Err(TicketError::Config(_))));

        let mut config = ExperimentConfig::from_toml_str(smoke_toml()).unwrap();
        config.eps = Some(1.0);
        assert!(config.validate().is_err());

        let mut config = ExperimentConfig::from_toml_str(smoke_toml()).unwrap();
        config.target_file = Some("/nonexistent/rep.json".into());
        assert!(config.validate().is_err());
    }

    #[test]
    fn parse_errors_carry_line_diagnostics() {
        let err = ExperimentConfig::from_toml_str("name = \"x\"\nkind = family\n").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("line 2"), "no line info in: {text}");
    }

    #[test]
    fn zero_seeds_dry_run_echoes_config_only() {
        let mut config = ExperimentConfig::from_toml_str(smoke_toml()).unwrap();
        config.run.seeds = 0;
        let report = run(&config).unwrap();
        assert!(matches!(report.results, RunResults::DryRun));
        assert!(report.aggregate.is_none());
        assert!(report.thresholds_met);
        assert!(tables(&report).unwrap().is_empty());
    }

    #[test]
    fn stats_and_hash_are_deterministic() {
        let stats = Stats::from_values(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!((stats.min, stats.median, stats.max), (1.0, 2.0, 3.0));
        assert!(Stats::from_values(&[]).is_none());

        let mut cal = BTreeMap::new();
        cal.insert("ground/product_uniform".to_string(), 0.85);
        let h1 = calibration_hash(&cal);
        cal.insert("width_linear/uniform".to_string(), 2.25);
        let h2 = calibration_hash(&cal);
        assert_ne!(h1, h2);
        assert_eq!(h2, calibration_hash(&cal.clone()));
    }
}
