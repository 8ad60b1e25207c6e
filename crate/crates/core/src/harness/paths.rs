//! Bounded-weight path statistics over fresh nets: acceptance frequency of
//! the first step measured on its own single-step attempts, pooled per-step
//! counts along multi-step walks, and the product-window invariant.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TicketError};
use crate::init::{sample, InitFamily, InitSpec};
use crate::net::Architecture;
use crate::prune::{find_path, PRODUCT_CAP};
use crate::rng::substream;

use super::{with_pool, ExperimentConfig, RunResults};

fn default_attempts() -> usize {
    10_000
}

fn default_steps() -> usize {
    6
}

fn default_width() -> usize {
    64
}

fn default_laws() -> Vec<InitFamily> {
    vec![InitFamily::Uniform, InitFamily::Normal]
}

/// Config table for a path-statistics run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathsSection {
    #[serde(default = "default_attempts")]
    pub attempts: usize,
    /// Steps of each multi-step walk; the net gets one hidden bank per step
    /// plus the starting bank.
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_width")]
    pub width: usize,
    /// Candidates examined per step; 0 scans the whole bank.
    #[serde(default)]
    pub budget: usize,
    #[serde(default = "default_laws")]
    pub laws: Vec<InitFamily>,
}

impl PathsSection {
    pub fn validate(&self) -> Result<()> {
        if self.attempts == 0 || self.steps == 0 || self.width == 0 {
            return Err(TicketError::Config(
                "paths run needs attempts, steps and width >= 1".into(),
            ));
        }
        if self.laws.is_empty() {
            return Err(TicketError::Config("paths run needs at least one init law".into()));
        }
        Ok(())
    }

    fn effective_budget(&self) -> usize {
        if self.budget == 0 {
            self.width
        } else {
            self.budget
        }
    }
}

/// Pooled acceptance counts for one step position.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub examined: usize,
    pub frequency: f64,
}

impl StepStats {
    fn add(&mut self, accepted: usize, examined: usize) {
        self.accepted += accepted;
        self.examined += examined;
    }

    fn merge(&mut self, other: &StepStats) {
        self.add(other.accepted, other.examined);
    }

    fn seal(mut self) -> StepStats {
        self.frequency = if self.examined == 0 {
            0.0
        } else {
            self.accepted as f64 / self.examined as f64
        };
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathLawStats {
    pub law: String,
    pub attempts: usize,
    /// Multi-step walks that reached the final bank.
    pub completed: usize,
    /// Measured on dedicated single-step attempts, so every examined
    /// candidate is a fresh draw against the [1, 4/3] window.
    pub first_step: StepStats,
    /// Pooled counts per step over completed walks only.
    pub per_step: Vec<StepStats>,
    pub product_min: f64,
    pub product_max: f64,
    pub products_in_range: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathsResults {
    pub per_law: Vec<PathLawStats>,
}

/// Per-attempt tallies, merged associatively across the worker pool.
#[derive(Clone)]
struct LawTally {
    first: StepStats,
    steps: Vec<StepStats>,
    completed: usize,
    product_min: f64,
    product_max: f64,
    out_of_range: usize,
}

impl LawTally {
    fn empty(steps: usize) -> LawTally {
        LawTally {
            first: StepStats::default(),
            steps: vec![StepStats::default(); steps],
            completed: 0,
            product_min: f64::INFINITY,
            product_max: f64::NEG_INFINITY,
            out_of_range: 0,
        }
    }

    fn merge(mut self, other: LawTally) -> LawTally {
        self.first.merge(&other.first);
        for (a, b) in self.steps.iter_mut().zip(&other.steps) {
            a.merge(b);
        }
        self.completed += other.completed;
        self.product_min = self.product_min.min(other.product_min);
        self.product_max = self.product_max.max(other.product_max);
        self.out_of_range += other.out_of_range;
        self
    }
}

fn one_attempt(
    section: &PathsSection,
    law: InitFamily,
    law_idx: usize,
    master: u64,
    attempt: usize,
) -> Result<LawTally> {
    let mut tally = LawTally::empty(section.steps);
    let budget = section.effective_budget();
    let w = section.width;
    let seed: u64 = substream(master, &[70, law_idx as u64, attempt as u64]).gen();

    let single_arch = Architecture::dense(vec![1, w, w, 1]);
    let single = sample(&single_arch, &InitSpec::canonical(law, single_arch.depth(), seed))?;
    match find_path(&single, 0, 1, budget) {
        Ok(path) => tally.first.add(1, path.examined[0]),
        Err(TicketError::PathExhausted { examined, .. }) => tally.first.add(0, examined),
        Err(e) => return Err(e),
    }

    let mut widths = vec![w; section.steps + 1];
    widths.insert(0, 1);
    widths.push(1);
    let multi_arch = Architecture::dense(widths);
    let seed: u64 = substream(master, &[71, law_idx as u64, attempt as u64]).gen();
    let multi = sample(&multi_arch, &InitSpec::canonical(law, multi_arch.depth(), seed))?;
    match find_path(&multi, 0, section.steps, budget) {
        Ok(path) => {
            tally.completed = 1;
            for (i, &looked) in path.examined.iter().enumerate() {
                tally.steps[i].add(1, looked);
            }
            tally.product_min = path.product;
            tally.product_max = path.product;
            if !(path.product >= 1.0 - 1e-12 && path.product <= PRODUCT_CAP + 1e-12) {
                tally.out_of_range = 1;
            }
        }
        Err(TicketError::PathExhausted { .. }) => {}
        Err(e) => return Err(e),
    }
    Ok(tally)
}

pub(super) fn run(config: &ExperimentConfig) -> Result<RunResults> {
    let section = config.paths.as_ref().expect("validated");
    let master = config.run.master_seed;
    let per_law = with_pool(config.run.jobs, || -> Result<Vec<PathLawStats>> {
        section
            .laws
            .iter()
            .enumerate()
            .map(|(law_idx, &law)| {
                let tally = (0..section.attempts)
                    .into_par_iter()
                    .map(|attempt| one_attempt(section, law, law_idx, master, attempt))
                    .try_reduce(|| LawTally::empty(section.steps), |a, b| Ok(a.merge(b)))?;
                Ok(PathLawStats {
                    law: format!("{law:?}").to_lowercase(),
                    attempts: section.attempts,
                    completed: tally.completed,
                    first_step: tally.first.seal(),
                    per_step: tally.steps.into_iter().map(StepStats::seal).collect(),
                    product_min: tally.product_min,
                    product_max: tally.product_max,
                    products_in_range: tally.out_of_range == 0 && tally.completed > 0,
                })
            })
            .collect()
    })??;
    Ok(RunResults::Paths { results: PathsResults { per_law } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{ExperimentKind, RunSection};

    fn config(attempts: usize) -> ExperimentConfig {
        ExperimentConfig {
            name: "paths-test".into(),
            kind: ExperimentKind::Paths,
            init: InitFamily::Uniform,
            family: None,
            eps: None,
            delta: None,
            knots: Default::default(),
            stages: Vec::new(),
            target_file: None,
            net_file: None,
            run: RunSection { seeds: 1, master_seed: 5, grid: 0, jobs: 0 },
            options: Default::default(),
            thresholds: Default::default(),
            calibration: Default::default(),
            out_dir: None,
            subsetsum: None,
            paths: Some(PathsSection {
                attempts,
                steps: 3,
                width: 48,
                budget: 0,
                laws: vec![InitFamily::Uniform],
            }),
        }
    }

    #[test]
    fn products_stay_in_window_and_steps_line_up() {
        let config = config(200);
        let RunResults::Paths { results } = run(&config).unwrap() else {
            panic!("wrong result kind")
        };
        let law = &results.per_law[0];
        assert_eq!(law.per_step.len(), 3);
        assert!(law.completed > 150, "only {} of 200 walks completed", law.completed);
        assert!(law.products_in_range);
        assert!(law.product_min >= 1.0 - 1e-12);
        assert!(law.product_max <= PRODUCT_CAP + 1e-12);
        assert!(law.first_step.frequency > 1.0 / 16.0 - 0.02);
    }

    #[test]
    fn reruns_are_deterministic() {
        let config = config(50);
        let a = run(&config).unwrap();
        let b = run(&config).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
