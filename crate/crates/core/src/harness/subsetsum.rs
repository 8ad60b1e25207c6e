//! Minimal ground size as a function of tolerance: for each ε in a grid,
//! find the smallest n whose empirical subset-sum success rate clears the
//! target, and check that n grows monotonically as ε shrinks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TicketError};
use crate::rng::substream;
use crate::subsum::{success_rate, GroundLaw, Strategy};

use super::{ExperimentConfig, RunResults};

fn default_eps_grid() -> Vec<f64> {
    vec![0.1, 0.03, 0.01, 0.003, 0.001]
}

fn default_target_rate() -> f64 {
    0.99
}

fn default_trials() -> usize {
    300
}

fn default_max_subset() -> usize {
    5
}

fn default_m() -> f64 {
    1.0
}

fn default_n_max() -> usize {
    40
}

/// One ground size to measure directly, on top of the curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinnedPoint {
    pub n: usize,
    pub eps: f64,
}

/// Config table for a ground-size-vs-precision run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSumSection {
    #[serde(flatten)]
    pub law: GroundLaw,
    /// Tolerances to find minimal ground sizes for, largest first.
    #[serde(default = "default_eps_grid")]
    pub eps_grid: Vec<f64>,
    /// Success rate a ground size must reach to count as sufficient.
    #[serde(default = "default_target_rate")]
    pub target_rate: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_max_subset")]
    pub max_subset: usize,
    /// Targets are drawn uniformly from [−m, m].
    #[serde(default = "default_m")]
    pub m: f64,
    /// Search ceiling for the minimal ground size.
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pinned: Option<PinnedPoint>,
}

impl SubsetSumSection {
    pub fn validate(&self) -> Result<()> {
        if self.eps_grid.is_empty() {
            return Err(TicketError::Config("subsetsum eps_grid is empty".into()));
        }
        if self.eps_grid.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(TicketError::Config("subsetsum eps values must lie in (0,1)".into()));
        }
        if self.eps_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(TicketError::Config(
                "subsetsum eps_grid must be strictly decreasing".into(),
            ));
        }
        if !(self.target_rate > 0.0 && self.target_rate <= 1.0) {
            return Err(TicketError::Config("subsetsum target_rate must lie in (0,1]".into()));
        }
        if self.trials < 100 {
            return Err(TicketError::Config("subsetsum needs at least 100 trials".into()));
        }
        if !(self.m > 0.0) || self.n_max == 0 {
            return Err(TicketError::Config("subsetsum needs m > 0 and n_max >= 1".into()));
        }
        if let Some(p) = &self.pinned {
            if p.n == 0 || !(p.eps > 0.0) {
                return Err(TicketError::Config("pinned point needs n >= 1 and eps > 0".into()));
            }
        }
        Ok(())
    }
}

/// Result at one tolerance. `n_required` is absent when even `n_max`
/// elements miss the target rate; `rate` is then the rate at `n_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub eps: f64,
    pub log_inv_eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_required: Option<usize>,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSumResults {
    pub curve: Vec<CurvePoint>,
    /// Whether `n_required` never decreases as ε shrinks along the grid.
    pub monotone: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pinned_rate: Option<f64>,
}

/// Smallest n in [1, n_max] with rate ≥ target: double until feasible, then
/// bisect. Returns the n and its measured rate, or the rate at n_max.
fn minimal_n(
    section: &SubsetSumSection,
    eps: f64,
    seed: u64,
) -> Result<(Option<usize>, f64)> {
    let rate_at = |n: usize| -> Result<f64> {
        success_rate(
            section.law,
            n,
            section.m,
            eps,
            section.trials,
            Strategy::BestK,
            section.max_subset,
            seed,
        )
    };
    let mut lo = 0usize;
    let mut hi = 1usize;
    let mut hi_rate = rate_at(hi)?;
    while hi_rate < section.target_rate {
        if hi >= section.n_max {
            return Ok((None, hi_rate));
        }
        lo = hi;
        hi = (hi * 2).min(section.n_max);
        hi_rate = rate_at(hi)?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let rate = rate_at(mid)?;
        if rate >= section.target_rate {
            hi = mid;
            hi_rate = rate;
        } else {
            lo = mid;
        }
    }
    Ok((Some(hi), hi_rate))
}

pub(super) fn run(config: &ExperimentConfig) -> Result<RunResults> {
    let section = config.subsetsum.as_ref().expect("validated");
    let master = config.run.master_seed;
    let mut curve = Vec::with_capacity(section.eps_grid.len());
    for (i, &eps) in section.eps_grid.iter().enumerate() {
        let seed: u64 = substream(master, &[60, i as u64]).gen();
        let (n_required, rate) = minimal_n(section, eps, seed)?;
        curve.push(CurvePoint { eps, log_inv_eps: (1.0 / eps).ln(), n_required, rate });
    }
    let monotone = curve.windows(2).all(|w| match (w[0].n_required, w[1].n_required) {
        (Some(a), Some(b)) => b >= a,
        // A tolerance that exhausted the search cannot be followed by a
        // coarser one that found a size.
        (None, Some(_)) => false,
        _ => true,
    });
    let pinned_rate = match &section.pinned {
        Some(p) => {
            let seed: u64 = substream(master, &[61]).gen();
            Some(success_rate(
                section.law,
                p.n,
                section.m,
                p.eps,
                section.trials,
                Strategy::BestK,
                section.max_subset,
                seed,
            )?)
        }
        None => None,
    };
    Ok(RunResults::Subsetsum {
        results: SubsetSumResults { curve, monotone, pinned_rate },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn section() -> SubsetSumSection {
        SubsetSumSection {
            law: GroundLaw::ProductUniform,
            eps_grid: default_eps_grid(),
            target_rate: 0.99,
            trials: 300,
            max_subset: 5,
            m: 1.0,
            n_max: 40,
            pinned: None,
        }
    }

    #[test]
    fn validation_rejects_unsorted_grids() {
        let mut s = section();
        s.eps_grid = vec![0.01, 0.1];
        assert!(s.validate().is_err());
        s.eps_grid = vec![0.1, 0.1];
        assert!(s.validate().is_err());
        s.eps_grid = vec![0.1, 0.01];
        assert!(s.validate().is_ok());
    }

    #[test]
    fn minimal_n_is_tight() {
        let mut s = section();
        s.eps_grid = vec![0.05];
        s.trials = 200;
        let (n, rate) = minimal_n(&s, 0.05, 11).unwrap();
        let n = n.expect("search exhausted");
        assert!(rate >= s.target_rate);
        if n > 1 {
            let below = success_rate(
                s.law,
                n - 1,
                s.m,
                0.05,
                s.trials,
                Strategy::BestK,
                s.max_subset,
                11,
            )
            .unwrap();
            assert!(below < s.target_rate, "n−1 already passes at {below}");
        }
    }

    #[test]
    fn exhausted_search_reports_no_size() {
        let mut s = section();
        s.n_max = 2;
        let (n, rate) = minimal_n(&s, 1e-4, 3).unwrap();
        assert!(n.is_none());
        assert!(rate < s.target_rate);
    }
}
