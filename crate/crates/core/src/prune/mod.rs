//! Lottery-ticket constructions: prune a randomly initialized mother net so
//! that the masked subnetwork approximates either a linear map `x ↦ Wx + b`
//! or a univariate piecewise-linear function, to a requested sup-norm error.
//!
//! All constructions are sampled-then-checked: nothing is ever redrawn. A
//! run that misses a budget is reported with failure flags, never patched.

mod construct;
mod linear;
mod path;
mod univariate;

pub use linear::prune_linear;
pub use path::{find_path, in_window, step_window, PathRecord, PRODUCT_CAP};
pub use univariate::prune_univariate;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TicketError};
use crate::net::PruneMask;

/// Knobs that are practical rather than part of the target: pool sizes,
/// scan budgets, and how the report's sup error is measured.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PruneOptions {
    /// Largest ground set handed to one subset-sum solve.
    pub ground_cap: usize,
    /// Cardinality cap forwarded to the subset-sum solver.
    pub max_subset: usize,
    /// Candidates examined per path-extension step before giving up.
    pub path_budget: usize,
    /// Points in the evaluation grid for the reported sup error;
    /// 0 picks `grid::default_budget` for the input dimension.
    pub grid_budget: usize,
    /// Input box the error grid covers (linear targets only; empty means
    /// the unit box). Univariate targets are measured on their knot span.
    pub domain: Vec<(f64, f64)>,
    /// Whether the target's constant term is built from bias neurons or
    /// left to the caller (reported as `offset`).
    pub constant_mode: ConstantMode,
}

impl Default for PruneOptions {
    fn default() -> Self {
        PruneOptions {
            ground_cap: 40,
            max_subset: 5,
            path_budget: 256,
            grid_budget: 0,
            domain: Vec::new(),
            constant_mode: ConstantMode::Carrier,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstantMode {
    /// Realise the constant inside the ticket via positive-bias neurons.
    Carrier,
    /// Leave the constant out of the mask and report it as `offset`.
    Absorb,
}

/// Role a hidden neuron plays after classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NeuronClass {
    /// Keeps only input weight `j`, positive: computes `|w| φ(x_j)`.
    PosInput { j: usize },
    /// Keeps only input weight `j`, negative: computes `|w| φ(-x_j)`.
    NegInput { j: usize },
    /// Keeps only a positive bias: computes the constant `b`.
    BiasPos,
    /// Carries an intermediate value along a bounded-weight chain.
    Path,
    Unused,
}

/// One approximated target parameter and what the subset sum achieved.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamError {
    pub param: String,
    pub target: f64,
    pub achieved: f64,
    pub budget: f64,
}

impl ParamError {
    pub fn error(&self) -> f64 {
        (self.target - self.achieved).abs()
    }

    pub fn within_budget(&self) -> bool {
        self.error() <= self.budget
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureFlag {
    /// A claiming pass found fewer eligible neurons than requested.
    WidthShortfall { role: String, bank: usize, want: usize, got: usize },
    /// No acceptable weight within the scan budget while extending a path.
    PathFailure { role: String, bank: usize, examined: usize },
    /// A subset sum missed its per-parameter budget.
    Approximation { param: String, error: f64, budget: f64 },
    /// The measured sup error exceeds the requested eps.
    ExcessError { measured: f64, eps: f64 },
}

impl std::fmt::Display for FailureFlag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FailureFlag::WidthShortfall { role, bank, want, got } => {
                write!(f, "width shortfall: {role} at bank {bank} has {got} of {want}")
            }
            FailureFlag::PathFailure { role, bank, examined } => {
                write!(f, "path failure: {role} found no step at bank {bank} ({examined} examined)")
            }
            FailureFlag::Approximation { param, error, budget } => {
                write!(f, "approximation: {param} off by {error:.3e} (budget {budget:.3e})")
            }
            FailureFlag::ExcessError { measured, eps } => {
                write!(f, "sup error {measured:.3e} exceeds eps {eps:.3e}")
            }
        }
    }
}

/// Bias carrier: one positive-bias neuron, optionally extended through
/// later banks, holding an approximately unit constant for deeper blocks
/// to read. Not a Lemma-style path; recorded separately.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CarrierRecord {
    pub neurons: Vec<usize>,
    /// First entry is the bias itself, the rest are chain weights.
    pub weights: Vec<f64>,
    /// Constant carried at each bank, starting at bank 0.
    pub values: Vec<f64>,
}

impl CarrierRecord {
    /// Constant available to a reader of bank `bank`.
    pub fn value_at(&self, bank: usize) -> f64 {
        self.values[bank]
    }
}

/// Grid the sup error was measured on, kept so the number can be
/// recomputed bit-for-bit from the mask and the mother net.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub domain: Vec<(f64, f64)>,
    pub budget: usize,
}

/// Everything a pruning run produced: the mask plus the bookkeeping that
/// makes the result checkable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TicketReport {
    pub mask: PruneMask,
    /// Output rescaling ∏ 2/σ_w,l the approximation guarantee refers to.
    pub lambda: f64,
    /// Constant left out of the mask (Absorb mode); the guarantee is on
    /// `target − (λ·ticket + offset)`.
    pub offset: f64,
    pub eps: f64,
    pub delta: f64,
    pub param_errors: Vec<ParamError>,
    pub paths: Vec<PathRecord>,
    pub carrier: Option<CarrierRecord>,
    pub sup_error: f64,
    pub surviving_fraction: f64,
    pub flags: Vec<FailureFlag>,
    pub success: bool,
    pub grid: GridSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WidthKind {
    Linear,
    Univariate,
}

/// Per-layer width sufficient for the construction to succeed with
/// probability 1−δ, by the theorem formulas with calibrated constant `c`.
///
/// `m_bound` is the parameter-magnitude bound M, `n_params` the number of
/// nonzero target parameters N, `q` the domain bound Q, `d`/`m` the input
/// and output dimensions, `l0` the mother-net depth.
pub fn required_width(
    kind: WidthKind,
    m_bound: f64,
    n_params: f64,
    q: f64,
    d: usize,
    m: usize,
    l0: usize,
    eps: f64,
    delta: f64,
    c: f64,
) -> Result<usize> {
    if !(eps > 0.0 && eps <= 1.0 && delta > 0.0 && delta <= 1.0) {
        return Err(TicketError::BadParameter("eps and delta must lie in (0,1]".into()));
    }
    if !(m_bound >= 1.0) || !(n_params >= 1.0) || !(q > 0.0) || !(c > 0.0) {
        return Err(TicketError::BadParameter(
            "need M >= 1, N >= 1, Q > 0, C > 0".into(),
        ));
    }
    if d == 0 || m == 0 {
        return Err(TicketError::BadParameter("dimensions must be positive".into()));
    }
    let value = match (kind, l0) {
        (_, 0 | 1) => {
            return Err(TicketError::BadParameter(format!("depth {l0} below minimum 2")));
        }
        (WidthKind::Linear, 2) => {
            let cut = (delta / (n_params + 1.0)).min(eps / q);
            c * m_bound * d as f64 * (m_bound / cut).ln()
        }
        (WidthKind::Linear, _) => {
            let split = 2.0 * (m + d) as f64 * (l0 as f64 - 1.0) + n_params + 1.0;
            let cut = (delta / split).min(eps / q);
            c * m_bound * d as f64 / (l0 as f64 - 1.0) * (m_bound / cut).ln()
        }
        (WidthKind::Univariate, 2) => {
            let cut = (delta / (n_params + 1.0)).min(eps / (2.0 * (q + m_bound)));
            c * m_bound * q / eps * (m_bound / cut).ln()
        }
        (WidthKind::Univariate, _) => {
            let split = l0 as f64 * (n_params + 2.0) - 1.0;
            let cut = (delta / split).min(eps / (2.0 * (q + m_bound)));
            c * m_bound.max(n_params) / (l0 as f64 - 2.0) * (m_bound / cut).ln()
        }
    };
    Ok(value.ceil() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_shallow_example() {
        // M=1, d=1, N=1, eps=delta=Q=1: ceil(ln(1/min{1/2, 1})) = ceil(ln 2) = 1.
        let n =
            required_width(WidthKind::Linear, 1.0, 1.0, 1.0, 1, 1, 2, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(n, 1);
    }

    #[test]
    fn univariate_depth_three_example() {
        // M=N=2, delta=0.5, eps=0.1, Q=1, L0=3:
        // max{M,N}/(L0-2) * ln(M / min{delta/(L0(N+2)-1), eps/(2(Q+M))})
        // = 2 * ln(2 / min{0.5/11, 0.1/6}) = 2 ln 120 -> 10.
        let n =
            required_width(WidthKind::Univariate, 2.0, 2.0, 1.0, 1, 1, 3, 0.1, 0.5, 1.0).unwrap();
        assert_eq!(n, 10);
    }

    #[test]
    fn deeper_nets_need_less_width_per_layer() {
        let shallow =
            required_width(WidthKind::Linear, 2.0, 3.0, 2.0, 2, 1, 3, 0.01, 0.1, 1.0).unwrap();
        let deep =
            required_width(WidthKind::Linear, 2.0, 3.0, 2.0, 2, 1, 9, 0.01, 0.1, 1.0).unwrap();
        assert!(deep < shallow, "width {deep} at L=9 vs {shallow} at L=3");
    }

    #[test]
    fn univariate_shallow_pays_one_over_eps() {
        let loose =
            required_width(WidthKind::Univariate, 2.0, 5.0, 1.0, 1, 1, 2, 0.2, 0.1, 1.0).unwrap();
        let tight =
            required_width(WidthKind::Univariate, 2.0, 5.0, 1.0, 1, 1, 2, 0.02, 0.1, 1.0).unwrap();
        assert!(tight as f64 >= 8.0 * loose as f64, "{tight} vs {loose}");
    }

    #[test]
    fn rejects_bad_depth_and_ranges() {
        assert!(required_width(WidthKind::Linear, 1.0, 1.0, 1.0, 1, 1, 1, 0.1, 0.1, 1.0).is_err());
        assert!(required_width(WidthKind::Linear, 0.5, 1.0, 1.0, 1, 1, 2, 0.1, 0.1, 1.0).is_err());
        assert!(required_width(WidthKind::Linear, 1.0, 1.0, 1.0, 1, 1, 2, 1.5, 0.1, 1.0).is_err());
    }
}
