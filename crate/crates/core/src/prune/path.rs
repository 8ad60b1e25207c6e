//! Bounded-weight chains: greedy scans that thread an intermediate value
//! through the net with the running weight product pinned to [1, 4/3].

use serde::{Deserialize, Serialize};

use crate::error::{Result, TicketError};
use crate::net::MotherNet;

/// 1/α for α = 3/4: the admissible ceiling of a running weight product.
pub const PRODUCT_CAP: f64 = 4.0 / 3.0;

/// Magnitude window for the next step: any |w| inside keeps the product
/// within [1, 4/3] given the current value `product`.
pub fn step_window(product: f64) -> (f64, f64) {
    (1.0 / product, PRODUCT_CAP / product)
}

pub fn in_window(product: f64, magnitude: f64) -> bool {
    let (lo, hi) = step_window(product);
    magnitude >= lo && magnitude <= hi
}

/// A constructed chain. Hidden banks are numbered by the weight layer that
/// writes them: bank b holds the outputs of weight layer b, so bank 0 is
/// the first hidden layer and bank depth−2 the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub label: String,
    /// Bank of `neurons[0]`.
    pub start_bank: usize,
    pub neurons: Vec<usize>,
    /// Kept weights along the chain in layer order, signs included. An
    /// entry weight (from an input) or a terminal weight (to an output)
    /// is part of the chain when the path has one.
    pub weights: Vec<f64>,
    /// ∏ |w| over `weights`; inside [1, 4/3] for every accepted path.
    pub product: f64,
    /// ∏ sign(w), ±1.
    pub sign: f64,
    /// Candidates examined at each step, the accepted one included.
    pub examined: Vec<usize>,
}

impl PathRecord {
    pub fn steps(&self) -> usize {
        self.weights.len()
    }
}

/// Walk from neuron 0 of hidden bank `from_layer` to some neuron of bank
/// `to_layer`. At every intermediate bank the first candidate (index
/// order, at most `budget_per_layer` examined) whose connecting weight is
/// positive with magnitude inside the current window is taken.
pub fn find_path(
    net: &MotherNet,
    from_layer: usize,
    to_layer: usize,
    budget_per_layer: usize,
) -> Result<PathRecord> {
    let banks = net.architecture.depth() - 1;
    if from_layer >= to_layer || to_layer >= banks {
        return Err(TicketError::BadParameter(format!(
            "path from bank {from_layer} to {to_layer} in a net with {banks} hidden banks"
        )));
    }
    if budget_per_layer == 0 {
        return Err(TicketError::BadParameter("budget_per_layer must be at least 1".into()));
    }
    let mut product = 1.0;
    let mut src = 0usize;
    let mut neurons = Vec::new();
    let mut weights = Vec::new();
    let mut examined = Vec::new();
    for bank in from_layer + 1..=to_layer {
        let rows = net.architecture.widths[bank + 1];
        let budget = budget_per_layer.min(rows);
        let mut hit = None;
        let mut looked = 0;
        for cand in 0..budget {
            looked += 1;
            let w = net.weight(bank, cand, src);
            if w > 0.0 && in_window(product, w) {
                hit = Some((cand, w));
                break;
            }
        }
        let (cand, w) = hit.ok_or(TicketError::PathExhausted { layer: bank, examined: looked })?;
        product *= w;
        src = cand;
        neurons.push(cand);
        weights.push(w);
        examined.push(looked);
    }
    Ok(PathRecord {
        label: format!("path[{from_layer}->{to_layer}]"),
        start_bank: from_layer + 1,
        neurons,
        weights,
        product,
        sign: 1.0,
        examined,
    })
}

/// Ledger of hidden neurons already consumed by some construction role.
/// Scans examine free neurons in index order and claim only the accepted
/// one; rejected candidates stay available for other roles.
pub(crate) struct Claims {
    taken: Vec<Vec<bool>>,
}

impl Claims {
    pub fn new(net: &MotherNet) -> Self {
        let taken = (0..net.architecture.depth() - 1)
            .map(|b| vec![false; net.architecture.widths[b + 1]])
            .collect();
        Claims { taken }
    }

    /// First free neuron of `bank` accepted by the predicate, now claimed.
    /// Returns the neuron and how many candidates were examined.
    pub fn scan(
        &mut self,
        bank: usize,
        budget: usize,
        mut accept: impl FnMut(usize) -> bool,
    ) -> (Option<usize>, usize) {
        let mut looked = 0;
        for idx in 0..self.taken[bank].len() {
            if self.taken[bank][idx] {
                continue;
            }
            looked += 1;
            if accept(idx) {
                self.taken[bank][idx] = true;
                return (Some(idx), looked);
            }
            if looked >= budget {
                break;
            }
        }
        (None, looked)
    }

    pub fn is_free(&self, bank: usize, idx: usize) -> bool {
        !self.taken[bank][idx]
    }
}
