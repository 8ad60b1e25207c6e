//! Internal toolkit shared by the pruning constructions: canonical
//! rescaling, rails, ground-set assembly, and subset-sum bookkeeping.

use crate::error::Result;
use crate::net::{Architecture, MotherNet, PruneMask};
use crate::subsum::{solve, Strategy, SubsetSumInstance};

use super::path::{in_window, Claims, PathRecord};
use super::{CarrierRecord, FailureFlag, ParamError};

/// Read-through view of the mother net in the canonical frame: layer-l
/// weights scaled by 2/σ_l, biases by ∏_{k≤l} 2/σ_k. Constructions reason
/// in this frame; the mask applies to the stored parameters and the
/// guarantee picks up λ = ∏ 2/σ_l.
pub(crate) struct Canon<'a> {
    net: &'a MotherNet,
    wscale: Vec<f64>,
    bscale: Vec<f64>,
}

impl<'a> Canon<'a> {
    pub fn new(net: &'a MotherNet) -> Self {
        let mut wscale = Vec::with_capacity(net.sigma_w.len());
        let mut bscale = Vec::with_capacity(net.sigma_w.len());
        let mut prefix = 1.0;
        for &s in &net.sigma_w {
            let f = 2.0 / s;
            prefix *= f;
            wscale.push(f);
            bscale.push(prefix);
        }
        Canon { net, wscale, bscale }
    }

    pub fn w(&self, l: usize, row: usize, col: usize) -> f64 {
        self.net.weight(l, row, col) * self.wscale[l]
    }

    pub fn b(&self, l: usize, row: usize) -> f64 {
        self.net.biases[l][row] * self.bscale[l]
    }

    pub fn lambda(&self) -> f64 {
        *self.bscale.last().expect("nets have at least one layer")
    }

    pub fn arch(&self) -> &Architecture {
        &self.net.architecture
    }

    pub fn net(&self) -> &'a MotherNet {
        self.net
    }

    pub fn depth(&self) -> usize {
        self.net.architecture.depth()
    }

    pub fn width(&self, bank: usize) -> usize {
        self.net.architecture.widths[bank + 1]
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Wire {
    W(usize, usize, usize),
    B(usize, usize),
}

pub(crate) fn keep(mask: &mut PruneMask, arch: &Architecture, wire: Wire) {
    match wire {
        Wire::W(l, r, c) => mask.keep_weight(arch, l, r, c),
        Wire::B(l, r) => mask.keep_bias(l, r),
    }
}

/// One candidate contribution to a target parameter: the exact signed
/// value it adds at the output and the wires kept if selected.
pub(crate) struct Element {
    pub value: f64,
    pub wires: Vec<Wire>,
}

/// Outcome of one ground-set selection: the chosen element indices and the
/// signed sum their values add to the parameter.
pub(crate) struct Selection {
    pub indices: Vec<usize>,
    pub sum: f64,
}

/// Best subset of `elements` for `target`, with the selected wires kept.
pub(crate) fn select(
    elements: &[Element],
    target: f64,
    budget: f64,
    max_subset: usize,
    mask: &mut PruneMask,
    arch: &Architecture,
) -> Result<Selection> {
    let ground: Vec<f64> = elements.iter().map(|e| e.value).collect();
    let mut inst = SubsetSumInstance::new(ground, target, budget);
    inst.max_subset = max_subset;
    let sol = solve(&inst, Strategy::BestK)?;
    let mut sum = 0.0;
    for &i in &sol.indices {
        sum += elements[i].value;
        for &wire in &elements[i].wires {
            keep(mask, arch, wire);
        }
    }
    Ok(Selection { indices: sol.indices, sum })
}

/// Book a parameter's achieved value; a miss beyond `budget` is flagged,
/// never fatal.
pub(crate) fn record_param(
    param_errors: &mut Vec<ParamError>,
    flags: &mut Vec<FailureFlag>,
    param: String,
    target: f64,
    achieved: f64,
    budget: f64,
) {
    if (target - achieved).abs() > budget {
        flags.push(FailureFlag::Approximation {
            param: param.clone(),
            error: (target - achieved).abs(),
            budget,
        });
    }
    param_errors.push(ParamError { param, target, achieved, budget });
}

/// Solve one per-parameter subset sum, keep the selected wires, and record
/// the achieved value.
#[allow(clippy::too_many_arguments)]
pub(crate) fn solve_param(
    param: String,
    target: f64,
    budget: f64,
    elements: &[Element],
    max_subset: usize,
    mask: &mut PruneMask,
    arch: &Architecture,
    param_errors: &mut Vec<ParamError>,
    flags: &mut Vec<FailureFlag>,
) -> Result<f64> {
    let sel = select(elements, target, budget, max_subset, mask, arch)?;
    record_param(param_errors, flags, param, target, sel.sum, budget);
    Ok(sel.sum)
}

/// Accumulation rail for one output: a chain of otherwise-empty neurons
/// that sums contributions entering at any of its banks and forwards them
/// with positive step weights; the terminal output weight carries the
/// rail's sign. The full weight product lands in [1, 4/3].
pub(crate) struct OutRail {
    pub output: usize,
    pub sign: f64,
    pub start_bank: usize,
    pub neurons: Vec<usize>,
    /// steps[k] leads out of neurons[k]; the last entry is the terminal
    /// output weight (canonical, signed).
    pub steps: Vec<f64>,
    pub examined: Vec<usize>,
}

impl OutRail {
    pub fn neuron_at(&self, bank: usize) -> usize {
        self.neurons[bank - self.start_bank]
    }

    /// Signed factor applied to a contribution entering at the rail
    /// neuron of `bank` on its way to the output.
    pub fn delivery(&self, bank: usize) -> f64 {
        self.steps[bank - self.start_bank..].iter().product()
    }

    pub fn record(&self) -> PathRecord {
        PathRecord {
            label: format!("out[{}]{}", self.output, if self.sign > 0.0 { "+" } else { "-" }),
            start_bank: self.start_bank,
            neurons: self.neurons.clone(),
            weights: self.steps.clone(),
            product: self.steps.iter().map(|w| w.abs()).product(),
            sign: self.sign,
            examined: self.examined.clone(),
        }
    }
}

/// Build one accumulation rail spanning `start_bank ..= depth-2` plus the
/// terminal weight into `output`. Body steps use the plain window; the
/// final hidden step and the terminal weight are scanned jointly so the
/// full product lands in [1, 4/3] with the requested terminal sign.
pub(crate) fn build_out_rail(
    canon: &Canon,
    claims: &mut Claims,
    mask: &mut PruneMask,
    output: usize,
    sign: f64,
    start_bank: usize,
    budget: usize,
    flags: &mut Vec<FailureFlag>,
) -> Option<OutRail> {
    let depth = canon.depth();
    let last_bank = depth - 2;
    let role = format!("out rail {}{}", output, if sign > 0.0 { '+' } else { '-' });
    let mut neurons = Vec::new();
    let mut steps = Vec::new();
    let mut examined = Vec::new();

    if start_bank == last_bank {
        let (hit, looked) = claims.scan(start_bank, budget, |idx| {
            let f = canon.w(depth - 1, output, idx);
            f * sign > 0.0 && in_window(1.0, f.abs())
        });
        examined.push(looked);
        let idx = match hit {
            Some(idx) => idx,
            None => {
                flags.push(FailureFlag::PathFailure { role, bank: start_bank, examined: looked });
                return None;
            }
        };
        let f = canon.w(depth - 1, output, idx);
        mask.keep_weight(canon.arch(), depth - 1, output, idx);
        neurons.push(idx);
        steps.push(f);
        return Some(OutRail { output, sign, start_bank, neurons, steps, examined });
    }

    // Accumulator head: any free neuron works, nothing is kept yet.
    let (head, looked) = claims.scan(start_bank, budget, |_| true);
    examined.push(looked);
    let mut prev = match head {
        Some(idx) => idx,
        None => {
            flags.push(FailureFlag::PathFailure { role, bank: start_bank, examined: looked });
            return None;
        }
    };
    neurons.push(prev);
    let mut product = 1.0;

    for bank in start_bank + 1..=last_bank {
        let terminal = bank == last_bank;
        let (hit, looked) = claims.scan(bank, budget, |idx| {
            let w = canon.w(bank, idx, prev);
            if w <= 0.0 {
                return false;
            }
            if terminal {
                let f = canon.w(depth - 1, output, idx);
                f * sign > 0.0 && in_window(product, w * f.abs())
            } else {
                in_window(product, w)
            }
        });
        examined.push(looked);
        let idx = match hit {
            Some(idx) => idx,
            None => {
                flags.push(FailureFlag::PathFailure { role, bank, examined: looked });
                return None;
            }
        };
        let w = canon.w(bank, idx, prev);
        mask.keep_weight(canon.arch(), bank, idx, prev);
        product *= w;
        neurons.push(idx);
        steps.push(w);
        if terminal {
            let f = canon.w(depth - 1, output, idx);
            mask.keep_weight(canon.arch(), depth - 1, output, idx);
            steps.push(f);
        }
        prev = idx;
    }
    Some(OutRail { output, sign, start_bank, neurons, steps, examined })
}

/// Input rail: carries φ(x_j) (sign +1) or φ(−x_j) (sign −1) through
/// consecutive banks starting at bank 0.
pub(crate) struct InRail {
    pub input: usize,
    pub sign: f64,
    pub neurons: Vec<usize>,
    /// Entry weight (signed) followed by positive step weights.
    pub weights: Vec<f64>,
    /// Carried magnitude after each neuron.
    pub prefix: Vec<f64>,
    pub examined: Vec<usize>,
}

impl InRail {
    pub fn neuron_at(&self, bank: usize) -> usize {
        self.neurons[bank]
    }

    /// Coefficient of φ(sign·x_j) held by the rail neuron of `bank`.
    pub fn carried(&self, bank: usize) -> f64 {
        self.prefix[bank]
    }

    pub fn record(&self) -> PathRecord {
        PathRecord {
            label: format!("in[{}]{}", self.input, if self.sign > 0.0 { "+" } else { "-" }),
            start_bank: 0,
            neurons: self.neurons.clone(),
            weights: self.weights.clone(),
            product: self.weights.iter().map(|w| w.abs()).product(),
            sign: self.sign,
            examined: self.examined.clone(),
        }
    }
}

pub(crate) fn build_in_rail(
    canon: &Canon,
    claims: &mut Claims,
    mask: &mut PruneMask,
    input: usize,
    sign: f64,
    upto_bank: usize,
    budget: usize,
    flags: &mut Vec<FailureFlag>,
) -> Option<InRail> {
    let role = format!("in rail {}{}", input, if sign > 0.0 { '+' } else { '-' });
    let (hit, looked) = claims.scan(0, budget, |idx| {
        let w = canon.w(0, idx, input);
        w * sign > 0.0 && in_window(1.0, w.abs())
    });
    let mut examined = vec![looked];
    let mut prev = match hit {
        Some(idx) => idx,
        None => {
            flags.push(FailureFlag::PathFailure { role, bank: 0, examined: looked });
            return None;
        }
    };
    let entry = canon.w(0, prev, input);
    mask.keep_weight(canon.arch(), 0, prev, input);
    let mut neurons = vec![prev];
    let mut weights = vec![entry];
    let mut prefix = vec![entry.abs()];

    for bank in 1..=upto_bank {
        let carried = *prefix.last().expect("prefix nonempty");
        let (hit, looked) = claims.scan(bank, budget, |idx| {
            let w = canon.w(bank, idx, prev);
            w > 0.0 && in_window(carried, w)
        });
        examined.push(looked);
        let idx = match hit {
            Some(idx) => idx,
            None => {
                flags.push(FailureFlag::PathFailure { role, bank, examined: looked });
                return None;
            }
        };
        let w = canon.w(bank, idx, prev);
        mask.keep_weight(canon.arch(), bank, idx, prev);
        neurons.push(idx);
        weights.push(w);
        prefix.push(carried * w);
        prev = idx;
    }
    Some(InRail { input, sign, neurons, weights, prefix, examined })
}

/// Build the bias carrier: one neuron with bias in [3/4, 1] at bank 0,
/// extended with window-accepted steps so the carried constant sits in
/// [1, 4/3] from bank 1 onwards.
pub(crate) fn build_carrier(
    canon: &Canon,
    claims: &mut Claims,
    mask: &mut PruneMask,
    upto_bank: usize,
    budget: usize,
    flags: &mut Vec<FailureFlag>,
) -> Option<CarrierRecord> {
    let (hit, looked) = claims.scan(0, budget, |idx| {
        let b = canon.b(0, idx);
        (0.75..=1.0).contains(&b)
    });
    let mut prev = match hit {
        Some(idx) => idx,
        None => {
            flags.push(FailureFlag::PathFailure {
                role: "bias carrier".into(),
                bank: 0,
                examined: looked,
            });
            return None;
        }
    };
    let b0 = canon.b(0, prev);
    mask.keep_bias(0, prev);
    let mut neurons = vec![prev];
    let mut weights = vec![b0];
    let mut values = vec![b0];

    for bank in 1..=upto_bank {
        let value = *values.last().expect("values nonempty");
        let (hit, looked) = claims.scan(bank, budget, |idx| {
            let w = canon.w(bank, idx, prev);
            w > 0.0 && in_window(value, w)
        });
        let idx = match hit {
            Some(idx) => idx,
            None => {
                flags.push(FailureFlag::PathFailure {
                    role: "bias carrier".into(),
                    bank,
                    examined: looked,
                });
                return None;
            }
        };
        let w = canon.w(bank, idx, prev);
        mask.keep_weight(canon.arch(), bank, idx, prev);
        neurons.push(idx);
        weights.push(w);
        values.push(value * w);
        prev = idx;
    }
    Some(CarrierRecord { neurons, weights, values })
}

/// Largest |target_i(x) − (λ·ticket_i(x) + offset)| over the grid.
pub(crate) fn sup_grid_error(
    net: &MotherNet,
    mask: &PruneMask,
    lambda: f64,
    offset: f64,
    points: &[Vec<f64>],
    target: &dyn Fn(&[f64]) -> Vec<f64>,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for x in points {
        let got = net.forward_masked(x, mask)?;
        let want = target(x);
        for (g, t) in got.iter().zip(&want) {
            let e = (t - (lambda * g + offset)).abs();
            if e > worst {
                worst = e;
            }
        }
    }
    Ok(worst)
}
