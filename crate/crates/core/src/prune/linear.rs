//! Pruning a mother net down to a linear map `x ↦ Wx + b` on a box domain.
//!
//! Each basis function of the identity — φ(x_j), φ(−x_j), and the unit
//! constant — gets its own class of hidden neurons. On a two-layer net
//! the class pools wire straight from input to output; on deeper nets the
//! pools are spread across all hidden banks, fed by input rails and
//! drained by per-output accumulation rails, so every contribution still
//! reaches the output with an exactly known signed factor.

use crate::error::{Result, TicketError};
use crate::grid;
use crate::net::{LayerKind, MotherNet, PruneMask};

use super::construct::{
    build_carrier, build_in_rail, build_out_rail, solve_param, sup_grid_error, Canon, Element,
    InRail, OutRail, Wire,
};
use super::path::{Claims, PathRecord};
use super::{
    CarrierRecord, FailureFlag, GridSpec, ParamError, PruneOptions, TicketReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ClassId {
    Pos(usize),
    Neg(usize),
    Bias,
}

impl ClassId {
    fn role(self) -> String {
        match self {
            ClassId::Pos(j) => format!("pos input {j}"),
            ClassId::Neg(j) => format!("neg input {j}"),
            ClassId::Bias => "bias".into(),
        }
    }

    fn param(self, output: usize) -> String {
        match self {
            ClassId::Pos(j) => format!("w[{output}][{j}]+"),
            ClassId::Neg(j) => format!("w[{output}][{j}]-"),
            ClassId::Bias => format!("b[{output}]"),
        }
    }

    fn target(self, w: &[Vec<f64>], b: &[f64], output: usize) -> f64 {
        match self {
            ClassId::Pos(j) => w[output][j],
            ClassId::Neg(j) => -w[output][j],
            ClassId::Bias => b[output],
        }
    }
}

/// Prune `net` so the masked subnetwork, rescaled by λ, approximates
/// `x ↦ Wx + b` within `eps` in sup norm over the domain. `q_bound` must
/// dominate `sup‖x‖₁ + 1`; every matrix and bias entry is then matched to
/// within `eps / q_bound` by its own subset sum.
pub fn prune_linear(
    net: &MotherNet,
    w: &[Vec<f64>],
    b: &[f64],
    eps: f64,
    delta: f64,
    q_bound: f64,
    options: &PruneOptions,
) -> Result<TicketReport> {
    net.validate()?;
    let arch = &net.architecture;
    if arch.input_positions != 1 || arch.layer_kinds.iter().any(|&k| k != LayerKind::Dense) {
        return Err(TicketError::BadArchitecture(
            "linear pruning expects a plain dense mother net".into(),
        ));
    }
    let depth = arch.depth();
    if depth < 2 {
        return Err(TicketError::BadArchitecture("need at least one hidden bank".into()));
    }
    let d = arch.input_len();
    let m = arch.output_len();
    if w.len() != m || w.iter().any(|row| row.len() != d) || b.len() != m {
        return Err(TicketError::ShapeMismatch(format!(
            "target is {}x{} with {} biases against a {d}→{m} net",
            w.len(),
            w.first().map_or(0, Vec::len),
            b.len(),
        )));
    }
    if !(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(TicketError::BadParameter("eps and delta must lie in (0, 1)".into()));
    }
    if !(q_bound >= 1.0) {
        return Err(TicketError::BadParameter("q_bound covers sup‖x‖₁ + 1, so at least 1".into()));
    }
    let domain: Vec<(f64, f64)> = if options.domain.is_empty() {
        vec![(0.0, 1.0); d]
    } else {
        if options.domain.len() != d {
            return Err(TicketError::BadParameter(format!(
                "domain has {} ranges for {d} inputs",
                options.domain.len(),
            )));
        }
        if options.domain.iter().any(|&(lo, hi)| !(lo <= hi)) {
            return Err(TicketError::BadParameter("domain ranges must satisfy lo <= hi".into()));
        }
        options.domain.clone()
    };
    let grid_budget =
        if options.grid_budget == 0 { grid::default_budget(d) } else { options.grid_budget };

    let canon = Canon::new(net);
    let lambda = canon.lambda();
    let budget = eps / q_bound;

    // φ(x_j) is only exercised where x_j can be positive, φ(−x_j) where it
    // can be negative; classes nobody needs are not built at all.
    let mut has_pos = vec![false; d];
    let mut has_neg = vec![false; d];
    for row in w {
        for (j, &wij) in row.iter().enumerate() {
            if wij != 0.0 {
                has_pos[j] |= domain[j].1 > 0.0;
                has_neg[j] |= domain[j].0 < 0.0;
            }
        }
    }
    let mut classes = Vec::new();
    for (j, &p) in has_pos.iter().enumerate() {
        if p {
            classes.push(ClassId::Pos(j));
        }
    }
    for (j, &n) in has_neg.iter().enumerate() {
        if n {
            classes.push(ClassId::Neg(j));
        }
    }
    if b.iter().any(|&bi| bi != 0.0) {
        classes.push(ClassId::Bias);
    }

    let mut mask = PruneMask::all_zero(arch);
    let mut flags = Vec::new();
    let mut param_errors = Vec::new();
    let mut paths = Vec::new();
    let mut carrier = None;

    if !classes.is_empty() {
        if depth == 2 {
            shallow(&canon, &classes, w, b, budget, options, &mut mask, &mut param_errors, &mut flags)?;
        } else {
            deep(
                &canon,
                &classes,
                w,
                b,
                budget,
                options,
                &mut mask,
                &mut param_errors,
                &mut flags,
                &mut paths,
                &mut carrier,
            )?;
        }
    }

    // Degenerate axes are pinned at their floor so the grid budget is spent
    // on coordinates that actually vary.
    let live: Vec<usize> =
        (0..domain.len()).filter(|&j| domain[j].1 > domain[j].0).collect();
    let points: Vec<Vec<f64>> = if live.len() == domain.len() {
        grid::eval_grid(&domain, grid_budget)
    } else if live.is_empty() {
        vec![domain.iter().map(|&(lo, _)| lo).collect()]
    } else {
        let live_box: Vec<(f64, f64)> = live.iter().map(|&j| domain[j]).collect();
        grid::eval_grid(&live_box, grid_budget)
            .into_iter()
            .map(|p| {
                let mut x: Vec<f64> = domain.iter().map(|&(lo, _)| lo).collect();
                for (&j, v) in live.iter().zip(p) {
                    x[j] = v;
                }
                x
            })
            .collect()
    };
    let target_fn = |x: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|i| w[i].iter().zip(x).map(|(wij, xj)| wij * xj).sum::<f64>() + b[i])
            .collect()
    };
    let sup_error = sup_grid_error(net, &mask, lambda, 0.0, &points, &target_fn)?;
    if sup_error > eps {
        flags.push(FailureFlag::ExcessError { measured: sup_error, eps });
    }

    let surviving_fraction = mask.surviving_fraction();
    let success = flags.is_empty();
    Ok(TicketReport {
        mask,
        lambda,
        offset: 0.0,
        eps,
        delta,
        param_errors,
        paths,
        carrier,
        sup_error,
        surviving_fraction,
        flags,
        success,
        grid: GridSpec { domain, budget: grid_budget },
    })
}

/// Two-layer case: classify first-bank neurons straight off their input
/// weights and biases, then per output and class solve a subset sum over
/// `u · base` with both wires of each selected neuron kept.
#[allow(clippy::too_many_arguments)]
fn shallow(
    canon: &Canon,
    classes: &[ClassId],
    w: &[Vec<f64>],
    b: &[f64],
    budget: f64,
    options: &PruneOptions,
    mask: &mut PruneMask,
    param_errors: &mut Vec<ParamError>,
    flags: &mut Vec<FailureFlag>,
) -> Result<()> {
    let quota = options.ground_cap;
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); classes.len()];
    for n in 0..canon.width(0) {
        for (ci, &class) in classes.iter().enumerate() {
            if pools[ci].len() >= quota {
                continue;
            }
            let eligible = match class {
                ClassId::Pos(j) => canon.w(0, n, j) > 0.0,
                ClassId::Neg(j) => canon.w(0, n, j) < 0.0,
                ClassId::Bias => canon.b(0, n) > 0.0,
            };
            if eligible {
                pools[ci].push(n);
                break;
            }
        }
    }
    for (ci, &class) in classes.iter().enumerate() {
        if pools[ci].len() < quota {
            flags.push(FailureFlag::WidthShortfall {
                role: class.role(),
                bank: 0,
                want: quota,
                got: pools[ci].len(),
            });
        }
    }

    for i in 0..w.len() {
        for (ci, &class) in classes.iter().enumerate() {
            let target = class.target(w, b, i);
            if target == 0.0 {
                continue;
            }
            let elements: Vec<Element> = pools[ci]
                .iter()
                .map(|&n| {
                    let (base, feed) = match class {
                        ClassId::Pos(j) | ClassId::Neg(j) => {
                            (canon.w(0, n, j).abs(), Wire::W(0, n, j))
                        }
                        ClassId::Bias => (canon.b(0, n), Wire::B(0, n)),
                    };
                    let u = canon.w(1, i, n);
                    Element { value: u * base, wires: vec![feed, Wire::W(1, i, n)] }
                })
                .collect();
            solve_param(
                class.param(i),
                target,
                budget,
                &elements,
                options.max_subset,
                mask,
                canon.arch(),
                param_errors,
                flags,
            )?;
        }
    }
    Ok(())
}

/// Deep case: input rails and a bias carrier make the basis functions
/// available at every bank, per-output accumulation rails collect
/// contributions from banks below the last one, and each class's pool is
/// split evenly across all hidden banks (remainders to the earliest).
/// A rail that cannot be completed aborts the construction; the flag it
/// recorded stands.
#[allow(clippy::too_many_arguments)]
fn deep(
    canon: &Canon,
    classes: &[ClassId],
    w: &[Vec<f64>],
    b: &[f64],
    budget: f64,
    options: &PruneOptions,
    mask: &mut PruneMask,
    param_errors: &mut Vec<ParamError>,
    flags: &mut Vec<FailureFlag>,
    paths: &mut Vec<PathRecord>,
    carrier_out: &mut Option<CarrierRecord>,
) -> Result<()> {
    let depth = canon.depth();
    let banks = depth - 1;
    let last_bank = banks - 1;
    let rail_top = depth - 3;
    let d = w.first().map_or(0, Vec::len);
    let m = w.len();
    let mut claims = Claims::new(canon.net());

    let mut pos_rails: Vec<Option<InRail>> = (0..d).map(|_| None).collect();
    let mut neg_rails: Vec<Option<InRail>> = (0..d).map(|_| None).collect();
    for &class in classes {
        match class {
            ClassId::Pos(j) => {
                match build_in_rail(canon, &mut claims, mask, j, 1.0, rail_top, options.path_budget, flags)
                {
                    Some(rail) => {
                        paths.push(rail.record());
                        pos_rails[j] = Some(rail);
                    }
                    None => return Ok(()),
                }
            }
            ClassId::Neg(j) => {
                match build_in_rail(canon, &mut claims, mask, j, -1.0, rail_top, options.path_budget, flags)
                {
                    Some(rail) => {
                        paths.push(rail.record());
                        neg_rails[j] = Some(rail);
                    }
                    None => return Ok(()),
                }
            }
            ClassId::Bias => {
                match build_carrier(canon, &mut claims, mask, rail_top, options.path_budget, flags) {
                    Some(c) => *carrier_out = Some(c),
                    None => return Ok(()),
                }
            }
        }
    }

    let mut out_rails: Vec<Vec<OutRail>> = Vec::with_capacity(m);
    for i in 0..m {
        let mut pair = Vec::with_capacity(2);
        for &sign in &[1.0, -1.0] {
            match build_out_rail(canon, &mut claims, mask, i, sign, 1, options.path_budget, flags) {
                Some(rail) => {
                    paths.push(rail.record());
                    pair.push(rail);
                }
                None => return Ok(()),
            }
        }
        out_rails.push(pair);
    }

    let shares = split_shares(options.ground_cap, banks);
    for &class in classes {
        let mut elements: Vec<Vec<Element>> = (0..m).map(|_| Vec::new()).collect();
        for (bank, &want) in shares.iter().enumerate() {
            let mut got = 0;
            while got < want {
                // Source feed one bank below (or the input/bias at bank 0).
                let source: Option<(usize, f64)> = if bank == 0 {
                    None
                } else {
                    let (src, carried) = match class {
                        ClassId::Pos(j) => {
                            let rail = pos_rails[j].as_ref().expect("rail built above");
                            (rail.neuron_at(bank - 1), rail.carried(bank - 1))
                        }
                        ClassId::Neg(j) => {
                            let rail = neg_rails[j].as_ref().expect("rail built above");
                            (rail.neuron_at(bank - 1), rail.carried(bank - 1))
                        }
                        ClassId::Bias => {
                            let c = carrier_out.as_ref().expect("carrier built above");
                            (c.neurons[bank - 1], c.value_at(bank - 1))
                        }
                    };
                    Some((src, carried))
                };
                let (hit, _) = claims.scan(bank, usize::MAX, |n| {
                    let fed = match (bank, class) {
                        (0, ClassId::Pos(j)) => canon.w(0, n, j) > 0.0,
                        (0, ClassId::Neg(j)) => canon.w(0, n, j) < 0.0,
                        (0, ClassId::Bias) => canon.b(0, n) > 0.0,
                        _ => {
                            let (src, _) = source.expect("deeper banks have a source");
                            canon.w(bank, n, src) > 0.0
                        }
                    };
                    if !fed {
                        return false;
                    }
                    if bank == last_bank {
                        return true;
                    }
                    out_rails.iter().any(|pair| {
                        pair.iter()
                            .any(|rail| canon.w(bank + 1, rail.neuron_at(bank + 1), n) > 0.0)
                    })
                });
                let n = match hit {
                    Some(n) => n,
                    None => break,
                };
                got += 1;

                let (base, feed) = match (bank, class) {
                    (0, ClassId::Pos(j)) | (0, ClassId::Neg(j)) => {
                        (canon.w(0, n, j).abs(), Wire::W(0, n, j))
                    }
                    (0, ClassId::Bias) => (canon.b(0, n), Wire::B(0, n)),
                    _ => {
                        let (src, carried) = source.expect("deeper banks have a source");
                        (canon.w(bank, n, src) * carried, Wire::W(bank, n, src))
                    }
                };
                for (i, pair) in out_rails.iter().enumerate() {
                    if bank == last_bank {
                        let u = canon.w(depth - 1, i, n);
                        if u == 0.0 {
                            continue;
                        }
                        elements[i].push(Element {
                            value: base * u,
                            wires: vec![feed, Wire::W(depth - 1, i, n)],
                        });
                    } else {
                        let best = pair
                            .iter()
                            .map(|rail| {
                                let row = rail.neuron_at(bank + 1);
                                (canon.w(bank + 1, row, n), row, rail)
                            })
                            .max_by(|a, b| a.0.total_cmp(&b.0))
                            .expect("two rails per output");
                        let (u, row, rail) = best;
                        if u <= 0.0 {
                            continue;
                        }
                        elements[i].push(Element {
                            value: base * u * rail.delivery(bank + 1),
                            wires: vec![feed, Wire::W(bank + 1, row, n)],
                        });
                    }
                }
            }
            if got < want {
                flags.push(FailureFlag::WidthShortfall {
                    role: class.role(),
                    bank,
                    want,
                    got,
                });
            }
        }

        for i in 0..m {
            let target = class.target(w, b, i);
            if target == 0.0 {
                continue;
            }
            solve_param(
                class.param(i),
                target,
                budget,
                &elements[i],
                options.max_subset,
                mask,
                canon.arch(),
                param_errors,
                flags,
            )?;
        }
    }
    Ok(())
}

/// Even split with remainders handed to the earliest parts.
fn split_shares(total: usize, parts: usize) -> Vec<usize> {
    let base = total / parts;
    let rem = total % parts;
    (0..parts).map(|k| base + usize::from(k < rem)).collect()
}

#[cfg(test)]
mod tests {
    use super::super::PruneOptions;
    use super::*;
    use crate::init::{sample, InitFamily, InitSpec};
    use crate::net::Architecture;

    fn uniform_net(widths: Vec<usize>, seed: u64) -> MotherNet {
        let arch = Architecture::dense(widths);
        sample(&arch, &InitSpec::canonical(InitFamily::Uniform, arch.depth(), seed)).unwrap()
    }

    fn run_shallow(seed: u64) -> TicketReport {
        let net = uniform_net(vec![2, 300, 1], seed);
        let w = vec![vec![1.5, -0.7]];
        let b = vec![0.3];
        prune_linear(&net, &w, &b, 0.01, 0.1, 3.2, &PruneOptions::default()).unwrap()
    }

    fn run_deep(seed: u64) -> TicketReport {
        let net = uniform_net(vec![2, 75, 75, 75, 75, 1], seed);
        let w = vec![vec![1.5, -0.7]];
        let b = vec![0.3];
        prune_linear(&net, &w, &b, 0.01, 0.1, 3.2, &PruneOptions::default()).unwrap()
    }

    #[test]
    fn zero_target_keeps_nothing() {
        let net = uniform_net(vec![2, 40, 1], 7);
        let report =
            prune_linear(&net, &[vec![0.0, 0.0]], &[0.0], 0.05, 0.1, 3.0, &PruneOptions::default())
                .unwrap();
        assert_eq!(report.mask.kept_params(), 0);
        assert_eq!(report.sup_error, 0.0);
        assert!(report.success);
    }

    #[test]
    fn shallow_recovers_plane() {
        let mut hits = 0;
        for seed in 0..20 {
            let report = run_shallow(seed);
            if report.success && report.sup_error <= 0.01 {
                hits += 1;
            }
        }
        assert!(hits >= 18, "only {hits}/20 shallow runs hit eps");
    }

    #[test]
    fn deep_width_split_matches_shallow() {
        let mut deep_ok = 0;
        for seed in 0..20 {
            let report = run_deep(seed);
            assert!(
                report.sup_error <= 0.01 || !report.success,
                "seed {seed}: sup error {} without a flag",
                report.sup_error
            );
            if report.success {
                deep_ok += 1;
                assert!(report.sup_error <= 0.01);
            }
        }
        assert!(deep_ok >= 8, "only {deep_ok}/20 deep runs succeeded");
    }

    #[test]
    fn deep_paths_stay_in_product_range() {
        for seed in [3, 11, 42] {
            let report = run_deep(seed);
            for path in &report.paths {
                assert!(
                    path.product >= 1.0 && path.product <= 4.0 / 3.0 + 1e-12,
                    "seed {seed}: {} product {}",
                    path.label,
                    path.product
                );
            }
        }
    }

    #[test]
    fn negative_domain_uses_negative_basis() {
        let net = uniform_net(vec![1, 200, 1], 5);
        let options = PruneOptions { domain: vec![(-1.0, 0.0)], ..PruneOptions::default() };
        let report =
            prune_linear(&net, &[vec![1.0]], &[0.0], 0.02, 0.1, 2.0, &options).unwrap();
        assert!(report.success, "flags: {:?}", report.flags);
        assert!(report.sup_error <= 0.02);
        assert!(report.param_errors.iter().all(|p| p.param.ends_with('-')));
    }

    #[test]
    fn sup_error_recomputes_bitwise() {
        let report = run_shallow(13);
        let net = uniform_net(vec![2, 300, 1], 13);
        let points = grid::eval_grid(&report.grid.domain, report.grid.budget);
        let mut worst = 0.0f64;
        for x in &points {
            let y = net.forward_masked(x, &report.mask).unwrap();
            let want = 1.5 * x[0] - 0.7 * x[1] + 0.3;
            let e = (want - report.lambda * y[0]).abs();
            if e > worst {
                worst = e;
            }
        }
        assert_eq!(worst.to_bits(), report.sup_error.to_bits());
    }

    #[test]
    fn rescaled_net_yields_same_mask() {
        let net = uniform_net(vec![2, 300, 1], 21);
        let scaled = net.scale_transform(&[1.5, 0.5]).unwrap();
        let w = vec![vec![1.5, -0.7]];
        let b = vec![0.3];
        let base = prune_linear(&net, &w, &b, 0.01, 0.1, 3.2, &PruneOptions::default()).unwrap();
        let other =
            prune_linear(&scaled, &w, &b, 0.01, 0.1, 3.2, &PruneOptions::default()).unwrap();
        assert_eq!(base.mask, other.mask);
        assert!((base.lambda - 1.0).abs() < 1e-12);
        assert!((other.lambda - 4.0 / 3.0).abs() < 1e-12);
        assert!(other.sup_error <= 0.0101, "rescaled sup error {}", other.sup_error);
    }

    #[test]
    fn narrow_net_reports_shortfall() {
        let net = uniform_net(vec![2, 20, 1], 3);
        let report = prune_linear(
            &net,
            &[vec![1.5, -0.7]],
            &[0.3],
            0.01,
            0.1,
            3.2,
            &PruneOptions::default(),
        )
        .unwrap();
        assert!(!report.success);
        assert!(report
            .flags
            .iter()
            .any(|f| matches!(f, FailureFlag::WidthShortfall { .. })));
    }

    #[test]
    fn rejects_shape_and_parameter_mistakes() {
        let net = uniform_net(vec![2, 30, 1], 1);
        let opts = PruneOptions::default();
        assert!(prune_linear(&net, &[vec![1.0]], &[0.0], 0.1, 0.1, 2.0, &opts).is_err());
        assert!(
            prune_linear(&net, &[vec![1.0, 2.0]], &[0.0, 0.0], 0.1, 0.1, 2.0, &opts).is_err()
        );
        assert!(prune_linear(&net, &[vec![1.0, 2.0]], &[0.0], 0.0, 0.1, 2.0, &opts).is_err());
        assert!(prune_linear(&net, &[vec![1.0, 2.0]], &[0.0], 0.1, 1.0, 2.0, &opts).is_err());
        assert!(prune_linear(&net, &[vec![1.0, 2.0]], &[0.0], 0.1, 0.1, 0.5, &opts).is_err());
    }
}
