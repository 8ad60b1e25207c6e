//! Pruning a mother net down to a univariate piecewise-linear target
//! `f(x) = Σ a_i φ(x − s_i) + a_N`.
//!
//! Depth dictates the construction. Two layers: each ramp is matched by
//! first-layer neurons whose own kink already sits near the knot. Three
//! layers: pools of φ(x), φ(−x) and constants feed per-knot copy neurons
//! whose subset sums re-create `x − s_i`. Four layers and deeper: one knot
//! unit per ramp at the second bank — extended by bounded-weight rails
//! when there are banks to spare — with the ramp coefficients solved
//! against the output weights of reader neurons at the later banks.

use crate::error::{Result, TicketError};
use crate::grid;
use crate::net::{LayerKind, MotherNet, PruneMask};
use crate::pwl::PwlRep;

use super::construct::{
    build_out_rail, record_param, select, solve_param, sup_grid_error, Canon, Element, OutRail,
    Wire,
};
use super::path::{in_window, Claims, PathRecord};
use super::{ConstantMode, FailureFlag, GridSpec, ParamError, PruneOptions, TicketReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum UnitClass {
    Knot(usize),
    Const,
}

impl UnitClass {
    fn role(self) -> String {
        match self {
            UnitClass::Knot(i) => format!("knot {i} unit"),
            UnitClass::Const => "constant unit".into(),
        }
    }
}

/// Prune `net` so the masked subnetwork, rescaled by λ (plus the reported
/// offset in absorb mode), approximates the piecewise-linear `target`
/// within `eps` in sup norm over its knot span. Every ramp coefficient and
/// knot position gets a per-parameter budget of ε/(2N(Q+M)).
pub fn prune_univariate(
    net: &MotherNet,
    target: &PwlRep,
    eps: f64,
    delta: f64,
    options: &PruneOptions,
) -> Result<TicketReport> {
    net.validate()?;
    let arch = &net.architecture;
    if arch.input_positions != 1
        || arch.input_len() != 1
        || arch.output_len() != 1
        || arch.layer_kinds.iter().any(|&k| k != LayerKind::Dense)
    {
        return Err(TicketError::BadArchitecture(
            "univariate pruning expects a dense 1 → … → 1 mother net".into(),
        ));
    }
    let depth = arch.depth();
    if depth < 2 {
        return Err(TicketError::BadArchitecture("need at least one hidden bank".into()));
    }
    if !(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(TicketError::BadParameter("eps and delta must lie in (0, 1)".into()));
    }
    // The target is affine between knots, so checking every knot checks
    // the whole span.
    if target.knots.iter().any(|&s| target.eval(s) < 0.0) {
        return Err(TicketError::BadParameter(
            "target must be non-negative on its knot span".into(),
        ));
    }

    let (lo, hi) = target.domain();
    let n_knots = target.n();
    let q = lo.abs().max(hi.abs());
    let m_bound =
        1.0 + target.knots.iter().chain(&target.coeffs).fold(0.0f64, |acc, v| acc.max(v.abs()));
    let budget = eps / (2.0 * n_knots as f64 * (q + m_bound));

    let absorb = options.constant_mode == ConstantMode::Absorb;
    let offset = if absorb { target.constant() } else { 0.0 };

    let mut classes: Vec<UnitClass> = target
        .coeffs
        .iter()
        .take(n_knots)
        .enumerate()
        .filter(|&(_, &a)| a != 0.0)
        .map(|(i, _)| UnitClass::Knot(i))
        .collect();
    if !absorb && target.constant() != 0.0 {
        classes.push(UnitClass::Const);
    }

    let canon = Canon::new(net);
    let lambda = canon.lambda();
    let mut mask = PruneMask::all_zero(arch);
    let mut flags = Vec::new();
    let mut param_errors = Vec::new();
    let mut paths = Vec::new();

    if !classes.is_empty() {
        let build = Build {
            canon: &canon,
            target,
            classes: &classes,
            budget,
            options,
            needs_neg: lo < 0.0,
        };
        match depth {
            2 => build.two_layer(&mut mask, &mut param_errors, &mut flags)?,
            3 => build.three_layer(&mut mask, &mut param_errors, &mut flags)?,
            _ => build.deep(&mut mask, &mut param_errors, &mut flags, &mut paths)?,
        }
    }

    let grid_budget =
        if options.grid_budget == 0 { grid::default_budget(1) } else { options.grid_budget };
    let points = grid::eval_grid(&[(lo, hi)], grid_budget);
    let target_fn = |x: &[f64]| vec![target.eval(x[0])];
    let sup_error = sup_grid_error(net, &mask, lambda, offset, &points, &target_fn)?;
    if sup_error > eps {
        flags.push(FailureFlag::ExcessError { measured: sup_error, eps });
    }

    let surviving_fraction = mask.surviving_fraction();
    let success = flags.is_empty();
    Ok(TicketReport {
        mask,
        lambda,
        offset,
        eps,
        delta,
        param_errors,
        paths,
        carrier: None,
        sup_error,
        surviving_fraction,
        flags,
        success,
        grid: GridSpec { domain: vec![(lo, hi)], budget: grid_budget },
    })
}

struct Build<'a> {
    canon: &'a Canon<'a>,
    target: &'a PwlRep,
    classes: &'a [UnitClass],
    budget: f64,
    options: &'a PruneOptions,
    needs_neg: bool,
}

struct Pools {
    pos: Vec<usize>,
    neg: Vec<usize>,
    cons: Vec<usize>,
}

#[derive(Default)]
struct UnitRail {
    /// Rail neurons at banks 2, 3, …
    neurons: Vec<usize>,
    /// Unit coefficient carried past each rail neuron.
    carried: Vec<f64>,
}

impl Build<'_> {
    fn coeff_param(&self, class: UnitClass) -> String {
        match class {
            UnitClass::Knot(i) => format!("a[{i}]"),
            UnitClass::Const => format!("a[{}]", self.target.n()),
        }
    }

    fn coeff_target(&self, class: UnitClass) -> f64 {
        match class {
            UnitClass::Knot(i) => self.target.coeffs[i],
            UnitClass::Const => self.target.constant(),
        }
    }

    fn needs_const_pool(&self) -> bool {
        self.classes.iter().any(|&c| match c {
            UnitClass::Knot(i) => self.target.knots[i] != 0.0,
            UnitClass::Const => true,
        })
    }

    /// One pass over bank 0: φ(x), φ(−x) and constant pools up to the
    /// ground cap each, first unfilled pool wins.
    fn claim_pools(&self, flags: &mut Vec<FailureFlag>) -> Pools {
        let quota = self.options.ground_cap;
        let want_pos = self.classes.iter().any(|c| matches!(c, UnitClass::Knot(_)));
        let want_neg = want_pos && self.needs_neg;
        let want_cons = self.needs_const_pool();
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut cons = Vec::new();
        for nrn in 0..self.canon.width(0) {
            let w = self.canon.w(0, nrn, 0);
            let b = self.canon.b(0, nrn);
            if want_pos && pos.len() < quota && w > 0.0 {
                pos.push(nrn);
            } else if want_neg && neg.len() < quota && w < 0.0 {
                neg.push(nrn);
            } else if want_cons && cons.len() < quota && b > 0.0 {
                cons.push(nrn);
            }
        }
        for (want, got, role) in [
            (want_pos, pos.len(), "x pool"),
            (want_neg, neg.len(), "negated x pool"),
            (want_cons, cons.len(), "constant pool"),
        ] {
            if want && got < quota {
                flags.push(FailureFlag::WidthShortfall {
                    role: role.into(),
                    bank: 0,
                    want: quota,
                    got,
                });
            }
        }
        Pools { pos, neg, cons }
    }

    /// Wire one unit neuron off the pools: slope 1 on φ(x) (mirrored on
    /// φ(−x) when the domain is two-sided) and a constant placing the knot
    /// at s. Returns the achieved coefficient ĉ of φ(x − ŝ); the achieved
    /// knot ŝ = −b̂/ĉ is recorded against s.
    #[allow(clippy::too_many_arguments)]
    fn wire_unit(
        &self,
        unit: usize,
        class: UnitClass,
        label: &str,
        pools: &Pools,
        mask: &mut PruneMask,
        param_errors: &mut Vec<ParamError>,
        flags: &mut Vec<FailureFlag>,
    ) -> Result<f64> {
        let canon = self.canon;
        let UnitClass::Knot(i) = class else {
            let elements = pool_elements(canon, &pools.cons, unit, true);
            return solve_param(
                format!("c[const]{label}"),
                1.0,
                self.budget,
                &elements,
                self.options.max_subset,
                mask,
                canon.arch(),
                param_errors,
                flags,
            );
        };
        let s = self.target.knots[i];
        let elements = pool_elements(canon, &pools.pos, unit, false);
        let slope = solve_param(
            format!("c[{i}]{label}"),
            1.0,
            self.budget,
            &elements,
            self.options.max_subset,
            mask,
            canon.arch(),
            param_errors,
            flags,
        )?;
        if self.needs_neg {
            let elements = pool_elements(canon, &pools.neg, unit, false);
            solve_param(
                format!("c[{i}]{label}:-x"),
                -slope,
                self.budget,
                &elements,
                self.options.max_subset,
                mask,
                canon.arch(),
                param_errors,
                flags,
            )?;
        }
        if slope != 0.0 {
            let knot = if s == 0.0 {
                0.0
            } else {
                let elements = pool_elements(canon, &pools.cons, unit, true);
                let sel = select(
                    &elements,
                    -s * slope,
                    self.budget * slope.abs(),
                    self.options.max_subset,
                    mask,
                    canon.arch(),
                )?;
                -sel.sum / slope
            };
            record_param(param_errors, flags, format!("s[{i}]{label}"), s, knot, self.budget);
        }
        Ok(slope)
    }

    /// Two layers: a first-layer neuron `u φ(v x + b)` with v ∈ [1, 2] is a
    /// ramp with slope u·v and kink at −b/v, so each knot collects the
    /// neurons whose kink already falls within the per-parameter budget
    /// (bias-free neurons serve a knot at the origin exactly).
    fn two_layer(
        &self,
        mask: &mut PruneMask,
        param_errors: &mut Vec<ParamError>,
        flags: &mut Vec<FailureFlag>,
    ) -> Result<()> {
        let canon = self.canon;
        let quota = self.options.ground_cap;
        let mut claims = Claims::new(canon.net());
        for &class in self.classes {
            let UnitClass::Knot(i) = class else {
                let mut members = Vec::new();
                while members.len() < quota {
                    let (hit, _) = claims.scan(0, usize::MAX, |nrn| canon.b(0, nrn) > 0.0);
                    match hit {
                        Some(nrn) => members.push(nrn),
                        None => break,
                    }
                }
                if members.len() < quota {
                    flags.push(FailureFlag::WidthShortfall {
                        role: "constant pool".into(),
                        bank: 0,
                        want: quota,
                        got: members.len(),
                    });
                }
                let elements: Vec<Element> = members
                    .iter()
                    .map(|&nrn| Element {
                        value: canon.w(1, 0, nrn) * canon.b(0, nrn),
                        wires: vec![Wire::B(0, nrn), Wire::W(1, 0, nrn)],
                    })
                    .collect();
                solve_param(
                    self.coeff_param(class),
                    self.coeff_target(class),
                    self.budget,
                    &elements,
                    self.options.max_subset,
                    mask,
                    canon.arch(),
                    param_errors,
                    flags,
                )?;
                continue;
            };
            let s = self.target.knots[i];
            let mut members = Vec::new();
            while members.len() < quota {
                let (hit, _) = claims.scan(0, usize::MAX, |nrn| {
                    let v = canon.w(0, nrn, 0);
                    if !(1.0..=2.0).contains(&v) {
                        return false;
                    }
                    s == 0.0 || (canon.b(0, nrn) + v * s).abs() <= self.budget * v
                });
                match hit {
                    Some(nrn) => members.push(nrn),
                    None => break,
                }
            }
            if members.len() < quota {
                flags.push(FailureFlag::WidthShortfall {
                    role: format!("knot {i} bin"),
                    bank: 0,
                    want: quota,
                    got: members.len(),
                });
            }
            let elements: Vec<Element> = members
                .iter()
                .map(|&nrn| {
                    let v = canon.w(0, nrn, 0);
                    let mut wires = vec![Wire::W(0, nrn, 0), Wire::W(1, 0, nrn)];
                    if s != 0.0 {
                        wires.push(Wire::B(0, nrn));
                    }
                    Element { value: canon.w(1, 0, nrn) * v, wires }
                })
                .collect();
            let a = self.target.coeffs[i];
            let sel =
                select(&elements, a, self.budget, self.options.max_subset, mask, canon.arch())?;
            record_param(param_errors, flags, format!("a[{i}]"), a, sel.sum, self.budget);
            let drift = sel
                .indices
                .iter()
                .map(|&k| {
                    let nrn = members[k];
                    if s == 0.0 {
                        0.0
                    } else {
                        (-canon.b(0, nrn) / canon.w(0, nrn, 0)) - s
                    }
                })
                .fold(0.0f64, |acc, d| if d.abs() > acc.abs() { d } else { acc });
            record_param(param_errors, flags, format!("s[{i}]"), s, s + drift, self.budget);
        }
        Ok(())
    }

    /// Three layers: `copies` second-bank neurons per class, each rebuilt
    /// as φ(x − s_i) from the pools, with the output layer solving every
    /// coefficient over its copies' effective slopes.
    fn three_layer(
        &self,
        mask: &mut PruneMask,
        param_errors: &mut Vec<ParamError>,
        flags: &mut Vec<FailureFlag>,
    ) -> Result<()> {
        let canon = self.canon;
        let mut claims = Claims::new(canon.net());
        let pools = self.claim_pools(flags);
        let copies = self.options.ground_cap.min(canon.width(1) / self.classes.len()).max(1);
        for &class in self.classes {
            let mut elements = Vec::new();
            let mut got = 0;
            for k in 0..copies {
                let (hit, _) = claims.scan(1, usize::MAX, |_| true);
                let unit = match hit {
                    Some(u) => u,
                    None => break,
                };
                got += 1;
                let coeff = self.wire_unit(
                    unit,
                    class,
                    &format!("@{k}"),
                    &pools,
                    mask,
                    param_errors,
                    flags,
                )?;
                if coeff != 0.0 {
                    elements.push(Element {
                        value: canon.w(2, 0, unit) * coeff,
                        wires: vec![Wire::W(2, 0, unit)],
                    });
                }
            }
            if got < copies {
                flags.push(FailureFlag::WidthShortfall {
                    role: class.role(),
                    bank: 1,
                    want: copies,
                    got,
                });
            }
            solve_param(
                self.coeff_param(class),
                self.coeff_target(class),
                self.budget,
                &elements,
                self.options.max_subset,
                mask,
                canon.arch(),
                param_errors,
                flags,
            )?;
        }
        Ok(())
    }

    /// Four layers and deeper: single knot units at bank 1, rails carrying
    /// them across middle banks, reader neurons at banks 2…L−2 whose output
    /// (or rail) weights form each coefficient's ground set. Readers at the
    /// last bank own a private output wire each, so several classes may
    /// share one — their contributions stay exactly additive.
    fn deep(
        &self,
        mask: &mut PruneMask,
        param_errors: &mut Vec<ParamError>,
        flags: &mut Vec<FailureFlag>,
        paths: &mut Vec<PathRecord>,
    ) -> Result<()> {
        let canon = self.canon;
        let depth = canon.depth();
        let last = depth - 2;
        let rail_top = last - 1;
        let mut claims = Claims::new(canon.net());
        let pools = self.claim_pools(flags);

        let mut units: Vec<Option<(usize, f64)>> = Vec::with_capacity(self.classes.len());
        for &class in self.classes {
            let (hit, _) = claims.scan(1, usize::MAX, |_| true);
            let unit = match hit {
                Some(u) => u,
                None => {
                    flags.push(FailureFlag::WidthShortfall {
                        role: class.role(),
                        bank: 1,
                        want: 1,
                        got: 0,
                    });
                    units.push(None);
                    continue;
                }
            };
            let coeff = self.wire_unit(unit, class, "", &pools, mask, param_errors, flags)?;
            units.push(Some((unit, coeff)));
        }

        let mut rails: Vec<UnitRail> = Vec::with_capacity(self.classes.len());
        for (ci, &class) in self.classes.iter().enumerate() {
            let mut rail = UnitRail::default();
            if let Some((unit, coeff)) = units[ci] {
                let mut product = 1.0;
                let mut weights = Vec::new();
                let mut examined = Vec::new();
                let mut prev = unit;
                for bank in 2..=rail_top {
                    let (hit, looked) = claims.scan(bank, self.options.path_budget, |nrn| {
                        let w = canon.w(bank, nrn, prev);
                        w > 0.0 && in_window(product, w)
                    });
                    examined.push(looked);
                    let nrn = match hit {
                        Some(nrn) => nrn,
                        None => {
                            flags.push(FailureFlag::PathFailure {
                                role: class.role(),
                                bank,
                                examined: looked,
                            });
                            return Ok(());
                        }
                    };
                    let w = canon.w(bank, nrn, prev);
                    mask.keep_weight(canon.arch(), bank, nrn, prev);
                    product *= w;
                    rail.neurons.push(nrn);
                    rail.carried.push(coeff * product);
                    weights.push(w);
                    prev = nrn;
                }
                if !rail.neurons.is_empty() {
                    paths.push(PathRecord {
                        label: format!("{} rail", class.role()),
                        start_bank: 2,
                        neurons: rail.neurons.clone(),
                        weights,
                        product,
                        sign: 1.0,
                        examined,
                    });
                }
            }
            rails.push(rail);
        }

        let mut out_rails: Vec<OutRail> = Vec::new();
        if last >= 3 {
            for &sign in &[1.0, -1.0] {
                match build_out_rail(
                    canon,
                    &mut claims,
                    mask,
                    0,
                    sign,
                    3,
                    self.options.path_budget,
                    flags,
                ) {
                    Some(rail) => {
                        paths.push(rail.record());
                        out_rails.push(rail);
                    }
                    None => return Ok(()),
                }
            }
        }

        let coef_banks: Vec<usize> = (2..=last).collect();
        let shares = split_shares(self.options.ground_cap, coef_banks.len());
        for (ci, &class) in self.classes.iter().enumerate() {
            let mut elements = Vec::new();
            if let Some((unit, coeff)) = units[ci] {
                if coeff != 0.0 {
                    for (bi, &bank) in coef_banks.iter().enumerate() {
                        let want = shares[bi];
                        let (src, carried) = if bank == 2 {
                            (unit, coeff)
                        } else {
                            (rails[ci].neurons[bank - 3], rails[ci].carried[bank - 3])
                        };
                        let got = if bank == last {
                            self.readers_at_last(
                                &claims, src, carried, want, &mut elements,
                            )
                        } else {
                            self.readers_mid(
                                &mut claims, bank, src, carried, want, &out_rails, &mut elements,
                            )
                        };
                        if got < want {
                            flags.push(FailureFlag::WidthShortfall {
                                role: class.role(),
                                bank,
                                want,
                                got,
                            });
                        }
                    }
                }
            }
            solve_param(
                self.coeff_param(class),
                self.coeff_target(class),
                self.budget,
                &elements,
                self.options.max_subset,
                mask,
                canon.arch(),
                param_errors,
                flags,
            )?;
        }
        Ok(())
    }

    /// Collect reader elements at the last hidden bank: any unclaimed
    /// neuron with a positive read weight, wired straight to the output.
    fn readers_at_last(
        &self,
        claims: &Claims,
        src: usize,
        carried: f64,
        want: usize,
        elements: &mut Vec<Element>,
    ) -> usize {
        let canon = self.canon;
        let depth = canon.depth();
        let last = depth - 2;
        let mut got = 0;
        for nrn in 0..canon.width(last) {
            if got >= want {
                break;
            }
            if !claims.is_free(last, nrn) {
                continue;
            }
            let g = canon.w(last, nrn, src);
            if g <= 0.0 {
                continue;
            }
            let u = canon.w(depth - 1, 0, nrn);
            if u == 0.0 {
                continue;
            }
            got += 1;
            elements.push(Element {
                value: carried * g * u,
                wires: vec![Wire::W(last, nrn, src), Wire::W(depth - 1, 0, nrn)],
            });
        }
        got
    }

    /// Collect reader elements at a middle bank, claimed exclusively and
    /// delivered through whichever output rail offers a positive weight.
    #[allow(clippy::too_many_arguments)]
    fn readers_mid(
        &self,
        claims: &mut Claims,
        bank: usize,
        src: usize,
        carried: f64,
        want: usize,
        out_rails: &[OutRail],
        elements: &mut Vec<Element>,
    ) -> usize {
        let canon = self.canon;
        let mut got = 0;
        while got < want {
            let (hit, _) = claims.scan(bank, usize::MAX, |nrn| {
                canon.w(bank, nrn, src) > 0.0
                    && out_rails
                        .iter()
                        .any(|r| canon.w(bank + 1, r.neuron_at(bank + 1), nrn) > 0.0)
            });
            let nrn = match hit {
                Some(nrn) => nrn,
                None => break,
            };
            got += 1;
            let g = canon.w(bank, nrn, src);
            let (u, rail) = out_rails
                .iter()
                .map(|r| (canon.w(bank + 1, r.neuron_at(bank + 1), nrn), r))
                .max_by(|a, b| a.0.total_cmp(&b.0))
                .expect("both output rails exist here");
            elements.push(Element {
                value: carried * g * u * rail.delivery(bank + 1),
                wires: vec![
                    Wire::W(bank, nrn, src),
                    Wire::W(bank + 1, rail.neuron_at(bank + 1), nrn),
                ],
            });
        }
        got
    }
}

fn pool_elements(canon: &Canon, pool: &[usize], unit: usize, bias: bool) -> Vec<Element> {
    pool.iter()
        .map(|&p| {
            if bias {
                Element {
                    value: canon.w(1, unit, p) * canon.b(0, p),
                    wires: vec![Wire::W(1, unit, p), Wire::B(0, p)],
                }
            } else {
                Element {
                    value: canon.w(1, unit, p) * canon.w(0, p, 0).abs(),
                    wires: vec![Wire::W(1, unit, p), Wire::W(0, p, 0)],
                }
            }
        })
        .collect()
}

fn split_shares(total: usize, parts: usize) -> Vec<usize> {
    let base = total / parts;
    let rem = total % parts;
    (0..parts).map(|k| base + usize::from(k < rem)).collect()
}
