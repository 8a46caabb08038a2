//! Invariant inference for non-monotonic loops: linear templates, Farkas
//! elimination of the universally quantified program variables, and a greedy
//! weighted Max-SMT search over the template parameters.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use crate::constraint::{Atom, Constraint};
use crate::its::Transition;
use crate::monotonicity::{is_conditional_invariant, partition_guard, GuardPartition};
use crate::poly::{Int, Poly, Subst, Valuation, Var, PARAM_PREFIX};
use crate::processors::strengthen;
use crate::smt::{check_valid_implication, Formula, SmtError, SmtSolver, SolverVerdict};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("not linear in the program variables")]
pub struct NotLinear;

/// Hands out parameter and multiplier names that cannot clash with program
/// variables.
#[derive(Debug, Default)]
pub struct Namer {
    next: u32,
}

impl Namer {
    pub fn new() -> Self {
        Namer::default()
    }

    fn bump(&mut self) -> u32 {
        self.next += 1;
        self.next
    }

    pub fn multiplier(&mut self) -> Var {
        let n = self.bump();
        Var::new(format!("{}l{}", PARAM_PREFIX, n))
    }

    fn template_id(&mut self) -> u32 {
        self.bump()
    }
}

/// `sum c_x * x >= c` over `vars`; `poly` is `sum c_x * x - c`.
#[derive(Clone, Debug)]
pub struct Template {
    pub poly: Poly,
    pub coeffs: BTreeMap<Var, Var>,
    pub constant: Var,
}

impl Template {
    pub fn new(namer: &mut Namer, vars: &BTreeSet<Var>) -> Template {
        let id = namer.template_id();
        let coeffs: BTreeMap<Var, Var> = vars
            .iter()
            .map(|x| (x.clone(), Var::new(format!("{}c{}_{}", PARAM_PREFIX, id, x.name()))))
            .collect();
        let constant = Var::new(format!("{}c{}", PARAM_PREFIX, id));
        let mut poly = -Poly::var(&constant);
        for (x, c) in &coeffs {
            poly = &poly + &(&Poly::var(c) * &Poly::var(x));
        }
        Template { poly, coeffs, constant }
    }

    pub fn params(&self) -> impl Iterator<Item = &Var> {
        self.coeffs.values().chain(core::iter::once(&self.constant))
    }

    /// The concrete inequation for a parameter model (missing parameters are 0).
    pub fn instantiate(&self, model: &Valuation) -> Atom {
        let s: Subst = self
            .params()
            .map(|p| (p.clone(), Poly::from_int(model.get(p).cloned().unwrap_or_default())))
            .collect();
        Atom::ge0(self.poly.subst(&s))
    }
}

#[derive(Clone, Debug)]
pub struct SoftRequirement {
    pub formula: Formula,
    pub weight: u32,
    pub label: &'static str,
}

#[derive(Clone, Debug)]
pub struct Requirements {
    pub hard: Formula,
    pub softs: Vec<SoftRequirement>,
    pub templates: Vec<Template>,
}

impl Requirements {
    pub fn params(&self) -> Vec<Var> {
        self.templates.iter().flat_map(|t| t.params().cloned()).collect()
    }
}

/// Smallest superset of `vars(rho)` closed under overlapping guard atoms and
/// update images.
pub fn relevant_vars(alpha: &Transition, rho: &Atom) -> BTreeSet<Var> {
    let mut out = rho.vars();
    loop {
        let before = out.len();
        for a in &alpha.guard {
            let vs = a.vars();
            if vs.iter().any(|v| out.contains(v)) {
                out.extend(vs);
            }
        }
        let current: Vec<Var> = out.iter().cloned().collect();
        for x in current {
            if alpha.is_arg(&x) {
                out.extend(alpha.update.get(&x).vars());
            }
        }
        if out.len() == before {
            return out;
        }
    }
}

fn program_vars(ps: &[&Poly]) -> BTreeSet<Var> {
    let mut out = BTreeSet::new();
    for p in ps {
        p.collect_vars(&mut out);
    }
    out.retain(|v| !v.is_param());
    out
}

/// Sufficient condition for `forall uvars. /\ premise_i >= 0 => conclusion >= 0`
/// as a constraint over parameters and fresh multipliers. Either a
/// nonnegative combination of the premises matches `lambda0 * conclusion`
/// up to a nonnegative constant slack, or one witnesses that the premises are
/// infeasible. Variables without the parameter prefix are universally quantified.
pub fn farkas_encode(namer: &mut Namer, premise: &[Poly], conclusion: &Poly) -> Result<Formula, NotLinear> {
    if premise.iter().any(|p| p == conclusion) {
        return Ok(Formula::True);
    }
    let mut all: Vec<&Poly> = premise.iter().collect();
    all.push(conclusion);
    let uvars = program_vars(&all);
    let is_u = |v: &Var| uvars.contains(v);
    let forms = premise
        .iter()
        .map(|p| p.linear_form(is_u).ok_or(NotLinear))
        .collect::<Result<Vec<_>, _>>()?;
    let (c_coeffs, c_const) = conclusion.linear_form(is_u).ok_or(NotLinear)?;

    if premise.is_empty() {
        let mut cons: Vec<Formula> = c_coeffs.values().map(|c| Formula::eq(c.clone())).collect();
        cons.push(Formula::ge(c_const));
        return Ok(Formula::and(cons));
    }

    // implication branch
    let l0 = Poly::var(&namer.multiplier());
    let lambdas: Vec<Poly> = forms.iter().map(|_| Poly::var(&namer.multiplier())).collect();
    let mut cons = alloc::vec![Formula::ge(&l0 - &Poly::one())];
    cons.extend(lambdas.iter().map(|l| Formula::ge(l.clone())));
    for x in &uvars {
        let mut lhs = Poly::zero();
        for (l, (coeffs, _)) in lambdas.iter().zip(&forms) {
            if let Some(a) = coeffs.get(x) {
                lhs = &lhs + &(l * a);
            }
        }
        let rhs = c_coeffs.get(x).map(|c| &l0 * c).unwrap_or_default();
        cons.push(Formula::eq(&lhs - &rhs));
    }
    let mut consts = &l0 * &c_const;
    for (l, (_, b)) in lambdas.iter().zip(&forms) {
        consts = &consts - &(l * b);
    }
    cons.push(Formula::ge(consts));
    let implication = Formula::and(cons);

    // infeasible-premise branch
    let mus: Vec<Poly> = forms.iter().map(|_| Poly::var(&namer.multiplier())).collect();
    let mut cons: Vec<Formula> = mus.iter().map(|m| Formula::ge(m.clone())).collect();
    for x in &uvars {
        let mut lhs = Poly::zero();
        for (m, (coeffs, _)) in mus.iter().zip(&forms) {
            if let Some(a) = coeffs.get(x) {
                lhs = &lhs + &(m * a);
            }
        }
        cons.push(Formula::eq(lhs));
    }
    let mut consts = -Poly::one();
    for (m, (_, b)) in mus.iter().zip(&forms) {
        consts = &consts - &(m * b);
    }
    cons.push(Formula::ge(consts));
    let infeasible = Formula::and(cons);

    Ok(Formula::or(alloc::vec![implication, infeasible]))
}

fn polys(c: &Constraint) -> Vec<Poly> {
    c.iter().map(|a| a.poly().clone()).collect()
}

/// Non-loop transitions entering the loop's source.
pub fn predecessors<'a>(alpha: &Transition, ctx: &'a [Transition]) -> Vec<&'a Transition> {
    ctx.iter()
        .filter(|b| b.target == alpha.source && b.source != b.target && b.id != alpha.id)
        .collect()
}

fn is_linear(t: &Transition) -> bool {
    let prog = |v: &Var| !v.is_param();
    t.guard.iter().all(|a| a.is_linear_in(prog))
        && t.args.iter().all(|x| t.update.get(x).is_linear_in(prog))
}

/// `alpha` with temps renamed apart from `beta`, so `update_beta(guard(alpha))`
/// does not capture.
fn apart(alpha: &Transition, beta: &Transition) -> Transition {
    alpha.rename_apart(&beta.vars()).0
}

/// Hard and soft requirements for one round of inference.
pub fn build_requirements(
    namer: &mut Namer,
    alpha: &Transition,
    part: &GuardPartition,
    ctx: &[Transition],
) -> Result<Requirements, NotLinear> {
    if !is_linear(alpha) {
        return Err(NotLinear);
    }
    let nm: Vec<Atom> = part.phi_nm.iter().cloned().collect();
    let m = nm.len() as u32;
    let upd = alpha.update.entries();
    let templates: Vec<Template> = nm
        .iter()
        .map(|rho| {
            let vs: BTreeSet<Var> = relevant_vars(alpha, rho).into_iter().filter(|v| alpha.is_arg(v)).collect();
            Template::new(namer, &vs)
        })
        .collect();
    let taus: Vec<Poly> = templates.iter().map(|t| t.poly.clone()).collect();
    let guard = polys(&alpha.guard);
    let si = polys(&part.phi_si);
    let upd_md = polys(&part.phi_md.subst(upd));

    let with = |base: &[Poly], extra: &[Poly]| -> Vec<Poly> { base.iter().chain(extra).cloned().collect() };

    // (tau-si)
    let si_taus = with(&si, &taus);
    let mut tau_si = Vec::new();
    for t in &taus {
        tau_si.push(farkas_encode(namer, &si_taus, &t.subst(upd))?);
    }
    let tau_si = Formula::and(tau_si);

    let guard_taus = with(&guard, &taus);
    let ci_or_md = |namer: &mut Namer, rho: &Atom| -> Result<Formula, NotLinear> {
        let ci = farkas_encode(namer, &guard_taus, &rho.poly().subst(upd))?;
        let mut md_premise = with(&si_taus, &upd_md);
        md_premise.push(rho.poly().subst(upd));
        let md = farkas_encode(namer, &md_premise, rho.poly())?;
        Ok(Formula::or(alloc::vec![ci, md]))
    };

    // (some-ci) or (some-md)
    let mut some = Vec::new();
    for rho in &nm {
        some.push(ci_or_md(namer, rho)?);
    }
    let some = Formula::or(some);

    // (sat)
    let preds = predecessors(alpha, ctx);
    let sat = if preds.is_empty() {
        Formula::True
    } else {
        Formula::or(
            preds
                .iter()
                .map(|b| {
                    let a = apart(alpha, b);
                    let bu = b.update.entries();
                    let mut parts = alloc::vec![Formula::constraint(&b.guard), Formula::constraint(&a.guard.subst(bu))];
                    parts.extend(taus.iter().map(|t| Formula::ge(t.subst(bu))));
                    Formula::and(parts)
                })
                .collect(),
        )
    };
    let hard = Formula::and(alloc::vec![tau_si, some, sat]);

    let mut softs = Vec::new();
    // (tau_rho-li)
    for t in &taus {
        let mut per_pred = Vec::new();
        for b in &preds {
            let a = apart(alpha, b);
            let bu = b.update.entries();
            let premise = with(&polys(&b.guard), &polys(&a.guard.subst(bu)));
            // a nonlinear predecessor simply cannot support this requirement
            per_pred.push(farkas_encode(namer, &premise, &t.subst(bu)).unwrap_or(Formula::False));
        }
        softs.push(SoftRequirement { formula: Formula::and(per_pred), weight: m + 2, label: "li" });
    }
    // (rho-ci) or (rho-md)
    for rho in &nm {
        softs.push(SoftRequirement { formula: ci_or_md(namer, rho)?, weight: 1, label: "ci|md" });
    }
    // (nt)
    if part.phi_md.is_empty() {
        let mut all = Vec::new();
        for rho in &nm {
            all.push(farkas_encode(namer, &guard_taus, &rho.poly().subst(upd))?);
        }
        softs.push(SoftRequirement { formula: Formula::and(all), weight: 1, label: "nt" });
    }
    debug_assert!(softs
        .iter()
        .filter(|s| s.label == "li")
        .all(|li| li.weight > softs.iter().filter(|s| s.label != "li").map(|s| s.weight).sum::<u32>()));
    Ok(Requirements { hard, softs, templates })
}

fn bounded(params: &[Var], b: i64) -> Formula {
    Formula::and(
        params
            .iter()
            .flat_map(|p| {
                let v = Poly::var(p);
                [Formula::ge(&Poly::int(b) - &v), Formula::ge(&Poly::int(b) + &v)]
            })
            .collect(),
    )
}

/// Greedy Max-SMT: assert `hard`, then keep every soft requirement (heaviest
/// first, stable otherwise) that stays satisfiable. With `minimize`, prefers
/// small parameter values among the models found. The solver's assertion
/// stack is restored on return.
pub fn greedy_max_smt<S: SmtSolver + ?Sized>(
    s: &mut S,
    hard: &Formula,
    softs: &[SoftRequirement],
    params: &[Var],
    constants: &[Var],
    minimize: bool,
) -> Result<Option<Valuation>, SmtError> {
    let mut kept = 0;
    s.push()?;
    let result = greedy_inner(s, hard, softs, params, constants, minimize, &mut kept);
    for _ in 0..=kept {
        s.pop()?;
    }
    result
}

fn greedy_inner<S: SmtSolver + ?Sized>(
    s: &mut S,
    hard: &Formula,
    softs: &[SoftRequirement],
    params: &[Var],
    constants: &[Var],
    minimize: bool,
    kept: &mut usize,
) -> Result<Option<Valuation>, SmtError> {
    s.assert(hard)?;
    let mut model = match s.check()? {
        SolverVerdict::Sat(m) => m,
        _ => return Ok(None),
    };
    let mut order: Vec<&SoftRequirement> = softs.iter().collect();
    order.sort_by(|a, b| b.weight.cmp(&a.weight));
    for soft in order {
        s.push()?;
        s.assert(&soft.formula)?;
        match s.check()? {
            SolverVerdict::Sat(m) => {
                model = m;
                *kept += 1;
            }
            _ => s.pop()?,
        }
    }
    if minimize {
        let zero_consts = Formula::and(constants.iter().map(|c| Formula::eq(Poly::var(c))).collect());
        'outer: for b in [1i64, 2, 4, 8, 16, 32, 64] {
            for with_zero in [true, false] {
                if with_zero && constants.is_empty() {
                    continue;
                }
                let mut f = bounded(params, b);
                if with_zero {
                    f = Formula::and(alloc::vec![f, zero_consts.clone()]);
                }
                if let SolverVerdict::Sat(m) = s.check_sat(&f)? {
                    model = m;
                    break 'outer;
                }
            }
        }
    }
    model.retain(|v, _| params.contains(v));
    for p in params {
        model.entry(p.clone()).or_insert_with(Int::default);
    }
    Ok(Some(model))
}

/// Conditional invariant of `alpha` that every non-loop predecessor establishes.
pub fn is_local_invariant<S: SmtSolver + ?Sized>(
    s: &mut S,
    alpha: &Transition,
    phi: &Constraint,
    ctx: &[Transition],
) -> Result<bool, SmtError> {
    if !is_conditional_invariant(s, alpha, phi)? {
        return Ok(false);
    }
    for b in predecessors(alpha, ctx) {
        let a = apart(alpha, b);
        let bu = b.update.entries();
        let premise = b.guard.and(&a.guard.subst(bu));
        if !check_valid_implication(s, &premise, &phi.subst(bu))? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Copy, Debug)]
pub struct InferenceConfig {
    pub minimize: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig { minimize: true }
    }
}

/// Strengthened variants of `alpha` with synthesized simple invariants:
/// the strengthened loop itself plus one split variant per invariant that is
/// not local. Empty if the guard is already monotonic or nothing was found.
pub fn deduce_invariants<S: SmtSolver + ?Sized>(
    s: &mut S,
    alpha: &Transition,
    ctx: &[Transition],
    cfg: InferenceConfig,
) -> Result<Vec<Transition>, SmtError> {
    let mut part = partition_guard(s, alpha)?;
    if part.phi_nm.is_empty() || !is_linear(alpha) {
        return Ok(Vec::new());
    }
    let mut namer = Namer::new();
    let mut res = Vec::new();
    let mut cur = alpha.clone();
    let mut added = Constraint::top();
    while !part.phi_nm.is_empty() {
        let req = match build_requirements(&mut namer, &cur, &part, ctx) {
            Ok(r) => r,
            Err(NotLinear) => return Ok(res),
        };
        let params = req.params();
        let constants: Vec<Var> = req.templates.iter().map(|t| t.constant.clone()).collect();
        let Some(model) = greedy_max_smt(s, &req.hard, &req.softs, &params, &constants, cfg.minimize)? else {
            return Ok(res);
        };
        let invs: Vec<Atom> = req.templates.iter().map(|t| t.instantiate(&model)).collect();
        let inv_c = Constraint::new(invs.clone());
        let mut strengthened_si = part.phi_si.clone();
        for a in &invs {
            strengthened_si.push(a.clone());
        }
        if !crate::monotonicity::is_simple_invariant(s, &cur, &strengthened_si)? {
            return Ok(res);
        }
        for inv in &invs {
            let one = Constraint::new(alloc::vec![inv.clone()]);
            if !is_local_invariant(s, &cur, &one, ctx)? {
                let neg = Constraint::new(alloc::vec![inv.negate()]);
                let mut split_added = added.clone();
                split_added.push(inv.negate());
                debug_assert_eq!(alpha.guard.and(&split_added), cur.guard.and(&neg));
                res.push(strengthen(alpha, &split_added, true));
            }
        }
        added = added.and(&inv_c);
        cur = strengthen(alpha, &added, false);
        let next = partition_guard(s, &cur)?;
        if next.phi_nm.len() >= part.phi_nm.len() {
            // no progress; the solver could not confirm what the encoding promised
            return Ok(res);
        }
        part = next;
    }
    let mut out = alloc::vec![cur];
    out.extend(res);
    Ok(out)
}
