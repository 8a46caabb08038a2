//! Program transformations that add transitions: acceleration, chaining,
//! recurrent-set and fixpoint detection, strengthening.

use alloc::collections::BTreeSet;
use alloc::sync::Arc;
use alloc::vec::Vec;

use num_traits::One;

use crate::constraint::{Atom, Constraint};
use crate::its::{FunSym, Origin, Transition, Update};
use crate::monotonicity::{is_simple_invariant, GuardPartition};
use crate::poly::{Int, Poly, Subst, Var};
use crate::recurrence::ClosedForm;
use crate::smt::{Formula, SmtError, SmtSolver, SolverVerdict};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProcessorError {
    #[error("processor not applicable: {0}")]
    Inapplicable(&'static str),
    #[error(transparent)]
    Smt(#[from] SmtError),
}

use ProcessorError::Inapplicable;

fn k_positive(k: &Var) -> Atom {
    Atom::ge(&Poly::var(k), &Poly::one())
}

fn dec(k: &Var) -> Subst {
    let mut s = Subst::new();
    s.insert(k.clone(), &Poly::var(k) - &Poly::one());
    s
}

fn check_accelerable(alpha: &Transition, part: &GuardPartition) -> Result<(), ProcessorError> {
    if !alpha.is_simple_loop() {
        return Err(Inapplicable("not a simple loop"));
    }
    if !part.phi_nm.is_empty() {
        return Err(Inapplicable("guard is not monotonic"));
    }
    Ok(())
}

fn fresh_for(alpha: &Transition, k: &Var) -> Result<(), ProcessorError> {
    if alpha.vars().contains(k) {
        return Err(Inapplicable("counter is not fresh"));
    }
    Ok(())
}

/// `k` iterations of `alpha` for any `k > 0`:
/// guard `phi_ci && phi_si && mu(phi_md)[k -> k-1] && k > 0`, update `mu`.
pub fn accelerate(
    alpha: &Transition,
    part: &GuardPartition,
    cf: &ClosedForm,
    k: &Var,
) -> Result<Transition, ProcessorError> {
    check_accelerable(alpha, part)?;
    fresh_for(alpha, k)?;
    let mu = cf.polynomial_subst().ok_or(Inapplicable("closed form is not polynomial"))?;
    // closed forms that settle late restrict the counter from below
    let settled = cf.valid_from(cf.entries.keys()).max(cf.valid_from(&part.phi_md.vars()) + 1);
    let mu = rename_counter(mu, &cf.counter, k);
    let md = part.phi_md.subst(&mu).subst(&dec(k));
    let mut guard = part.phi_ci.and(&part.phi_si).and(&md);
    guard.push(k_positive(k));
    if settled > 1 {
        guard.push(Atom::ge(&Poly::var(k), &Poly::int(i64::from(settled))));
    }
    let update = Update::from_map(mu);
    Ok(Transition::new(
        alpha.source.clone(),
        alpha.args.clone(),
        guard.simplified(),
        update,
        alpha.target.clone(),
        Origin::Accelerated { base: Arc::new(alpha.clone()), counter: k.clone() },
    ))
}

fn rename_counter(mu: Subst, from: &Var, to: &Var) -> Subst {
    if from == to {
        return mu;
    }
    let mut r = alloc::collections::BTreeMap::new();
    r.insert(from.clone(), to.clone());
    mu.into_iter().map(|(v, p)| (v, p.rename(&r))).collect()
}

/// Exactly `n >= 1` iterations: guard `phi_ci && phi_si && update^(n-1)(phi_md)`.
/// Used when the closed form has exponential terms.
pub fn accelerate_fixed(
    alpha: &Transition,
    part: &GuardPartition,
    cf: &ClosedForm,
    n: u32,
) -> Result<Transition, ProcessorError> {
    check_accelerable(alpha, part)?;
    if n == 0 {
        return Err(Inapplicable("zero iterations"));
    }
    let before_last = cf.instantiate(u64::from(n - 1));
    let md = before_last.apply_constraint(&part.phi_md);
    let guard = part.phi_ci.and(&part.phi_si).and(&md);
    Ok(Transition::new(
        alpha.source.clone(),
        alpha.args.clone(),
        guard,
        cf.instantiate(u64::from(n)),
        alpha.target.clone(),
        Origin::Unrolled { base: Arc::new(alpha.clone()), count: n },
    ))
}

/// Acceleration with the `dec_k(mu(phi_md))` conjunct left out. Unsound on
/// purpose; only the differential tests use it.
pub fn accelerate_mutant_no_dec(
    alpha: &Transition,
    part: &GuardPartition,
    cf: &ClosedForm,
    k: &Var,
) -> Result<Transition, ProcessorError> {
    let good = accelerate(alpha, part, cf, k)?;
    let mut guard = part.phi_ci.and(&part.phi_si);
    guard.push(k_positive(k));
    Ok(good.with_guard(guard, Origin::Accelerated { base: Arc::new(alpha.clone()), counter: k.clone() }))
}

/// `alpha` followed by `beta`. `beta`'s temps are renamed apart from `alpha`'s variables.
pub fn chain(alpha: &Transition, beta: &Transition) -> Result<Transition, ProcessorError> {
    if alpha.target != beta.source {
        return Err(Inapplicable("target of the first transition is not the source of the second"));
    }
    if alpha.args != beta.args {
        return Err(Inapplicable("argument lists differ"));
    }
    let (b, renaming) = beta.rename_apart(&alpha.vars());
    let guard = alpha.guard.and(&alpha.update.apply_constraint(&b.guard));
    let update = alpha.update.compose(&b.update);
    Ok(eliminate_temps(Transition::new(
        alpha.source.clone(),
        alpha.args.clone(),
        guard,
        update,
        b.target.clone(),
        Origin::Chained {
            first: Arc::new(alpha.clone()),
            second: Arc::new(beta.clone()),
            renaming,
        },
    )))
}

/// A temp `v` and its value if the guard contains `p >= 0` and `-p >= 0`
/// with `p = c*v + q`, `c = +-1` and `q` free of `v`.
fn determined_temp(t: &Transition) -> Option<(Var, Poly)> {
    let atoms = t.guard.atoms();
    for (i, a) in atoms.iter().enumerate() {
        let neg = -a.poly();
        if !atoms[i + 1..].iter().any(|b| *b.poly() == neg) {
            continue;
        }
        for v in &t.temps {
            let cs = a.poly().coeffs_in(v);
            if cs.len() != 2 {
                continue;
            }
            let Some(c) = cs[1].as_constant() else { continue };
            if c.is_one() {
                return Some((v.clone(), -&cs[0]));
            }
            if (-c).is_one() {
                return Some((v.clone(), cs[0].clone()));
            }
        }
    }
    None
}

/// Substitutes away temps that an equality in the guard pins to an
/// expression over the other variables. A pinned temp is fixed for all loop
/// iterations while its value may need to change, so this matters before
/// acceleration and Nonterm.
pub fn eliminate_temps(t: Transition) -> Transition {
    let mut cur = t;
    while let Some((v, e)) = determined_temp(&cur) {
        let mut subst = Subst::new();
        subst.insert(v, e);
        let guard = cur.guard.subst(&subst).simplified();
        let update = cur.update.subst(&subst);
        let next = Transition::new(
            cur.source.clone(),
            cur.args.clone(),
            guard,
            update,
            cur.target.clone(),
            Origin::Substituted { base: Arc::new(cur.clone()), subst },
        );
        cur = next;
    }
    cur
}

fn to_sink(alpha: &Transition, guard: Constraint, origin: Origin) -> Transition {
    Transition::new(alpha.source.clone(), alpha.args.clone(), guard, Update::identity(), FunSym::sink(), origin)
}

/// `lhs -> sink [guard]` if the guard is a simple invariant.
pub fn make_nonterm<S: SmtSolver + ?Sized>(s: &mut S, alpha: &Transition) -> Result<Transition, ProcessorError> {
    if !alpha.is_simple_loop() {
        return Err(Inapplicable("not a simple loop"));
    }
    if !is_simple_invariant(s, alpha, &alpha.guard)? {
        return Err(Inapplicable("guard is not a simple invariant"));
    }
    Ok(to_sink(alpha, alpha.guard.clone(), Origin::Nonterm { base: Arc::new(alpha.clone()) }))
}

/// `lhs -> sink [guard && x = update(x)]` if that guard is satisfiable.
pub fn make_fixpoint<S: SmtSolver + ?Sized>(s: &mut S, alpha: &Transition) -> Result<Transition, ProcessorError> {
    if !alpha.is_simple_loop() {
        return Err(Inapplicable("not a simple loop"));
    }
    let mut guard = alpha.guard.clone();
    for x in &alpha.args {
        let ux = alpha.update.get(x);
        for a in Atom::from_rel(&Poly::var(x), crate::constraint::Rel::Eq, &ux) {
            guard.push(a);
        }
    }
    let guard = guard.simplified();
    if guard.is_trivially_false() {
        return Err(Inapplicable("no fixpoint"));
    }
    match s.check_sat(&Formula::constraint(&guard))? {
        SolverVerdict::Sat(_) => {}
        _ => return Err(Inapplicable("no fixpoint")),
    }
    Ok(to_sink(alpha, guard, Origin::Fixpoint { base: Arc::new(alpha.clone()) }))
}

/// `alpha` with `phi` conjoined to its guard.
pub fn strengthen(alpha: &Transition, phi: &Constraint, split: bool) -> Transition {
    alpha.with_guard(
        alpha.guard.and(phi),
        Origin::Strengthened { base: Arc::new(alpha.clone()), added: phi.clone(), split },
    )
}

/// First argument `x` with `update(x) = c*x + t`, `c < 0` constant, `x` not in `t`.
pub fn sign_alternating_var(alpha: &Transition) -> Option<Var> {
    alpha.args.iter().find_map(|x| {
        let cs = alpha.update.get(x).coeffs_in(x);
        if cs.len() != 2 {
            return None;
        }
        let c = cs[1].as_constant()?;
        use num_traits::Signed;
        c.is_negative().then(|| x.clone())
    })
}

/// `{x | vars(update(x)) != {} && x not in vars(update(x))}`.
pub fn unstable_vars(alpha: &Transition) -> BTreeSet<Var> {
    alpha
        .args
        .iter()
        .filter(|x| {
            let vs = alpha.update.get(x).vars();
            !vs.is_empty() && !vs.contains(*x)
        })
        .cloned()
        .collect()
}

/// Arguments whose update is an integer constant; used for display and tests.
pub fn constant_updates(alpha: &Transition) -> Vec<(Var, Int)> {
    alpha
        .args
        .iter()
        .filter_map(|x| {
            let c = alpha.update.entries().get(x)?.as_constant()?;
            c.is_integer().then(|| (x.clone(), c.to_integer()))
        })
        .collect()
}
