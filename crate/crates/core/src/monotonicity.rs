//! Conditional invariants, simple invariants and monotonically decreasing
//! constraints of a simple loop, and the guard partition built from them.

use alloc::vec::Vec;

use crate::constraint::{Atom, Constraint};
use crate::its::Transition;
use crate::smt::{check_valid_implication, SmtError, SmtSolver};

/// Disjoint sublists of a loop's guard, in guard order.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct GuardPartition {
    pub phi_ci: Constraint,
    pub phi_si: Constraint,
    pub phi_md: Constraint,
    pub phi_nm: Constraint,
}

impl GuardPartition {
    /// `phi_ci` and `phi_si` together.
    pub fn phi_i(&self) -> Constraint {
        let mut out = self.phi_ci.clone();
        for a in &self.phi_si {
            out.push(a.clone());
        }
        out
    }

    pub fn is_monotonic(&self) -> bool {
        self.phi_nm.is_empty()
    }
}

/// `guard && phi => update(phi)`.
pub fn is_conditional_invariant<S: SmtSolver + ?Sized>(
    s: &mut S,
    alpha: &Transition,
    phi: &Constraint,
) -> Result<bool, SmtError> {
    let premise = alpha.guard.and(phi);
    check_valid_implication(s, &premise, &alpha.update.apply_constraint(phi))
}

/// `phi => update(phi)`.
pub fn is_simple_invariant<S: SmtSolver + ?Sized>(
    s: &mut S,
    alpha: &Transition,
    phi: &Constraint,
) -> Result<bool, SmtError> {
    check_valid_implication(s, phi, &alpha.update.apply_constraint(phi))
}

/// `phi_si && update(phi) => phi`.
pub fn is_monotonically_decreasing<S: SmtSolver + ?Sized>(
    s: &mut S,
    alpha: &Transition,
    phi_si: &Constraint,
    phi: &Constraint,
) -> Result<bool, SmtError> {
    let premise = phi_si.and(&alpha.update.apply_constraint(phi));
    check_valid_implication(s, &premise, phi)
}

fn single(a: &Atom) -> Constraint {
    Constraint::new(alloc::vec![a.clone()])
}

/// Greatest-fixpoint partition of a simple loop's guard. Unknown solver
/// answers exclude the atom in question.
pub fn partition_guard<S: SmtSolver + ?Sized>(s: &mut S, alpha: &Transition) -> Result<GuardPartition, SmtError> {
    let guard = &alpha.guard;
    let upd = &alpha.update;

    let mut phi_i: Vec<Atom> = Vec::new();
    let mut rest: Vec<Atom> = Vec::new();
    for a in guard {
        if check_valid_implication(s, guard, &single(a).subst(upd.entries()))? {
            phi_i.push(a.clone());
        } else {
            rest.push(a.clone());
        }
    }

    let mut si = phi_i.clone();
    loop {
        let cand = Constraint::new(si.clone());
        let mut kept = Vec::new();
        for a in &si {
            if check_valid_implication(s, &cand, &single(a).subst(upd.entries()))? {
                kept.push(a.clone());
            }
        }
        if kept.len() == si.len() {
            break;
        }
        si = kept;
    }
    let phi_si = Constraint::new(si);

    let mut md = rest.clone();
    loop {
        let premise = phi_si.and(&upd.apply_constraint(&Constraint::new(md.clone())));
        let mut kept = Vec::new();
        for a in &md {
            if check_valid_implication(s, &premise, &single(a))? {
                kept.push(a.clone());
            }
        }
        if kept.len() == md.len() {
            break;
        }
        md = kept;
    }

    let pick = |pred: &dyn Fn(&Atom) -> bool| guard.iter().filter(|a| pred(a)).cloned().collect::<Constraint>();
    Ok(GuardPartition {
        phi_ci: pick(&|a| phi_i.contains(a) && !phi_si.contains(a)),
        phi_si: pick(&|a| phi_si.contains(a)),
        phi_md: pick(&|a| md.contains(a)),
        phi_nm: pick(&|a| !phi_i.contains(a) && !md.contains(a)),
    })
}
