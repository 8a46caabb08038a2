//! Solver-independent SMT interface over quantifier-free integer arithmetic.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::constraint::{Atom, Constraint};
use crate::poly::{EvalError, Poly, Valuation, Var};

/// Quantifier-free formula. `Ge(p)` is `p >= 0`, `Eq(p)` is `p = 0`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Formula {
    True,
    False,
    Ge(Poly),
    Eq(Poly),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Not(Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
}

impl Formula {
    /// `p >= 0` with denominators cleared.
    pub fn ge(p: Poly) -> Formula {
        Formula::Ge(p.clear_denominators())
    }

    pub fn eq(p: Poly) -> Formula {
        Formula::Eq(p.clear_denominators())
    }

    pub fn atom(a: &Atom) -> Formula {
        match a.truth() {
            Some(true) => Formula::True,
            Some(false) => Formula::False,
            None => Formula::Ge(a.poly().clone()),
        }
    }

    pub fn constraint(c: &Constraint) -> Formula {
        Formula::and(c.iter().map(Formula::atom).collect())
    }

    /// Conjunction with trivial cases folded.
    pub fn and(fs: Vec<Formula>) -> Formula {
        let mut out = Vec::new();
        for f in fs {
            match f {
                Formula::True => {}
                Formula::False => return Formula::False,
                Formula::And(inner) => out.extend(inner),
                f => out.push(f),
            }
        }
        match out.len() {
            0 => Formula::True,
            1 => out.pop().unwrap(),
            _ => Formula::And(out),
        }
    }

    /// Disjunction with trivial cases folded.
    pub fn or(fs: Vec<Formula>) -> Formula {
        let mut out = Vec::new();
        for f in fs {
            match f {
                Formula::False => {}
                Formula::True => return Formula::True,
                Formula::Or(inner) => out.extend(inner),
                f => out.push(f),
            }
        }
        match out.len() {
            0 => Formula::False,
            1 => out.pop().unwrap(),
            _ => Formula::Or(out),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        match f {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Not(inner) => *inner,
            f => Formula::Not(Box::new(f)),
        }
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Ge(p) | Formula::Eq(p) => p.collect_vars(out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.collect_vars(out)),
            Formula::Not(f) => f.collect_vars(out),
            Formula::Implies(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn eval(&self, val: &Valuation) -> Result<bool, EvalError> {
        use num_traits::{Signed, Zero};
        Ok(match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Ge(p) => !p.eval(val)?.is_negative(),
            Formula::Eq(p) => p.eval(val)?.is_zero(),
            Formula::And(fs) => {
                for f in fs {
                    if !f.eval(val)? {
                        return Ok(false);
                    }
                }
                true
            }
            Formula::Or(fs) => {
                for f in fs {
                    if f.eval(val)? {
                        return Ok(true);
                    }
                }
                false
            }
            Formula::Not(f) => !f.eval(val)?,
            Formula::Implies(a, b) => !a.eval(val)? || b.eval(val)?,
        })
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::smtlib::emit_formula(self))
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum SolverVerdict {
    /// Model over every declared variable.
    Sat(Valuation),
    Unsat,
    Unknown,
}

impl SolverVerdict {
    pub fn is_sat(&self) -> bool {
        matches!(self, SolverVerdict::Sat(_))
    }

    pub fn is_unsat(&self) -> bool {
        matches!(self, SolverVerdict::Unsat)
    }
}

#[derive(Clone, PartialEq, Eq, Debug, thiserror::Error)]
pub enum SmtError {
    #[error("SMT solver unavailable: {0}")]
    SolverUnavailable(String),
    #[error("SMT protocol error: {0}")]
    Protocol(String),
}

/// Incremental solver session with an assertion stack.
pub trait SmtSolver {
    fn push(&mut self) -> Result<(), SmtError>;
    fn pop(&mut self) -> Result<(), SmtError>;
    fn assert(&mut self, f: &Formula) -> Result<(), SmtError>;
    fn check(&mut self) -> Result<SolverVerdict, SmtError>;

    /// One-shot query that leaves the assertion stack unchanged.
    fn check_sat(&mut self, f: &Formula) -> Result<SolverVerdict, SmtError> {
        self.push()?;
        let res = self.assert(f).and_then(|_| self.check());
        self.pop()?;
        res
    }
}

impl<S: SmtSolver + ?Sized> SmtSolver for &mut S {
    fn push(&mut self) -> Result<(), SmtError> {
        (**self).push()
    }
    fn pop(&mut self) -> Result<(), SmtError> {
        (**self).pop()
    }
    fn assert(&mut self, f: &Formula) -> Result<(), SmtError> {
        (**self).assert(f)
    }
    fn check(&mut self) -> Result<SolverVerdict, SmtError> {
        (**self).check()
    }
}

/// Wall-clock budget, polled between processor applications.
pub trait Deadline {
    fn expired(&self) -> bool;
}

/// A budget that never runs out.
pub struct NoDeadline;

impl Deadline for NoDeadline {
    fn expired(&self) -> bool {
        false
    }
}

/// `premise => conclusion` is proven valid. Unknown counts as not proven.
pub fn check_valid_implication<S: SmtSolver + ?Sized>(
    solver: &mut S,
    premise: &Constraint,
    conclusion: &Constraint,
) -> Result<bool, SmtError> {
    let open: Vec<&Atom> = conclusion
        .iter()
        .filter(|a| a.truth() != Some(true) && !premise.contains(a))
        .collect();
    if open.is_empty() {
        return Ok(true);
    }
    if premise.is_trivially_false() {
        return Ok(true);
    }
    let negated = Formula::or(open.iter().map(|a| Formula::atom(&a.negate())).collect());
    let query = Formula::and(alloc::vec![Formula::constraint(premise), negated]);
    Ok(solver.check_sat(&query)?.is_unsat())
}

/// `Some(true)` if satisfiable, `Some(false)` if unsatisfiable, `None` if unknown.
pub fn is_satisfiable<S: SmtSolver + ?Sized>(solver: &mut S, c: &Constraint) -> Result<Option<bool>, SmtError> {
    if c.is_trivially_false() {
        return Ok(Some(false));
    }
    if c.is_empty() {
        return Ok(Some(true));
    }
    Ok(match solver.check_sat(&Formula::constraint(c))? {
        SolverVerdict::Sat(_) => Some(true),
        SolverVerdict::Unsat => Some(false),
        SolverVerdict::Unknown => None,
    })
}
