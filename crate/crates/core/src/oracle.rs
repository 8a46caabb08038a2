//! Concrete semantics: single steps, expansion of derived transitions into
//! runs of original ones, witness validation and differential checks for
//! acceleration. Nothing here trusts the solver beyond sampling inputs.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use num_traits::{One, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::its::{Configuration, FunSym, Origin, Program, TransId, Transition};
use crate::poly::{EvalError, Int, Poly, Valuation, Var};
use crate::smt::{Formula, SmtError, SmtSolver, SolverVerdict};

/// Expanding a proof beyond this many steps is refused.
pub const MAX_REPLAY_STEPS: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("configuration has {found} values, transition expects {expected}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("configuration is at `{found}`, transition starts at `{expected}`")]
    SymbolMismatch { expected: FunSym, found: FunSym },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("update of `{0}` yields a non-integer")]
    NonInteger(Var),
    #[error("bad model: {0}")]
    BadModel(String),
    #[error("{id} is not applicable in {at}")]
    Stuck { id: TransId, at: Configuration },
}

/// One step of `t` from `c`. `None` if the guard does not hold.
pub fn step(c: &Configuration, t: &Transition, temps: &Valuation) -> Result<Option<Configuration>, OracleError> {
    if c.symbol != t.source {
        return Err(OracleError::SymbolMismatch { expected: t.source.clone(), found: c.symbol.clone() });
    }
    if c.values.len() != t.args.len() {
        return Err(OracleError::ArityMismatch { expected: t.args.len(), found: c.values.len() });
    }
    let mut val = temps.clone();
    for (x, n) in t.args.iter().zip(&c.values) {
        val.insert(x.clone(), n.clone());
    }
    if !t.guard.eval(&val)? {
        return Ok(None);
    }
    if t.target.is_sink() {
        return Ok(Some(Configuration { symbol: t.target.clone(), values: Vec::new() }));
    }
    let mut values = Vec::with_capacity(t.args.len());
    for x in &t.args {
        match t.update.get(x).eval_int(&val)? {
            Some(n) => values.push(n),
            None => return Err(OracleError::NonInteger(x.clone())),
        }
    }
    Ok(Some(Configuration { symbol: t.target.clone(), values }))
}

/// Values of `t`'s arguments and temps under `val`, missing ones as 0.
pub fn configuration_of(symbol: &FunSym, args: &[Var], val: &Valuation) -> Configuration {
    Configuration {
        symbol: symbol.clone(),
        values: args.iter().map(|x| val.get(x).cloned().unwrap_or_default()).collect(),
    }
}

#[derive(Clone, Debug)]
pub enum Terminal {
    /// The loop's guard describes a recurrent set.
    Recurrent { looping: Arc<Transition>, temps: Valuation },
    /// The loop maps the configuration reached to itself.
    Fixpoint { looping: Arc<Transition>, temps: Valuation },
}

impl Terminal {
    pub fn looping(&self) -> &Transition {
        match self {
            Terminal::Recurrent { looping, .. } | Terminal::Fixpoint { looping, .. } => looping,
        }
    }
}

/// Original steps, each with the temps it uses, and an optional terminal loop.
#[derive(Clone, Debug)]
pub struct ReplayPlan {
    pub steps: Vec<(TransId, Valuation)>,
    pub terminal: Option<Terminal>,
}

impl fmt::Display for ReplayPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut i = 0;
        while i < self.steps.len() {
            let (id, temps) = &self.steps[i];
            let mut j = i + 1;
            while j < self.steps.len() && self.steps[j] == self.steps[i] {
                j += 1;
            }
            write!(f, "{}", id)?;
            if !temps.is_empty() {
                f.write_str(" [")?;
                for (n, (v, x)) in temps.iter().enumerate() {
                    if n > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{} = {}", v, x)?;
                }
                f.write_str("]")?;
            }
            if j - i > 1 {
                write!(f, " x{}", j - i)?;
            }
            writeln!(f)?;
            i = j;
        }
        match &self.terminal {
            Some(Terminal::Recurrent { looping, .. }) => {
                write!(f, "recurrent: {}", looping.origin_label())
            }
            Some(Terminal::Fixpoint { looping, .. }) => write!(f, "fixpoint: {}", looping.origin_label()),
            None => Ok(()),
        }
    }
}

fn restrict(model: &Valuation, vars: &[Var]) -> Valuation {
    vars.iter()
        .map(|v| (v.clone(), model.get(v).cloned().unwrap_or_default()))
        .collect()
}

/// Expands a derived transition, taken from `start` under a model of its
/// temps, into original steps. The expansion simulates as it goes because
/// substituted temps depend on the configuration reached. Counters must be
/// at least 1; missing temps count as 0.
pub fn expand_trace(t: &Transition, start: &Configuration, model: &Valuation) -> Result<ReplayPlan, OracleError> {
    let mut plan = ReplayPlan { steps: Vec::new(), terminal: None };
    let mut c = start.clone();
    expand_into(t, model, &mut c, &mut plan)?;
    Ok(plan)
}

fn expand_into(
    t: &Transition,
    model: &Valuation,
    c: &mut Configuration,
    plan: &mut ReplayPlan,
) -> Result<(), OracleError> {
    if plan.terminal.is_some() {
        return Err(OracleError::BadModel("steps after a terminal loop".into()));
    }
    if plan.steps.len() > MAX_REPLAY_STEPS {
        return Err(OracleError::BadModel("replay too long".into()));
    }
    match &t.origin {
        Origin::Original => {
            let temps = restrict(model, &t.temps);
            match step(c, t, &temps)? {
                Some(next) => *c = next,
                None => return Err(OracleError::Stuck { id: t.id, at: c.clone() }),
            }
            plan.steps.push((t.id, temps));
        }
        Origin::Chained { first, second, renaming } => {
            expand_into(first, model, c, plan)?;
            let mut inner = model.clone();
            for v in &second.temps {
                let renamed = renaming.get(v).unwrap_or(v);
                inner.insert(v.clone(), model.get(renamed).cloned().unwrap_or_default());
            }
            expand_into(second, &inner, c, plan)?;
        }
        Origin::Accelerated { base, counter } => {
            let n = model.get(counter).cloned().unwrap_or_default();
            if n < Int::one() {
                return Err(OracleError::BadModel(format!("counter {} = {} < 1", counter, n)));
            }
            let n = n
                .to_usize()
                .filter(|n| *n <= MAX_REPLAY_STEPS)
                .ok_or_else(|| OracleError::BadModel(format!("counter {} too large", counter)))?;
            for _ in 0..n {
                expand_into(base, model, c, plan)?;
            }
        }
        Origin::Unrolled { base, count } => {
            for _ in 0..*count {
                expand_into(base, model, c, plan)?;
            }
        }
        Origin::Strengthened { base, .. } => expand_into(base, model, c, plan)?,
        Origin::Substituted { base, subst } => {
            let mut val = model.clone();
            for (x, n) in t.args.iter().zip(&c.values) {
                val.insert(x.clone(), n.clone());
            }
            let mut inner = model.clone();
            for (v, e) in subst {
                match e.eval_int(&val)? {
                    Some(n) => inner.insert(v.clone(), n),
                    None => return Err(OracleError::NonInteger(v.clone())),
                };
            }
            expand_into(base, &inner, c, plan)?;
        }
        Origin::Nonterm { base } => {
            plan.terminal = Some(Terminal::Recurrent { looping: base.clone(), temps: model.clone() })
        }
        Origin::Fixpoint { base } => {
            plan.terminal = Some(Terminal::Fixpoint { looping: base.clone(), temps: model.clone() })
        }
    }
    Ok(())
}

/// Counters of all accelerations in `t`'s derivation, in the chained
/// transition's naming.
pub fn counters(t: &Transition) -> Vec<Var> {
    let mut out = Vec::new();
    collect_counters(t, &alloc::collections::BTreeMap::new(), &mut out);
    out.sort();
    out.dedup();
    out
}

fn collect_counters(t: &Transition, names: &alloc::collections::BTreeMap<Var, Var>, out: &mut Vec<Var>) {
    let name = |v: &Var| names.get(v).cloned().unwrap_or_else(|| v.clone());
    match &t.origin {
        Origin::Original => {}
        Origin::Chained { first, second, renaming } => {
            collect_counters(first, names, out);
            let inner = second
                .temps
                .iter()
                .map(|v| (v.clone(), name(renaming.get(v).unwrap_or(v))))
                .collect();
            collect_counters(second, &inner, out);
        }
        Origin::Accelerated { base, counter } => {
            out.push(name(counter));
            collect_counters(base, names, out);
        }
        Origin::Unrolled { base, .. }
        | Origin::Strengthened { base, .. }
        | Origin::Nonterm { base }
        | Origin::Fixpoint { base } => collect_counters(base, names, out),
        Origin::Substituted { base, subst } => {
            let mut inner = Vec::new();
            collect_counters(base, &alloc::collections::BTreeMap::new(), &mut inner);
            out.extend(inner.iter().filter(|k| !subst.contains_key(*k)).map(name));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn replay(
    original: &Program,
    mut c: Configuration,
    steps: &[(TransId, Valuation)],
    what: &str,
) -> Result<Configuration, Invalid> {
    for (i, (id, temps)) in steps.iter().enumerate() {
        let t = original
            .get(*id)
            .ok_or_else(|| Invalid(format!("{}: unknown transition {}", what, id)))?;
        c = match step(&c, t, temps) {
            Ok(Some(next)) => next,
            Ok(None) => return Err(Invalid(format!("{}: {} stuck at step {} in {}", what, id, i + 1, c))),
            Err(e) => return Err(Invalid(format!("{}: step {}: {}", what, i + 1, e))),
        };
    }
    Ok(c)
}

/// Replays `plan` from `witness` on the original program, then checks the
/// terminal loop: iterations of a recurrent loop (its guard holding before
/// each) until `loop_steps` original steps have been replayed, at least one
/// iteration, or one iteration of a fixpoint loop returning to the same
/// configuration. A plan without terminal loop is rejected.
pub fn validate_witness(
    original: &Program,
    witness: &Configuration,
    plan: &ReplayPlan,
    loop_steps: usize,
) -> Result<(), Invalid> {
    if witness.symbol != original.start {
        return Err(Invalid(format!("witness is not at {}", original.start)));
    }
    let c = replay(original, witness.clone(), &plan.steps, "prefix")?;
    let Some(terminal) = &plan.terminal else {
        return Err(Invalid("plan has no terminal loop".into()));
    };
    let (looping, temps) = match terminal {
        Terminal::Recurrent { looping, temps } | Terminal::Fixpoint { looping, temps } => (looping, temps),
    };
    let holds = |c: &Configuration| -> Result<bool, Invalid> {
        let mut val = temps.clone();
        for (x, n) in looping.args.iter().zip(&c.values) {
            val.insert(x.clone(), n.clone());
        }
        looping.guard.eval(&val).map_err(|e| Invalid(format!("loop guard: {}", e)))
    };
    // The body is re-expanded per iteration: substituted temps may differ.
    let body = |c: &Configuration| -> Result<Vec<(TransId, Valuation)>, Invalid> {
        let plan = expand_trace(looping, c, temps).map_err(|e| Invalid(format!("loop body from {}: {}", c, e)))?;
        if plan.terminal.is_some() || plan.steps.is_empty() {
            return Err(Invalid("loop body is not a finite run".into()));
        }
        Ok(plan.steps)
    };
    match terminal {
        Terminal::Recurrent { .. } => {
            // Accelerated bodies can grow with every iteration, so the budget
            // counts original steps.
            let (mut c, mut replayed, mut i) = (c, 0, 0);
            while i == 0 || replayed < loop_steps {
                i += 1;
                if !holds(&c)? {
                    return Err(Invalid(format!("loop guard fails at iteration {} in {}", i, c)));
                }
                let steps = body(&c)?;
                replayed += steps.len();
                c = replay(original, c, &steps, "loop")?;
            }
            Ok(())
        }
        Terminal::Fixpoint { .. } => {
            if !holds(&c)? {
                return Err(Invalid(format!("fixpoint guard fails in {}", c)));
            }
            let steps = body(&c)?;
            let next = replay(original, c.clone(), &steps, "fixpoint")?;
            if next != c {
                return Err(Invalid(format!("{} is not a fixpoint, it moves to {}", c, next)));
            }
            Ok(())
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DiffReport {
    pub passed: usize,
    pub failed: usize,
    /// Trials for which no model with the chosen counter value exists.
    pub skipped: usize,
    pub failures: Vec<String>,
}

/// Samples models of `accel`'s guard with counter values in 1..=20 and
/// checks that iterating `alpha` that often from the same start succeeds and
/// ends where `accel` says.
pub fn differential_accelerate_check<S: SmtSolver + ?Sized>(
    s: &mut S,
    alpha: &Transition,
    accel: &Transition,
    trials: usize,
    seed: u64,
) -> Result<DiffReport, SmtError> {
    let counter = match &accel.origin {
        Origin::Accelerated { counter, .. } => counter.clone(),
        _ => {
            return Ok(DiffReport {
                failed: 1,
                failures: alloc::vec![String::from("not an accelerated transition")],
                ..DiffReport::default()
            })
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = DiffReport::default();
    let guard = Formula::constraint(&accel.guard);
    for trial in 0..trials {
        let n: i64 = if trial == 0 { 1 } else { rng.gen_range(1..=20) };
        let fix_k = Formula::eq(&Poly::var(&counter) - &Poly::int(n));
        let hints: Vec<Formula> = accel
            .args
            .iter()
            .map(|x| {
                let centre = rng.gen_range(-20i64..=20);
                let d = &Poly::var(x) - &Poly::int(centre);
                Formula::and(alloc::vec![Formula::ge(&Poly::int(8) - &d), Formula::ge(&d + &Poly::int(8))])
            })
            .collect();
        let with_hints = Formula::and(alloc::vec![guard.clone(), fix_k.clone(), Formula::and(hints)]);
        let mut verdict = s.check_sat(&with_hints)?;
        if !verdict.is_sat() {
            verdict = s.check_sat(&Formula::and(alloc::vec![guard.clone(), fix_k]))?;
        }
        let SolverVerdict::Sat(model) = verdict else {
            report.skipped += 1;
            continue;
        };
        match replay_accelerated(alpha, accel, &model, n as usize) {
            Ok(()) => report.passed += 1,
            Err(msg) => {
                report.failed += 1;
                report.failures.push(msg);
            }
        }
    }
    Ok(report)
}

fn replay_accelerated(alpha: &Transition, accel: &Transition, model: &Valuation, n: usize) -> Result<(), String> {
    let start = configuration_of(&accel.source, &accel.args, model);
    let temps = restrict(model, &alpha.temps);
    let mut c = start.clone();
    for i in 0..n {
        c = match step(&c, alpha, &temps) {
            Ok(Some(next)) => next,
            Ok(None) => return Err(format!("from {} with k = {}: stuck at iteration {}", start, n, i + 1)),
            Err(e) => return Err(format!("from {}: {}", start, e)),
        };
    }
    let accel_temps = restrict(model, &accel.temps);
    let expected = match step(&start, accel, &accel_temps) {
        Ok(Some(c)) => c,
        Ok(None) => return Err(format!("sampled model violates the accelerated guard at {}", start)),
        Err(e) => return Err(format!("{}", e)),
    };
    if expected != c {
        return Err(format!("from {} with k = {}: loop reaches {}, acceleration claims {}", start, n, c, expected));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::{Atom, Constraint};
    use crate::its::Update;

    fn v(n: &str) -> Poly {
        Poly::var(&Var::new(n))
    }

    fn conf(sym: &str, vals: &[i64]) -> Configuration {
        Configuration { symbol: FunSym::new(sym), values: vals.iter().map(|&n| Int::from(n)).collect() }
    }

    fn alpha2() -> Transition {
        Transition::new(
            FunSym::new("f"),
            alloc::vec![Var::new("x"), Var::new("y")],
            Constraint::new(alloc::vec![Atom::ge(&v("x"), &Poly::zero())]),
            Update::from_map(
                [(Var::new("x"), &v("x") - &v("y")), (Var::new("y"), &v("y") + &Poly::one())]
                    .into_iter()
                    .collect(),
            ),
            FunSym::new("f"),
            Origin::Original,
        )
    }

    #[test]
    fn ex1_steps() {
        let a2 = alpha2();
        let c1 = step(&conf("f", &[0, 0]), &a2, &Valuation::new()).unwrap().unwrap();
        assert_eq!(c1, conf("f", &[0, 1]));
        let c2 = step(&c1, &a2, &Valuation::new()).unwrap().unwrap();
        assert_eq!(c2, conf("f", &[-1, 2]));
        assert_eq!(step(&c2, &a2, &Valuation::new()).unwrap(), None);
    }

    #[test]
    fn counter_must_be_positive() {
        let a2 = alpha2();
        let acc = a2.clone().with_origin(Origin::Accelerated { base: Arc::new(a2), counter: Var::new("k") });
        let mut m = Valuation::new();
        m.insert(Var::new("k"), Int::from(0));
        let c = conf("f", &[0, 0]);
        assert!(matches!(expand_trace(&acc, &c, &m), Err(OracleError::BadModel(_))));
        m.insert(Var::new("k"), Int::from(2));
        assert_eq!(expand_trace(&acc, &c, &m).unwrap().steps.len(), 2);
        m.insert(Var::new("k"), Int::from(3));
        assert!(matches!(expand_trace(&acc, &c, &m), Err(OracleError::Stuck { .. })));
        assert_eq!(counters(&acc), alloc::vec![Var::new("k")]);
    }
}
