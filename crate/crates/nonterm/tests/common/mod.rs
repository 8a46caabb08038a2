#![allow(dead_code)]

use std::path::PathBuf;

use nonterm::solver::{solver_path, Session, DEFAULT_SMT_TIMEOUT_MS};
use nonterm_core::{Poly, Program, Transition, Var};

pub fn session() -> Session {
    Session::spawn(&solver_path(None), DEFAULT_SMT_TIMEOUT_MS).expect("an SMT solver on PATH (or NONTERM_SOLVER)")
}

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("corpus")
}

pub fn load(name: &str) -> Program {
    let text = std::fs::read_to_string(corpus_dir().join(name)).unwrap();
    nonterm::parse(&text).unwrap()
}

pub fn program(text: &str) -> Program {
    nonterm::parse(text).unwrap()
}

pub fn v(name: &str) -> Poly {
    Poly::var(&Var::new(name))
}

pub fn int(n: i64) -> Poly {
    Poly::int(n)
}

/// The transition of `p` with the given original rule position (1-based).
pub fn rule(p: &Program, id: u32) -> Transition {
    p.iter().find(|t| t.id.0 == id).unwrap().clone()
}

pub const EX1: &str = "(GOAL NONTERM)
(STARTTERM (FUNCTIONSYMBOLS start))
(VAR x y)
(RULES
  start(x, y) -> f(x, y)
  f(x, y) -> f(x - y, y + 1) :|: x >= 0
  f(x, y) -> g(x, y) :|: x < 0
  g(x, y) -> g(x, y - x) :|: y > 0
)
";

/// The simple loop of a one-rule program over `vars`, e.g.
/// `loop_rule("x y", "f(x, y) -> f(-x, y - 1) :|: y > x")`.
pub fn loop_rule(vars: &str, rule: &str) -> Transition {
    let text = format!("(GOAL NONTERM)\n(STARTTERM (FUNCTIONSYMBOLS f))\n(VAR {})\n(RULES\n  {}\n)\n", vars, rule);
    program(&text).iter().find(|t| t.is_simple_loop()).unwrap().clone()
}

pub fn alpha_nt() -> Transition {
    loop_rule("x y", "f(x, y) -> f(0, y - x) :|: y > 0")
}

pub fn alpha_neg() -> Transition {
    loop_rule("x y", "f(x, y) -> f(-x, y - 1) :|: y > x")
}

pub fn alpha_const() -> Transition {
    loop_rule("x y z", "f(x, y, z) -> f(x - 1, 2, y) :|: x > 0")
}

pub fn alpha_p() -> Transition {
    loop_rule("x y", "f(x, y) -> f(y - 1, x - 1) :|: x > 0")
}

pub fn constraint(atoms: Vec<nonterm_core::Atom>) -> nonterm_core::Constraint {
    nonterm_core::Constraint::new(atoms)
}

pub fn var(name: &str) -> Var {
    Var::new(name)
}

/// alpha_2 of Ex. 1 strengthened with `y >= 0`, and its acceleration with counter `k`.
pub fn ex3_accelerated<S: nonterm_core::smt::SmtSolver>(s: &mut S) -> (Transition, Transition) {
    use nonterm_core::processors::{accelerate, strengthen};
    let a2 = rule(&program(EX1), 2);
    let a2s = strengthen(&a2, &constraint(vec![nonterm_core::Atom::ge(&v("y"), &int(0))]), false);
    let part = nonterm_core::monotonicity::partition_guard(s, &a2s).unwrap();
    let cf = nonterm_core::recurrence::solve_update(&a2s.update, &a2s.args, &var("k")).unwrap();
    let accel = accelerate(&a2s, &part, &cf, &var("k")).unwrap();
    (a2s, accel)
}

/// alpha_4 of Ex. 1 strengthened with `x <= 0` and turned into a sink transition.
pub fn ex4_nonterm<S: nonterm_core::smt::SmtSolver>(s: &mut S) -> Transition {
    use nonterm_core::processors::{make_nonterm, strengthen};
    let a4 = rule(&program(EX1), 4);
    let a4s = strengthen(&a4, &constraint(vec![nonterm_core::Atom::le(&v("x"), &int(0))]), false);
    make_nonterm(s, &a4s).unwrap()
}

/// The start-to-sink transition `alpha_1 . accel(alpha_2) . alpha_3 . alpha_4^inf` of Ex. 5.
pub fn ex5_transition<S: nonterm_core::smt::SmtSolver>(s: &mut S) -> Transition {
    use nonterm_core::processors::chain;
    let p = program(EX1);
    let (_, accel) = ex3_accelerated(s);
    let nt = ex4_nonterm(s);
    let front = chain(&rule(&p, 1), &accel).unwrap();
    let back = chain(&rule(&p, 3), &nt).unwrap();
    chain(&front, &back).unwrap()
}

/// Fixes every counter of `t` to `n` on top of `base`.
pub fn with_counters(t: &Transition, base: &[(&str, i64)], n: i64) -> nonterm_core::Valuation {
    let mut m: nonterm_core::Valuation = base.iter().map(|(x, c)| (var(x), (*c).into())).collect();
    for k in nonterm_core::oracle::counters(t) {
        m.insert(k, n.into());
    }
    m
}
