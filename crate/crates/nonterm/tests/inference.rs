mod common;

use common::*;
use nonterm_core::inference::{
    build_requirements, deduce_invariants, farkas_encode, greedy_max_smt, is_local_invariant, relevant_vars,
    InferenceConfig, Namer, Template,
};
use nonterm_core::monotonicity::{is_simple_invariant, partition_guard};
use nonterm_core::processors::make_nonterm;
use nonterm_core::smt::{Formula, SmtSolver};
use nonterm_core::strategy::{added_atoms, equivalent};
use nonterm_core::{Atom, Constraint, Origin, Poly, Transition};

fn others(p: &nonterm_core::Program, t: &Transition) -> Vec<Transition> {
    p.iter().filter(|u| u.id != t.id).cloned().collect()
}

fn set(names: &[&str]) -> std::collections::BTreeSet<nonterm_core::Var> {
    names.iter().map(|n| var(n)).collect()
}

#[test]
fn relevant_variables() {
    let p = program(EX1);
    let y_pos = Atom::gt(&v("y"), &int(0));
    assert_eq!(relevant_vars(&rule(&p, 4), &y_pos), set(&["x", "y"]));
    let x_nonneg = Atom::ge(&v("x"), &int(0));
    assert_eq!(relevant_vars(&rule(&p, 2), &x_nonneg), set(&["x", "y"]));
    let split = loop_rule("x y z w", "f(x, y, z, w) -> f(x + y, y, z - w, w) :|: x > 0 && z > 0");
    assert_eq!(relevant_vars(&split, &Atom::gt(&v("x"), &int(0))), set(&["x", "y"]));
}

#[test]
fn farkas_examples() {
    let mut s = session();
    let mut namer = Namer::new();
    let f = farkas_encode(&mut namer, &[&v("x") - &int(1)], &v("x")).unwrap();
    assert!(s.check_sat(&f).unwrap().is_sat());
    let f = farkas_encode(&mut namer, &[v("x")], &v("y")).unwrap();
    assert!(s.check_sat(&f).unwrap().is_unsat());
}

#[test]
fn farkas_tau_si_for_alpha4() {
    let mut s = session();
    let a4 = rule(&program(EX1), 4);
    let mut namer = Namer::new();
    let tau = Template::new(&mut namer, &set(&["x", "y"]));
    let f = farkas_encode(&mut namer, &[tau.poly.clone()], &tau.poly.subst(a4.update.entries())).unwrap();
    let fix = |name: &nonterm_core::Var, n: i64| Formula::eq(&Poly::var(name) - &int(n));
    let reference = Formula::and(vec![
        f,
        fix(&tau.coeffs[&var("x")], -1),
        fix(&tau.coeffs[&var("y")], 0),
        fix(&tau.constant, 0),
    ]);
    assert!(s.check_sat(&reference).unwrap().is_sat());
}

#[test]
fn farkas_rejects_nonlinear_premises() {
    let mut namer = Namer::new();
    assert!(farkas_encode(&mut namer, &[&v("x") * &v("y")], &v("x")).is_err());
}

fn weights(t: &Transition, ctx: &[Transition]) -> Vec<u32> {
    let part = partition_guard(&mut session(), t).unwrap();
    let req = build_requirements(&mut Namer::new(), t, &part, ctx).unwrap();
    let mut w: Vec<u32> = req.softs.iter().map(|s| s.weight).collect();
    w.sort_unstable_by(|a, b| b.cmp(a));
    w
}

#[test]
fn requirement_weights() {
    let p = program(EX1);
    let (a2, a4) = (rule(&p, 2), rule(&p, 4));
    assert_eq!(weights(&a4, &others(&p, &a4)), vec![3, 1, 1]);
    assert_eq!(weights(&a2, &others(&p, &a2)), vec![3, 1, 1]);
    // two non-monotonic atoms: each locality requirement outweighs all others together
    let two = loop_rule("x y z w", "f(x, y, z, w) -> f(x - y, y + 1, z - w, w + 1) :|: x >= 0 && z >= 0");
    let w = weights(&two, &[]);
    assert_eq!(w, vec![4, 4, 1, 1, 1]);
    assert!(w[1] > w[2..].iter().sum());
}

#[test]
fn greedy_reproduces_reference_models() {
    let mut s = session();
    let p = program(EX1);
    for (id, expected) in [(4, Atom::le(&v("x"), &int(0))), (2, Atom::ge(&v("y"), &int(0)))] {
        let t = rule(&p, id);
        let part = partition_guard(&mut s, &t).unwrap();
        let req = build_requirements(&mut Namer::new(), &t, &part, &others(&p, &t)).unwrap();
        let consts: Vec<_> = req.templates.iter().map(|t| t.constant.clone()).collect();
        let model = greedy_max_smt(&mut s, &req.hard, &req.softs, &req.params(), &consts, true).unwrap().unwrap();
        let inv = Constraint::new(vec![req.templates[0].instantiate(&model)]);
        assert!(equivalent(&mut s, &inv, &constraint(vec![expected.clone()])).unwrap(), "t{}: {}", id, inv);
    }
}

#[test]
fn greedy_without_softs_returns_a_model_of_hard() {
    let mut s = session();
    let hard = Formula::ge(&Poly::var(&var("%a")) - &int(3));
    let model = greedy_max_smt(&mut s, &hard, &[], &[var("%a")], &[], false).unwrap().unwrap();
    assert!(model[&var("%a")] >= 3.into());
    // the stack is restored
    assert!(s.check_sat(&Formula::eq(Poly::var(&var("%a")))).unwrap().is_sat());
}

#[test]
fn greedy_fails_on_unsat_hard() {
    let mut s = session();
    let a = Poly::var(&var("%a"));
    let hard = Formula::and(vec![Formula::ge(&a - &int(1)), Formula::ge(-a)]);
    assert!(greedy_max_smt(&mut s, &hard, &[], &[var("%a")], &[], false).unwrap().is_none());
}

#[test]
fn local_invariants() {
    let mut s = session();
    let p = program(EX1);
    let (a2, a4) = (rule(&p, 2), rule(&p, 4));
    let x_nonpos = constraint(vec![Atom::le(&v("x"), &int(0))]);
    assert!(is_local_invariant(&mut s, &a4, &x_nonpos, &others(&p, &a4)).unwrap());
    assert!(is_local_invariant(&mut s, &a4, &Constraint::top(), &others(&p, &a4)).unwrap());
    let y_nonneg = constraint(vec![Atom::ge(&v("y"), &int(0))]);
    assert!(!is_local_invariant(&mut s, &a2, &y_nonneg, &others(&p, &a2)).unwrap());
}

#[test]
fn alpha4_gets_x_nonpositive() {
    let mut s = session();
    let p = program(EX1);
    let a4 = rule(&p, 4);
    let out = deduce_invariants(&mut s, &a4, &others(&p, &a4), InferenceConfig::default()).unwrap();
    assert_eq!(out.len(), 1, "no split variant for a local invariant");
    let added = Constraint::new(added_atoms(&out[0]));
    assert!(equivalent(&mut s, &added, &constraint(vec![Atom::le(&v("x"), &int(0))])).unwrap(), "{}", added);
    assert!(make_nonterm(&mut s, &out[0]).is_ok());
}

#[test]
fn alpha2_gets_y_nonnegative_and_a_split_variant() {
    let mut s = session();
    let p = program(EX1);
    let a2 = rule(&p, 2);
    let out = deduce_invariants(&mut s, &a2, &others(&p, &a2), InferenceConfig::default()).unwrap();
    assert_eq!(out.len(), 2);
    let added = Constraint::new(added_atoms(&out[0]));
    assert!(equivalent(&mut s, &added, &constraint(vec![Atom::ge(&v("y"), &int(0))])).unwrap(), "{}", added);
    assert!(partition_guard(&mut s, &out[0]).unwrap().is_monotonic());
    assert!(matches!(out[1].origin, Origin::Strengthened { split: true, .. }));
    let split_guard = constraint(vec![Atom::ge(&v("x"), &int(0)), Atom::le(&v("y"), &int(-1))]);
    assert!(equivalent(&mut s, &out[1].guard, &split_guard).unwrap(), "{}", out[1].guard);
}

#[test]
fn returned_invariants_are_simple_invariants() {
    let mut s = session();
    let p = program(EX1);
    for id in [2, 4] {
        let t = rule(&p, id);
        let out = deduce_invariants(&mut s, &t, &others(&p, &t), InferenceConfig::default()).unwrap();
        let added = Constraint::new(added_atoms(&out[0]));
        assert!(is_simple_invariant(&mut s, &out[0], &added).unwrap());
    }
}

#[test]
fn split_variants_cover_the_guard() {
    // each split variant negates exactly one added invariant
    let mut s = session();
    let p = program(EX1);
    let a2 = rule(&p, 2);
    let out = deduce_invariants(&mut s, &a2, &others(&p, &a2), InferenceConfig::default()).unwrap();
    let added = added_atoms(&out[0]);
    for variant in &out[1..] {
        let neg = added_atoms(variant);
        assert!(added.iter().any(|a| neg.contains(&a.negate())));
    }
}

#[test]
fn monotonic_and_nonlinear_loops_get_nothing() {
    let mut s = session();
    let mono = loop_rule("x", "f(x) -> f(x + 1) :|: x > 0");
    assert!(deduce_invariants(&mut s, &mono, &[], InferenceConfig::default()).unwrap().is_empty());
    let nonlinear = loop_rule("x y", "f(x, y) -> f(x * y, y) :|: x > 0");
    assert!(deduce_invariants(&mut s, &nonlinear, &[], InferenceConfig::default()).unwrap().is_empty());
}
