mod common;

use common::*;
use nonterm_core::monotonicity::{
    is_conditional_invariant, is_monotonically_decreasing, is_simple_invariant, partition_guard,
};
use nonterm_core::{Atom, Constraint};

fn ge(p: nonterm_core::Poly, n: i64) -> Atom {
    Atom::ge(&p, &int(n))
}

#[test]
fn conditional_invariants() {
    let p = program(EX1);
    let (a2, a4) = (rule(&p, 2), rule(&p, 4));
    let mut s = session();
    assert!(is_conditional_invariant(&mut s, &a2, &constraint(vec![ge(v("y"), 0)])).unwrap());
    assert!(is_conditional_invariant(&mut s, &a4, &Constraint::top()).unwrap());
    let y_pos = constraint(vec![Atom::gt(&v("y"), &int(0))]);
    assert!(!is_conditional_invariant(&mut s, &a4, &y_pos).unwrap());
}

#[test]
fn simple_invariants() {
    let p = program(EX1);
    let (a2, a4) = (rule(&p, 2), rule(&p, 4));
    let mut s = session();
    assert!(is_simple_invariant(&mut s, &a2, &constraint(vec![ge(v("y"), 0)])).unwrap());
    let phi = constraint(vec![Atom::gt(&v("y"), &int(0)), Atom::le(&v("x"), &int(0))]);
    assert!(is_simple_invariant(&mut s, &a4, &phi).unwrap());
    let nt = alpha_nt();
    let twice = nonterm_core::processors::chain(&nt, &nt).unwrap();
    let phi = constraint(vec![Atom::gt(&v("y"), &int(0)), Atom::gt(&(&v("y") - &v("x")), &int(0))]);
    assert!(is_simple_invariant(&mut s, &twice, &phi).unwrap());
}

#[test]
fn monotonically_decreasing() {
    let a2 = rule(&program(EX1), 2);
    let mut s = session();
    let y_nonneg = constraint(vec![ge(v("y"), 0)]);
    let x_nonneg = constraint(vec![ge(v("x"), 0)]);
    assert!(is_monotonically_decreasing(&mut s, &a2, &y_nonneg, &x_nonneg).unwrap());
    assert!(!is_monotonically_decreasing(&mut s, &a2, &Constraint::top(), &x_nonneg).unwrap());
    assert!(is_monotonically_decreasing(&mut s, &a2, &Constraint::top(), &Constraint::top()).unwrap());
}

#[test]
fn partitions_of_ex1_loops() {
    let p = program(EX1);
    let mut s = session();
    let a4 = partition_guard(&mut s, &rule(&p, 4)).unwrap();
    assert!(a4.phi_i().is_empty() && a4.phi_md.is_empty());
    assert_eq!(a4.phi_nm, constraint(vec![Atom::gt(&v("y"), &int(0))]));
    let a2 = partition_guard(&mut s, &rule(&p, 2)).unwrap();
    assert!(a2.phi_i().is_empty() && a2.phi_md.is_empty());
    assert_eq!(a2.phi_nm, constraint(vec![ge(v("x"), 0)]));
}

#[test]
fn partition_of_unguarded_loop_is_empty() {
    let t = loop_rule("x", "f(x) -> f(x + 1)");
    let part = partition_guard(&mut session(), &t).unwrap();
    assert_eq!(part, Default::default());
    assert!(part.is_monotonic());
}

#[test]
fn partition_is_sound() {
    // every part satisfies its defining property
    let loops = [
        loop_rule("x y", "f(x, y) -> f(x - y, y + 1) :|: x >= 0 && y >= 0"),
        loop_rule("x y z", "f(x, y, z) -> f(x + 1, y - 1, z) :|: x >= 0 && y > 0 && z > x"),
        alpha_p(),
        nonterm_core::processors::chain(&alpha_neg(), &alpha_neg()).unwrap(),
    ];
    let mut s = session();
    for t in &loops {
        let part = partition_guard(&mut s, t).unwrap();
        assert!(is_conditional_invariant(&mut s, t, &part.phi_i()).unwrap(), "{}", t);
        assert!(is_simple_invariant(&mut s, t, &part.phi_si).unwrap(), "{}", t);
        assert!(is_monotonically_decreasing(&mut s, t, &part.phi_si, &part.phi_md).unwrap(), "{}", t);
        let total = part.phi_ci.len() + part.phi_si.len() + part.phi_md.len() + part.phi_nm.len();
        assert_eq!(total, t.guard.len());
    }
}
