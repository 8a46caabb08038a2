mod common;

use std::process::Command;

use common::*;
use nonterm::{parse, print, FrontendError};
use nonterm_core::{Atom, Program};
use proptest::prelude::*;

fn shape(p: &Program) -> Vec<String> {
    p.iter()
        .map(|t| format!("{} {} [{}] {:?} {}", t.source, t.args.len(), t.guard, t.update, t.target))
        .collect()
}

#[test]
fn ex1_has_four_transitions() {
    let p = program(EX1);
    assert_eq!(p.len(), 4);
    assert_eq!(p.start.name(), "start");
    assert_eq!(p.args, vec![var("x"), var("y")]);
    assert_eq!(rule(&p, 2).guard, constraint(vec![Atom::ge(&v("x"), &int(0))]));
}

#[test]
fn unsat_guard_parses() {
    let p = program("(GOAL NONTERM)\n(STARTTERM (FUNCTIONSYMBOLS f))\n(VAR x)\n(RULES\n  f(x) -> f(x) :|: 0 >= 1\n)\n");
    assert!(p.iter().any(|t| t.guard.is_trivially_false()));
}

#[test]
fn arity_mismatch() {
    let text = "(GOAL NONTERM)\n(STARTTERM (FUNCTIONSYMBOLS f))\n(VAR x y)\n(RULES\n  f(x, y) -> f(y)\n)\n";
    match parse(text) {
        Err(FrontendError::Arity { symbol, first, second }) => {
            assert_eq!((symbol.as_str(), first, second), ("f", 2, 1));
        }
        other => panic!("expected an arity error, got {:?}", other),
    }
}

#[test]
fn syntax_errors_carry_positions() {
    let text = "(GOAL NONTERM)\n(STARTTERM (FUNCTIONSYMBOLS f))\n(VAR x)\n(RULES\n  f(x) -> f(x +) \n)\n";
    match parse(text) {
        Err(FrontendError::Syntax { line, col, .. }) => assert_eq!((line, col), (5, 16)),
        other => panic!("expected a syntax error, got {:?}", other),
    }
}

#[test]
fn fractional_literals_are_rejected() {
    let text = "(GOAL NONTERM)\n(STARTTERM (FUNCTIONSYMBOLS f))\n(VAR x)\n(RULES\n  f(x) -> f(x + 1.5)\n)\n";
    assert!(matches!(parse(text), Err(FrontendError::NonIntegerLiteral { line: 5, .. })));
}

#[test]
fn com1_wrappers_are_stripped() {
    let text = "(GOAL COMPLEXITY)\n(STARTTERM (FUNCTIONSYMBOLS f))\n(VAR x)\n(RULES\n  f(x) -> Com_1(f(x - 1)) :|: x > 0\n)\n";
    let p = parse(text).unwrap();
    assert!(p.iter().any(|t| t.is_simple_loop() && t.update.get(&var("x")) == &v("x") - &int(1)));
    let bad = text.replace("Com_1(f(x - 1))", "Com_2(f(x - 1), f(x))");
    assert!(matches!(parse(&bad), Err(FrontendError::Syntax { .. })));
}

#[test]
fn start_on_a_right_hand_side_is_renamed() {
    let text = "(GOAL NONTERM)\n(STARTTERM (FUNCTIONSYMBOLS f))\n(VAR x)\n(RULES\n  f(x) -> f(x + 1)\n)\n";
    let p = parse(text).unwrap();
    assert_ne!(p.start.name(), "f");
    assert!(p.iter().all(|t| t.target != p.start));
}

#[test]
fn corpus_round_trips() {
    for entry in std::fs::read_dir(corpus_dir()).unwrap() {
        let path = entry.unwrap().path();
        let p = parse(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let q = parse(&print(&p)).unwrap();
        assert_eq!(shape(&p), shape(&q), "{}", path.display());
    }
}

fn affine() -> impl Strategy<Value = String> {
    (-3i64..=3, -3i64..=3, -4i64..=4).prop_map(|(a, b, c)| format!("{} * x + {} * y + {}", a, b, c))
}

fn rule_text() -> impl Strategy<Value = String> {
    let syms = prop::sample::select(vec!["start", "f", "g"]);
    let rel = prop::sample::select(vec![">=", ">", "<=", "<", "="]);
    (syms.clone(), syms, affine(), affine(), prop::option::of((affine(), rel, affine()))).prop_map(
        |(src, dst, e1, e2, guard)| {
            let g = guard.map(|(l, r, rr)| format!(" :|: {} {} {}", l, r, rr)).unwrap_or_default();
            format!("  {}(x, y) -> {}({}, {}){}", src, dst, e1, e2, g)
        },
    )
}

proptest! {
    #[test]
    fn print_then_parse_is_stable(rules in prop::collection::vec(rule_text(), 1..5)) {
        let text = format!("(GOAL NONTERM)\n(STARTTERM (FUNCTIONSYMBOLS start))\n(VAR x y)\n(RULES\n{}\n)\n", rules.join("\n"));
        let p = parse(&text).unwrap();
        let q = parse(&print(&p)).unwrap();
        prop_assert_eq!(shape(&p), shape(&q));
    }
}

fn nonterm(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_nonterm")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).unwrap())
}

fn corpus(name: &str) -> String {
    corpus_dir().join(name).display().to_string()
}

#[test]
fn cli_proves_ex1() {
    let (code, out) = nonterm(&["prove", &corpus("ex1.koat")]);
    assert_eq!(code, 0, "{}", out);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("NO"));
    assert!(lines.next().unwrap().starts_with("witness: start("));
    assert!(out.contains("\nmodel:\n") && out.contains("\ntrace:\n"));
}

#[test]
fn cli_reports_maybe() {
    let (code, out) = nonterm(&["prove", &corpus("countdown.koat")]);
    assert_eq!(code, 1);
    assert_eq!(out.lines().next(), Some("MAYBE"));
}

#[test]
fn cli_longer_validation_keeps_the_verdict() {
    let (code, out) = nonterm(&["prove", "--validate-steps", "5000", "--proof", "none", &corpus("ex1.koat")]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().next(), Some("NO"));
    assert!(!out.contains("proof:"));
}

#[test]
fn cli_usage_and_parse_errors() {
    assert_eq!(nonterm(&["prove"]).0, 2);
    assert_eq!(nonterm(&["frobnicate"]).0, 2);
    assert_eq!(nonterm(&["prove", "/nonexistent.koat"]).0, 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.koat");
    std::fs::write(&bad, "(RULES f(x) -> )").unwrap();
    assert_eq!(nonterm(&["prove", bad.to_str().unwrap()]).0, 2);
}

#[test]
fn cli_missing_solver_is_internal() {
    let (code, _) = nonterm(&["prove", "--solver", "/nonexistent/z3", &corpus("ex1.koat")]);
    assert_eq!(code, 3);
}

#[test]
fn cli_diffcheck() {
    let (code, out) = nonterm(&["diffcheck", "--trials", "10", &corpus("ex1.koat")]);
    assert_eq!(code, 0, "{}", out);
}
