//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use nonterm::solver::Session;
use nonterm_core::inference::{deduce_invariants, farkas_encode, InferenceConfig, Namer, Template};
use nonterm_core::monotonicity::partition_guard;
use nonterm_core::oracle::{differential_accelerate_check, expand_trace, validate_witness};
use nonterm_core::poly::{rat, Monomial, Subst};
use nonterm_core::processors::{accelerate, accelerate_mutant_no_dec, chain, make_nonterm};
use nonterm_core::recurrence::{solve_update, Unsolvable};
use nonterm_core::smt::{check_valid_implication, Formula, NoDeadline, SmtSolver, SolverVerdict};
use nonterm_core::strategy::{added_atoms, equivalent, preprocess_simple_loop, prove, ProverConfig, Verdict};
use nonterm_core::{Atom, Configuration, Constraint, FunSym, Poly, Program, Transition, Update};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn others(p: &Program, t: &Transition) -> Vec<Transition> {
    p.iter().filter(|u| u.id != t.id).cloned().collect()
}

fn corpus_files() -> Vec<std::path::PathBuf> {
    let mut files: Vec<_> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "koat"))
        .collect();
    files.sort();
    files
}

fn revalidate(p: &Program, verdict: &Verdict, steps: usize) -> Result<bool, String> {
    match verdict {
        Verdict::No(proof) => validate_witness(p, &proof.witness, &proof.plan, steps)
            .map(|()| true)
            .map_err(|e| format!("unvalidated NO: {}", e)),
        Verdict::Maybe(_) => Ok(false),
    }
}

fn ex1_end_to_end(s: &mut Session) -> Check {
    let p = program(EX1);
    let t0 = Instant::now();
    let outcome = prove(s, &p, ProverConfig::default(), &NoDeadline);
    let elapsed = t0.elapsed();
    ensure(revalidate(&p, &outcome.verdict, 1000)?, "Ex. 1 gave MAYBE")?;
    ensure(elapsed < Duration::from_secs(5), format!("took {:?}", elapsed))?;

    let t = ex5_transition(s);
    let witness = Configuration { symbol: FunSym::new("start"), values: vec![0.into(), 0.into()] };
    let model = with_counters(&t, &[("x", 0), ("y", 0)], 2);
    let plan = expand_trace(&t, &witness, &model).map_err(|e| format!("{:?}", e))?;
    validate_witness(&p, &witness, &plan, 1000).map_err(|e| format!("start(0, 0) rejected: {}", e))?;
    Ok(format!("NO in {:.2}s, start(0, 0) with k = 2 accepted", elapsed.as_secs_f64()))
}

fn power(u: &Update, n: u64) -> Update {
    (0..n).fold(Update::identity(), |acc, _| acc.compose(u))
}

/// Checks `instantiate(n) == u^n` for n = 1..10, self-chaining first if the
/// update alternates signs.
fn exact(u: &Update, args: &[nonterm_core::Var]) -> Result<(), String> {
    let k = var("k");
    let (base, cf) = match solve_update(u, args, &k) {
        Ok(cf) => (u.clone(), cf),
        Err(Unsolvable::SignAlternation(_)) => {
            let twice = u.compose(u);
            let cf = solve_update(&twice, args, &k).map_err(|e| format!("{:?} on {:?}", e, twice))?;
            (twice, cf)
        }
        Err(e) => return Err(format!("{:?} on {:?}", e, u)),
    };
    for n in 1..=10 {
        if cf.instantiate(n) != power(&base, n) {
            return Err(format!("n = {} differs on {:?}", n, base));
        }
    }
    Ok(())
}

fn random_triangular(rng: &mut ChaCha8Rng) -> (Update, Vec<nonterm_core::Var>) {
    let n = rng.gen_range(1..=3);
    let names = ["x", "y", "z"];
    let args: Vec<_> = names[..n].iter().map(|x| var(x)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut map = Subst::new();
    for (pos, &x) in order.iter().enumerate() {
        let mut p = Poly::int(rng.gen_range(-3..=3));
        for &y in &order[..=pos] {
            p = p + Poly::term(Monomial::var(&args[y]), rat(rng.gen_range(-3..=3), 1));
        }
        map.insert(args[x].clone(), p);
    }
    (Update::from_map(map), args)
}

fn recurrence_exactness(s: &mut Session) -> Check {
    let mut loops = 0;
    for path in corpus_files() {
        let p = nonterm::parse(&std::fs::read_to_string(&path).unwrap()).unwrap();
        for t in p.iter().filter(|t| t.is_simple_loop()) {
            let direct = exact(&t.update, &t.args);
            if direct.is_err() {
                let pre = preprocess_simple_loop(t);
                exact(&pre.update, &pre.args).map_err(|e| format!("{}: {}", path.display(), e))?;
            }
            loops += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let (u, args) = random_triangular(&mut rng);
        exact(&u, &args)?;
    }
    let (a2s, _) = ex3_accelerated(s);
    let cf = solve_update(&a2s.update, &a2s.args, &var("k")).map_err(|e| format!("{:?}", e))?;
    let k = v("k");
    let mu_x = &(&(&v("x") - &(&v("y") * &k)) - &k.pow(2).scale(&rat(1, 2))) + &k.scale(&rat(1, 2));
    let got = cf.polynomial_subst().ok_or("Ex. 3 closed form is not polynomial")?;
    ensure(got.get(&var("x")) == Some(&mu_x), format!("mu_x = {:?}", got.get(&var("x"))))?;
    ensure(got.get(&var("y")) == Some(&(&v("y") + &k)), "mu_y differs")?;
    Ok(format!("{} corpus loops, 100 random loops, Ex. 3 mu verbatim", loops))
}

/// A simple loop over x, y, z whose guard is monotonic by construction:
/// `y >= cy` is a simple invariant, the z atom is si or md depending on the
/// drift direction, and the x atom is ci (x grows) or md (x shrinks).
fn monotonic_loop(rng: &mut ChaCha8Rng) -> Transition {
    let a = rng.gen_range(0..=3);
    let d = rng.gen_range(-3..=3);
    let cy = rng.gen_range(-4..=4);
    let (cx, cz) = (rng.gen_range(-4..=4), rng.gen_range(-4..=4));
    let growing = rng.gen_bool(0.5);
    let s = if growing { rng.gen_range(0..=2) } else { rng.gen_range(-2..=0) };
    // s * y + b keeps one sign for every y >= cy
    let b = if growing { -s * cy + rng.gen_range(0..=3) } else { -s * cy - rng.gen_range(0..=3) };
    let z_atom = if rng.gen_bool(0.5) { format!("z >= {}", cz) } else { format!("z <= {}", cz) };
    let rule = format!(
        "f(x, y, z) -> f(x + {} * y + {}, y + {}, z + {}) :|: x >= {} && y >= {} && {}",
        s, b, a, d, cx, cy, z_atom
    );
    loop_rule("x y z", &rule)
}

fn accelerate_with_k(s: &mut Session, t: &Transition) -> Result<Transition, String> {
    let part = partition_guard(s, t).map_err(|e| format!("{:?}", e))?;
    ensure(part.is_monotonic(), format!("guard of {} is not monotonic", t))?;
    let cf = solve_update(&t.update, &t.args, &var("k")).map_err(|e| format!("{:?}", e))?;
    accelerate(t, &part, &cf, &var("k")).map_err(|e| format!("{}: {:?}", t, e))
}

fn acceleration_differential(s: &mut Session) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut loops: Vec<(String, Transition)> = (0..200).map(|i| (format!("random {}", i), monotonic_loop(&mut rng))).collect();
    let (a2s, _) = ex3_accelerated(s);
    loops.push(("alpha_2 strengthened".into(), a2s.clone()));
    for (name, t) in [("alpha_neg", alpha_neg()), ("alpha_const", alpha_const()), ("alpha_p", alpha_p())] {
        loops.push((format!("{} twice", name), chain(&t, &t).unwrap()));
    }
    let (mut passed, mut skipped) = (0, 0);
    for (i, (name, t)) in loops.iter().enumerate() {
        let accel = accelerate_with_k(s, t).map_err(|e| format!("{}: {}", name, e))?;
        let report = differential_accelerate_check(s, t, &accel, 5, i as u64).map_err(|e| format!("{:?}", e))?;
        ensure(report.failed == 0, format!("{}: {:?}", name, report.failures))?;
        passed += report.passed;
        skipped += report.skipped;
    }
    ensure(passed > 0, "no trial was run")?;

    let part = partition_guard(s, &a2s).map_err(|e| format!("{:?}", e))?;
    let cf = solve_update(&a2s.update, &a2s.args, &var("k")).map_err(|e| format!("{:?}", e))?;
    let mutant = accelerate_mutant_no_dec(&a2s, &part, &cf, &var("k")).map_err(|e| format!("{:?}", e))?;
    let caught = differential_accelerate_check(s, &a2s, &mutant, 50, 1).map_err(|e| format!("{:?}", e))?.failed;
    ensure(caught >= 1, "the mutant without dec survived")?;
    Ok(format!(
        "{} loops, {} trials passed, {} skipped, mutant caught {} times",
        loops.len(),
        passed,
        skipped,
        caught
    ))
}

fn inference_reproduction(s: &mut Session) -> Check {
    let p = program(EX1);
    let err = |e: nonterm_core::smt::SmtError| format!("{:?}", e);
    let a4 = rule(&p, 4);
    let out4 = deduce_invariants(s, &a4, &others(&p, &a4), InferenceConfig::default()).map_err(err)?;
    let a4s = out4.first().ok_or("nothing inferred for alpha_4")?;
    let x_nonpos = constraint(vec![Atom::le(&v("x"), &int(0))]);
    ensure(equivalent(s, &Constraint::new(added_atoms(a4s)), &x_nonpos).map_err(err)?, "alpha_4 strengthening is not x <= 0")?;
    make_nonterm(s, a4s).map_err(|e| format!("nonterm not applicable: {:?}", e))?;

    let a2 = rule(&p, 2);
    let out2 = deduce_invariants(s, &a2, &others(&p, &a2), InferenceConfig::default()).map_err(err)?;
    let a2s = out2.first().ok_or("nothing inferred for alpha_2")?;
    let y_nonneg = constraint(vec![Atom::ge(&v("y"), &int(0))]);
    ensure(equivalent(s, &Constraint::new(added_atoms(a2s)), &y_nonneg).map_err(err)?, "alpha_2 strengthening is not y >= 0")?;
    accelerate_with_k(s, a2s)?;
    Ok("alpha_4 gets x <= 0 (nonterm applies), alpha_2 gets y >= 0 (accelerate applies)".into())
}

fn random_affine(rng: &mut ChaCha8Rng, vars: &[&str]) -> Poly {
    vars.iter()
        .fold(Poly::int(rng.gen_range(-5..=5)), |acc, x| &acc + &v(x).scale(&rat(rng.gen_range(-3..=3), 1)))
}

fn farkas_soundness(s: &mut Session) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let vars = ["x", "y"];
    let set = vars.iter().map(|x| var(x)).collect();
    let (mut confirmed, mut attempts) = (0, 0);
    while confirmed < 100 {
        attempts += 1;
        if attempts > 2000 {
            return Err(format!("only {} satisfiable encodings in 2000 attempts", confirmed));
        }
        let mut namer = Namer::new();
        let tau = Template::new(&mut namer, &set);
        // pin one coefficient so that the conclusion is not trivially 0 >= 0
        let pinned = Formula::eq(&Poly::var(&tau.coeffs[&var(vars[rng.gen_range(0..2)])]) - &int(rng.gen_range(1..=3) * if rng.gen_bool(0.5) { 1 } else { -1 }));
        let (premise, conclusion) = if rng.gen_bool(0.5) {
            let premise: Vec<Poly> = (0..rng.gen_range(1..=3)).map(|_| random_affine(&mut rng, &vars)).collect();
            (premise, tau.poly.clone())
        } else {
            let update: Subst = vars.iter().map(|x| (var(x), random_affine(&mut rng, &vars))).collect();
            (vec![tau.poly.clone()], tau.poly.subst(&update))
        };
        let encoding = farkas_encode(&mut namer, &premise, &conclusion).map_err(|_| "linear input rejected")?;
        let SolverVerdict::Sat(model) = s.check_sat(&Formula::and(vec![encoding, pinned])).map_err(|e| format!("{:?}", e))? else {
            continue;
        };
        let fix: Subst = tau
            .params()
            .map(|p| (p.clone(), Poly::from_int(model.get(p).cloned().unwrap_or_default())))
            .collect();
        let premise = Constraint::new(premise.iter().map(|q| Atom::ge0(q.subst(&fix))).collect());
        let conclusion = Constraint::new(vec![Atom::ge0(conclusion.subst(&fix))]);
        if !check_valid_implication(s, &premise, &conclusion).map_err(|e| format!("{:?}", e))? {
            return Err(format!("false validity claim: {} => {}", premise, conclusion));
        }
        confirmed += 1;
    }
    Ok(format!("100 of 100 encodings confirmed ({} attempts)", attempts))
}

const EXPECTED_NO: [&str; 9] = ["const", "ex1", "exp", "fixpoint", "neg", "nested", "nt", "perm", "temps"];

fn corpus_verdicts(s: &mut Session) -> Check {
    let t0 = Instant::now();
    let (mut no, mut maybe) = (0, 0);
    for path in corpus_files() {
        let name = path.file_stem().unwrap().to_string_lossy().into_owned();
        let p = nonterm::parse(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let outcome = prove(s, &p, ProverConfig::default(), &NoDeadline);
        let is_no = revalidate(&p, &outcome.verdict, 1000).map_err(|e| format!("{}: {}", name, e))?;
        ensure(is_no == EXPECTED_NO.contains(&name.as_str()), format!("{}: unexpected verdict", name))?;
        if is_no {
            no += 1;
        } else {
            maybe += 1;
        }
    }
    let elapsed = t0.elapsed();
    ensure((no, maybe) == (9, 3), format!("NO {} / MAYBE {}", no, maybe))?;
    ensure(elapsed < Duration::from_secs(60), format!("took {:?}", elapsed))?;
    Ok(format!("NO 9 / MAYBE 3 in {:.2}s", elapsed.as_secs_f64()))
}

fn random_program(rng: &mut ChaCha8Rng) -> String {
    let syms = ["start", "f", "g", "h"];
    let mut rules = Vec::new();
    for _ in 0..rng.gen_range(2..=6) {
        let src = syms[rng.gen_range(0..syms.len() - 1)];
        let dst = syms[rng.gen_range(1..syms.len())];
        let args: Vec<String> = (0..2).map(|_| format!("{}", random_affine(rng, &["x", "y"]))).collect();
        let guard: Vec<String> = (0..rng.gen_range(0..=2))
            .map(|_| format!("{} >= 0", random_affine(rng, &["x", "y"])))
            .collect();
        let guard = if guard.is_empty() { String::new() } else { format!(" :|: {}", guard.join(" && ")) };
        rules.push(format!("  {}(x, y) -> {}({}){}", src, dst, args.join(", "), guard));
    }
    format!("(GOAL NONTERM)\n(STARTTERM (FUNCTIONSYMBOLS start))\n(VAR x y)\n(RULES\n{}\n)\n", rules.join("\n"))
}

fn bench_smoke(s: &mut Session) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..24 {
        std::fs::write(dir.path().join(format!("random{:02}.koat", i)), random_program(&mut rng)).unwrap();
    }
    let out = Command::new(env!("CARGO_BIN_EXE_nonterm"))
        .args(["bench", "--timeout", "20", "--jobs", "4"])
        .arg(dir.path())
        .output()
        .map_err(|e| e.to_string())?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    ensure(out.status.code() == Some(0), format!("bench exited with {:?}\n{}", out.status.code(), stdout))?;
    let summary = stdout.lines().last().unwrap_or_default().to_owned();
    ensure(summary.ends_with("errors 0"), format!("bench reported errors: {}", summary))?;
    let mut no = 0;
    for i in 0..24 {
        let path = dir.path().join(format!("random{:02}.koat", i));
        let p = nonterm::parse(&std::fs::read_to_string(&path).unwrap()).map_err(|e| e.to_string())?;
        let outcome = prove(s, &p, ProverConfig::default(), &NoDeadline);
        if revalidate(&p, &outcome.verdict, 2000).map_err(|e| format!("random{:02}: {}", i, e))? {
            no += 1;
        }
    }
    Ok(format!("{}, every NO of {} revalidated with 2000 steps", summary, no))
}

fn prove_full(path: &Path) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_nonterm"))
        .args(["prove", "--proof", "full"])
        .arg(path)
        .output()
        .map_err(|e| e.to_string())?;
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn determinism(_: &mut Session) -> Check {
    let files = corpus_files();
    for path in &files {
        let (a, b) = (prove_full(path)?, prove_full(path)?);
        ensure(a == b, format!("{} differs between runs", path.display()))?;
    }
    Ok(format!("{} files, identical output twice", files.len()))
}

fn main() {
    let mut s = session();
    let criteria: [(&str, fn(&mut Session) -> Check); 8] = [
        ("Ex. 1 end to end", ex1_end_to_end),
        ("recurrence exactness", recurrence_exactness),
        ("acceleration differential", acceleration_differential),
        ("invariant inference", inference_reproduction),
        ("Farkas soundness", farkas_soundness),
        ("corpus verdicts", corpus_verdicts),
        ("bench smoke", bench_smoke),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check(&mut s) {
            Ok(detail) => println!("PASS criterion {}: {} ({})", i + 1, name, detail),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {}: {} ({})", i + 1, name, why);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
