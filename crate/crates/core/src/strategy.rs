//! The main loop: prune, eliminate simple loops, chain with predecessors,
//! eliminate locations, and finally extract and validate a witness.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::constraint::{Atom, Constraint};
use crate::inference::{deduce_invariants, InferenceConfig};
use crate::its::{Configuration, FunSym, Program, TransId, Transition};
use crate::monotonicity::partition_guard;
use crate::oracle::{configuration_of, counters, expand_trace, validate_witness, ReplayPlan};
use crate::poly::{Poly, Valuation, Var};
use crate::processors::{
    accelerate, accelerate_fixed, chain, eliminate_temps, make_fixpoint, make_nonterm, sign_alternating_var, unstable_vars,
    ProcessorError,
};
use crate::recurrence::solve_update;
use crate::smt::{is_satisfiable, Deadline, Formula, SmtError, SmtSolver, SolverVerdict};

/// Iteration counts tried when a closed form has exponential terms, or when
/// the solver cannot decide a final guard.
pub const UNROLL_COUNTS: [u32; 12] = [1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64];

#[derive(Clone, Copy, Debug)]
pub struct ProverConfig {
    /// How often one derivation may pass through invariant inference.
    pub strengthen_budget: u32,
    /// Original steps of the recurrent loop replayed during validation.
    pub validate_steps: usize,
    /// Prefer small template coefficients.
    pub minimize: bool,
    /// Give up once the program grows beyond this many transitions.
    pub max_transitions: usize,
}

impl Default for ProverConfig {
    fn default() -> Self {
        ProverConfig { strengthen_budget: 3, validate_steps: 1000, minimize: true, max_transitions: 2000 }
    }
}

/// A validated non-termination proof.
#[derive(Clone, Debug)]
pub struct NoProof {
    pub witness: Configuration,
    /// The start-to-sink transition whose guard the model satisfies.
    pub transition: Transition,
    pub model: Valuation,
    pub plan: ReplayPlan,
}

#[derive(Clone, Debug)]
pub enum Verdict {
    No(NoProof),
    Maybe(String),
}

impl Verdict {
    pub fn is_no(&self) -> bool {
        matches!(self, Verdict::No(_))
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub verdict: Verdict,
    pub log: Vec<String>,
}

/// What happened to one simple loop.
#[derive(Debug)]
pub enum Elimination {
    /// Sink transitions or accelerated loops to be chained with predecessors.
    Results(&'static str, Vec<Transition>),
    /// Strengthened variants to be processed as simple loops again.
    Variants(Vec<Transition>),
    Dropped,
}

struct Run<'a, S: ?Sized, D: ?Sized> {
    solver: &'a mut S,
    deadline: &'a D,
    cfg: ProverConfig,
    program: Program,
    log: Vec<String>,
}

/// Runs the prover on `p`. Solver errors end the run with MAYBE.
pub fn prove<S: SmtSolver + ?Sized, D: Deadline + ?Sized>(
    solver: &mut S,
    p: &Program,
    cfg: ProverConfig,
    deadline: &D,
) -> Outcome {
    let mut run = Run { solver, deadline, cfg, program: p.clone(), log: Vec::new() };
    let verdict = match run.main(p) {
        Ok(v) => v,
        Err(e) => Verdict::Maybe(e.to_string()),
    };
    Outcome { verdict, log: run.log }
}

/// Drops transitions whose source is unreachable from start or whose guard
/// is unsatisfiable. Unknown keeps the transition.
pub fn prune<S: SmtSolver + ?Sized>(s: &mut S, p: &mut Program) -> Result<Vec<TransId>, SmtError> {
    let reachable = p.reachable_symbols();
    let mut removed = Vec::new();
    let mut keep = BTreeSet::new();
    for t in p.iter() {
        if reachable.contains(&t.source) && is_satisfiable(s, &t.guard)? != Some(false) {
            keep.insert(t.id);
        } else {
            removed.push(t.id);
        }
    }
    p.retain(|t| keep.contains(&t.id));
    Ok(removed)
}

/// Self-chains a sign-alternating loop, then keeps appending the original
/// loop while that shrinks the set of unstable variables.
pub fn preprocess_simple_loop(alpha: &Transition) -> Transition {
    let mut cur = alpha.clone();
    if sign_alternating_var(&cur).is_some() {
        if let Ok(twice) = chain(&cur, &cur) {
            cur = twice;
        }
    }
    let orig = cur.clone();
    loop {
        let Ok(next) = chain(&cur, &orig) else { break };
        if unstable_vars(&next).len() < unstable_vars(&cur).len() {
            cur = next;
        } else {
            break;
        }
    }
    cur
}

/// Counter name not used by `t`.
fn fresh_counter(t: &Transition) -> Var {
    let vs = t.vars();
    Var::fresh("k", |v| vs.contains(v))
}

/// Tries Nonterm, Nonterm on the loop chained with itself, Fixpoint and
/// Accelerate, in that order; falls back to invariant inference.
pub fn eliminate_simple_loop<S: SmtSolver + ?Sized>(
    s: &mut S,
    alpha: &Transition,
    ctx: &[Transition],
    cfg: &ProverConfig,
) -> Result<Elimination, SmtError> {
    let lift = |r: Result<Transition, ProcessorError>| -> Result<Option<Transition>, SmtError> {
        match r {
            Ok(t) => Ok(Some(t)),
            Err(ProcessorError::Inapplicable(_)) => Ok(None),
            Err(ProcessorError::Smt(e)) => Err(e),
        }
    };
    // A recurrent set or fixpoint that no predecessor can enter is useless
    // and would block invariant inference, so it does not count as applicable.
    let useful = |s: &mut S, r: Option<Transition>| -> Result<Option<Transition>, SmtError> {
        match r {
            Some(t) if enterable(s, &t, ctx)? => Ok(Some(t)),
            _ => Ok(None),
        }
    };
    let r = lift(make_nonterm(s, alpha))?;
    if let Some(t) = useful(s, r)? {
        return Ok(Elimination::Results("nonterm", alloc::vec![t]));
    }
    if let Ok(twice) = chain(alpha, alpha) {
        if !twice.guard.is_trivially_false() {
            let r = lift(make_nonterm(s, &twice))?;
            if let Some(t) = useful(s, r)? {
                return Ok(Elimination::Results("nonterm of the loop chained with itself", alloc::vec![t]));
            }
        }
    }
    let r = lift(make_fixpoint(s, alpha))?;
    if let Some(t) = useful(s, r)? {
        return Ok(Elimination::Results("fixpoint", alloc::vec![t]));
    }
    let part = partition_guard(s, alpha)?;
    if part.is_monotonic() {
        let k = fresh_counter(alpha);
        if let Ok(cf) = solve_update(&alpha.update, &alpha.args, &k) {
            if cf.is_polynomial() {
                if let Some(t) = lift(accelerate(alpha, &part, &cf, &k))? {
                    return Ok(Elimination::Results("accelerate", alloc::vec![t]));
                }
            } else {
                let mut out = Vec::new();
                for n in UNROLL_COUNTS {
                    if let Some(t) = lift(accelerate_fixed(alpha, &part, &cf, n))? {
                        if !t.guard.is_trivially_false() {
                            out.push(t);
                        }
                    }
                }
                if !out.is_empty() {
                    return Ok(Elimination::Results("accelerate by fixed unrolling", out));
                }
            }
        }
        return Ok(Elimination::Dropped);
    }
    if alpha.strengthen_rounds() >= cfg.strengthen_budget {
        return Ok(Elimination::Dropped);
    }
    let variants = deduce_invariants(s, alpha, ctx, InferenceConfig { minimize: cfg.minimize })?;
    if variants.is_empty() {
        Ok(Elimination::Dropped)
    } else {
        Ok(Elimination::Variants(variants))
    }
}

/// Whether some non-loop predecessor chains with `t` into a transition whose
/// guard is not known to be unsatisfiable. Loops without predecessors pass.
fn enterable<S: SmtSolver + ?Sized>(s: &mut S, t: &Transition, ctx: &[Transition]) -> Result<bool, SmtError> {
    let preds: Vec<&Transition> = ctx.iter().filter(|b| b.source != b.target && b.target == t.source).collect();
    if preds.is_empty() {
        return Ok(true);
    }
    for b in preds {
        if let Ok(c) = chain(b, t) {
            if !c.guard.is_trivially_false() && is_satisfiable(s, &c.guard)? != Some(false) {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// `beta . result` for every non-loop `beta` entering `result`'s source.
pub fn chain_with_predecessors(result: &Transition, ctx: &[Transition]) -> Vec<Transition> {
    ctx.iter()
        .filter(|b| b.source != b.target && b.target == result.source)
        .filter_map(|b| chain(b, result).ok())
        .filter(|t| !t.guard.is_trivially_false())
        .collect()
}

/// Location with the fewest in x out combinations (ties by name), excluding
/// start and sink.
pub fn choose_location(p: &Program) -> Option<FunSym> {
    let mut best: Option<(usize, FunSym)> = None;
    for f in p.symbols() {
        if f == p.start || f.is_sink() {
            continue;
        }
        let ins = p.iter().filter(|t| t.target == f).count();
        let outs = p.iter().filter(|t| t.source == f).count();
        if ins == 0 && outs == 0 {
            continue;
        }
        let cost = ins * outs;
        if best.as_ref().map_or(true, |(c, _)| cost < *c) {
            best = Some((cost, f));
        }
    }
    best.map(|(_, f)| f)
}

/// Chains every transition entering `f` with every transition leaving it,
/// then removes all transitions touching `f`.
pub fn eliminate_location(p: &mut Program, f: &FunSym) -> Vec<Transition> {
    let ins: Vec<Transition> = p.iter().filter(|t| t.target == *f && t.source != *f).cloned().collect();
    let outs: Vec<Transition> = p.iter().filter(|t| t.source == *f && t.target != *f).cloned().collect();
    let mut added = Vec::new();
    for a in &ins {
        for b in &outs {
            if let Ok(t) = chain(a, b) {
                if !t.guard.is_trivially_false() {
                    added.push(t);
                }
            }
        }
    }
    p.retain(|t| t.source != *f && t.target != *f);
    let mut out = Vec::new();
    for t in added {
        let id = p.add(t);
        out.push(p.get(id).unwrap().clone());
    }
    out
}

impl<S: SmtSolver + ?Sized, D: Deadline + ?Sized> Run<'_, S, D> {
    fn note(&mut self, line: String) {
        self.log.push(line);
    }

    fn main(&mut self, original: &Program) -> Result<Verdict, SmtError> {
        let initial: Vec<Transition> = self.program.transitions().to_vec();
        for t in initial {
            let e = eliminate_temps(t.clone());
            if e.temps.len() < t.temps.len() {
                self.program.remove(t.id);
                let desc = format!("{}", e);
                let id = self.program.add(e);
                self.note(format!("substitute {}: {} as {}", t.id, id, desc));
            }
        }
        while !self.program.is_simplified() {
            if self.deadline.expired() {
                return Ok(Verdict::Maybe("timeout".into()));
            }
            let removed = prune(self.solver, &mut self.program)?;
            if !removed.is_empty() {
                let ids: Vec<String> = removed.iter().map(|i| i.to_string()).collect();
                self.note(format!("prune: removed {}", ids.join(", ")));
            }
            let mut later: Vec<Transition> = Vec::new();
            let mut processed = false;
            while let Some(id) = self.next_simple_loop() {
                if self.deadline.expired() {
                    return Ok(Verdict::Maybe("timeout".into()));
                }
                processed = true;
                let alpha = self.program.remove(id).unwrap();
                self.eliminate(alpha, &mut later)?;
                if self.program.len() + later.len() > self.cfg.max_transitions {
                    return Ok(Verdict::Maybe("too many transitions".into()));
                }
            }
            for t in later {
                if is_satisfiable(self.solver, &t.guard)? == Some(false) {
                    continue;
                }
                let desc = format!("{}", t);
                let label = t.origin_label();
                let id = self.program.add(t);
                self.note(format!("add {}: {} by {}", id, desc, label));
            }
            if self.program.is_simplified() {
                break;
            }
            match choose_location(&self.program) {
                Some(f) => {
                    let added = eliminate_location(&mut self.program, &f);
                    let ids: Vec<String> = added.iter().map(|t| t.id.to_string()).collect();
                    self.note(format!("eliminate {}: added {}", f, if ids.is_empty() { "nothing".into() } else { ids.join(", ") }));
                }
                None if !processed => return Ok(Verdict::Maybe("no progress".into())),
                None => {}
            }
            if self.program.len() > self.cfg.max_transitions {
                return Ok(Verdict::Maybe("too many transitions".into()));
            }
        }
        self.find_witness(original)
    }

    fn next_simple_loop(&self) -> Option<TransId> {
        self.program.iter().filter(|t| t.is_simple_loop()).map(|t| t.id).min()
    }

    fn eliminate(&mut self, alpha: Transition, later: &mut Vec<Transition>) -> Result<(), SmtError> {
        let id = alpha.id;
        let pre = preprocess_simple_loop(&alpha);
        if pre.guard.len() != alpha.guard.len() || pre.update != alpha.update {
            self.note(format!("loop {}: chained with itself to {}", id, pre));
        }
        if is_satisfiable(self.solver, &pre.guard)? == Some(false) {
            self.note(format!("loop {}: dropped, guard unsatisfiable", id));
            return Ok(());
        }
        let ctx: Vec<Transition> = self.program.transitions().to_vec();
        match eliminate_simple_loop(self.solver, &pre, &ctx, &self.cfg)? {
            Elimination::Results(how, rs) => {
                for r in rs {
                    self.note(format!("loop {}: {} gives {}", id, how, r));
                    later.extend(chain_with_predecessors(&r, &ctx));
                }
            }
            Elimination::Variants(vs) => {
                let mut ids = Vec::new();
                for v in vs {
                    let desc = format!("{}", v);
                    let nid = self.program.add(v);
                    ids.push(format!("{}: {}", nid, desc));
                }
                self.note(format!("loop {}: strengthened to {}", id, ids.join("; ")));
            }
            Elimination::Dropped => self.note(format!("loop {}: dropped", id)),
        }
        Ok(())
    }

    fn find_witness(&mut self, original: &Program) -> Result<Verdict, SmtError> {
        let sinks: Vec<Transition> = self.program.iter().filter(|t| t.targets_sink()).cloned().collect();
        if sinks.is_empty() {
            return Ok(Verdict::Maybe("no transition to the sink remains".into()));
        }
        let mut reason = String::from("no validated witness");
        for t in sinks {
            if self.deadline.expired() {
                return Ok(Verdict::Maybe("timeout".into()));
            }
            match self.witness_for(original, &t)? {
                Ok(proof) => {
                    self.note(format!("witness {} from {}", proof.witness, t.id));
                    return Ok(Verdict::No(proof));
                }
                Err(why) => {
                    self.note(format!("sink transition {}: {}", t.id, why));
                    reason = why;
                }
            }
        }
        Ok(Verdict::Maybe(reason))
    }

    /// Models tried for one sink transition: the guard alone, then with
    /// counters bounded, then with counters fixed to each unroll count.
    fn witness_for(&mut self, original: &Program, t: &Transition) -> Result<Result<NoProof, String>, SmtError> {
        let guard = Formula::constraint(&t.guard);
        let ks = counters(t);
        let mut attempts: Vec<Formula> = alloc::vec![guard.clone()];
        if !ks.is_empty() {
            let bounded = ks.iter().map(|k| Formula::ge(&Poly::int(64) - &Poly::var(k))).collect();
            attempts.push(Formula::and(alloc::vec![guard.clone(), Formula::and(bounded)]));
        }
        let mut last = String::from("guard unsatisfiable");
        let mut unknown = false;
        for f in attempts {
            match self.solver.check_sat(&f)? {
                SolverVerdict::Sat(model) => match self.check_model(original, t, model) {
                    Ok(p) => return Ok(Ok(p)),
                    Err(e) => last = e,
                },
                SolverVerdict::Unsat => return Ok(Err(last)),
                SolverVerdict::Unknown => unknown = true,
            }
        }
        if unknown && !ks.is_empty() {
            for n in UNROLL_COUNTS {
                let fixed = ks.iter().map(|k| Formula::eq(&Poly::var(k) - &Poly::int(i64::from(n)))).collect();
                let f = Formula::and(alloc::vec![guard.clone(), Formula::and(fixed)]);
                if let SolverVerdict::Sat(model) = self.solver.check_sat(&f)? {
                    match self.check_model(original, t, model) {
                        Ok(p) => return Ok(Ok(p)),
                        Err(e) => last = e,
                    }
                }
            }
        }
        if unknown {
            last = format!("solver returned unknown ({})", last);
        }
        Ok(Err(last))
    }

    fn check_model(&self, original: &Program, t: &Transition, model: Valuation) -> Result<NoProof, String> {
        let witness = configuration_of(&original.start, &original.args, &model);
        let plan = expand_trace(t, &witness, &model).map_err(|e| e.to_string())?;
        validate_witness(original, &witness, &plan, self.cfg.validate_steps).map_err(|e| e.0)?;
        Ok(NoProof { witness, transition: t.clone(), model, plan })
    }
}

/// Semantic equivalence of two constraints, as far as the solver can tell.
pub fn equivalent<S: SmtSolver + ?Sized>(s: &mut S, a: &Constraint, b: &Constraint) -> Result<bool, SmtError> {
    Ok(crate::smt::check_valid_implication(s, a, b)? && crate::smt::check_valid_implication(s, b, a)?)
}

/// Atoms of `t`'s guard that the derivation added on top of the original guards.
pub fn added_atoms(t: &Transition) -> Vec<Atom> {
    match &t.origin {
        crate::its::Origin::Strengthened { added, .. } => added.iter().cloned().collect(),
        _ => Vec::new(),
    }
}

/// Transitions grouped by source symbol, for display.
pub fn by_source(p: &Program) -> BTreeMap<FunSym, Vec<TransId>> {
    let mut out: BTreeMap<FunSym, Vec<TransId>> = BTreeMap::new();
    for t in p.iter() {
        out.entry(t.source.clone()).or_default().push(t.id);
    }
    out
}
