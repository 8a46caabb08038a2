//! Integer transition systems: transitions, programs, configurations.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::constraint::Constraint;
use crate::poly::{subst_map, Int, Poly, Subst, Var};

/// Function symbol (program location).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FunSym(Arc<str>);

pub const SINK_NAME: &str = "∞";

impl FunSym {
    pub fn new(name: impl AsRef<str>) -> Self {
        FunSym(Arc::from(name.as_ref()))
    }

    pub fn sink() -> Self {
        FunSym::new(SINK_NAME)
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    pub fn is_sink(&self) -> bool {
        &*self.0 == SINK_NAME
    }
}

impl fmt::Display for FunSym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for FunSym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct TransId(pub u32);

impl fmt::Display for TransId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// Update of a transition. Variables outside the domain keep their value;
/// identity entries are never stored.
#[derive(Clone, PartialEq, Eq, Default, Hash)]
pub struct Update(Subst);

impl Update {
    pub fn identity() -> Self {
        Update(Subst::new())
    }

    pub fn from_map(map: Subst) -> Self {
        Update(
            map.into_iter()
                .filter(|(v, p)| *p != Poly::var(v))
                .collect(),
        )
    }

    pub fn get(&self, v: &Var) -> Poly {
        self.0.get(v).cloned().unwrap_or_else(|| Poly::var(v))
    }

    pub fn entries(&self) -> &Subst {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_empty()
    }

    pub fn domain(&self) -> impl Iterator<Item = &Var> {
        self.0.keys()
    }

    pub fn apply(&self, p: &Poly) -> Poly {
        p.subst(&self.0)
    }

    pub fn apply_constraint(&self, c: &Constraint) -> Constraint {
        c.subst(&self.0)
    }

    /// Update of performing `self` first and `second` afterwards:
    /// `x -> second(x)` with `self` substituted into it.
    pub fn compose(&self, second: &Update) -> Update {
        let mut out = subst_map(&second.0, &self.0);
        for (v, p) in &self.0 {
            if !second.0.contains_key(v) {
                out.insert(v.clone(), p.clone());
            }
        }
        Update::from_map(out)
    }

    pub fn rename(&self, r: &BTreeMap<Var, Var>) -> Update {
        Update::from_map(
            self.0
                .iter()
                .map(|(v, p)| (r.get(v).unwrap_or(v).clone(), p.rename(r)))
                .collect(),
        )
    }

    /// Substitutes into every entry (keys kept).
    pub fn subst(&self, s: &Subst) -> Update {
        Update::from_map(subst_map(&self.0, s))
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        for (v, p) in &self.0 {
            out.insert(v.clone());
            p.collect_vars(&mut out);
        }
        out
    }

    pub fn is_integer_valued(&self) -> bool {
        self.0.values().all(Poly::is_integer_valued)
    }
}

impl fmt::Debug for Update {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (v, p)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{} -> {}", v, p)?;
        }
        f.write_str("}")
    }
}

/// How a transition was derived. Children are kept alive here so a proof can
/// be replayed after the intermediate transitions left the program.
#[derive(Clone, Debug)]
pub enum Origin {
    Original,
    /// `first` then `second`; `renaming` maps temps of `second` to their
    /// names in the chained transition.
    Chained {
        first: Arc<Transition>,
        second: Arc<Transition>,
        renaming: BTreeMap<Var, Var>,
    },
    /// `counter` iterations of `base`.
    Accelerated { base: Arc<Transition>, counter: Var },
    /// Exactly `count` iterations of `base`.
    Unrolled { base: Arc<Transition>, count: u32 },
    /// Recurrent set: `base`'s guard is a simple invariant.
    Nonterm { base: Arc<Transition> },
    /// `base` maps the configuration to itself.
    Fixpoint { base: Arc<Transition> },
    /// `base` with `added` conjoined to its guard; `split` marks the negated
    /// case variants emitted by invariant inference.
    Strengthened {
        base: Arc<Transition>,
        added: Constraint,
        split: bool,
    },
    /// `base` with some of its temps replaced by the expressions in `subst`,
    /// which range over this transition's arguments and temps.
    Substituted { base: Arc<Transition>, subst: Subst },
}

#[derive(Clone, Debug)]
pub struct Transition {
    pub id: TransId,
    pub source: FunSym,
    pub args: Vec<Var>,
    pub guard: Constraint,
    pub update: Update,
    pub target: FunSym,
    /// Guard/update variables that are not arguments, sorted.
    pub temps: Vec<Var>,
    pub origin: Origin,
}

impl Transition {
    /// Builds a transition; temp variables are derived from guard and update.
    /// Sink-targeting transitions get an empty update.
    pub fn new(
        source: FunSym,
        args: Vec<Var>,
        guard: Constraint,
        update: Update,
        target: FunSym,
        origin: Origin,
    ) -> Self {
        let update = if target.is_sink() { Update::identity() } else { update };
        let mut t = Transition {
            id: TransId::default(),
            source,
            args,
            guard,
            update,
            target,
            temps: Vec::new(),
            origin,
        };
        t.temps = t.compute_temps();
        t
    }

    fn compute_temps(&self) -> Vec<Var> {
        let mut vs = self.guard.vars();
        for a in &self.args {
            if let Some(p) = self.update.entries().get(a) {
                p.collect_vars(&mut vs);
            }
        }
        for a in &self.args {
            vs.remove(a);
        }
        vs.into_iter().collect()
    }

    pub fn is_simple_loop(&self) -> bool {
        self.source == self.target
    }

    pub fn targets_sink(&self) -> bool {
        self.target.is_sink()
    }

    /// Arguments and temps.
    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out: BTreeSet<Var> = self.args.iter().cloned().collect();
        out.extend(self.temps.iter().cloned());
        out
    }

    pub fn is_arg(&self, v: &Var) -> bool {
        self.args.contains(v)
    }

    /// Renames temps occurring in `avoid` to fresh names. Returns the renamed
    /// transition and the renaming applied (old -> new).
    pub fn rename_apart(&self, avoid: &BTreeSet<Var>) -> (Transition, BTreeMap<Var, Var>) {
        let mut renaming = BTreeMap::new();
        let mut taken: BTreeSet<Var> = avoid.clone();
        taken.extend(self.vars());
        for t in &self.temps {
            if avoid.contains(t) {
                let fresh = Var::fresh(strip_digits(t.name()), |v| taken.contains(v));
                taken.insert(fresh.clone());
                renaming.insert(t.clone(), fresh);
            }
        }
        if renaming.is_empty() {
            return (self.clone(), renaming);
        }
        let mut out = self.clone();
        out.guard = self.guard.rename(&renaming);
        out.update = self.update.rename(&renaming);
        out.temps = out.compute_temps();
        (out, renaming)
    }

    /// Replaces the origin, keeping everything else.
    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = origin;
        self
    }

    pub fn with_guard(&self, guard: Constraint, origin: Origin) -> Transition {
        Transition::new(
            self.source.clone(),
            self.args.clone(),
            guard,
            self.update.clone(),
            self.target.clone(),
            origin,
        )
    }

    /// Number of invariant-inference strengthenings along the derivation.
    pub fn strengthen_rounds(&self) -> u32 {
        match &self.origin {
            Origin::Original => 0,
            Origin::Strengthened { base, .. } => base.strengthen_rounds() + 1,
            Origin::Chained { first, second, .. } => {
                first.strengthen_rounds().max(second.strengthen_rounds())
            }
            Origin::Accelerated { base, .. }
            | Origin::Unrolled { base, .. }
            | Origin::Nonterm { base }
            | Origin::Fixpoint { base }
            | Origin::Substituted { base, .. } => base.strengthen_rounds(),
        }
    }

    /// Short description of the derivation, e.g. `accel(t3)`.
    pub fn origin_label(&self) -> String {
        use alloc::format;
        match &self.origin {
            Origin::Original => format!("{}", self.id),
            Origin::Chained { first, second, .. } => {
                format!("{} . {}", first.origin_label(), second.origin_label())
            }
            Origin::Accelerated { base, counter } => {
                format!("accel[{}]({})", counter, base.origin_label())
            }
            Origin::Unrolled { base, count } => format!("unroll[{}]({})", count, base.origin_label()),
            Origin::Nonterm { base } => format!("nonterm({})", base.origin_label()),
            Origin::Fixpoint { base } => format!("fixpoint({})", base.origin_label()),
            Origin::Substituted { base, .. } => base.origin_label(),
            Origin::Strengthened { base, split, .. } => {
                if *split {
                    format!("split({})", base.origin_label())
                } else {
                    format!("strengthen({})", base.origin_label())
                }
            }
        }
    }
}

fn strip_digits(name: &str) -> &str {
    let trimmed = name.trim_end_matches(|c: char| c.is_ascii_digit());
    if trimmed.is_empty() {
        name
    } else {
        trimmed
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.source)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}", a)?;
        }
        write!(f, ") -> ")?;
        if self.target.is_sink() {
            write!(f, "{}", self.target)?;
        } else {
            write!(f, "{}(", self.target)?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{}", self.update.get(a))?;
            }
            f.write_str(")")?;
        }
        if !self.guard.is_empty() {
            write!(f, " :|: {}", self.guard)?;
        }
        Ok(())
    }
}

/// A set of transitions with a start symbol. All symbols share the argument
/// list `args`.
#[derive(Clone, Debug)]
pub struct Program {
    pub args: Vec<Var>,
    pub start: FunSym,
    pub sink: FunSym,
    transitions: Vec<Transition>,
    next_id: u32,
}

impl Program {
    pub fn new(args: Vec<Var>, start: FunSym) -> Self {
        Program {
            args,
            start,
            sink: FunSym::sink(),
            transitions: Vec::new(),
            next_id: 1,
        }
    }

    /// Adds `t` under a fresh id, which is returned.
    pub fn add(&mut self, mut t: Transition) -> TransId {
        debug_assert_eq!(t.args, self.args, "argument lists must be canonical");
        let id = TransId(self.next_id);
        self.next_id += 1;
        t.id = id;
        self.transitions.push(t);
        id
    }

    pub fn remove(&mut self, id: TransId) -> Option<Transition> {
        let pos = self.transitions.iter().position(|t| t.id == id)?;
        Some(self.transitions.remove(pos))
    }

    pub fn get(&self, id: TransId) -> Option<&Transition> {
        self.transitions.iter().find(|t| t.id == id)
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Transition> {
        self.transitions.iter()
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn retain(&mut self, f: impl FnMut(&Transition) -> bool) {
        self.transitions.retain(f);
    }

    /// Every transition starts at the start symbol.
    pub fn is_simplified(&self) -> bool {
        self.transitions.iter().all(|t| t.source == self.start)
    }

    /// Symbols occurring as source or target, sink excluded.
    pub fn symbols(&self) -> BTreeSet<FunSym> {
        let mut out = BTreeSet::new();
        for t in &self.transitions {
            out.insert(t.source.clone());
            if !t.target.is_sink() {
                out.insert(t.target.clone());
            }
        }
        out
    }

    /// Symbols reachable from start in the symbol graph (start included).
    pub fn reachable_symbols(&self) -> BTreeSet<FunSym> {
        let mut seen = BTreeSet::new();
        seen.insert(self.start.clone());
        let mut stack = alloc::vec![self.start.clone()];
        while let Some(f) = stack.pop() {
            for t in &self.transitions {
                if t.source == f && seen.insert(t.target.clone()) {
                    stack.push(t.target.clone());
                }
            }
        }
        seen
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "start: {}", self.start)?;
        for t in &self.transitions {
            writeln!(f, "{}: {}", t.id, t)?;
        }
        Ok(())
    }
}

/// `f(n1, ..., nk)` with integer arguments.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Configuration {
    pub symbol: FunSym,
    pub values: Vec<Int>,
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol)?;
        if self.symbol.is_sink() {
            return Ok(());
        }
        f.write_str("(")?;
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}", v)?;
        }
        f.write_str(")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::Atom;

    fn v(n: &str) -> Poly {
        Poly::var(&Var::new(n))
    }

    fn upd(pairs: &[(&str, Poly)]) -> Update {
        Update::from_map(pairs.iter().map(|(n, p)| (Var::new(n), p.clone())).collect())
    }

    #[test]
    fn compose_neg_with_itself() {
        let neg = upd(&[("x", -v("x")), ("y", &v("y") - &Poly::one())]);
        let twice = neg.compose(&neg);
        assert_eq!(twice, upd(&[("y", &v("y") - &Poly::int(2))]));
        assert_eq!(neg.compose(&Update::identity()), neg);
        assert_eq!(Update::identity().compose(&neg), neg);
    }

    #[test]
    fn compose_const_with_itself() {
        let c = upd(&[("x", &v("x") - &Poly::one()), ("y", Poly::int(2)), ("z", v("y"))]);
        let twice = c.compose(&c);
        assert_eq!(
            twice,
            upd(&[("x", &v("x") - &Poly::int(2)), ("y", Poly::int(2)), ("z", Poly::int(2))])
        );
    }

    #[test]
    fn rename_apart_temp() {
        let args = alloc::vec![Var::new("x")];
        let guard = Constraint::new(alloc::vec![Atom::ge(&v("k"), &Poly::one())]);
        let t = Transition::new(
            FunSym::new("f"),
            args,
            guard,
            upd(&[("x", &v("x") + &v("k"))]),
            FunSym::new("f"),
            Origin::Original,
        );
        assert_eq!(t.temps, alloc::vec![Var::new("k")]);
        let mut avoid = BTreeSet::new();
        avoid.insert(Var::new("k"));
        let (r, ren) = t.rename_apart(&avoid);
        assert_eq!(ren.get(&Var::new("k")), Some(&Var::new("k1")));
        assert_eq!(r.temps, alloc::vec![Var::new("k1")]);
        let (same, none) = t.rename_apart(&BTreeSet::new());
        assert!(none.is_empty());
        assert_eq!(same.guard, t.guard);
    }
}
