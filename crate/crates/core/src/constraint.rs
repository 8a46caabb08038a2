//! Inequations in the normal form `p >= 0` and their conjunctions.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::poly::{EvalError, Int, Poly, Rat, Subst, Valuation, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Ge,
    Gt,
    Eq,
    Le,
    Lt,
}

/// `poly >= 0` over the integers. The polynomial has integer coefficients
/// whose non-constant part is primitive (gcd 1), so syntactic equality of
/// atoms coincides for all scalings of the same inequation.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    poly: Poly,
}

impl Atom {
    /// Normalizes `p >= 0`.
    pub fn ge0(p: Poly) -> Atom {
        let p = p.clear_denominators();
        let rest = p.non_constant_part();
        if rest.is_zero() {
            return if p.constant_term().is_negative() { Atom::falsum() } else { Atom::verum() };
        }
        let g = rest
            .integer_terms()
            .fold(Int::zero(), |acc, (_, c)| acc.gcd(&c));
        if g.is_one() {
            return Atom { poly: p };
        }
        // g*q + c >= 0  <=>  q >= ceil(-c/g)  <=>  q + floor(c/g) >= 0
        let c = p.constant_term().to_integer();
        let q = rest.scale(&Rat::new(BigInt::one(), g.clone()));
        let tightened = &q + &Poly::from_int(c.div_floor(&g));
        Atom { poly: tightened }
    }

    pub fn verum() -> Atom {
        Atom { poly: Poly::zero() }
    }

    pub fn falsum() -> Atom {
        Atom { poly: Poly::int(-1) }
    }

    pub fn ge(lhs: &Poly, rhs: &Poly) -> Atom {
        Atom::ge0(lhs - rhs)
    }

    pub fn le(lhs: &Poly, rhs: &Poly) -> Atom {
        Atom::ge0(rhs - lhs)
    }

    /// `lhs > rhs`; the difference is scaled to integer coefficients first so
    /// that `> 0` can become `>= 1`.
    pub fn gt(lhs: &Poly, rhs: &Poly) -> Atom {
        let d = (lhs - rhs).clear_denominators();
        Atom::ge0(&d - &Poly::one())
    }

    pub fn lt(lhs: &Poly, rhs: &Poly) -> Atom {
        Atom::gt(rhs, lhs)
    }

    /// One atom per relation, two for equality.
    pub fn from_rel(lhs: &Poly, rel: Rel, rhs: &Poly) -> Vec<Atom> {
        match rel {
            Rel::Ge => alloc::vec![Atom::ge(lhs, rhs)],
            Rel::Gt => alloc::vec![Atom::gt(lhs, rhs)],
            Rel::Le => alloc::vec![Atom::le(lhs, rhs)],
            Rel::Lt => alloc::vec![Atom::lt(lhs, rhs)],
            Rel::Eq => alloc::vec![Atom::ge(lhs, rhs), Atom::le(lhs, rhs)],
        }
    }

    pub fn poly(&self) -> &Poly {
        &self.poly
    }

    /// `!(p >= 0)` is `-p - 1 >= 0` over the integers.
    pub fn negate(&self) -> Atom {
        Atom::ge0(&(-&self.poly) - &Poly::one())
    }

    pub fn subst(&self, s: &Subst) -> Atom {
        Atom::ge0(self.poly.subst(s))
    }

    pub fn rename(&self, r: &BTreeMap<Var, Var>) -> Atom {
        Atom::ge0(self.poly.rename(r))
    }

    /// `Some(b)` for variable-free atoms.
    pub fn truth(&self) -> Option<bool> {
        self.poly.as_constant().map(|c| !c.is_negative())
    }

    pub fn eval(&self, val: &Valuation) -> Result<bool, EvalError> {
        Ok(!self.poly.eval(val)?.is_negative())
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        self.poly.vars()
    }

    pub fn is_linear_in(&self, is_var: impl Fn(&Var) -> bool) -> bool {
        self.poly.is_linear_in(is_var)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rest = self.poly.non_constant_part();
        if rest.is_zero() {
            return write!(f, "{} >= 0", self.poly.constant_term());
        }
        let c = self.poly.constant_term();
        write!(f, "{} >= {}", rest, -c)
    }
}

impl fmt::Debug for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self)
    }
}

/// Ordered conjunction of atoms; empty means `true`.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Constraint {
    atoms: Vec<Atom>,
}

impl Constraint {
    pub fn top() -> Self {
        Constraint::default()
    }

    pub fn new(atoms: Vec<Atom>) -> Self {
        Constraint { atoms }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Atom> {
        self.atoms.iter()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn push(&mut self, a: Atom) {
        self.atoms.push(a);
    }

    pub fn contains(&self, a: &Atom) -> bool {
        self.atoms.contains(a)
    }

    /// Conjunction, then simplification.
    pub fn and(&self, other: &Constraint) -> Constraint {
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        Constraint { atoms }.simplified()
    }

    pub fn subst(&self, s: &Subst) -> Constraint {
        Constraint { atoms: self.atoms.iter().map(|a| a.subst(s)).collect() }.simplified()
    }

    pub fn rename(&self, r: &BTreeMap<Var, Var>) -> Constraint {
        Constraint { atoms: self.atoms.iter().map(|a| a.rename(r)).collect() }
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        for a in &self.atoms {
            a.poly().collect_vars(&mut out);
        }
        out
    }

    pub fn eval(&self, val: &Valuation) -> Result<bool, EvalError> {
        for a in &self.atoms {
            if !a.eval(val)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Contains a variable-free false atom.
    pub fn is_trivially_false(&self) -> bool {
        self.atoms.iter().any(|a| a.truth() == Some(false))
    }

    /// Atoms of `self` not syntactically present in `other`.
    pub fn minus(&self, other: &Constraint) -> Constraint {
        Constraint {
            atoms: self.atoms.iter().filter(|a| !other.contains(a)).cloned().collect(),
        }
    }

    /// Semantics-preserving cleanup: drops variable-free true atoms and
    /// duplicates, collapses to a single `false` atom if one is present, and
    /// keeps only the strongest of several atoms with identical non-constant
    /// parts. Order of first occurrence is preserved.
    pub fn simplified(&self) -> Constraint {
        if self.is_trivially_false() {
            return Constraint { atoms: alloc::vec![Atom::falsum()] };
        }
        let mut out: Vec<Atom> = Vec::new();
        let mut by_lhs: BTreeMap<PolyKey, usize> = BTreeMap::new();
        for a in &self.atoms {
            if a.truth() == Some(true) {
                continue;
            }
            let key = PolyKey(a.poly().non_constant_part());
            match by_lhs.get(&key) {
                Some(&i) => {
                    if a.poly().constant_term() < out[i].poly().constant_term() {
                        out[i] = a.clone();
                    }
                }
                None => {
                    by_lhs.insert(key, out.len());
                    out.push(a.clone());
                }
            }
        }
        Constraint { atoms: out }
    }
}

/// Ordering wrapper so polynomials can key a map; the order is arbitrary but total.
#[derive(PartialEq, Eq)]
struct PolyKey(Poly);

impl PartialOrd for PolyKey {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PolyKey {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        self.0.terms().cmp(other.0.terms())
    }
}

impl FromIterator<Atom> for Constraint {
    fn from_iter<T: IntoIterator<Item = Atom>>(iter: T) -> Self {
        Constraint { atoms: iter.into_iter().collect() }
    }
}

impl<'a> IntoIterator for &'a Constraint {
    type Item = &'a Atom;
    type IntoIter = core::slice::Iter<'a, Atom>;
    fn into_iter(self) -> Self::IntoIter {
        self.atoms.iter()
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.atoms.is_empty() {
            return f.write_str("true");
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(" && ")?;
            }
            write!(f, "{}", a)?;
        }
        Ok(())
    }
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self)
    }
}
