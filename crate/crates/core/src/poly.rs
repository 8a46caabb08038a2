//! Multivariate polynomials with exact rational coefficients.
//!
//! Polynomials are kept in canonical form at all times: monomials are merged,
//! zero coefficients never appear, and exponents are strictly positive. Two
//! polynomials are equal iff their canonical forms are identical, so the
//! derived `Eq` is semantic equality.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Int = BigInt;
pub type Rat = BigRational;

/// Integer assignment to variables.
pub type Valuation = BTreeMap<Var, Int>;

/// Simultaneous substitution. Variables outside the domain map to themselves.
pub type Subst = BTreeMap<Var, Poly>;

/// Prefix reserved for synthesized parameters and Farkas multipliers. The
/// input parser never produces identifiers starting with it.
pub const PARAM_PREFIX: char = '%';

/// A variable name. Cheap to clone.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(Arc<str>);

impl Var {
    pub fn new(name: impl AsRef<str>) -> Self {
        let name = name.as_ref();
        debug_assert!(!name.is_empty(), "empty variable name");
        Var(Arc::from(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    /// Parameters and multipliers live in a namespace disjoint from program variables.
    pub fn is_param(&self) -> bool {
        self.0.starts_with(PARAM_PREFIX)
    }

    /// `base`, `base1`, `base2`, ... : the first name not rejected by `taken`.
    pub fn fresh(base: &str, taken: impl Fn(&Var) -> bool) -> Var {
        let plain = Var::new(base);
        if !taken(&plain) {
            return plain;
        }
        let mut i = 1u32;
        loop {
            let mut name = String::from(base);
            push_u32(&mut name, i);
            let cand = Var::new(&name);
            if !taken(&cand) {
                return cand;
            }
            i += 1;
        }
    }
}

fn push_u32(s: &mut String, mut n: u32) {
    let mut digits = [0u8; 10];
    let mut len = 0;
    loop {
        digits[len] = b'0' + (n % 10) as u8;
        len += 1;
        n /= 10;
        if n == 0 {
            break;
        }
    }
    for d in digits[..len].iter().rev() {
        s.push(*d as char);
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Var {
    fn from(s: &str) -> Self {
        Var::new(s)
    }
}

/// Power product of variables; exponents are always positive.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Monomial(BTreeMap<Var, u32>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(BTreeMap::new())
    }

    pub fn var(v: &Var) -> Self {
        let mut m = BTreeMap::new();
        m.insert(v.clone(), 1);
        Monomial(m)
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.0.values().sum()
    }

    pub fn degree_in(&self, v: &Var) -> u32 {
        self.0.get(v).copied().unwrap_or(0)
    }

    pub fn powers(&self) -> impl Iterator<Item = (&Var, u32)> {
        self.0.iter().map(|(v, e)| (v, *e))
    }

    pub fn vars(&self) -> impl Iterator<Item = &Var> {
        self.0.keys()
    }

    /// Splits off all powers of `v`: `self = v^e * rest`.
    pub fn split(&self, v: &Var) -> (u32, Monomial) {
        let mut rest = self.0.clone();
        let e = rest.remove(v).unwrap_or(0);
        (e, Monomial(rest))
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = self.0.clone();
        for (v, e) in &other.0 {
            *out.entry(v.clone()).or_insert(0) += e;
        }
        Monomial(out)
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("1");
        }
        let mut first = true;
        for (v, e) in &self.0 {
            if !first {
                f.write_str("*")?;
            }
            first = false;
            if *e == 1 {
                write!(f, "{}", v)?;
            } else {
                write!(f, "{}^{}", v, e)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("variable `{0}` is not bound")]
    MissingVariable(Var),
}

/// A polynomial over [`Var`]s with rational coefficients.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Poly {
    terms: BTreeMap<Monomial, Rat>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn one() -> Self {
        Poly::constant(Rat::one())
    }

    pub fn constant(c: Rat) -> Self {
        let mut p = Poly::zero();
        p.add_term(Monomial::one(), c);
        p
    }

    pub fn int(c: i64) -> Self {
        Poly::constant(Rat::from_integer(BigInt::from(c)))
    }

    pub fn from_int(c: Int) -> Self {
        Poly::constant(Rat::from_integer(c))
    }

    pub fn var(v: &Var) -> Self {
        let mut p = Poly::zero();
        p.add_term(Monomial::var(v), Rat::one());
        p
    }

    pub fn term(m: Monomial, c: Rat) -> Self {
        let mut p = Poly::zero();
        p.add_term(m, c);
        p
    }

    fn add_term(&mut self, m: Monomial, c: Rat) {
        if c.is_zero() {
            return;
        }
        use alloc::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rat)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// `Some(c)` iff the polynomial has no variables.
    pub fn as_constant(&self) -> Option<Rat> {
        match self.terms.len() {
            0 => Some(Rat::zero()),
            1 => self.terms.get(&Monomial::one()).cloned(),
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.as_constant().is_some()
    }

    pub fn constant_term(&self) -> Rat {
        self.terms.get(&Monomial::one()).cloned().unwrap_or_else(Rat::zero)
    }

    /// Same polynomial without its constant term.
    pub fn non_constant_part(&self) -> Poly {
        let mut p = self.clone();
        p.terms.remove(&Monomial::one());
        p
    }

    pub fn coeff(&self, m: &Monomial) -> Rat {
        self.terms.get(m).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        for m in self.terms.keys() {
            out.extend(m.vars().cloned());
        }
    }

    pub fn contains_var(&self, v: &Var) -> bool {
        self.terms.keys().any(|m| m.degree_in(v) > 0)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn degree_in(&self, v: &Var) -> u32 {
        self.terms.keys().map(|m| m.degree_in(v)).max().unwrap_or(0)
    }

    pub fn scale(&self, c: &Rat) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self.terms.iter().map(|(m, a)| (m.clone(), a * c)).collect(),
        }
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut acc = Poly::one();
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    /// Exact evaluation.
    pub fn eval(&self, val: &Valuation) -> Result<Rat, EvalError> {
        let mut sum = Rat::zero();
        for (m, c) in &self.terms {
            let mut prod = BigInt::one();
            for (v, e) in m.powers() {
                let x = val.get(v).ok_or_else(|| EvalError::MissingVariable(v.clone()))?;
                prod *= num_traits::pow::pow(x.clone(), e as usize);
            }
            sum += c * Rat::from_integer(prod);
        }
        Ok(sum)
    }

    /// Evaluation that must land on an integer (well-formed updates do).
    pub fn eval_int(&self, val: &Valuation) -> Result<Option<Int>, EvalError> {
        let r = self.eval(val)?;
        Ok(if r.is_integer() { Some(r.to_integer()) } else { None })
    }

    /// Simultaneous substitution, re-canonicalized.
    pub fn subst(&self, s: &Subst) -> Poly {
        if s.is_empty() {
            return self.clone();
        }
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let mut prod = Poly::one();
            let mut kept = Monomial::one();
            for (v, e) in m.powers() {
                match s.get(v) {
                    Some(r) => prod = &prod * &r.pow(e),
                    None => {
                        kept.0.insert(v.clone(), e);
                    }
                }
            }
            let term = Poly::term(kept, c.clone());
            out = &out + &(&prod * &term);
        }
        out
    }

    pub fn rename(&self, r: &BTreeMap<Var, Var>) -> Poly {
        if r.is_empty() {
            return self.clone();
        }
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let mut nm = Monomial::one();
            for (v, e) in m.powers() {
                let v = r.get(v).unwrap_or(v).clone();
                *nm.0.entry(v).or_insert(0) += e;
            }
            out.add_term(nm, c.clone());
        }
        out
    }

    /// Coefficients w.r.t. powers of `v`: `self = sum_i out[i] * v^i`.
    pub fn coeffs_in(&self, v: &Var) -> Vec<Poly> {
        let mut out: Vec<Poly> = Vec::new();
        for (m, c) in &self.terms {
            let (e, rest) = m.split(v);
            let e = e as usize;
            if out.len() <= e {
                out.resize(e + 1, Poly::zero());
            }
            out[e].add_term(rest, c.clone());
        }
        out
    }

    /// Decomposes into `sum_x coeff[x] * x + rest` where `x` ranges over
    /// variables accepted by `is_var`. Returns `None` if some monomial has
    /// degree > 1 in those variables.
    pub fn linear_form(&self, is_var: impl Fn(&Var) -> bool) -> Option<(BTreeMap<Var, Poly>, Poly)> {
        let mut coeffs: BTreeMap<Var, Poly> = BTreeMap::new();
        let mut rest = Poly::zero();
        for (m, c) in &self.terms {
            let mut hit: Option<&Var> = None;
            for (v, e) in m.powers() {
                if is_var(v) {
                    if e > 1 || hit.is_some() {
                        return None;
                    }
                    hit = Some(v);
                }
            }
            match hit {
                None => rest.add_term(m.clone(), c.clone()),
                Some(v) => {
                    let (_, r) = m.split(v);
                    coeffs.entry(v.clone()).or_default().add_term(r, c.clone());
                }
            }
        }
        coeffs.retain(|_, p| !p.is_zero());
        Some((coeffs, rest))
    }

    pub fn is_linear_in(&self, is_var: impl Fn(&Var) -> bool) -> bool {
        self.linear_form(is_var).is_some()
    }

    /// Least common multiple of all coefficient denominators.
    pub fn denominator_lcm(&self) -> Int {
        self.terms.values().fold(Int::one(), |acc, c| acc.lcm(c.denom()))
    }

    pub fn has_integer_coeffs(&self) -> bool {
        self.terms.values().all(|c| c.is_integer())
    }

    /// Multiplies by the positive lcm of denominators.
    pub fn clear_denominators(&self) -> Poly {
        let l = self.denominator_lcm();
        if l.is_one() {
            self.clone()
        } else {
            self.scale(&Rat::from_integer(l))
        }
    }

    /// Integer coefficients of a polynomial whose coefficients are all integral.
    pub fn integer_terms(&self) -> impl Iterator<Item = (&Monomial, Int)> {
        self.terms.iter().map(|(m, c)| {
            debug_assert!(c.is_integer());
            (m, c.to_integer())
        })
    }

    /// True iff the polynomial maps every integer point to an integer.
    ///
    /// A polynomial of degree `d_v` in each variable `v` is integer-valued iff
    /// it is integral on the grid `prod_v {0..d_v}`: its coefficients in the
    /// binomial basis are iterated forward differences at the origin, which are
    /// integer combinations of exactly those grid values.
    pub fn is_integer_valued(&self) -> bool {
        if self.has_integer_coeffs() {
            return true;
        }
        let vars: Vec<Var> = self.vars().into_iter().collect();
        let degs: Vec<u32> = vars.iter().map(|v| self.degree_in(v)).collect();
        let mut point = alloc::vec![0u32; vars.len()];
        loop {
            let val: Valuation = vars
                .iter()
                .zip(&point)
                .map(|(v, x)| (v.clone(), Int::from(*x)))
                .collect();
            match self.eval(&val) {
                Ok(r) if r.is_integer() => {}
                _ => return false,
            }
            // odometer increment
            let mut i = 0;
            loop {
                if i == point.len() {
                    return true;
                }
                if point[i] < degs[i] {
                    point[i] += 1;
                    break;
                }
                point[i] = 0;
                i += 1;
            }
        }
    }

    /// Terms in display order: higher total degree first, constant last.
    fn display_order(&self) -> Vec<(&Monomial, &Rat)> {
        let mut ts: Vec<_> = self.terms.iter().collect();
        ts.sort_by(|(a, _), (b, _)| b.degree().cmp(&a.degree()).then_with(|| a.cmp(b)));
        ts
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (m, c)) in self.display_order().into_iter().enumerate() {
            let neg = c.is_negative();
            let mag = c.abs();
            if i == 0 {
                if neg {
                    f.write_str("-")?;
                }
            } else {
                f.write_str(if neg { " - " } else { " + " })?;
            }
            if m.is_one() {
                write!(f, "{}", mag)?;
            } else if mag.is_one() {
                write!(f, "{}", m)?;
            } else {
                write!(f, "{}*{}", mag, m)?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Poly({})", self)
    }
}

impl<'a> Add<&'a Poly> for &'a Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl<'a> Sub<&'a Poly> for &'a Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }
}

impl<'a> Mul<&'a Poly> for &'a Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &rhs.terms {
                out.add_term(m1.mul(m2), c1 * c2);
            }
        }
        out
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c.clone())).collect(),
        }
    }
}

impl Add for Poly {
    type Output = Poly;
    fn add(self, rhs: Poly) -> Poly {
        &self + &rhs
    }
}

impl Sub for Poly {
    type Output = Poly;
    fn sub(self, rhs: Poly) -> Poly {
        &self - &rhs
    }
}

impl Mul for Poly {
    type Output = Poly;
    fn mul(self, rhs: Poly) -> Poly {
        &self * &rhs
    }
}

impl Neg for Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        -&self
    }
}

pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Applies `s` to every entry of `target` (the entries of the outer map are
/// substituted, keys are kept).
pub fn subst_map(target: &Subst, s: &Subst) -> Subst {
    target.iter().map(|(v, p)| (v.clone(), p.subst(s))).collect()
}
