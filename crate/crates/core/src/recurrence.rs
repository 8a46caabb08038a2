//! Closed forms for iterated updates.
//!
//! Solves `x^(k+1) = update(x^(k))`, `x^(0) = x` for triangular systems where
//! every variable's update is `c*x + p` with an integer constant `c` and `p`
//! built from variables solved earlier. Closed forms are sums `b^k * q_b(k)`;
//! base 1 is the polynomial part.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::its::Update;
use crate::poly::{Int, Monomial, Poly, Rat, Subst, Var};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Unsolvable {
    #[error("cyclic dependency between updated variables")]
    Cyclic,
    #[error("update of `{0}` is not affine in `{0}`")]
    NonAffine(Var),
    #[error("coefficient of `{0}` in its own update is not an integer constant")]
    NonConstantCoefficient(Var),
    #[error("`{0}` alternates its sign")]
    SignAlternation(Var),
}

/// Value of one variable after `k` iterations: `sum_b b^k * terms[b]`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ClosedEntry {
    pub terms: BTreeMap<Int, Poly>,
    /// The formula holds for `k >= valid_from`. Resets and their dependents
    /// only settle after a few iterations.
    pub valid_from: u32,
    /// Values for `k < valid_from`, computed by plain composition.
    pub early: Vec<Poly>,
}

impl ClosedEntry {
    pub fn is_polynomial(&self) -> bool {
        self.terms.keys().all(|b| b.is_one())
    }

    pub fn polynomial_part(&self) -> Poly {
        self.terms.get(&Int::one()).cloned().unwrap_or_else(Poly::zero)
    }

    /// Value after exactly `n` iterations.
    pub fn at(&self, counter: &Var, n: u64) -> Poly {
        if n < u64::from(self.valid_from) {
            return self.early[n as usize].clone();
        }
        let mut s = Subst::new();
        s.insert(counter.clone(), Poly::from_int(Int::from(n)));
        let mut out = Poly::zero();
        for (b, q) in &self.terms {
            let bn = num_traits::pow::pow(b.clone(), n as usize);
            out = &out + &q.subst(&s).scale(&Rat::from_integer(bn));
        }
        out
    }
}

/// Closed form of an update. Variables without an entry are unchanged.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ClosedForm {
    pub counter: Var,
    pub entries: BTreeMap<Var, ClosedEntry>,
}

impl ClosedForm {
    pub fn is_polynomial(&self) -> bool {
        self.entries.values().all(ClosedEntry::is_polynomial)
    }

    /// `x -> closed form in the counter`, if no exponential terms occur.
    pub fn polynomial_subst(&self) -> Option<Subst> {
        if !self.is_polynomial() {
            return None;
        }
        Some(
            self.entries
                .iter()
                .map(|(v, e)| (v.clone(), e.polynomial_part()))
                .collect(),
        )
    }

    /// Smallest `k` from which the closed form of every variable in `vars`
    /// is exact.
    pub fn valid_from<'a>(&self, vars: impl IntoIterator<Item = &'a Var>) -> u32 {
        vars.into_iter()
            .filter_map(|v| self.entries.get(v))
            .map(|e| e.valid_from)
            .max()
            .unwrap_or(0)
    }

    /// The update performed by `n` iterations; `n = 0` is the identity.
    pub fn instantiate(&self, n: u64) -> Update {
        if n == 0 {
            return Update::identity();
        }
        Update::from_map(
            self.entries
                .iter()
                .map(|(v, e)| (v.clone(), e.at(&self.counter, n)))
                .collect(),
        )
    }
}

impl fmt::Display for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (v, e)) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{} -> ", v)?;
            let mut first = true;
            for (b, q) in &e.terms {
                if !first {
                    f.write_str(" + ")?;
                }
                first = false;
                if b.is_one() {
                    write!(f, "{}", q)?;
                } else {
                    write!(f, "{}^{}*({})", b, self.counter, q)?;
                }
            }
            if first {
                f.write_str("0")?;
            }
        }
        f.write_str("}")
    }
}

/// Sum of `b^k * q_b(k)` terms; `q_b` is a polynomial in the counter and
/// the program variables.
type ExpPoly = BTreeMap<Int, Poly>;

fn ep_add(a: &ExpPoly, b: &ExpPoly) -> ExpPoly {
    let mut out = a.clone();
    for (base, q) in b {
        let e = out.entry(base.clone()).or_default();
        *e = &*e + q;
    }
    out.retain(|_, q| !q.is_zero());
    out
}

fn ep_mul(a: &ExpPoly, b: &ExpPoly) -> ExpPoly {
    let mut out = ExpPoly::new();
    for (b1, q1) in a {
        for (b2, q2) in b {
            let e = out.entry(b1 * b2).or_default();
            *e = &*e + &(q1 * q2);
        }
    }
    out.retain(|_, q| !q.is_zero());
    out
}

fn ep_poly(p: Poly) -> ExpPoly {
    let mut out = ExpPoly::new();
    if !p.is_zero() {
        out.insert(Int::one(), p);
    }
    out
}

fn ep_pow(a: &ExpPoly, e: u32) -> ExpPoly {
    let mut acc = ep_poly(Poly::one());
    for _ in 0..e {
        acc = ep_mul(&acc, a);
    }
    acc
}

/// Substitutes solved closed forms into `p`.
fn ep_subst(p: &Poly, solved: &BTreeMap<Var, ExpPoly>) -> ExpPoly {
    let mut out = ExpPoly::new();
    for (m, c) in p.terms() {
        let mut prod = ep_poly(Poly::one());
        let mut kept = Monomial::one();
        for (v, e) in m.powers() {
            match solved.get(v) {
                Some(cf) => prod = ep_mul(&prod, &ep_pow(cf, e)),
                None => kept = kept.mul(&pow_mono(v, e)),
            }
        }
        let coeff = ep_poly(Poly::term(kept, c.clone()));
        out = ep_add(&out, &ep_mul(&prod, &coeff));
    }
    out
}

fn pow_mono(v: &Var, e: u32) -> Monomial {
    let mut m = Monomial::one();
    for _ in 0..e {
        m = m.mul(&Monomial::var(v));
    }
    m
}

fn binom(n: usize, k: usize) -> Int {
    let mut r = Int::one();
    for i in 0..k {
        r = r * Int::from(n - i) / Int::from(i + 1);
    }
    r
}

/// Stirling numbers of the second kind `S(j, m)` for `m <= j`.
fn stirling2(j: usize) -> Vec<Int> {
    let mut row = alloc::vec![Int::one()];
    for n in 1..=j {
        let mut next = alloc::vec![Int::zero(); n + 1];
        for m in 1..=n {
            let a = if m <= n - 1 { &row[m] * Int::from(m) } else { Int::zero() };
            let b = row[m - 1].clone();
            next[m] = a + b;
        }
        row = next;
    }
    row
}

/// `k (k-1) ... (k-n+1)`.
fn falling(k: &Var, n: usize) -> Poly {
    let kp = Poly::var(k);
    let mut acc = Poly::one();
    for i in 0..n {
        acc = &acc * &(&kp - &Poly::from_int(Int::from(i)));
    }
    acc
}

/// `sum_{i=0}^{k-1} i^j` as a polynomial in `k`, via the falling-factorial basis:
/// `i^j = sum_m S(j,m) i^(m)` and `sum_{i<k} i^(m) = k^(m+1) / (m+1)`.
pub fn power_sum(j: usize, k: &Var) -> Poly {
    let s = stirling2(j);
    let mut out = Poly::zero();
    for (m, coeff) in s.iter().enumerate() {
        if coeff.is_zero() {
            continue;
        }
        let term = falling(k, m + 1).scale(&Rat::new(coeff.clone(), Int::from(m + 1)));
        out = &out + &term;
    }
    out
}

/// `sum_{i=0}^{k-1} q(i)` for `q` polynomial in `k`.
fn sum_upto(q: &Poly, k: &Var) -> Poly {
    let mut out = Poly::zero();
    for (j, cj) in q.coeffs_in(k).iter().enumerate() {
        if !cj.is_zero() {
            out = &out + &(cj * &power_sum(j, k));
        }
    }
    out
}

/// Particular solution of `r(k+1) = c*r(k) + b^k q(k)` of shape `b^k * s(k)`.
fn particular(b: &Int, q: &Poly, c: &Int, k: &Var) -> Poly {
    if b == c {
        // c s(k+1) = c s(k) + q(k)
        return sum_upto(q, k).scale(&Rat::new(Int::one(), c.clone()));
    }
    // b s(k+1) - c s(k) = q(k), deg s = deg q
    let qs = q.coeffs_in(k);
    let d = qs.len();
    let mut s: Vec<Poly> = alloc::vec![Poly::zero(); d];
    let bc = Rat::from_integer(b - c);
    for j in (0..d).rev() {
        let mut rhs = qs[j].clone();
        for m in (j + 1)..d {
            rhs = &rhs - &s[m].scale(&Rat::from_integer(b * binom(m, j)));
        }
        s[j] = rhs.scale(&(Rat::one() / &bc));
    }
    let kp = Poly::var(k);
    let mut out = Poly::zero();
    for (j, sj) in s.iter().enumerate() {
        out = &out + &(sj * &kp.pow(j as u32));
    }
    out
}

/// `b^(k-m) q(k-m)` written as `b^k * (q(k-m)/b^m)`. Bases are never zero.
fn shift_back(e: &ExpPoly, k: &Var, m: u32) -> ExpPoly {
    shift(e, k, -i64::from(m))
}

/// `b^(k+m) q(k+m)` written as `b^k * (b^m q(k+m))`.
fn shift_forward(e: &ExpPoly, k: &Var, m: u32) -> ExpPoly {
    shift(e, k, i64::from(m))
}

fn shift(e: &ExpPoly, k: &Var, m: i64) -> ExpPoly {
    if m == 0 {
        return e.clone();
    }
    let mut s = Subst::new();
    s.insert(k.clone(), &Poly::var(k) + &Poly::int(m));
    let mut out = ExpPoly::new();
    for (b, q) in e {
        let bm = num_traits::pow::pow(b.clone(), m.unsigned_abs() as usize);
        let factor = if m > 0 { Rat::from_integer(bm) } else { Rat::new(Int::one(), bm) };
        let shifted = q.subst(&s).scale(&factor);
        if !shifted.is_zero() {
            out.insert(b.clone(), shifted);
        }
    }
    out
}

fn eval_at_zero(e: &ExpPoly, k: &Var) -> Poly {
    let mut s = Subst::new();
    s.insert(k.clone(), Poly::zero());
    e.values().fold(Poly::zero(), |acc, q| &acc + &q.subst(&s))
}

/// Computes `mu` with `mu(x) = update^k(x)` for all `k > 0`.
pub fn solve_update(u: &Update, args: &[Var], counter: &Var) -> Result<ClosedForm, Unsolvable> {
    let domain: BTreeSet<Var> = u.domain().filter(|v| args.contains(v)).cloned().collect();

    // dependency graph, self-loops collapsed
    let mut deps: BTreeMap<Var, BTreeSet<Var>> = BTreeMap::new();
    for x in &domain {
        let mut d: BTreeSet<Var> = u.get(x).vars().intersection(&domain).cloned().collect();
        d.remove(x);
        deps.insert(x.clone(), d);
    }
    let mut order = Vec::new();
    let mut done: BTreeSet<Var> = BTreeSet::new();
    while order.len() < domain.len() {
        let next = domain
            .iter()
            .find(|x| !done.contains(*x) && deps[*x].iter().all(|d| done.contains(d)));
        match next {
            Some(x) => {
                done.insert(x.clone());
                order.push(x.clone());
            }
            None => return Err(Unsolvable::Cyclic),
        }
    }

    // update^0, update^1, ... for start values and early iterations
    let mut powers = alloc::vec![Update::identity()];
    let mut solved: BTreeMap<Var, ExpPoly> = BTreeMap::new();
    let mut entries = BTreeMap::new();
    for x in order {
        let e = u.get(&x);
        let cs = e.coeffs_in(&x);
        if cs.len() > 2 {
            return Err(Unsolvable::NonAffine(x));
        }
        let c = match cs.get(1) {
            None => Int::zero(),
            Some(c) => match c.as_constant() {
                Some(c) if c.is_integer() => c.to_integer(),
                _ => return Err(Unsolvable::NonConstantCoefficient(x)),
            },
        };
        if c == -Int::one() {
            return Err(Unsolvable::SignAlternation(x));
        }
        let p = cs.first().cloned().unwrap_or_default();
        let m = p.vars().iter().filter_map(|v| entries.get(v)).map(|e: &ClosedEntry| e.valid_from).max().unwrap_or(0);
        let inhom = ep_subst(&p, &solved);
        let (closed, valid_from) = if c.is_zero() {
            // x^(k) = p^(k-1), exact once k-1 reaches m
            (shift_back(&inhom, counter, 1), m + 1)
        } else {
            // solve in j = k - m, where p^(j+m) is exact, starting from x^(m)
            let inhom = shift_forward(&inhom, counter, m);
            let mut part = ExpPoly::new();
            for (b, q) in &inhom {
                let s = particular(b, q, &c, counter);
                part = ep_add(&part, &ep_poly_base(b, s));
            }
            while powers.len() <= m as usize {
                let next = powers.last().expect("nonempty").compose(u);
                powers.push(next);
            }
            let start = &powers[m as usize].get(&x) - &eval_at_zero(&part, counter);
            (shift_back(&ep_add(&part, &ep_poly_base(&c, start)), counter, m), m)
        };
        while powers.len() < valid_from as usize {
            let next = powers.last().expect("nonempty").compose(u);
            powers.push(next);
        }
        let early = powers[..valid_from as usize].iter().map(|w| w.get(&x)).collect();
        solved.insert(x.clone(), closed.clone());
        entries.insert(x, ClosedEntry { terms: closed, valid_from, early });
    }
    Ok(ClosedForm { counter: counter.clone(), entries })
}

fn ep_poly_base(b: &Int, q: Poly) -> ExpPoly {
    let mut out = ExpPoly::new();
    if !q.is_zero() {
        out.insert(b.clone(), q);
    }
    out
}

/// Largest absolute base occurring in the closed form (1 for polynomial ones).
pub fn max_base(cf: &ClosedForm) -> u64 {
    cf.entries
        .values()
        .flat_map(|e| e.terms.keys())
        .map(|b| b.abs().to_u64().unwrap_or(u64::MAX))
        .max()
        .unwrap_or(1)
}
