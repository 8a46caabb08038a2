//! SMT-LIB 2 text: emission, s-expression parsing, model parsing, and the
//! declaration bookkeeping an incremental session needs.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use num_traits::{One, Signed, Zero};

use crate::poly::{Int, Poly, Rat, Valuation, Var};
use crate::smt::{Formula, SmtError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("SMT-LIB parse error: {0}")]
pub struct ParseError(pub String);

fn err<T>(msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError(msg.into()))
}

fn is_simple_symbol(s: &str) -> bool {
    const EXTRA: &str = "~!@$%^&*_-+=<>.?/";
    let mut chars = s.chars();
    match chars.next() {
        None => false,
        Some(c) if c.is_ascii_digit() => false,
        Some(c) if !(c.is_ascii_alphanumeric() || EXTRA.contains(c)) => false,
        _ => s.chars().all(|c| c.is_ascii_alphanumeric() || EXTRA.contains(c)),
    }
}

/// Symbol syntax for a variable name, quoted with `|...|` when needed.
pub fn quote(name: &str) -> String {
    if is_simple_symbol(name) && !matches!(name, "and" | "or" | "not" | "true" | "false") {
        name.to_string()
    } else {
        format!("|{}|", name)
    }
}

fn emit_int(out: &mut String, n: &Int) {
    if n.is_negative() {
        let _ = write!(out, "(- {})", -n);
    } else {
        let _ = write!(out, "{}", n);
    }
}

fn emit_rat(out: &mut String, c: &Rat) {
    if c.is_integer() {
        emit_int(out, &c.to_integer());
    } else {
        // not QF_NIA; only reachable for formulas built without normalization
        out.push_str("(/ ");
        emit_int(out, c.numer());
        let _ = write!(out, " {})", c.denom());
    }
}

pub fn emit_poly(p: &Poly) -> String {
    let mut out = String::new();
    write_poly(&mut out, p);
    out
}

fn write_poly(out: &mut String, p: &Poly) {
    let terms: Vec<_> = p.terms().collect();
    match terms.len() {
        0 => out.push('0'),
        1 => write_term(out, terms[0].0, terms[0].1),
        _ => {
            out.push_str("(+");
            for (m, c) in terms {
                out.push(' ');
                write_term(out, m, c);
            }
            out.push(')');
        }
    }
}

fn write_term(out: &mut String, m: &crate::poly::Monomial, c: &Rat) {
    let mut factors: Vec<String> = Vec::new();
    if !c.is_one() || m.is_one() {
        let mut s = String::new();
        emit_rat(&mut s, c);
        factors.push(s);
    }
    for (v, e) in m.powers() {
        for _ in 0..e {
            factors.push(quote(v.name()));
        }
    }
    if factors.len() == 1 {
        out.push_str(&factors[0]);
    } else {
        out.push_str("(*");
        for f in factors {
            out.push(' ');
            out.push_str(&f);
        }
        out.push(')');
    }
}

pub fn emit_formula(f: &Formula) -> String {
    let mut out = String::new();
    write_formula(&mut out, f);
    out
}

fn write_formula(out: &mut String, f: &Formula) {
    match f {
        Formula::True => out.push_str("true"),
        Formula::False => out.push_str("false"),
        Formula::Ge(p) => {
            out.push_str("(>= ");
            write_poly(out, p);
            out.push_str(" 0)");
        }
        Formula::Eq(p) => {
            out.push_str("(= ");
            write_poly(out, p);
            out.push_str(" 0)");
        }
        Formula::And(fs) | Formula::Or(fs) => {
            out.push_str(if matches!(f, Formula::And(_)) { "(and" } else { "(or" });
            for g in fs {
                out.push(' ');
                write_formula(out, g);
            }
            out.push(')');
        }
        Formula::Not(g) => {
            out.push_str("(not ");
            write_formula(out, g);
            out.push(')');
        }
        Formula::Implies(a, b) => {
            out.push_str("(=> ");
            write_formula(out, a);
            out.push(' ');
            write_formula(out, b);
            out.push(')');
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

impl Sexp {
    pub fn as_atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(s) => Some(s),
            Sexp::List(_) => None,
        }
    }
}

/// Parses a sequence of s-expressions. `|quoted|` symbols lose their bars,
/// `;` comments are skipped and string literals are kept verbatim.
pub fn parse_sexps(text: &str) -> Result<Vec<Sexp>, ParseError> {
    let mut stack: Vec<Vec<Sexp>> = alloc::vec![Vec::new()];
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '(' => stack.push(Vec::new()),
            ')' => {
                let done = stack.pop().filter(|_| !stack.is_empty());
                match done {
                    Some(list) => stack.last_mut().unwrap().push(Sexp::List(list)),
                    None => return err("unbalanced ')'"),
                }
            }
            ';' => {
                for d in chars.by_ref() {
                    if d == '\n' {
                        break;
                    }
                }
            }
            '|' => {
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some('|') => break,
                        Some(d) => s.push(d),
                        None => return err("unterminated quoted symbol"),
                    }
                }
                stack.last_mut().unwrap().push(Sexp::Atom(s));
            }
            '"' => {
                let mut s = String::from("\"");
                loop {
                    match chars.next() {
                        Some('"') if chars.peek() == Some(&'"') => {
                            chars.next();
                            s.push_str("\"\"");
                        }
                        Some('"') => break,
                        Some(d) => s.push(d),
                        None => return err("unterminated string literal"),
                    }
                }
                s.push('"');
                stack.last_mut().unwrap().push(Sexp::Atom(s));
            }
            c if c.is_whitespace() => {}
            c => {
                let mut s = String::new();
                s.push(c);
                while let Some(&d) = chars.peek() {
                    if d.is_whitespace() || d == '(' || d == ')' || d == ';' {
                        break;
                    }
                    s.push(d);
                    chars.next();
                }
                stack.last_mut().unwrap().push(Sexp::Atom(s));
            }
        }
    }
    if stack.len() != 1 {
        return err("unbalanced '('");
    }
    Ok(stack.pop().unwrap())
}

/// Net parenthesis depth of `text`, ignoring quoted symbols and strings.
/// Transports use it to find the end of a multi-line reply.
pub fn paren_depth(text: &str) -> i64 {
    let mut depth = 0;
    let mut in_bar = false;
    let mut in_str = false;
    for c in text.chars() {
        match c {
            '|' if !in_str => in_bar = !in_bar,
            '"' if !in_bar => in_str = !in_str,
            '(' if !in_bar && !in_str => depth += 1,
            ')' if !in_bar && !in_str => depth -= 1,
            _ => {}
        }
    }
    depth
}

pub fn parse_term(s: &Sexp) -> Result<Poly, ParseError> {
    match s {
        Sexp::Atom(a) => {
            if let Ok(n) = a.parse::<Int>() {
                Ok(Poly::from_int(n))
            } else if a.is_empty() {
                err("empty symbol")
            } else {
                Ok(Poly::var(&Var::new(a)))
            }
        }
        Sexp::List(items) => {
            let (head, rest) = match items.split_first() {
                Some((Sexp::Atom(h), rest)) => (h.as_str(), rest),
                _ => return err("malformed term"),
            };
            let args = rest.iter().map(parse_term).collect::<Result<Vec<_>, _>>()?;
            match (head, args.len()) {
                ("-", 1) => Ok(-&args[0]),
                ("-", n) if n > 1 => Ok(args[1..].iter().fold(args[0].clone(), |acc, a| &acc - a)),
                ("+", _) => Ok(args.iter().fold(Poly::zero(), |acc, a| &acc + a)),
                ("*", _) => Ok(args.iter().fold(Poly::one(), |acc, a| &acc * a)),
                ("/", 2) => match args[1].as_constant() {
                    Some(d) if !d.is_zero() => Ok(args[0].scale(&(Rat::one() / d))),
                    _ => err("division by a non-constant"),
                },
                _ => err(format!("unsupported term operator `{}`", head)),
            }
        }
    }
}

pub fn parse_formula(s: &Sexp) -> Result<Formula, ParseError> {
    match s {
        Sexp::Atom(a) if a == "true" => Ok(Formula::True),
        Sexp::Atom(a) if a == "false" => Ok(Formula::False),
        Sexp::Atom(a) => err(format!("expected a formula, found `{}`", a)),
        Sexp::List(items) => {
            let (head, rest) = match items.split_first() {
                Some((Sexp::Atom(h), rest)) => (h.as_str(), rest),
                _ => return err("malformed formula"),
            };
            let sub = || rest.iter().map(parse_formula).collect::<Result<Vec<_>, _>>();
            let bin = || -> Result<(Poly, Poly), ParseError> {
                if rest.len() != 2 {
                    return err(format!("`{}` expects two arguments", head));
                }
                Ok((parse_term(&rest[0])?, parse_term(&rest[1])?))
            };
            match head {
                "and" => Ok(Formula::And(sub()?)),
                "or" => Ok(Formula::Or(sub()?)),
                "not" => {
                    let mut fs = sub()?;
                    if fs.len() != 1 {
                        return err("`not` expects one argument");
                    }
                    Ok(Formula::Not(alloc::boxed::Box::new(fs.pop().unwrap())))
                }
                "=>" => {
                    let mut fs = sub()?;
                    if fs.len() != 2 {
                        return err("`=>` expects two arguments");
                    }
                    let b = fs.pop().unwrap();
                    let a = fs.pop().unwrap();
                    Ok(Formula::implies(a, b))
                }
                ">=" => bin().map(|(a, b)| Formula::Ge(&a - &b)),
                ">" => bin().map(|(a, b)| Formula::Ge(&(&a - &b) - &Poly::one())),
                "<=" => bin().map(|(a, b)| Formula::Ge(&b - &a)),
                "<" => bin().map(|(a, b)| Formula::Ge(&(&b - &a) - &Poly::one())),
                "=" => bin().map(|(a, b)| Formula::Eq(&a - &b)),
                _ => err(format!("unsupported formula operator `{}`", head)),
            }
        }
    }
}

/// Integer constants from a `get-model` reply. Accepts both the bare list of
/// `define-fun`s and the older `(model ...)` wrapper; non-Int entries are skipped.
pub fn parse_model(text: &str) -> Result<Valuation, ParseError> {
    let mut out = Valuation::new();
    for top in parse_sexps(text)? {
        collect_defs(&top, &mut out)?;
    }
    Ok(out)
}

fn collect_defs(s: &Sexp, out: &mut Valuation) -> Result<(), ParseError> {
    let Sexp::List(items) = s else { return Ok(()) };
    if items.first().and_then(Sexp::as_atom) == Some("define-fun") {
        if items.len() != 5 {
            return err("malformed define-fun");
        }
        let name = items[1].as_atom().ok_or_else(|| ParseError("bad define-fun name".into()))?;
        let no_params = matches!(&items[2], Sexp::List(ps) if ps.is_empty());
        if no_params && items[3].as_atom() == Some("Int") {
            let value = parse_term(&items[4])?
                .as_constant()
                .filter(|c| c.is_integer())
                .ok_or_else(|| ParseError(format!("non-integer value for `{}`", name)))?;
            out.insert(Var::new(name), value.to_integer());
        }
        return Ok(());
    }
    for item in items {
        collect_defs(item, out)?;
    }
    Ok(())
}

/// Tracks which constants are declared at which assertion level and renders
/// the commands of an incremental session.
#[derive(Clone, Debug)]
pub struct Script {
    levels: Vec<BTreeSet<Var>>,
}

impl Default for Script {
    fn default() -> Self {
        Script::new()
    }
}

impl Script {
    pub fn new() -> Self {
        Script { levels: alloc::vec![BTreeSet::new()] }
    }

    pub fn prelude() -> Vec<String> {
        alloc::vec!["(set-option :produce-models true)".into(), "(set-logic QF_NIA)".into()]
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn push(&mut self) -> String {
        self.levels.push(BTreeSet::new());
        "(push 1)".into()
    }

    pub fn pop(&mut self) -> Result<String, SmtError> {
        if self.levels.len() == 1 {
            return Err(SmtError::Protocol("pop without matching push".into()));
        }
        self.levels.pop();
        Ok("(pop 1)".into())
    }

    pub fn is_declared(&self, v: &Var) -> bool {
        self.levels.iter().any(|l| l.contains(v))
    }

    /// Every constant currently in scope.
    pub fn declared(&self) -> BTreeSet<Var> {
        self.levels.iter().flatten().cloned().collect()
    }

    /// Declarations for new constants (sorted by name) followed by the assertion.
    pub fn assert(&mut self, f: &Formula) -> Vec<String> {
        let mut cmds = Vec::new();
        for v in f.vars() {
            if !self.is_declared(&v) {
                cmds.push(format!("(declare-const {} Int)", quote(v.name())));
                self.levels.last_mut().unwrap().insert(v);
            }
        }
        cmds.push(format!("(assert {})", emit_formula(f)));
        cmds
    }

    /// `(get-value ...)` is avoided on purpose; `get-model` plus defaulting
    /// keeps the reply format uniform across solvers.
    pub fn get_model() -> String {
        "(get-model)".into()
    }

    /// Totalizes a parsed model over the declared constants; solvers may omit
    /// unconstrained ones.
    pub fn complete_model(&self, mut model: Valuation) -> Valuation {
        let declared = self.declared();
        model.retain(|v, _| declared.contains(v));
        for v in declared {
            model.entry(v).or_insert_with(Int::zero);
        }
        model
    }
}
