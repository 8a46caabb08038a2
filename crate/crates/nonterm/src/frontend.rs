//! KoAT/TPDB input format: parser and printer.
//!
//! ```text
//! (GOAL NONTERM)
//! (STARTTERM (FUNCTIONSYMBOLS start))
//! (VAR x y)
//! (RULES
//!   start(x, y) -> f(x, y)
//!   f(x, y) -> f(x - y, y + 1) :|: x >= 0
//! )
//! ```
//!
//! All symbols share one argument list, taken from the first rule's
//! left-hand side and padded to the largest arity. Variables that occur in a
//! rule but not on its left-hand side become temps of that transition.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use nonterm_core::constraint::{Atom, Constraint, Rel};
use nonterm_core::its::{FunSym, Origin, Program, Transition, Update};
use nonterm_core::poly::{Int, Poly, Var};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FrontendError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("`{symbol}` is used with {first} and with {second} arguments")]
    Arity { symbol: String, first: usize, second: usize },
    #[error("{line}:{col}: `{text}` is not an integer literal")]
    NonIntegerLiteral { line: usize, col: usize, text: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Open,
    Close,
    Comma,
    Arrow,
    Bar,
    And,
    Plus,
    Minus,
    Star,
    Caret,
    Rel(Rel),
    Eq,
    Ident(String),
    Num(Int),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Open => f.write_str("`(`"),
            Tok::Close => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::Bar => f.write_str("`:|:`"),
            Tok::And => f.write_str("`&&`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Caret => f.write_str("`^`"),
            Tok::Rel(r) => write!(f, "relation {:?}", r),
            Tok::Eq => f.write_str("`=`"),
            Tok::Ident(s) => write!(f, "`{}`", s),
            Tok::Num(n) => write!(f, "`{}`", n),
        }
    }
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '\'' | '.' | '#' | '$' | '!' | '@' | '~')
}

fn lex(text: &str) -> Result<Vec<Spanned>, FrontendError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let err = |msg: String| FrontendError::Syntax { line: l0, col: c0, msg };
        let at = |k: usize, s: &str| s.chars().enumerate().all(|(j, ch)| chars.get(k + j) == Some(&ch));
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' && col == 1 {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (tok, len) = if c == '(' {
            (Tok::Open, 1)
        } else if c == ')' {
            (Tok::Close, 1)
        } else if c == ',' {
            (Tok::Comma, 1)
        } else if at(i, "->") {
            (Tok::Arrow, 2)
        } else if at(i, "-{") {
            // Cost-annotated arrow `-{ ... }>`; the annotation is ignored.
            let mut j = i + 2;
            while j < chars.len() && !(chars[j] == '}' && chars.get(j + 1) == Some(&'>')) {
                if chars[j] == '\n' {
                    return Err(err("unterminated cost annotation".into()));
                }
                j += 1;
            }
            if j >= chars.len() {
                return Err(err("unterminated cost annotation".into()));
            }
            (Tok::Arrow, j + 2 - i)
        } else if at(i, ":|:") {
            (Tok::Bar, 3)
        } else if at(i, "&&") {
            (Tok::And, 2)
        } else if at(i, "/\\") {
            (Tok::And, 2)
        } else if at(i, ">=") {
            (Tok::Rel(Rel::Ge), 2)
        } else if at(i, "<=") {
            (Tok::Rel(Rel::Le), 2)
        } else if at(i, "==") {
            (Tok::Eq, 2)
        } else if c == '>' {
            (Tok::Rel(Rel::Gt), 1)
        } else if c == '<' {
            (Tok::Rel(Rel::Lt), 1)
        } else if c == '=' {
            (Tok::Eq, 1)
        } else if c == '+' {
            (Tok::Plus, 1)
        } else if c == '-' {
            (Tok::Minus, 1)
        } else if c == '*' {
            (Tok::Star, 1)
        } else if c == '^' {
            (Tok::Caret, 1)
        } else if c.is_ascii_digit() {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.' || chars[j] == '/') {
                j += 1;
            }
            let text: String = chars[i..j].iter().collect();
            match text.parse::<Int>() {
                Ok(n) => (Tok::Num(n), j - i),
                Err(_) => return Err(FrontendError::NonIntegerLiteral { line: l0, col: c0, text }),
            }
        } else if is_ident_char(c) {
            let mut j = i;
            while j < chars.len() && is_ident_char(chars[j]) {
                j += 1;
            }
            (Tok::Ident(chars[i..j].iter().collect()), j - i)
        } else {
            return Err(err(format!("unexpected character `{}`", c)));
        };
        out.push(Spanned { tok, line: l0, col: c0 });
        i += len;
        col += len;
    }
    Ok(out)
}

/// Arithmetic expression before variables are resolved.
#[derive(Clone, Debug)]
enum Expr {
    Num(Int),
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, u32),
}

impl Expr {
    fn to_poly(&self, names: &BTreeMap<String, Var>) -> Poly {
        match self {
            Expr::Num(n) => Poly::from_int(n.clone()),
            Expr::Var(v) => Poly::var(&names[v]),
            Expr::Add(a, b) => a.to_poly(names) + b.to_poly(names),
            Expr::Sub(a, b) => a.to_poly(names) - b.to_poly(names),
            Expr::Mul(a, b) => a.to_poly(names) * b.to_poly(names),
            Expr::Neg(a) => -a.to_poly(names),
            Expr::Pow(a, e) => a.to_poly(names).pow(*e),
        }
    }

    fn collect(&self, out: &mut Vec<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => out.push(v.clone()),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.collect(out);
                b.collect(out);
            }
            Expr::Neg(a) | Expr::Pow(a, _) => a.collect(out),
        }
    }
}

#[derive(Clone, Debug)]
struct Term {
    symbol: String,
    args: Vec<Expr>,
    line: usize,
    col: usize,
}

#[derive(Clone, Debug)]
struct Rule {
    lhs: Term,
    rhs: Term,
    guard: Vec<(Expr, Rel, Expr)>,
}

/// The parsed file before canonicalization.
#[derive(Clone, Debug, Default)]
struct ParsedFile {
    start: Option<String>,
    vars: Option<BTreeSet<String>>,
    rules: Vec<Rule>,
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    eof: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map_or(self.eof, |s| (s.line, s.col))
    }

    fn fail<T>(&self, msg: impl Into<String>) -> Result<T, FrontendError> {
        let (line, col) = self.here();
        Err(FrontendError::Syntax { line, col, msg: msg.into() })
    }

    fn unexpected<T>(&self, wanted: &str) -> Result<T, FrontendError> {
        match self.peek() {
            Some(t) => self.fail(format!("expected {}, found {}", wanted, t)),
            None => self.fail(format!("expected {}, found end of input", wanted)),
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok) -> Result<(), FrontendError> {
        if self.eat(&t) {
            Ok(())
        } else {
            self.unexpected(&t.to_string())
        }
    }

    fn ident(&mut self) -> Result<String, FrontendError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.unexpected("an identifier"),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), FrontendError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => self.unexpected(&format!("`{}`", kw)),
        }
    }

    fn file(&mut self) -> Result<ParsedFile, FrontendError> {
        let mut out = ParsedFile::default();
        while self.peek().is_some() {
            self.expect(Tok::Open)?;
            let (line, col) = self.here();
            let section = self.ident()?;
            match section.as_str() {
                "GOAL" | "COMMENT" => {
                    let mut depth = 1;
                    while depth > 0 {
                        match self.peek() {
                            Some(Tok::Open) => depth += 1,
                            Some(Tok::Close) => depth -= 1,
                            None => return self.unexpected("`)`"),
                            _ => {}
                        }
                        self.pos += 1;
                    }
                    continue;
                }
                "STARTTERM" => {
                    self.expect(Tok::Open)?;
                    self.keyword("FUNCTIONSYMBOLS")?;
                    out.start = Some(self.ident()?);
                    self.expect(Tok::Close)?;
                }
                "VAR" => {
                    let mut vs = BTreeSet::new();
                    while let Some(Tok::Ident(_)) = self.peek() {
                        vs.insert(self.ident()?);
                    }
                    out.vars.get_or_insert_with(BTreeSet::new).extend(vs);
                }
                "RULES" => {
                    while self.peek() != Some(&Tok::Close) && self.peek().is_some() {
                        out.rules.push(self.rule()?);
                    }
                }
                other => {
                    return Err(FrontendError::Syntax { line, col, msg: format!("unknown section `{}`", other) });
                }
            }
            self.expect(Tok::Close)?;
        }
        Ok(out)
    }

    fn term(&mut self) -> Result<Term, FrontendError> {
        let (line, col) = self.here();
        let symbol = self.ident()?;
        let mut args = Vec::new();
        self.expect(Tok::Open)?;
        if !self.eat(&Tok::Close) {
            loop {
                args.push(self.expr()?);
                if self.eat(&Tok::Close) {
                    break;
                }
                self.expect(Tok::Comma)?;
            }
        }
        Ok(Term { symbol, args, line, col })
    }

    fn rhs(&mut self) -> Result<Term, FrontendError> {
        let (line, col) = self.here();
        if let Some(Tok::Ident(s)) = self.peek() {
            if let Some(n) = s.strip_prefix("Com_") {
                if n != "1" {
                    return Err(FrontendError::Syntax {
                        line,
                        col,
                        msg: format!("`{}`: rules with several right-hand sides are not supported", s),
                    });
                }
                self.pos += 1;
                self.expect(Tok::Open)?;
                let t = self.term()?;
                self.expect(Tok::Close)?;
                return Ok(t);
            }
        }
        self.term()
    }

    fn rule(&mut self) -> Result<Rule, FrontendError> {
        let lhs = self.term()?;
        self.expect(Tok::Arrow)?;
        let rhs = self.rhs()?;
        let mut guard = Vec::new();
        if self.eat(&Tok::Bar) {
            loop {
                if let Some(Tok::Ident(s)) = self.peek() {
                    if s == "TRUE" {
                        self.pos += 1;
                        if self.eat(&Tok::And) {
                            continue;
                        }
                        break;
                    }
                }
                let l = self.expr()?;
                let rel = match self.peek() {
                    Some(Tok::Rel(r)) => *r,
                    Some(Tok::Eq) => Rel::Eq,
                    _ => return self.unexpected("a relation"),
                };
                self.pos += 1;
                let r = self.expr()?;
                guard.push((l, rel, r));
                if !self.eat(&Tok::And) {
                    break;
                }
            }
        }
        Ok(Rule { lhs, rhs, guard })
    }

    fn expr(&mut self) -> Result<Expr, FrontendError> {
        let mut e = self.product()?;
        loop {
            if self.eat(&Tok::Plus) {
                e = Expr::Add(Box::new(e), Box::new(self.product()?));
            } else if self.eat(&Tok::Minus) {
                e = Expr::Sub(Box::new(e), Box::new(self.product()?));
            } else {
                return Ok(e);
            }
        }
    }

    fn product(&mut self) -> Result<Expr, FrontendError> {
        let mut e = self.unary()?;
        while self.eat(&Tok::Star) {
            e = Expr::Mul(Box::new(e), Box::new(self.unary()?));
        }
        Ok(e)
    }

    fn unary(&mut self) -> Result<Expr, FrontendError> {
        if self.eat(&Tok::Minus) {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.primary()?;
        if self.eat(&Tok::Caret) {
            match self.peek() {
                Some(Tok::Num(n)) => {
                    let Ok(e) = u32::try_from(n.clone()) else { return self.fail("exponent too large") };
                    self.pos += 1;
                    return Ok(Expr::Pow(Box::new(base), e));
                }
                _ => return self.unexpected("a natural exponent"),
            }
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, FrontendError> {
        match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(Expr::Num(n))
            }
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                if self.peek() == Some(&Tok::Open) {
                    self.pos -= 1;
                    return self.fail(format!("`{}` is applied like a function inside an expression", s));
                }
                Ok(Expr::Var(s))
            }
            Some(Tok::Open) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::Close)?;
                Ok(e)
            }
            _ => self.unexpected("an expression"),
        }
    }
}

/// Parses a KoAT/TPDB file into a program over one canonical argument list.
pub fn parse(text: &str) -> Result<Program, FrontendError> {
    let toks = lex(text)?;
    let eof = toks.last().map_or((1, 1), |t| (t.line, t.col + 1));
    let mut parser = Parser { toks, pos: 0, eof };
    let file = parser.file()?;
    build(file, eof)
}

fn build(file: ParsedFile, eof: (usize, usize)) -> Result<Program, FrontendError> {
    let syntax = |line, col, msg: String| FrontendError::Syntax { line, col, msg };
    let Some(first) = file.rules.first() else {
        return Err(syntax(eof.0, eof.1, "no rules".into()));
    };
    let start_name = file.start.clone().unwrap_or_else(|| first.lhs.symbol.clone());

    let mut arity: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &file.rules {
        for t in [&r.lhs, &r.rhs] {
            let n = t.args.len();
            if let Some(&m) = arity.get(t.symbol.as_str()) {
                if m != n {
                    return Err(FrontendError::Arity { symbol: t.symbol.clone(), first: m, second: n });
                }
            } else {
                arity.insert(&t.symbol, n);
            }
        }
    }
    let width = arity.values().copied().max().unwrap_or(0);

    let mut lhs_names: Vec<Vec<String>> = Vec::new();
    let mut all_names: BTreeSet<String> = file.vars.clone().unwrap_or_default();
    for r in &file.rules {
        let mut names = Vec::new();
        for a in &r.lhs.args {
            match a {
                Expr::Var(v) if !names.contains(v) => names.push(v.clone()),
                _ => {
                    return Err(syntax(r.lhs.line, r.lhs.col, "left-hand side arguments must be distinct variables".into()))
                }
            }
        }
        let mut used = Vec::new();
        for a in &r.rhs.args {
            a.collect(&mut used);
        }
        for (l, _, rr) in &r.guard {
            l.collect(&mut used);
            rr.collect(&mut used);
        }
        used.extend(names.iter().cloned());
        if let Some(declared) = &file.vars {
            if let Some(v) = used.iter().find(|v| !declared.contains(*v)) {
                return Err(syntax(r.lhs.line, r.lhs.col, format!("variable `{}` is not declared in VAR", v)));
            }
        }
        all_names.extend(used);
        lhs_names.push(names);
    }

    // Canonical arguments: the first rule's variables, padded with fresh names.
    let mut args: Vec<Var> = lhs_names[0].iter().map(Var::new).collect();
    while args.len() < width {
        let taken = |v: &Var| all_names.contains(v.name()) || args.contains(v);
        let v = Var::fresh(&format!("a{}", args.len() + 1), taken);
        args.push(v);
    }

    let symbols_on_rhs: BTreeSet<&str> = file.rules.iter().map(|r| r.rhs.symbol.as_str()).collect();
    let (start, entry) = if symbols_on_rhs.contains(start_name.as_str()) {
        let taken: BTreeSet<&str> = arity.keys().copied().collect();
        let mut name = format!("{}_init", start_name);
        while taken.contains(name.as_str()) {
            name.push('\'');
        }
        (FunSym::new(&name), Some(FunSym::new(&start_name)))
    } else {
        (FunSym::new(&start_name), None)
    };

    let mut p = Program::new(args.clone(), start.clone());
    if let Some(old) = entry {
        let id = args.iter().map(|a| (a.clone(), Poly::var(a))).collect();
        p.add(Transition::new(start, args.clone(), Constraint::top(), Update::from_map(id), old, Origin::Original));
    }

    for (r, names) in file.rules.iter().zip(&lhs_names) {
        // Temps must not clash with canonical names.
        let mut map: BTreeMap<String, Var> = BTreeMap::new();
        for (n, a) in names.iter().zip(&args) {
            map.insert(n.clone(), a.clone());
        }
        let mut used = Vec::new();
        for a in &r.rhs.args {
            a.collect(&mut used);
        }
        for (l, _, rr) in &r.guard {
            l.collect(&mut used);
            rr.collect(&mut used);
        }
        for v in used {
            if map.contains_key(&v) {
                continue;
            }
            let taken = |c: &Var| args.contains(c) || map.values().any(|m| m == c);
            let fresh = Var::fresh(&v, taken);
            map.insert(v, fresh);
        }
        let mut atoms = Vec::new();
        for (l, rel, rr) in &r.guard {
            atoms.extend(Atom::from_rel(&l.to_poly(&map), *rel, &rr.to_poly(&map)));
        }
        let mut upd = BTreeMap::new();
        for (i, a) in args.iter().enumerate() {
            let e = r.rhs.args.get(i).map_or_else(|| Poly::var(a), |e| e.to_poly(&map));
            upd.insert(a.clone(), e);
        }
        p.add(Transition::new(
            FunSym::new(&r.lhs.symbol),
            args.clone(),
            Constraint::new(atoms),
            Update::from_map(upd),
            FunSym::new(&r.rhs.symbol),
            Origin::Original,
        ));
    }
    Ok(p)
}

/// Renders `p` in the input format. Sink transitions have no counterpart
/// there and are skipped.
pub fn print(p: &Program) -> String {
    let mut vars: BTreeSet<Var> = p.args.iter().cloned().collect();
    for t in p.iter() {
        vars.extend(t.temps.iter().cloned());
    }
    let mut out = String::new();
    out.push_str("(GOAL NONTERM)\n");
    let _ = writeln!(out, "(STARTTERM (FUNCTIONSYMBOLS {}))", p.start);
    let names: Vec<&str> = vars.iter().map(Var::name).collect();
    let _ = writeln!(out, "(VAR {})", names.join(" "));
    out.push_str("(RULES\n");
    let lhs_args: Vec<&str> = p.args.iter().map(Var::name).collect();
    for t in p.iter().filter(|t| !t.targets_sink()) {
        let rhs: Vec<String> = p.args.iter().map(|a| t.update.get(a).to_string()).collect();
        let _ = write!(out, "  {}({}) -> {}({})", t.source, lhs_args.join(", "), t.target, rhs.join(", "));
        if !t.guard.is_empty() {
            let atoms: Vec<String> = t.guard.iter().map(|a| format!("{} >= 0", a.poly())).collect();
            let _ = write!(out, " :|: {}", atoms.join(" && "));
        }
        out.push('\n');
    }
    out.push_str(")\n");
    out
}
