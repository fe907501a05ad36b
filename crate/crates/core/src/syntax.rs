//! Formula AST, concrete grammar, printer and static measures.

use crate::model::{BuiltinRegistry, Vocabulary};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

pub type Var = String;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    False,
    Rel(String, Vec<Var>),
    /// Built-in atom; the name is `le`, `lt`, `plus`, `times`, `bit` or `set:<id>`.
    Builtin(String, Vec<Var>),
    Eq(Var, Var),
    /// X(x) for a set variable X.
    SetAtom(Var, Var),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
    Exists(Var, Box<Formula>),
    Forall(Var, Box<Formula>),
    /// #x=y. φ: the number of x satisfying φ is the numerical value of y.
    Count { bound: Var, count: Var, body: Box<Formula> },
    Quant { name: String, slots: Vec<Slot> },
    SetExists(Var, Box<Formula>),
    SetForall(Var, Box<Formula>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Slot {
    pub vars: Vec<Var>,
    pub body: Formula,
}

impl Slot {
    pub fn new<S: Into<Var>>(vars: impl IntoIterator<Item = S>, body: Formula) -> Self {
        Slot { vars: vars.into_iter().map(Into::into).collect(), body }
    }
}

/// Short constructors.
impl Formula {
    pub fn rel<S: Into<Var>>(name: &str, args: impl IntoIterator<Item = S>) -> Self {
        Formula::Rel(name.to_string(), args.into_iter().map(Into::into).collect())
    }
    pub fn builtin<S: Into<Var>>(name: &str, args: impl IntoIterator<Item = S>) -> Self {
        Formula::Builtin(name.to_string(), args.into_iter().map(Into::into).collect())
    }
    pub fn eq(a: &str, b: &str) -> Self {
        Formula::Eq(a.into(), b.into())
    }
    pub fn le(a: &str, b: &str) -> Self {
        Self::builtin("le", [a, b])
    }
    pub fn lt(a: &str, b: &str) -> Self {
        Self::builtin("lt", [a, b])
    }
    pub fn set_atom(set: &str, x: &str) -> Self {
        Formula::SetAtom(set.into(), x.into())
    }
    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Formula) -> Self {
        Formula::Not(Box::new(a))
    }
    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }
    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }
    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }
    pub fn iff(a: Formula, b: Formula) -> Self {
        Formula::Iff(Box::new(a), Box::new(b))
    }
    pub fn exists(x: &str, a: Formula) -> Self {
        Formula::Exists(x.into(), Box::new(a))
    }
    pub fn forall(x: &str, a: Formula) -> Self {
        Formula::Forall(x.into(), Box::new(a))
    }
    pub fn set_exists(x: &str, a: Formula) -> Self {
        Formula::SetExists(x.into(), Box::new(a))
    }
    pub fn set_forall(x: &str, a: Formula) -> Self {
        Formula::SetForall(x.into(), Box::new(a))
    }
    pub fn count(bound: &str, count: &str, body: Formula) -> Self {
        Formula::Count { bound: bound.into(), count: count.into(), body: Box::new(body) }
    }
    pub fn quant(name: &str, slots: Vec<Slot>) -> Self {
        Formula::Quant { name: name.into(), slots }
    }
    /// Left-nested conjunction; `True` for an empty list.
    pub fn and_all(items: impl IntoIterator<Item = Formula>) -> Self {
        items.into_iter().reduce(Formula::and).unwrap_or(Formula::True)
    }
    /// Left-nested disjunction; `False` for an empty list.
    pub fn or_all(items: impl IntoIterator<Item = Formula>) -> Self {
        items.into_iter().reduce(Formula::or).unwrap_or(Formula::False)
    }

    /// Immediate subformulas.
    pub fn children(&self) -> Vec<&Formula> {
        match self {
            Formula::True
            | Formula::False
            | Formula::Rel(..)
            | Formula::Builtin(..)
            | Formula::Eq(..)
            | Formula::SetAtom(..) => vec![],
            Formula::Not(a)
            | Formula::Exists(_, a)
            | Formula::Forall(_, a)
            | Formula::SetExists(_, a)
            | Formula::SetForall(_, a) => vec![a],
            Formula::Count { body, .. } => vec![body],
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Iff(a, b) => vec![a, b],
            Formula::Quant { slots, .. } => slots.iter().map(|s| &s.body).collect(),
        }
    }

    /// Visits every node in preorder.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Formula)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }
}

/// Free first-order variables.
pub fn free_variables(phi: &Formula) -> BTreeSet<Var> {
    let mut out = BTreeSet::new();
    collect_free(phi, &mut Vec::new(), &mut out, false);
    out
}

/// Free set variables.
pub fn free_set_variables(phi: &Formula) -> BTreeSet<Var> {
    let mut out = BTreeSet::new();
    collect_free(phi, &mut Vec::new(), &mut out, true);
    out
}

fn collect_free<'a>(phi: &'a Formula, bound: &mut Vec<&'a str>, out: &mut BTreeSet<Var>, sets: bool) {
    let note = |v: &'a str, bound: &Vec<&'a str>, out: &mut BTreeSet<Var>| {
        if !bound.contains(&v) {
            out.insert(v.to_string());
        }
    };
    match phi {
        Formula::True | Formula::False => {}
        Formula::Rel(_, args) | Formula::Builtin(_, args) => {
            if !sets {
                for a in args {
                    note(a, bound, out);
                }
            }
        }
        Formula::Eq(a, b) => {
            if !sets {
                note(a, bound, out);
                note(b, bound, out);
            }
        }
        Formula::SetAtom(x, a) => {
            if sets {
                note(x, bound, out)
            } else {
                note(a, bound, out)
            }
        }
        Formula::Not(a) => collect_free(a, bound, out, sets),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Iff(a, b) => {
            collect_free(a, bound, out, sets);
            collect_free(b, bound, out, sets);
        }
        Formula::Exists(x, a) | Formula::Forall(x, a) => {
            if sets {
                collect_free(a, bound, out, sets)
            } else {
                bound.push(x);
                collect_free(a, bound, out, sets);
                bound.pop();
            }
        }
        Formula::SetExists(x, a) | Formula::SetForall(x, a) => {
            if sets {
                bound.push(x);
                collect_free(a, bound, out, sets);
                bound.pop();
            } else {
                collect_free(a, bound, out, sets)
            }
        }
        Formula::Count { bound: x, count, body } => {
            if sets {
                collect_free(body, bound, out, sets)
            } else {
                note(count, bound, out);
                bound.push(x);
                collect_free(body, bound, out, sets);
                bound.pop();
            }
        }
        Formula::Quant { slots, .. } => {
            for s in slots {
                let k = bound.len();
                if !sets {
                    bound.extend(s.vars.iter().map(String::as_str));
                }
                collect_free(&s.body, bound, out, sets);
                bound.truncate(k);
            }
        }
    }
}

/// Every variable name appearing anywhere (free, bound, first-order or set).
pub fn all_names(phi: &Formula) -> BTreeSet<Var> {
    let mut out = BTreeSet::new();
    phi.walk(&mut |f| match f {
        Formula::Rel(_, a) | Formula::Builtin(_, a) => out.extend(a.iter().cloned()),
        Formula::Eq(a, b) | Formula::SetAtom(a, b) => {
            out.insert(a.clone());
            out.insert(b.clone());
        }
        Formula::Exists(x, _) | Formula::Forall(x, _) | Formula::SetExists(x, _) | Formula::SetForall(x, _) => {
            out.insert(x.clone());
        }
        Formula::Count { bound, count, .. } => {
            out.insert(bound.clone());
            out.insert(count.clone());
        }
        Formula::Quant { slots, .. } => {
            for s in slots {
                out.extend(s.vars.iter().cloned());
            }
        }
        _ => {}
    });
    out
}

/// Nesting depth of binders; every quantifier application counts 1.
pub fn quantifier_rank(phi: &Formula) -> usize {
    let below = phi.children().into_iter().map(quantifier_rank).max().unwrap_or(0);
    match phi {
        Formula::Exists(..)
        | Formula::Forall(..)
        | Formula::Count { .. }
        | Formula::SetExists(..)
        | Formula::SetForall(..)
        | Formula::Quant { .. } => below + 1,
        _ => below,
    }
}

/// Names of generalized quantifiers used.
pub fn quantifiers_used(phi: &Formula) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    phi.walk(&mut |f| {
        if let Formula::Quant { name, .. } = f {
            out.insert(name.clone());
        }
    });
    out
}

/// Names of built-in relations used.
pub fn builtins_used(phi: &Formula) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    phi.walk(&mut |f| {
        if let Formula::Builtin(name, _) = f {
            out.insert(name.clone());
        }
    });
    out
}

/// Relation symbols used, with arities.
pub fn relations_used(phi: &Formula) -> Vocabulary {
    let mut out = BTreeMap::new();
    phi.walk(&mut |f| {
        if let Formula::Rel(name, args) = f {
            out.insert(name.clone(), args.len());
        }
    });
    out
}

// ---------------------------------------------------------------- printing

fn prec(phi: &Formula) -> u8 {
    match phi {
        Formula::Iff(..) => 1,
        Formula::Implies(..) => 2,
        Formula::Or(..) => 3,
        Formula::And(..) => 4,
        Formula::Not(_)
        | Formula::Exists(..)
        | Formula::Forall(..)
        | Formula::SetExists(..)
        | Formula::SetForall(..)
        | Formula::Count { .. } => 5,
        _ => 6,
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, phi: &Formula, min: u8) -> fmt::Result {
    if prec(phi) < min {
        write!(f, "({phi})")
    } else {
        write!(f, "{phi}")
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => f.write_str("true"),
            Formula::False => f.write_str("false"),
            Formula::Rel(name, args) => write!(f, "{name}({})", args.join(",")),
            Formula::Builtin(name, args) => write!(f, "@{name}({})", args.join(",")),
            Formula::Eq(a, b) => write!(f, "{a}={b}"),
            Formula::SetAtom(x, a) => write!(f, "{x}({a})"),
            Formula::Not(a) => {
                f.write_str("!")?;
                write_child(f, a, 5)
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Iff(a, b) => {
                let p = prec(self);
                let op = match self {
                    Formula::And(..) => "&",
                    Formula::Or(..) => "|",
                    Formula::Implies(..) => "->",
                    _ => "<->",
                };
                write_child(f, a, p)?;
                write!(f, " {op} ")?;
                write_child(f, b, p + 1)
            }
            Formula::Exists(x, a) => {
                write!(f, "E {x}. ")?;
                write_child(f, a, 5)
            }
            Formula::Forall(x, a) => {
                write!(f, "A {x}. ")?;
                write_child(f, a, 5)
            }
            Formula::SetExists(x, a) => {
                write!(f, "EX {x}. ")?;
                write_child(f, a, 5)
            }
            Formula::SetForall(x, a) => {
                write!(f, "AX {x}. ")?;
                write_child(f, a, 5)
            }
            Formula::Count { bound, count, body } => {
                write!(f, "#{bound}={count}. ")?;
                write_child(f, body, 5)
            }
            Formula::Quant { name, slots } => {
                write!(f, "{name}(")?;
                for (i, s) in slots.iter().enumerate() {
                    if i > 0 {
                        f.write_str("; ")?;
                    }
                    write!(f, "{}: {}", s.vars.join(","), s.body)?;
                }
                f.write_str(")")
            }
        }
    }
}

// ----------------------------------------------------------------- parsing

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown symbol `{name}` at {pos}")]
    Unknown { pos: usize, name: String },
    #[error("arity mismatch for `{name}` at {pos}: expected {expected}, got {got}")]
    Arity { pos: usize, name: String, expected: usize, got: usize },
    #[error("repeated variable `{var}` in a slot of `{name}` at {pos}")]
    RepeatedSlotVar { pos: usize, name: String, var: String },
}

/// Slot arities of named quantifiers, as seen by the parser.
pub trait QuantifierSignatures {
    fn slot_arities(&self, name: &str) -> Option<Vec<usize>>;
}

impl QuantifierSignatures for BTreeMap<String, Vec<usize>> {
    fn slot_arities(&self, name: &str) -> Option<Vec<usize>> {
        self.get(name).cloned()
    }
}

/// Everything the parser needs to resolve names.
pub struct ParseContext<'a> {
    pub vocab: &'a Vocabulary,
    pub quants: &'a dyn QuantifierSignatures,
    /// When present, `@set:<id>` ids are checked against it.
    pub builtins: Option<&'a BuiltinRegistry>,
    pub free_set_vars: BTreeSet<String>,
}

impl<'a> ParseContext<'a> {
    pub fn new(vocab: &'a Vocabulary, quants: &'a dyn QuantifierSignatures) -> Self {
        ParseContext { vocab, quants, builtins: None, free_set_vars: BTreeSet::new() }
    }
    pub fn with_builtins(mut self, b: &'a BuiltinRegistry) -> Self {
        self.builtins = Some(b);
        self
    }
    pub fn with_set_vars<S: Into<String>>(mut self, vars: impl IntoIterator<Item = S>) -> Self {
        self.free_set_vars.extend(vars.into_iter().map(Into::into));
        self
    }
}

/// Parses a formula in the module grammar.
pub fn parse(text: &str, ctx: &ParseContext<'_>) -> Result<Formula, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, i: 0, ctx, set_scope: ctx.free_set_vars.iter().cloned().collect() };
    let phi = p.formula()?;
    if p.peek() != &Tok::End {
        return Err(p.syntax("trailing input"));
    }
    Ok(phi)
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    At(String),
    LParen,
    RParen,
    Comma,
    Semi,
    Colon,
    Dot,
    Eq,
    Bang,
    Amp,
    Bar,
    Arrow,
    DArrow,
    Lt,
    Le,
    Plus,
    Hash,
    End,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let cs: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |pos: usize, msg: &str| ParseError::Syntax { pos, msg: msg.to_string() };
    let starts = |i: usize, s: &str| s.chars().enumerate().all(|(k, c)| cs.get(i + k).map(|x| x.1) == Some(c));
    while i < cs.len() {
        let (pos, c) = cs[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let (tok, len) = if starts(i, "<->") {
            (Tok::DArrow, 3)
        } else if starts(i, "->") {
            (Tok::Arrow, 2)
        } else if starts(i, "<=") {
            (Tok::Le, 2)
        } else {
            match c {
                '(' => (Tok::LParen, 1),
                ')' => (Tok::RParen, 1),
                ',' => (Tok::Comma, 1),
                ';' => (Tok::Semi, 1),
                ':' => (Tok::Colon, 1),
                '.' => (Tok::Dot, 1),
                '=' => (Tok::Eq, 1),
                '!' => (Tok::Bang, 1),
                '&' => (Tok::Amp, 1),
                '|' => (Tok::Bar, 1),
                '<' => (Tok::Lt, 1),
                '+' => (Tok::Plus, 1),
                '#' => (Tok::Hash, 1),
                '@' => {
                    let mut j = i + 1;
                    let mut name = String::new();
                    while j < cs.len() && (is_ident_char(cs[j].1) || cs[j].1 == ':') {
                        name.push(cs[j].1);
                        j += 1;
                    }
                    if name.is_empty() {
                        return Err(err(pos, "expected a built-in name after `@`"));
                    }
                    (Tok::At(name), j - i)
                }
                c if is_ident_start(c) => {
                    let mut j = i;
                    let mut name = String::new();
                    while j < cs.len() && is_ident_char(cs[j].1) {
                        name.push(cs[j].1);
                        j += 1;
                    }
                    (Tok::Ident(name), j - i)
                }
                _ => return Err(err(pos, &format!("unexpected character `{c}`"))),
            }
        };
        out.push((pos, tok));
        i += len;
    }
    out.push((text.len(), Tok::End));
    Ok(out)
}

struct Parser<'a, 'c> {
    toks: Vec<(usize, Tok)>,
    i: usize,
    ctx: &'a ParseContext<'c>,
    set_scope: Vec<String>,
}

const KEYWORDS: [&str; 6] = ["E", "A", "EX", "AX", "true", "false"];

impl Parser<'_, '_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].1
    }
    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.i + k).min(self.toks.len() - 1)].1
    }
    fn pos(&self) -> usize {
        self.toks[self.i].0
    }
    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].1.clone();
        if self.i < self.toks.len() - 1 {
            self.i += 1;
        }
        t
    }
    fn syntax(&self, msg: &str) -> ParseError {
        ParseError::Syntax { pos: self.pos(), msg: msg.to_string() }
    }
    fn expect(&mut self, t: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == &t {
            self.bump();
            Ok(())
        } else {
            Err(self.syntax(&format!("expected {what}")))
        }
    }
    fn var(&mut self) -> Result<Var, ParseError> {
        match self.peek().clone() {
            Tok::Ident(v) if !KEYWORDS.contains(&v.as_str()) => {
                self.bump();
                Ok(v)
            }
            _ => Err(self.syntax("expected a variable")),
        }
    }
    fn varlist(&mut self) -> Result<Vec<Var>, ParseError> {
        let mut out = Vec::new();
        if matches!(self.peek(), Tok::Ident(_)) {
            out.push(self.var()?);
            while self.peek() == &Tok::Comma {
                self.bump();
                out.push(self.var()?);
            }
        }
        Ok(out)
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        self.iff()
    }
    fn iff(&mut self) -> Result<Formula, ParseError> {
        let mut a = self.imp()?;
        while self.peek() == &Tok::DArrow {
            self.bump();
            a = Formula::iff(a, self.imp()?);
        }
        Ok(a)
    }
    fn imp(&mut self) -> Result<Formula, ParseError> {
        let mut a = self.or()?;
        while self.peek() == &Tok::Arrow {
            self.bump();
            a = Formula::implies(a, self.or()?);
        }
        Ok(a)
    }
    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut a = self.and()?;
        while self.peek() == &Tok::Bar {
            self.bump();
            a = Formula::or(a, self.and()?);
        }
        Ok(a)
    }
    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut a = self.neg()?;
        while self.peek() == &Tok::Amp {
            self.bump();
            a = Formula::and(a, self.neg()?);
        }
        Ok(a)
    }

    fn neg(&mut self) -> Result<Formula, ParseError> {
        match self.peek().clone() {
            Tok::Bang => {
                self.bump();
                Ok(Formula::not(self.neg()?))
            }
            Tok::Hash => {
                self.bump();
                let x = self.var()?;
                self.expect(Tok::Eq, "`=`")?;
                let y = self.var()?;
                self.expect(Tok::Dot, "`.`")?;
                Ok(Formula::Count { bound: x, count: y, body: Box::new(self.neg()?) })
            }
            Tok::Ident(k) if (k == "E" || k == "A") && matches!(self.peek_at(1), Tok::Ident(_)) => {
                self.bump();
                let x = self.var()?;
                self.expect(Tok::Dot, "`.`")?;
                let body = Box::new(self.neg()?);
                Ok(if k == "E" { Formula::Exists(x, body) } else { Formula::Forall(x, body) })
            }
            Tok::Ident(k) if (k == "EX" || k == "AX") && matches!(self.peek_at(1), Tok::Ident(_)) => {
                self.bump();
                let x = self.var()?;
                self.expect(Tok::Dot, "`.`")?;
                self.set_scope.push(x.clone());
                let body = self.neg();
                self.set_scope.pop();
                let body = Box::new(body?);
                Ok(if k == "EX" { Formula::SetExists(x, body) } else { Formula::SetForall(x, body) })
            }
            Tok::Ident(q) if self.ctx.quants.slot_arities(&q).is_some() && !self.set_scope.contains(&q) => {
                self.quant_app(q)
            }
            _ => self.prim(),
        }
    }

    fn quant_app(&mut self, name: String) -> Result<Formula, ParseError> {
        let pos = self.pos();
        let arities = self.ctx.quants.slot_arities(&name).unwrap();
        self.bump();
        let mut slots = Vec::new();
        if self.peek() == &Tok::LParen {
            self.bump();
            loop {
                let vars = self.varlist()?;
                self.expect(Tok::Colon, "`:` after slot variables")?;
                let body = self.formula()?;
                slots.push(Slot { vars, body });
                if self.peek() == &Tok::Semi {
                    self.bump();
                } else {
                    break;
                }
            }
            self.expect(Tok::RParen, "`)`")?;
        } else {
            // Q x1,…,xk.(φ1; …; φm): variables distributed over slots by arity
            let vars = self.varlist()?;
            self.expect(Tok::Dot, "`.`")?;
            self.expect(Tok::LParen, "`(`")?;
            let mut bodies = vec![self.formula()?];
            while self.peek() == &Tok::Semi {
                self.bump();
                bodies.push(self.formula()?);
            }
            self.expect(Tok::RParen, "`)`")?;
            let total: usize = arities.iter().sum();
            if bodies.len() != arities.len() || vars.len() != total {
                return Err(ParseError::Arity { pos, name, expected: total, got: vars.len() });
            }
            let mut it = vars.into_iter();
            for (body, &k) in bodies.into_iter().zip(&arities) {
                slots.push(Slot { vars: it.by_ref().take(k).collect(), body });
            }
        }
        if slots.len() != arities.len() {
            return Err(ParseError::Arity { pos, name, expected: arities.len(), got: slots.len() });
        }
        for (s, &k) in slots.iter().zip(&arities) {
            if s.vars.len() != k {
                return Err(ParseError::Arity { pos, name, expected: k, got: s.vars.len() });
            }
            for (i, v) in s.vars.iter().enumerate() {
                if s.vars[..i].contains(v) {
                    return Err(ParseError::RepeatedSlotVar { pos, name, var: v.clone() });
                }
            }
        }
        Ok(Formula::Quant { name, slots })
    }

    fn builtin_arity(&self, name: &str, pos: usize) -> Result<usize, ParseError> {
        let unknown = || ParseError::Unknown { pos, name: format!("@{name}") };
        match name {
            "le" | "lt" | "bit" => Ok(2),
            "plus" | "times" => Ok(3),
            _ => {
                let id = name.strip_prefix("set:").ok_or_else(unknown)?;
                if id.is_empty() {
                    return Err(unknown());
                }
                match self.ctx.builtins {
                    Some(b) if b.set(id).is_none() => Err(unknown()),
                    _ => Ok(1),
                }
            }
        }
    }

    fn prim(&mut self) -> Result<Formula, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Tok::LParen => {
                let a = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(a)
            }
            Tok::At(name) => {
                let k = self.builtin_arity(&name, pos)?;
                self.expect(Tok::LParen, "`(`")?;
                let args = self.varlist()?;
                self.expect(Tok::RParen, "`)`")?;
                if args.len() != k {
                    return Err(ParseError::Arity { pos, name: format!("@{name}"), expected: k, got: args.len() });
                }
                Ok(Formula::Builtin(name, args))
            }
            Tok::Ident(w) if w == "true" => Ok(Formula::True),
            Tok::Ident(w) if w == "false" => Ok(Formula::False),
            Tok::Ident(name) => match self.peek().clone() {
                Tok::LParen => {
                    self.bump();
                    let args = self.varlist()?;
                    self.expect(Tok::RParen, "`)`")?;
                    if self.set_scope.contains(&name) {
                        if args.len() != 1 {
                            return Err(ParseError::Arity { pos, name, expected: 1, got: args.len() });
                        }
                        return Ok(Formula::SetAtom(name, args.into_iter().next().unwrap()));
                    }
                    match self.ctx.vocab.get(&name) {
                        Some(&k) if k == args.len() => Ok(Formula::Rel(name, args)),
                        Some(&k) => Err(ParseError::Arity { pos, name, expected: k, got: args.len() }),
                        None => Err(ParseError::Unknown { pos, name }),
                    }
                }
                Tok::Eq => {
                    self.bump();
                    Ok(Formula::Eq(name, self.var()?))
                }
                Tok::Lt => {
                    self.bump();
                    Ok(Formula::Builtin("lt".into(), vec![name, self.var()?]))
                }
                Tok::Le => {
                    self.bump();
                    Ok(Formula::Builtin("le".into(), vec![name, self.var()?]))
                }
                Tok::Plus => {
                    self.bump();
                    let b = self.var()?;
                    self.expect(Tok::Eq, "`=`")?;
                    let c = self.var()?;
                    Ok(Formula::Builtin("plus".into(), vec![name, b, c]))
                }
                _ => Err(ParseError::Syntax { pos, msg: format!("unexpected `{name}`") }),
            },
            _ => Err(ParseError::Syntax { pos, msg: "expected a formula".into() }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab() -> Vocabulary {
        [("U", 1), ("V", 1), ("E", 2), ("R", 3)].into_iter().map(|(a, b)| (a.to_string(), b)).collect()
    }

    fn quants() -> BTreeMap<String, Vec<usize>> {
        [("I", vec![1, 1]), ("C_sq", vec![1]), ("Maj2", vec![2])]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b))
            .collect()
    }

    fn p(text: &str) -> Result<Formula, ParseError> {
        let v = vocab();
        let q = quants();
        parse(text, &ParseContext::new(&v, &q))
    }

    fn vars(xs: &[&str]) -> BTreeSet<Var> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parse_examples() {
        let phi = p("E z. @plus(x,z,y)").unwrap();
        assert_eq!(phi, Formula::exists("z", Formula::builtin("plus", ["x", "z", "y"])));
        assert_eq!(free_variables(&phi), vars(&["x", "y"]));
        assert_eq!(quantifier_rank(&phi), 1);

        let sugar = p("I u,v.(@lt(u,x); @lt(y,v) & @le(v,z))").unwrap();
        let long = p("I(u: u<x; v: y<v & v<=z)").unwrap();
        assert_eq!(sugar, long);
        assert_eq!(free_variables(&sugar), vars(&["x", "y", "z"]));
        assert_eq!(quantifier_rank(&sugar), 1);

        let c = p("#c=y. U(c)").unwrap();
        assert_eq!(c, Formula::count("c", "y", Formula::rel("U", ["c"])));
        assert_eq!(free_variables(&c), vars(&["y"]));
    }

    #[test]
    fn sugar_forms() {
        assert_eq!(p("a+b=c").unwrap(), Formula::builtin("plus", ["a", "b", "c"]));
        assert_eq!(p("x<=y").unwrap(), Formula::le("x", "y"));
        assert_eq!(p("x<y").unwrap(), Formula::lt("x", "y"));
        assert_eq!(p("Maj2 x,y.(E(x,y))").unwrap(), Formula::quant("Maj2", vec![Slot::new(["x", "y"], Formula::rel("E", ["x", "y"]))]));
    }

    #[test]
    fn precedence_and_binding() {
        let phi = p("E x. U(x) & V(x)").unwrap();
        assert_eq!(phi, Formula::and(Formula::exists("x", Formula::rel("U", ["x"])), Formula::rel("V", ["x"])));
        assert_eq!(p("U(x) | V(x) & U(y)").unwrap(), Formula::or(Formula::rel("U", ["x"]), Formula::and(Formula::rel("V", ["x"]), Formula::rel("U", ["y"]))));
        assert_eq!(p("U(x) -> V(x) <-> U(y)").unwrap(), Formula::iff(Formula::implies(Formula::rel("U", ["x"]), Formula::rel("V", ["x"])), Formula::rel("U", ["y"])));
        assert_eq!(p("E(x,y)").unwrap(), Formula::rel("E", ["x", "y"]));
        assert_eq!(p("!!x=y").unwrap(), Formula::not(Formula::not(Formula::eq("x", "y"))));
    }

    #[test]
    fn set_variables() {
        let phi = p("EX X. A x. X(x) -> U(x)").unwrap();
        assert_eq!(quantifier_rank(&phi), 2);
        assert!(free_set_variables(&phi).is_empty());
        assert!(p("X(x)").is_err());
        let v = vocab();
        let q = quants();
        let ctx = ParseContext::new(&v, &q).with_set_vars(["X"]);
        let phi = parse("X(x) & U(x)", &ctx).unwrap();
        assert_eq!(free_set_variables(&phi), vars(&["X"]));
    }

    #[test]
    fn errors() {
        assert!(matches!(p("W(x)"), Err(ParseError::Unknown { .. })));
        assert!(matches!(p("U(x,y)"), Err(ParseError::Arity { .. })));
        assert!(matches!(p("I(u: U(u))"), Err(ParseError::Arity { .. })));
        assert!(matches!(p("Maj2(x,x: E(x,x))"), Err(ParseError::RepeatedSlotVar { .. })));
        assert!(matches!(p("@foo(x)"), Err(ParseError::Unknown { .. })));
        assert!(matches!(p("@le(x)"), Err(ParseError::Arity { .. })));
        assert!(matches!(p("U(x) &"), Err(ParseError::Syntax { .. })));
        assert!(matches!(p("U(x) $"), Err(ParseError::Syntax { pos: 5, .. })));
        let v = vocab();
        let q = quants();
        let b = BuiltinRegistry::default();
        let ctx = ParseContext::new(&v, &q).with_builtins(&b);
        assert!(parse("@set:sq(x)", &ctx).is_ok());
        assert!(parse("@set:nope(x)", &ctx).is_err());
    }

    #[test]
    fn ranks() {
        assert_eq!(quantifier_rank(&p("U(x)").unwrap()), 0);
        assert_eq!(quantifier_rank(&p("E x. A y. E(x,y) & I(u: U(u); v: E z. E(v,z))").unwrap()), 2);
        assert_eq!(quantifier_rank(&p("E x. I(u: U(u); v: E z. E(v,z))").unwrap()), 3);
    }

    #[test]
    fn slot_binding_scope() {
        let phi = p("I(u: E(u,w); v: U(u))").unwrap();
        // the second slot binds only v
        assert_eq!(free_variables(&phi), vars(&["u", "w"]));
    }

    pub(crate) fn arb_formula() -> impl Strategy<Value = Formula> {
        let var = prop::sample::select(vec!["x", "y", "z", "u1", "w'"]).prop_map(String::from);
        let leaf = prop_oneof![
            Just(Formula::True),
            Just(Formula::False),
            var.clone().prop_map(|x| Formula::rel("U", [x])),
            (var.clone(), var.clone()).prop_map(|(x, y)| Formula::rel("E", [x, y])),
            (var.clone(), var.clone()).prop_map(|(x, y)| Formula::Eq(x, y)),
            (var.clone(), var.clone()).prop_map(|(x, y)| Formula::Builtin("le".into(), vec![x, y])),
            (var.clone(), var.clone(), var.clone()).prop_map(|(x, y, z)| Formula::Builtin("plus".into(), vec![x, y, z])),
            var.clone().prop_map(|x| Formula::Builtin("set:sq".into(), vec![x])),
            var.clone().prop_map(|x| Formula::SetAtom("S".into(), x)),
        ];
        leaf.prop_recursive(4, 32, 3, move |inner| {
            let var = prop::sample::select(vec!["x", "y", "z", "u1", "w'"]).prop_map(String::from);
            prop_oneof![
                inner.clone().prop_map(Formula::not),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::iff(a, b)),
                (var.clone(), inner.clone()).prop_map(|(x, a)| Formula::Exists(x, Box::new(a))),
                (var.clone(), inner.clone()).prop_map(|(x, a)| Formula::Forall(x, Box::new(a))),
                (var.clone(), var.clone(), inner.clone()).prop_map(|(x, y, a)| Formula::Count { bound: x, count: y, body: Box::new(a) }),
                inner.clone().prop_map(|a| Formula::SetExists("S".into(), Box::new(a))),
                (var.clone(), var.clone(), inner.clone(), inner.clone()).prop_map(|(x, y, a, b)| {
                    Formula::quant("I", vec![Slot { vars: vec![x], body: a }, Slot { vars: vec![y], body: b }])
                }),
                (inner.clone()).prop_map(|a| Formula::quant("Maj2", vec![Slot::new(["x", "y"], a)])),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(phi in arb_formula()) {
            let v = vocab();
            let q = quants();
            let ctx = ParseContext::new(&v, &q).with_set_vars(["S"]);
            let text = phi.to_string();
            let back = parse(&text, &ctx);
            prop_assert_eq!(back.as_ref(), Ok(&phi), "text: {}", text);
        }
    }
}
