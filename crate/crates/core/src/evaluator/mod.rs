//! Truth evaluation on br-models. Formulas are compiled to an index-based
//! program with one variable slot per binder, then run against a model.

pub mod ef;

use crate::model::{BrModel, BuiltinRegistry, ModelError, NumericalRelation, Perm, Relation};
use crate::quantifiers::{QStructure, Quantifier, QuantifierRegistry};
use crate::syntax::{free_set_variables, free_variables, relations_used, Formula};
use bitvec::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use thiserror::Error;

pub use ef::{ef_equivalent, EF_MAX_N, EF_MAX_ROUNDS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("unbound set variable `{0}`")]
    UnboundSet(String),
    #[error("`{var}` is assigned {value}, outside a domain of size {n}")]
    OutOfRange { var: String, value: usize, n: usize },
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("unknown built-in `@{0}`")]
    UnknownBuiltin(String),
    #[error("unknown quantifier `{0}`")]
    UnknownQuantifier(String),
    #[error("`{name}` expects arity {expected}, got {got}")]
    Arity { name: String, expected: usize, got: usize },
    #[error("quantifier `{0}` received slots of the wrong shape")]
    SlotShape(String),
    #[error("set quantification refused: n = {n} exceeds the cap {cap}")]
    MsoCap { n: usize, cap: usize },
    #[error("evaluation refused: estimated {estimate:.3e} steps exceeds the budget {budget:.3e}")]
    Budget { estimate: f64, budget: f64 },
    #[error("EF game refused: {0}")]
    EfBounds(String),
    #[error("EF game: {0}")]
    Ef(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Values for free variables.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assignment {
    pub elems: BTreeMap<String, usize>,
    pub sets: BTreeMap<String, BTreeSet<usize>>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(mut self, x: &str, a: usize) -> Self {
        self.elems.insert(x.to_string(), a);
        self
    }

    pub fn bind_set(mut self, x: &str, s: impl IntoIterator<Item = usize>) -> Self {
        self.sets.insert(x.to_string(), s.into_iter().collect());
        self
    }

    /// `x=1,y=3,X={0,2}`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut out = Assignment::new();
        let mut rest = text.trim();
        while !rest.is_empty() {
            let (name, after) = rest.split_once('=').ok_or_else(|| format!("expected `name=value` in `{rest}`"))?;
            let name = name.trim();
            if name.is_empty() {
                return Err("empty variable name".into());
            }
            let after = after.trim_start();
            if let Some(body) = after.strip_prefix('{') {
                let (inner, tail) = body.split_once('}').ok_or("unterminated `{`")?;
                let mut set = BTreeSet::new();
                for item in inner.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    set.insert(item.parse::<usize>().map_err(|_| format!("bad element `{item}`"))?);
                }
                out.sets.insert(name.to_string(), set);
                rest = tail.trim_start().strip_prefix(',').unwrap_or(tail).trim_start();
            } else {
                let (val, tail) = after.split_once(',').unwrap_or((after, ""));
                let v = val.trim().parse::<usize>().map_err(|_| format!("bad value `{}` for `{name}`", val.trim()))?;
                out.elems.insert(name.to_string(), v);
                rest = tail.trim_start();
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    /// Largest domain on which set quantifiers are enumerated.
    pub mso_cap: usize,
    /// Upper bound on the estimated number of evaluation steps.
    pub budget: f64,
}

pub const DEFAULT_MSO_CAP: usize = 16;
pub const DEFAULT_BUDGET: f64 = 1e13;

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { mso_cap: DEFAULT_MSO_CAP, budget: DEFAULT_BUDGET }
    }
}

#[derive(Clone, Copy)]
pub struct Evaluator<'a> {
    pub builtins: &'a BuiltinRegistry,
    pub quants: &'a QuantifierRegistry,
    pub options: EvalOptions,
}

impl<'a> Evaluator<'a> {
    pub fn new(builtins: &'a BuiltinRegistry, quants: &'a QuantifierRegistry) -> Self {
        Evaluator { builtins, quants, options: EvalOptions::default() }
    }

    pub fn with_options(mut self, options: EvalOptions) -> Self {
        self.options = options;
        self
    }

    /// Compiles φ. Free first-order variables get slots in the order of
    /// `free_vars`, set variables in the order of `free_sets`, and relation
    /// symbols are resolved by position in `rel_names`.
    pub fn compile(&self, phi: &Formula, free_vars: &[String], free_sets: &[String], rel_names: &[String]) -> Result<Program, EvalError> {
        let mut c = Compiler {
            ev: self,
            nodes: Vec::new(),
            scope: free_vars.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect(),
            set_scope: free_sets.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect(),
            n_fo: free_vars.len(),
            n_sets: free_sets.len(),
            rel_names,
            rel_arity: vec![None; rel_names.len()],
            builtins: Vec::new(),
            quants: Vec::new(),
            n_bufs: 0,
            n_caches: 0,
        };
        let root = c.compile(phi)?;
        Ok(Program {
            nodes: c.nodes,
            root,
            n_fo: c.n_fo,
            n_sets: c.n_sets,
            free_fo: free_vars.len(),
            free_sets: free_sets.len(),
            rel_arity: c.rel_arity,
            builtins: c.builtins.into_iter().map(|(_, b)| b).collect(),
            quants: c.quants.into_iter().map(|(_, q)| q).collect(),
            n_bufs: c.n_bufs,
            n_caches: c.n_caches,
            options: self.options,
        })
    }

    pub fn compile_over(&self, phi: &Formula, free_vars: &[String], rel_names: &[String]) -> Result<Program, EvalError> {
        self.compile(phi, free_vars, &[], rel_names)
    }

    /// Compiles φ against the relations of `m` and returns the program with
    /// the relation list it expects.
    fn bind<'m>(&self, m: &'m BrModel, phi: &Formula, free_vars: &[String], free_sets: &[String]) -> Result<(Program, Vec<&'m Relation>), EvalError> {
        let used = relations_used(phi);
        let names: Vec<String> = used.keys().cloned().collect();
        let mut rels = Vec::with_capacity(names.len());
        for (name, &k) in &used {
            let r = m.relation(name).ok_or_else(|| EvalError::UnknownRelation(name.clone()))?;
            if r.arity() != k {
                return Err(EvalError::Arity { name: name.clone(), expected: r.arity(), got: k });
            }
            rels.push(r);
        }
        Ok((self.compile(phi, free_vars, free_sets, &names)?, rels))
    }

    /// (M,f) ⊨ φ[a].
    pub fn eval(&self, m: &BrModel, phi: &Formula, a: &Assignment) -> Result<bool, EvalError> {
        let n = m.size();
        let fv: Vec<String> = free_variables(phi).into_iter().collect();
        let fs: Vec<String> = free_set_variables(phi).into_iter().collect();
        let args = lookup_args(&fv, a, n)?;
        let sets = lookup_sets(&fs, a, n)?;
        let (prog, rels) = self.bind(m, phi, &fv, &fs)?;
        prog.eval_full(n, m.perm(), &rels, &args, &sets)
    }

    /// φ^{M,f} over the tuple `vars`; other free variables come from `a`.
    pub fn defined_relation(&self, m: &BrModel, phi: &Formula, vars: &[&str], a: &Assignment) -> Result<Relation, EvalError> {
        let n = m.size();
        let mut order: Vec<String> = vars.iter().map(|v| v.to_string()).collect();
        let params: Vec<String> = free_variables(phi).into_iter().filter(|v| !order.contains(v)).collect();
        let param_vals = lookup_args(&params, a, n)?;
        order.extend(params);
        let fs: Vec<String> = free_set_variables(phi).into_iter().collect();
        let sets = lookup_sets(&fs, a, n)?;
        let (prog, rels) = self.bind(m, phi, &order, &fs)?;
        prog.defined_relation(n, m.perm(), &rels, vars.len(), &param_vals, &sets)
    }

    /// Rank-r EF game with the listed built-in names (`le`, `plus`, `set:sq`, ...).
    pub fn ef_equivalent(&self, m1: &BrModel, m2: &BrModel, r: usize, builtins: &[&str]) -> Result<bool, EvalError> {
        let mut rels = Vec::new();
        for name in builtins {
            rels.push(self.builtins.lookup(name).ok_or_else(|| EvalError::UnknownBuiltin(name.to_string()))?);
        }
        ef_equivalent(m1, m2, r, &rels)
    }
}

fn lookup_args(vars: &[String], a: &Assignment, n: usize) -> Result<Vec<usize>, EvalError> {
    vars.iter()
        .map(|v| {
            let &x = a.elems.get(v).ok_or_else(|| EvalError::Unbound(v.clone()))?;
            if x >= n {
                return Err(EvalError::OutOfRange { var: v.clone(), value: x, n });
            }
            Ok(x)
        })
        .collect()
}

fn lookup_sets(vars: &[String], a: &Assignment, n: usize) -> Result<Vec<u64>, EvalError> {
    vars.iter()
        .map(|v| {
            let s = a.sets.get(v).ok_or_else(|| EvalError::UnboundSet(v.clone()))?;
            let mut mask = 0u64;
            for &x in s {
                if x >= n || x >= 64 {
                    return Err(EvalError::OutOfRange { var: v.clone(), value: x, n });
                }
                mask |= 1 << x;
            }
            Ok(mask)
        })
        .collect()
}

#[derive(Clone, Debug)]
enum Node {
    Const(bool),
    Rel { rel: usize, args: Box<[usize]> },
    Builtin { b: usize, args: Box<[usize]> },
    Eq(usize, usize),
    SetAtom { set: usize, x: usize },
    Not(usize),
    And(usize, usize),
    Or(usize, usize),
    Implies(usize, usize),
    Iff(usize, usize),
    Exists { var: usize, body: usize },
    Forall { var: usize, body: usize },
    Count { bound: usize, count: usize, body: usize },
    Quant { q: usize, buf: usize, slots: Box<[CSlot]> },
    SetExists { set: usize, body: usize },
    SetForall { set: usize, body: usize },
}

#[derive(Clone, Debug)]
struct CSlot {
    vars: Box<[usize]>,
    body: usize,
    deps: Box<[usize]>,
    cache: Option<usize>,
}

struct Compiler<'c, 'e> {
    ev: &'c Evaluator<'e>,
    nodes: Vec<Node>,
    scope: Vec<(String, usize)>,
    set_scope: Vec<(String, usize)>,
    n_fo: usize,
    n_sets: usize,
    rel_names: &'c [String],
    rel_arity: Vec<Option<usize>>,
    builtins: Vec<(String, NumericalRelation)>,
    quants: Vec<(String, Arc<Quantifier>)>,
    n_bufs: usize,
    n_caches: usize,
}

impl Compiler<'_, '_> {
    fn push(&mut self, n: Node) -> usize {
        self.nodes.push(n);
        self.nodes.len() - 1
    }

    fn var(&self, x: &str) -> Result<usize, EvalError> {
        self.scope.iter().rev().find(|(v, _)| v == x).map(|&(_, i)| i).ok_or_else(|| EvalError::Unbound(x.to_string()))
    }

    fn set_var(&self, x: &str) -> Result<usize, EvalError> {
        self.set_scope.iter().rev().find(|(v, _)| v == x).map(|&(_, i)| i).ok_or_else(|| EvalError::UnboundSet(x.to_string()))
    }

    fn vars(&self, xs: &[String]) -> Result<Box<[usize]>, EvalError> {
        xs.iter().map(|x| self.var(x)).collect()
    }

    fn fresh(&mut self, x: &str) -> usize {
        let i = self.n_fo;
        self.n_fo += 1;
        self.scope.push((x.to_string(), i));
        i
    }

    fn bound(&mut self, x: &str, body: &Formula) -> Result<(usize, usize), EvalError> {
        let v = self.fresh(x);
        let b = self.compile(body)?;
        self.scope.pop();
        Ok((v, b))
    }

    fn set_bound(&mut self, x: &str, body: &Formula) -> Result<(usize, usize), EvalError> {
        let s = self.n_sets;
        self.n_sets += 1;
        self.set_scope.push((x.to_string(), s));
        let b = self.compile(body)?;
        self.set_scope.pop();
        Ok((s, b))
    }

    fn compile(&mut self, phi: &Formula) -> Result<usize, EvalError> {
        let node = match phi {
            Formula::True => Node::Const(true),
            Formula::False => Node::Const(false),
            Formula::Rel(name, args) => {
                let rel = self.rel_names.iter().position(|r| r == name).ok_or_else(|| EvalError::UnknownRelation(name.clone()))?;
                match self.rel_arity[rel] {
                    Some(k) if k != args.len() => return Err(EvalError::Arity { name: name.clone(), expected: k, got: args.len() }),
                    _ => self.rel_arity[rel] = Some(args.len()),
                }
                Node::Rel { rel, args: self.vars(args)? }
            }
            Formula::Builtin(name, args) => {
                let b = match self.builtins.iter().position(|(b, _)| b == name) {
                    Some(b) => b,
                    None => {
                        let rel = self.ev.builtins.lookup(name).ok_or_else(|| EvalError::UnknownBuiltin(name.clone()))?;
                        self.builtins.push((name.clone(), rel));
                        self.builtins.len() - 1
                    }
                };
                let k = self.builtins[b].1.arity();
                if k != args.len() {
                    return Err(EvalError::Arity { name: format!("@{name}"), expected: k, got: args.len() });
                }
                Node::Builtin { b, args: self.vars(args)? }
            }
            Formula::Eq(x, y) => Node::Eq(self.var(x)?, self.var(y)?),
            Formula::SetAtom(s, x) => Node::SetAtom { set: self.set_var(s)?, x: self.var(x)? },
            Formula::Not(a) => Node::Not(self.compile(a)?),
            Formula::And(a, b) => Node::And(self.compile(a)?, self.compile(b)?),
            Formula::Or(a, b) => Node::Or(self.compile(a)?, self.compile(b)?),
            Formula::Implies(a, b) => Node::Implies(self.compile(a)?, self.compile(b)?),
            Formula::Iff(a, b) => Node::Iff(self.compile(a)?, self.compile(b)?),
            Formula::Exists(x, a) => {
                let (var, body) = self.bound(x, a)?;
                Node::Exists { var, body }
            }
            Formula::Forall(x, a) => {
                let (var, body) = self.bound(x, a)?;
                Node::Forall { var, body }
            }
            Formula::Count { bound, count, body } => {
                let count = self.var(count)?;
                let (bound, body) = self.bound(bound, body)?;
                Node::Count { bound, count, body }
            }
            Formula::Quant { name, slots } => {
                let q = match self.quants.iter().position(|(q, _)| q == name) {
                    Some(q) => q,
                    None => {
                        let quant = self.ev.quants.get(name).ok_or_else(|| EvalError::UnknownQuantifier(name.clone()))?.clone();
                        self.quants.push((name.clone(), quant));
                        self.quants.len() - 1
                    }
                };
                let arities = self.quants[q].1.arities.clone();
                if arities.len() != slots.len() {
                    return Err(EvalError::Arity { name: name.clone(), expected: arities.len(), got: slots.len() });
                }
                let mut cs = Vec::with_capacity(slots.len());
                for (slot, &k) in slots.iter().zip(&arities) {
                    if slot.vars.len() != k {
                        return Err(EvalError::Arity { name: name.clone(), expected: k, got: slot.vars.len() });
                    }
                    // outer variables the body reads; the slot relation depends on these only
                    let mut deps = Vec::new();
                    let mut cacheable = free_set_variables(&slot.body).is_empty();
                    for v in free_variables(&slot.body) {
                        if !slot.vars.contains(&v) {
                            deps.push(self.var(&v)?);
                        }
                    }
                    deps.sort_unstable();
                    deps.dedup();
                    cacheable &= deps.len() <= 8;
                    let vars: Vec<usize> = slot.vars.iter().map(|v| self.fresh(v)).collect();
                    let body = self.compile(&slot.body)?;
                    self.scope.truncate(self.scope.len() - vars.len());
                    let cache = if cacheable {
                        self.n_caches += 1;
                        Some(self.n_caches - 1)
                    } else {
                        None
                    };
                    cs.push(CSlot { vars: vars.into(), body, deps: deps.into(), cache });
                }
                let buf = self.n_bufs;
                self.n_bufs += 1;
                Node::Quant { q, buf, slots: cs.into() }
            }
            Formula::SetExists(x, a) => {
                let (set, body) = self.set_bound(x, a)?;
                Node::SetExists { set, body }
            }
            Formula::SetForall(x, a) => {
                let (set, body) = self.set_bound(x, a)?;
                Node::SetForall { set, body }
            }
        };
        Ok(self.push(node))
    }
}

/// A compiled formula. It owns its built-ins and quantifiers, so it can run
/// on bare relation lists without a model or registry.
#[derive(Clone, Debug)]
pub struct Program {
    nodes: Vec<Node>,
    root: usize,
    n_fo: usize,
    n_sets: usize,
    free_fo: usize,
    free_sets: usize,
    rel_arity: Vec<Option<usize>>,
    builtins: Vec<NumericalRelation>,
    quants: Vec<Arc<Quantifier>>,
    n_bufs: usize,
    n_caches: usize,
    options: EvalOptions,
}

impl Program {
    /// Arity with which relation i is used, if it occurs.
    pub fn relation_arity(&self, i: usize) -> Option<usize> {
        self.rel_arity.get(i).copied().flatten()
    }

    pub fn uses_sets(&self) -> bool {
        self.n_sets > 0
    }

    /// Estimated number of node visits on a domain of size n.
    pub fn cost(&self, n: usize) -> f64 {
        self.node_cost(self.root, n as f64)
    }

    fn node_cost(&self, i: usize, n: f64) -> f64 {
        1.0 + match &self.nodes[i] {
            Node::Const(_) | Node::Rel { .. } | Node::Builtin { .. } | Node::Eq(..) | Node::SetAtom { .. } => 0.0,
            Node::Not(a) => self.node_cost(*a, n),
            Node::And(a, b) | Node::Or(a, b) | Node::Implies(a, b) | Node::Iff(a, b) => self.node_cost(*a, n) + self.node_cost(*b, n),
            Node::Exists { body, .. } | Node::Forall { body, .. } | Node::Count { body, .. } => n * self.node_cost(*body, n),
            Node::Quant { slots, .. } => slots.iter().map(|s| n.powi(s.vars.len() as i32) * (1.0 + self.node_cost(s.body, n))).sum(),
            Node::SetExists { body, .. } | Node::SetForall { body, .. } => 2f64.powf(n) * self.node_cost(*body, n),
        }
    }

    fn check(&self, n: usize, f: &Perm, rels: &[&Relation], args: &[usize], sets: &[u64]) -> Result<(), EvalError> {
        if f.len() != n {
            return Err(ModelError::NotPermutation(n).into());
        }
        if args.len() != self.free_fo || sets.len() != self.free_sets || rels.len() != self.rel_arity.len() {
            return Err(EvalError::SlotShape("program arguments".into()));
        }
        for (i, r) in rels.iter().enumerate() {
            if r.domain_size() != n {
                return Err(EvalError::SlotShape(format!("relation {i}")));
            }
            if let Some(k) = self.rel_arity[i] {
                if r.arity() != k {
                    return Err(EvalError::Arity { name: format!("relation {i}"), expected: r.arity(), got: k });
                }
            }
        }
        if self.n_sets > 0 {
            let cap = self.options.mso_cap.min(63);
            if n > cap {
                return Err(EvalError::MsoCap { n, cap });
            }
        }
        let estimate = self.cost(n);
        if estimate > self.options.budget {
            return Err(EvalError::Budget { estimate, budget: self.options.budget });
        }
        Ok(())
    }

    fn runner<'r>(&'r self, n: usize, f: &'r Perm, rels: &'r [&'r Relation], args: &[usize], sets: &[u64]) -> Run<'r> {
        let mut env = vec![0; self.n_fo];
        env[..args.len()].copy_from_slice(args);
        let mut set_env = vec![0; self.n_sets];
        set_env[..sets.len()].copy_from_slice(sets);
        let setbits = self
            .builtins
            .iter()
            .map(|b| match b {
                NumericalRelation::Set(_, s) => (0..n).map(|a| s.contains(f.apply(a) as u64)).collect(),
                _ => BitVec::new(),
            })
            .collect();
        Run { p: self, n, f, rels, setbits, env, sets: set_env, bufs: vec![Vec::new(); self.n_bufs], caches: vec![Vec::new(); self.n_caches], err: None }
    }

    /// Runs the program; `args` and `sets` fill the free slots in order.
    pub fn eval_full(&self, n: usize, f: &Perm, rels: &[&Relation], args: &[usize], sets: &[u64]) -> Result<bool, EvalError> {
        self.check(n, f, rels, args, sets)?;
        if args.iter().any(|&a| a >= n) {
            return Err(EvalError::OutOfRange { var: "argument".into(), value: *args.iter().max().unwrap(), n });
        }
        self.runner(n, f, rels, args, sets).ev(self.root)
    }

    pub fn eval_on(&self, n: usize, f: &Perm, rels: &[&Relation], args: &[usize]) -> Result<bool, EvalError> {
        self.eval_full(n, f, rels, args, &[])
    }

    /// The relation defined by the first k free variables, the remaining free
    /// slots taken from `params`.
    pub fn defined_relation(&self, n: usize, f: &Perm, rels: &[&Relation], k: usize, params: &[usize], sets: &[u64]) -> Result<Relation, EvalError> {
        let mut args = vec![0; k];
        args.extend_from_slice(params);
        self.check(n, f, rels, &args, sets)?;
        let mut out = Relation::try_empty("defined", k, n)?;
        let total = n.pow(k as u32);
        let mut run = self.runner(n, f, rels, &args, sets);
        for idx in 0..total {
            let mut rem = idx;
            for i in 0..k {
                run.env[i] = rem % n;
                rem /= n;
            }
            if run.ev(self.root)? {
                out.set_index(idx, true);
            }
        }
        Ok(out)
    }
}

struct Run<'r> {
    p: &'r Program,
    n: usize,
    f: &'r Perm,
    rels: &'r [&'r Relation],
    setbits: Vec<BitVec>,
    env: Vec<usize>,
    sets: Vec<u64>,
    bufs: Vec<Vec<Relation>>,
    /// Slot relations by the values of the slot's outer variables.
    caches: Vec<Vec<Option<Relation>>>,
    err: Option<EvalError>,
}

#[inline(never)]
fn generic_builtin(rel: &NumericalRelation, f: &Perm, env: &[usize], args: &[usize]) -> bool {
    let v: Vec<u64> = args.iter().map(|&a| f.apply(env[a]) as u64).collect();
    rel.holds(&v)
}

/// Largest per-slot memo table.
const SLOT_CACHE_LIMIT: u128 = 1 << 16;

/// Marks an aborted run; the error itself sits in `Run::err`.
struct Halt;

impl Run<'_> {
    fn ev(&mut self, i: usize) -> Result<bool, EvalError> {
        self.step(i).map_err(|_| self.err.take().expect("halt records its error"))
    }

    #[inline(never)]
    fn quant(&mut self, q: usize, buf: usize, slots: &[CSlot]) -> Result<bool, Halt> {
        let p = self.p;
        let mut rels = std::mem::take(&mut self.bufs[buf]);
        if rels.is_empty() {
            rels = slots.iter().map(|s| Relation::empty(s.vars.len(), self.n)).collect();
        }
        for (s, r) in slots.iter().zip(rels.iter_mut()) {
            let k = s.vars.len();
            let mut key = None;
            if let Some(c) = s.cache {
                let size = (self.n as u128).pow(s.deps.len() as u32);
                if size <= SLOT_CACHE_LIMIT {
                    let idx = s.deps.iter().rev().fold(0, |acc, &d| acc * self.n + self.env[d]);
                    let table = &mut self.caches[c];
                    if table.is_empty() {
                        table.resize(size as usize, None);
                    }
                    if let Some(hit) = &table[idx] {
                        r.copy_bits_from(hit);
                        continue;
                    }
                    key = Some((c, idx));
                }
            }
            if k == 1 {
                let v = s.vars[0];
                for a in 0..self.n {
                    self.env[v] = a;
                    let val = self.step(s.body)?;
                    r.set_index(a, val);
                }
                if let Some((c, idx)) = key {
                    self.caches[c][idx] = Some(r.clone());
                }
                continue;
            }
            for idx in 0..self.n.pow(k as u32) {
                let mut rem = idx;
                for &v in s.vars.iter() {
                    self.env[v] = rem % self.n;
                    rem /= self.n;
                }
                let val = self.step(s.body)?;
                r.set_index(idx, val);
            }
            if let Some((c, idx)) = key {
                self.caches[c][idx] = Some(r.clone());
            }
        }
        let out = p.quants[q].decide(&QStructure { n: self.n, f: self.f, slots: &rels });
        self.bufs[buf] = rels;
        match out {
            Ok(v) => Ok(v),
            Err(e) => {
                self.err = Some(e);
                Err(Halt)
            }
        }
    }

    fn step(&mut self, i: usize) -> Result<bool, Halt> {
        let p = self.p;
        Ok(match &p.nodes[i] {
            Node::Const(b) => *b,
            Node::Rel { rel, args } => {
                let mut idx = 0;
                for &a in args.iter().rev() {
                    idx = idx * self.n + self.env[a];
                }
                self.rels[*rel].contains_index(idx)
            }
            Node::Builtin { b, args } => {
                let f = self.f;
                let env = &self.env;
                match &p.builtins[*b] {
                    NumericalRelation::Set(..) => self.setbits[*b][env[args[0]]],
                    NumericalRelation::Le => f.apply(env[args[0]]) <= f.apply(env[args[1]]),
                    NumericalRelation::Lt => f.apply(env[args[0]]) < f.apply(env[args[1]]),
                    NumericalRelation::Plus => f.apply(env[args[0]]) + f.apply(env[args[1]]) == f.apply(env[args[2]]),
                    rel => generic_builtin(rel, f, env, args),
                }
            }
            Node::Eq(a, b) => self.env[*a] == self.env[*b],
            Node::SetAtom { set, x } => (self.sets[*set] >> self.env[*x]) & 1 == 1,
            Node::Not(a) => !self.step(*a)?,
            Node::And(a, b) => self.step(*a)? && self.step(*b)?,
            Node::Or(a, b) => self.step(*a)? || self.step(*b)?,
            Node::Implies(a, b) => !self.step(*a)? || self.step(*b)?,
            Node::Iff(a, b) => self.step(*a)? == self.step(*b)?,
            Node::Exists { var, body } => self.scan(*var, *body, true)?,
            Node::Forall { var, body } => !self.scan(*var, *body, false)?,
            Node::Count { bound, count, body } => self.count(*bound, *count, *body)?,
            Node::Quant { q, buf, slots } => self.quant(*q, *buf, slots)?,
            Node::SetExists { set, body } => self.set_scan(*set, *body, true)?,
            Node::SetForall { set, body } => !self.set_scan(*set, *body, false)?,
        })
    }

    /// Whether some value of `var` makes the body equal `want`.
    #[inline(never)]
    fn scan(&mut self, var: usize, body: usize, want: bool) -> Result<bool, Halt> {
        for a in 0..self.n {
            self.env[var] = a;
            if self.step(body)? == want {
                return Ok(true);
            }
        }
        Ok(false)
    }

    #[inline(never)]
    fn set_scan(&mut self, set: usize, body: usize, want: bool) -> Result<bool, Halt> {
        for mask in 0..(1u64 << self.n) {
            self.sets[set] = mask;
            if self.step(body)? == want {
                return Ok(true);
            }
        }
        Ok(false)
    }

    #[inline(never)]
    fn count(&mut self, bound: usize, count: usize, body: usize) -> Result<bool, Halt> {
        let mut c = 0;
        for a in 0..self.n {
            self.env[bound] = a;
            if self.step(body)? {
                c += 1;
            }
        }
        Ok(c == self.f.apply(self.env[count]))
    }
}
