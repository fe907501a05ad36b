//! Syntactic transformations: substitution of formulas for relation symbols,
//! relativization to a definable set, and the translation T_S from FO over
//! a membership relation E into MSO over words.

use crate::evaluator::{Assignment, EvalError, Evaluator};
use crate::model::{powerset_structure, relativize, word_model, BrModel, DEFAULT_POWERSET_CAP};
use crate::quantifiers::QuantifierRegistry;
use crate::syntax::{all_names, free_set_variables, free_variables, relations_used, Formula, Slot, Var};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("`{name}` has arity {expected} but is used with {got} arguments")]
    Arity { name: String, expected: usize, got: usize },
    #[error("replacement for `{name}` has free variables {vars:?} outside its parameter tuple")]
    FreeVariables { name: String, vars: Vec<String> },
    #[error("relativizing formula must have exactly one free variable, found {0:?}")]
    RelativizerFreeVariables(Vec<String>),
    #[error("quantifier `{0}` is not declared universe independent")]
    NotUniverseIndependent(String),
    #[error("unknown quantifier `{0}`")]
    UnknownQuantifier(String),
    #[error("built-in `@{0}` cannot be relativized; only le and lt are allowed")]
    ForbiddenBuiltin(String),
    #[error("{0} is not supported by this transformation")]
    Unsupported(&'static str),
    #[error("translation expects FO over {{E}} with order, found {0}")]
    NotFoE(String),
}

/// Deterministic fresh names `v0, v1, ...` skipping names already in use.
#[derive(Clone, Debug)]
pub struct Fresh {
    used: BTreeSet<String>,
    next: usize,
}

impl Fresh {
    pub fn avoiding<'a>(names: impl IntoIterator<Item = &'a Formula>) -> Self {
        let mut used = BTreeSet::new();
        for phi in names {
            used.extend(all_names(phi));
        }
        Fresh { used, next: 0 }
    }

    pub fn reserve(&mut self, name: &str) {
        self.used.insert(name.to_string());
    }

    pub fn name(&mut self, prefix: &str) -> String {
        loop {
            let cand = format!("{prefix}{}", self.next);
            self.next += 1;
            if self.used.insert(cand.clone()) {
                return cand;
            }
        }
    }
}

/// Renames free variables by `map` and every binder to a fresh name.
fn instantiate(phi: &Formula, map: &BTreeMap<Var, Var>, sets: &BTreeMap<Var, Var>, fresh: &mut Fresh) -> Formula {
    let v = |x: &Var| map.get(x).cloned().unwrap_or_else(|| x.clone());
    let vs = |xs: &[Var]| xs.iter().map(v).collect::<Vec<_>>();
    let rebind = |x: &Var, fresh: &mut Fresh| {
        let y = fresh.name("v");
        let mut m = map.clone();
        m.insert(x.clone(), y.clone());
        (y, m)
    };
    match phi {
        Formula::True | Formula::False => phi.clone(),
        Formula::Rel(r, args) => Formula::Rel(r.clone(), vs(args)),
        Formula::Builtin(b, args) => Formula::Builtin(b.clone(), vs(args)),
        Formula::Eq(x, y) => Formula::Eq(v(x), v(y)),
        Formula::SetAtom(s, x) => Formula::SetAtom(sets.get(s).cloned().unwrap_or_else(|| s.clone()), v(x)),
        Formula::Not(a) => Formula::not(instantiate(a, map, sets, fresh)),
        Formula::And(a, b) => Formula::and(instantiate(a, map, sets, fresh), instantiate(b, map, sets, fresh)),
        Formula::Or(a, b) => Formula::or(instantiate(a, map, sets, fresh), instantiate(b, map, sets, fresh)),
        Formula::Implies(a, b) => Formula::implies(instantiate(a, map, sets, fresh), instantiate(b, map, sets, fresh)),
        Formula::Iff(a, b) => Formula::iff(instantiate(a, map, sets, fresh), instantiate(b, map, sets, fresh)),
        Formula::Exists(x, a) => {
            let (y, m) = rebind(x, fresh);
            Formula::Exists(y, Box::new(instantiate(a, &m, sets, fresh)))
        }
        Formula::Forall(x, a) => {
            let (y, m) = rebind(x, fresh);
            Formula::Forall(y, Box::new(instantiate(a, &m, sets, fresh)))
        }
        Formula::Count { bound, count, body } => {
            let count = v(count);
            let (y, m) = rebind(bound, fresh);
            Formula::Count { bound: y, count, body: Box::new(instantiate(body, &m, sets, fresh)) }
        }
        Formula::Quant { name, slots } => Formula::Quant {
            name: name.clone(),
            slots: slots
                .iter()
                .map(|s| {
                    let mut m = map.clone();
                    let vars: Vec<Var> = s
                        .vars
                        .iter()
                        .map(|x| {
                            let y = fresh.name("v");
                            m.insert(x.clone(), y.clone());
                            y
                        })
                        .collect();
                    Slot { vars, body: instantiate(&s.body, &m, sets, fresh) }
                })
                .collect(),
        },
        Formula::SetExists(x, a) | Formula::SetForall(x, a) => {
            let y = fresh.name("V");
            let mut s2 = sets.clone();
            s2.insert(x.clone(), y.clone());
            let body = Box::new(instantiate(a, map, &s2, fresh));
            if matches!(phi, Formula::SetExists(..)) {
                Formula::SetExists(y, body)
            } else {
                Formula::SetForall(y, body)
            }
        }
    }
}

/// Replacement formulas: R ↦ (parameter tuple, ψ_R).
pub type Substitution = BTreeMap<String, (Vec<Var>, Formula)>;

/// φ[(ψ_R/R)_R]: each R(ȳ) becomes ψ_R(ȳ). Bound variables of the inserted
/// copies are renamed fresh, so nothing is captured.
pub fn substitute(phi: &Formula, subs: &Substitution) -> Result<Formula, TransformError> {
    for (r, (params, psi)) in subs {
        let extra: Vec<String> = free_variables(psi).into_iter().filter(|v| !params.contains(v)).collect();
        if !extra.is_empty() {
            return Err(TransformError::FreeVariables { name: r.clone(), vars: extra });
        }
    }
    let mut fresh = Fresh::avoiding(std::iter::once(phi).chain(subs.values().map(|(_, psi)| psi)));
    for (params, _) in subs.values() {
        for p in params {
            fresh.reserve(p);
        }
    }
    subst_rec(phi, subs, &mut fresh)
}

fn subst_rec(phi: &Formula, subs: &Substitution, fresh: &mut Fresh) -> Result<Formula, TransformError> {
    Ok(match phi {
        Formula::Rel(r, args) => match subs.get(r) {
            Some((params, psi)) => {
                if params.len() != args.len() {
                    return Err(TransformError::Arity { name: r.clone(), expected: params.len(), got: args.len() });
                }
                let map = params.iter().cloned().zip(args.iter().cloned()).collect();
                instantiate(psi, &map, &BTreeMap::new(), fresh)
            }
            None => phi.clone(),
        },
        _ => map_children(phi, &mut |c| subst_rec(c, subs, fresh))?,
    })
}

/// Rebuilds φ with each direct subformula transformed by `f`.
fn map_children(phi: &Formula, f: &mut dyn FnMut(&Formula) -> Result<Formula, TransformError>) -> Result<Formula, TransformError> {
    Ok(match phi {
        Formula::True | Formula::False | Formula::Rel(..) | Formula::Builtin(..) | Formula::Eq(..) | Formula::SetAtom(..) => phi.clone(),
        Formula::Not(a) => Formula::not(f(a)?),
        Formula::And(a, b) => Formula::and(f(a)?, f(b)?),
        Formula::Or(a, b) => Formula::or(f(a)?, f(b)?),
        Formula::Implies(a, b) => Formula::implies(f(a)?, f(b)?),
        Formula::Iff(a, b) => Formula::iff(f(a)?, f(b)?),
        Formula::Exists(x, a) => Formula::Exists(x.clone(), Box::new(f(a)?)),
        Formula::Forall(x, a) => Formula::Forall(x.clone(), Box::new(f(a)?)),
        Formula::Count { bound, count, body } => Formula::Count { bound: bound.clone(), count: count.clone(), body: Box::new(f(body)?) },
        Formula::Quant { name, slots } => Formula::Quant {
            name: name.clone(),
            slots: slots.iter().map(|s| Ok(Slot { vars: s.vars.clone(), body: f(&s.body)? })).collect::<Result<_, TransformError>>()?,
        },
        Formula::SetExists(x, a) => Formula::SetExists(x.clone(), Box::new(f(a)?)),
        Formula::SetForall(x, a) => Formula::SetForall(x.clone(), Box::new(f(a)?)),
    })
}

/// φ|ψ for ψ with the single free variable `var`.
pub fn relativize_formula(phi: &Formula, var: &str, psi: &Formula, quants: &QuantifierRegistry) -> Result<Formula, TransformError> {
    let fv: Vec<String> = free_variables(psi).into_iter().collect();
    if fv.iter().any(|v| v != var) {
        return Err(TransformError::RelativizerFreeVariables(fv));
    }
    let mut fresh = Fresh::avoiding([phi, psi]);
    fresh.reserve(var);
    let mut r = Relativizer { var, psi, quants, fresh };
    r.rel(phi)
}

struct Relativizer<'a> {
    var: &'a str,
    psi: &'a Formula,
    quants: &'a QuantifierRegistry,
    fresh: Fresh,
}

impl Relativizer<'_> {
    fn guard(&mut self, y: &str) -> Formula {
        let map = [(self.var.to_string(), y.to_string())].into();
        instantiate(self.psi, &map, &BTreeMap::new(), &mut self.fresh)
    }

    fn rel(&mut self, phi: &Formula) -> Result<Formula, TransformError> {
        Ok(match phi {
            Formula::Builtin(b, _) if b != "le" && b != "lt" => return Err(TransformError::ForbiddenBuiltin(b.clone())),
            Formula::Exists(x, a) => Formula::exists(x, Formula::and(self.guard(x), self.rel(a)?)),
            Formula::Forall(x, a) => Formula::forall(x, Formula::implies(self.guard(x), self.rel(a)?)),
            Formula::Quant { name, slots } => {
                let q = self.quants.get(name).ok_or_else(|| TransformError::UnknownQuantifier(name.clone()))?;
                if !q.universe_independent {
                    return Err(TransformError::NotUniverseIndependent(name.clone()));
                }
                let mut out = Vec::with_capacity(slots.len());
                for s in slots {
                    let guards: Vec<Formula> = s.vars.iter().map(|x| self.guard(x)).collect();
                    let body = self.rel(&s.body)?;
                    out.push(Slot { vars: s.vars.clone(), body: Formula::and_all(guards.into_iter().chain([body])) });
                }
                Formula::Quant { name: name.clone(), slots: out }
            }
            Formula::Count { .. } => return Err(TransformError::Unsupported("counting")),
            Formula::SetExists(..) | Formula::SetForall(..) | Formula::SetAtom(..) => return Err(TransformError::Unsupported("set quantification")),
            _ => map_children(phi, &mut |c| self.rel(c))?,
        })
    }
}

/// The set variable standing for first-order variable x.
pub fn set_name(x: &str) -> String {
    let mut cs = x.chars();
    match cs.next() {
        Some(c) if c.is_ascii_lowercase() => c.to_ascii_uppercase().to_string() + cs.as_str(),
        _ => format!("S_{x}"),
    }
}

/// Lexicographic order on subsets, the f-least point most significant:
/// X = Y, or Y has the first point where they differ.
pub fn lex_le(x: &str, y: &str) -> Formula {
    let same = |v: &str| Formula::iff(Formula::set_atom(x, v), Formula::set_atom(y, v));
    Formula::or(
        Formula::forall("z", same("z")),
        Formula::exists(
            "z",
            Formula::and_all([
                Formula::set_atom(y, "z"),
                Formula::not(Formula::set_atom(x, "z")),
                Formula::forall("w", Formula::implies(Formula::lt("w", "z"), same("w"))),
            ]),
        ),
    )
}

/// T_∅(φ) for φ ∈ FO_≤[{E}]. Over a word model the result reads subset
/// points as nonempty sets of positions.
pub fn mso_translate(phi: &Formula) -> Result<Formula, TransformError> {
    translate(phi, &BTreeSet::new())
}

fn never(x: &str, y: &str, s: &BTreeSet<String>) -> Formula {
    // x ≠ x, written with a variable that is still first-order
    match [x, y].into_iter().find(|v| !s.contains(*v)) {
        Some(v) => Formula::not(Formula::eq(v, v)),
        None => Formula::False,
    }
}

fn nonempty(x: &str) -> Formula {
    Formula::exists("z", Formula::set_atom(x, "z"))
}

fn translate(phi: &Formula, s: &BTreeSet<String>) -> Result<Formula, TransformError> {
    let ins = |v: &str| s.contains(v);
    Ok(match phi {
        Formula::True | Formula::False => phi.clone(),
        Formula::Eq(x, y) => match (ins(x), ins(y)) {
            (false, false) => phi.clone(),
            (true, true) => Formula::forall("z", Formula::iff(Formula::set_atom(&set_name(x), "z"), Formula::set_atom(&set_name(y), "z"))),
            _ => never(x, y, s),
        },
        Formula::Builtin(b, args) if (b == "le" || b == "lt") && args.len() == 2 => {
            let (x, y) = (&args[0], &args[1]);
            let le = match (ins(x), ins(y)) {
                (false, false) => Formula::le(x, y),
                (false, true) => Formula::eq(x, x),
                (true, false) => never(x, y, s),
                (true, true) => lex_le(&set_name(x), &set_name(y)),
            };
            if b == "le" {
                le
            } else {
                Formula::and(le, Formula::not(translate(&Formula::eq(x, y), s)?))
            }
        }
        Formula::Rel(r, args) if r == "E" && args.len() == 2 => {
            let (x, y) = (&args[0], &args[1]);
            if !ins(x) && ins(y) {
                Formula::set_atom(&set_name(y), x)
            } else {
                never(x, y, s)
            }
        }
        Formula::Not(a) => Formula::not(translate(a, s)?),
        Formula::And(a, b) => Formula::and(translate(a, s)?, translate(b, s)?),
        Formula::Or(a, b) => Formula::or(translate(a, s)?, translate(b, s)?),
        Formula::Implies(a, b) => Formula::implies(translate(a, s)?, translate(b, s)?),
        Formula::Iff(a, b) => Formula::iff(translate(a, s)?, translate(b, s)?),
        Formula::Exists(x, a) | Formula::Forall(x, a) => {
            let mut inner = s.clone();
            inner.remove(x);
            let first = translate(a, &inner)?;
            inner.insert(x.clone());
            let second = translate(a, &inner)?;
            let xs = set_name(x);
            if matches!(phi, Formula::Exists(..)) {
                Formula::or(Formula::exists(x, first), Formula::set_exists(&xs, Formula::and(nonempty(&xs), second)))
            } else {
                Formula::and(Formula::forall(x, first), Formula::set_forall(&xs, Formula::implies(nonempty(&xs), second)))
            }
        }
        Formula::Rel(r, _) => return Err(TransformError::NotFoE(format!("relation `{r}`"))),
        Formula::Builtin(b, _) => return Err(TransformError::NotFoE(format!("built-in `@{b}`"))),
        Formula::Quant { name, .. } => return Err(TransformError::NotFoE(format!("quantifier `{name}`"))),
        Formula::Count { .. } => return Err(TransformError::NotFoE("counting".into())),
        Formula::SetAtom(..) | Formula::SetExists(..) | Formula::SetForall(..) => return Err(TransformError::NotFoE("set variables".into())),
    })
}

/// Why a semantic check could not be carried out.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContractError {
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// All assignments of `vars` to elements of `within`.
fn assignments(vars: &[String], within: &[usize]) -> Vec<Assignment> {
    let mut out = vec![Assignment::new()];
    for v in vars {
        out = out.into_iter().flat_map(|a| within.iter().map(move |&e| a.clone().bind(v, e))).collect();
    }
    out
}

/// Checks that substituting into φ agrees with evaluating φ on the model
/// whose relations are replaced by their ψ-definitions, over all assignments
/// to the free variables of φ.
pub fn substitution_contract_holds(ev: &Evaluator<'_>, m: &BrModel, phi: &Formula, subs: &Substitution) -> Result<bool, ContractError> {
    let result = substitute(phi, subs)?;
    let mut replaced = m.clone();
    for (r, (params, psi)) in subs {
        let vars: Vec<&str> = params.iter().map(String::as_str).collect();
        let rel = ev.defined_relation(m, psi, &vars, &Assignment::new())?;
        replaced.put_relation(r, rel);
    }
    let fv: Vec<String> = free_variables(phi).into_iter().collect();
    let all: Vec<usize> = (0..m.size()).collect();
    for a in assignments(&fv, &all) {
        if ev.eval(m, &result, &a)? != ev.eval(&replaced, phi, &a)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// For every assignment into ψ^{M,f}: (M,f) ⊨ (φ|ψ)[ā] ⟺ (M,f)|ψ^{M,f} ⊨ φ[ā].
pub fn relativization_contract_holds(ev: &Evaluator<'_>, m: &BrModel, phi: &Formula, var: &str, psi: &Formula) -> Result<bool, ContractError> {
    let rel = relativize_formula(phi, var, psi, ev.quants)?;
    let u = ev.defined_relation(m, psi, &[var], &Assignment::new())?;
    let members: BTreeSet<usize> = u.tuples().map(|t| t[0]).collect();
    if members.is_empty() {
        return Ok(true);
    }
    let (small, back) = relativize(m, &members).map_err(EvalError::from)?;
    let fv: Vec<String> = free_variables(phi).into_iter().collect();
    let idx: Vec<usize> = (0..back.len()).collect();
    for a in assignments(&fv, &idx) {
        let mut big = Assignment::new();
        for (v, &i) in &a.elems {
            big = big.bind(v, back[i]);
        }
        if ev.eval(m, &rel, &big)? != ev.eval(&small, phi, &a)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// (M_k,f_k) ⊨ φ ⟺ (N_k,g_k) ⊨ T_∅(φ) with M_k the ordered powerset
/// structure and N_k the word a^k.
pub fn mso_correspondence_holds(ev: &Evaluator<'_>, phi: &Formula, k: usize) -> Result<bool, ContractError> {
    if !free_variables(phi).is_empty() || !free_set_variables(phi).is_empty() {
        return Err(TransformError::NotFoE("free variables".into()).into());
    }
    if relations_used(phi).keys().any(|r| r != "E") {
        return Err(TransformError::NotFoE("relations other than E".into()).into());
    }
    let star = mso_translate(phi)?;
    let mut mk = powerset_structure(k, DEFAULT_POWERSET_CAP).map_err(EvalError::from)?;
    let nk = word_model(&"a".repeat(k)).map_err(EvalError::from)?;
    if mk.relation("E").is_none() {
        mk.put_relation("E", crate::model::Relation::empty(2, mk.size()));
    }
    Ok(ev.eval(&mk, phi, &Assignment::new())? == ev.eval(&nk, &star, &Assignment::new())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{random_model, FormulaGen};
    use crate::model::BuiltinRegistry;
    use crate::quantifiers::builtin_quantifiers;
    use crate::syntax::{parse, ParseContext};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(text: &str) -> Formula {
        let voc = [("U", 1), ("V", 1), ("E", 2)].iter().map(|&(r, k)| (r.to_string(), k)).collect();
        let q = builtin_quantifiers();
        parse(text, &ParseContext::new(&voc, &q)).unwrap()
    }

    #[test]
    fn substitution_examples() {
        let subs: Substitution = [("U".to_string(), (vec!["y".to_string()], p("!V(y)")))].into();
        assert_eq!(substitute(&p("E x. U(x)"), &subs).unwrap(), p("E x. !V(x)"));
        let phi = p("E x. (U(x) & x <= x)");
        assert_eq!(substitute(&phi, &subs).unwrap(), p("E x. (!V(x) & x <= x)"));
        // the inserted copy's binder cannot capture the argument
        let subs: Substitution = [("U".to_string(), (vec!["y".to_string()], p("E x. E(y,x)")))].into();
        let out = substitute(&p("E x. U(x)"), &subs).unwrap();
        assert_eq!(out, p("E x. E v0. E(x,v0)"));
        assert_eq!(out.to_string(), substitute(&p("E x. U(x)"), &subs).unwrap().to_string());
        let bad: Substitution = [("E".to_string(), (vec!["y".to_string()], p("U(y)")))].into();
        assert!(matches!(substitute(&p("E(x,x)"), &bad), Err(TransformError::Arity { .. })));
        let free: Substitution = [("U".to_string(), (vec!["y".to_string()], p("V(z)")))].into();
        assert!(matches!(substitute(&p("U(x)"), &free), Err(TransformError::FreeVariables { .. })));
    }

    #[test]
    fn relativization_examples() {
        let q = builtin_quantifiers();
        let r = relativize_formula(&p("E y. U(y)"), "x", &p("V(x)"), &q).unwrap();
        assert_eq!(r, p("E y. (V(y) & U(y))"));
        let r = relativize_formula(&p("C_Sq(x: U(x))"), "x", &p("V(x)"), &q).unwrap();
        assert_eq!(r, p("C_Sq(x: V(x) & U(x))"));
        assert!(matches!(relativize_formula(&p("E x. E y. @plus(x,y,y)"), "x", &p("V(x)"), &q), Err(TransformError::ForbiddenBuiltin(_))));
        assert!(matches!(relativize_formula(&p("Maj(x: U(x))"), "x", &p("V(x)"), &q), Err(TransformError::NotUniverseIndependent(_))));
        assert!(matches!(relativize_formula(&p("U(x)"), "x", &p("E(x,y)"), &q), Err(TransformError::RelativizerFreeVariables(_))));
    }

    #[test]
    fn mso_translation_clauses() {
        assert_eq!(mso_translate(&p("E(x,y)")).unwrap(), p("!(x = x)"));
        let t = mso_translate(&p("E x. E y. E(x,y)")).unwrap();
        // outer ∃ splits once, each branch's inner ∃ splits again
        assert_eq!(t.to_string().matches("EX").count(), 3, "{t}");
        assert!(matches!(mso_translate(&p("U(x)")), Err(TransformError::NotFoE(_))));
        assert_eq!(set_name("x"), "X");
        assert_eq!(set_name("Z1"), "S_Z1");
    }

    #[test]
    fn lex_macro_matches_mask_order() {
        let b = BuiltinRegistry::default();
        let q = builtin_quantifiers();
        let ev = Evaluator::new(&b, &q);
        let k = 4;
        let w = word_model(&"a".repeat(k)).unwrap();
        let phi = lex_le("X", "Y");
        for mx in 1u32..16 {
            for my in 1u32..16 {
                let set = |m: u32| (0..k).filter(move |&i| m & crate::model::atom_bit(k, i) != 0);
                let a = Assignment::new().bind_set("X", set(mx)).bind_set("Y", set(my));
                assert_eq!(ev.eval(&w, &phi, &a).unwrap(), mx <= my, "{mx} {my}");
            }
        }
    }

    #[test]
    fn mso_correspondence_on_samples() {
        let b = BuiltinRegistry::default();
        let q = builtin_quantifiers();
        let ev = Evaluator::new(&b, &q);
        let samples = [
            "E x. E y. E(x,y)",
            "A x. E y. (E(x,y) | E(y,x) | x = y)",
            "E x. A y. (x <= y)",
            "E x. E y. (x < y & A z. (E(z,x) <-> E(z,y)))",
            "A x. A y. (x <= y | y <= x)",
            "E x. ((A y. !E(y,x)) & E y. ((A z. (E(z,y) -> z = z)) & E(x,y)))",
        ];
        for s in samples {
            for k in 1..=4 {
                assert!(mso_correspondence_holds(&ev, &p(s), k).unwrap(), "{s} k={k}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn substitution_contract(seed in any::<u64>(), n in 1usize..=5) {
            let b = BuiltinRegistry::default();
            let q = builtin_quantifiers();
            let ev = Evaluator::new(&b, &q);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vocab = [("U", 1), ("V", 1), ("E", 2)];
            let gen = FormulaGen::new(&vocab).with_builtins(&[("le", 2)]).with_quants(&[("I", vec![1, 1])]).depth(3);
            let m = random_model(&mut rng, n, &vocab, true);
            let phi = gen.formula(&mut rng, &["x".to_string()]);
            let ys = vec!["x".to_string(), "y".to_string()];
            let subs: Substitution = [
                ("U".to_string(), (vec!["x".to_string()], gen.formula(&mut rng, &ys[..1]))),
                ("E".to_string(), (ys.clone(), gen.formula(&mut rng, &ys))),
            ].into();
            prop_assert!(substitution_contract_holds(&ev, &m, &phi, &subs).unwrap());
        }

        #[test]
        fn relativization_contract(seed in any::<u64>(), n in 1usize..=6) {
            let b = BuiltinRegistry::default();
            let q = builtin_quantifiers();
            let ev = Evaluator::new(&b, &q);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vocab = [("U", 1), ("V", 1), ("E", 2)];
            let gen = FormulaGen::new(&vocab)
                .with_builtins(&[("le", 2), ("lt", 2)])
                .with_quants(&[("C_Sq", vec![1]), ("C_E", vec![1]), ("I", vec![1, 1]), ("D", vec![1, 1]), ("D_2", vec![1])])
                .depth(3);
            let m = random_model(&mut rng, n, &vocab, true);
            let phi = gen.formula(&mut rng, &["x".to_string()]);
            let psi = gen.formula(&mut rng, &["u".to_string()]);
            prop_assert!(relativization_contract_holds(&ev, &m, &phi, "u", &psi).unwrap());
        }
    }
}
