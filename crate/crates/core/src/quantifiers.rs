//! br-quantifiers: concrete cardinality quantifiers, language and sentence
//! defined quantifiers, and the constructions Q^reg, Q^≤, B_S, N(L).

use crate::evaluator::{EvalError, Evaluator, Program};
use crate::model::{BuiltinRegistry, NumericalRelation, Perm, Relation};
use crate::sets::NumericalSet;
use crate::syntax::{self, Formula, ParseContext, QuantifierSignatures};
use bitvec::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// What a quantifier sees: the domain size, f, and one relation per slot.
#[derive(Clone, Copy)]
pub struct QStructure<'a> {
    pub n: usize,
    pub f: &'a Perm,
    pub slots: &'a [Relation],
}

type Decide = dyn Fn(&QStructure<'_>) -> Result<bool, EvalError> + Send + Sync;

#[derive(Clone)]
pub struct Quantifier {
    pub name: String,
    pub arities: Vec<usize>,
    pub universe_independent: bool,
    pub order_invariant: bool,
    decide: Arc<Decide>,
}

impl fmt::Debug for Quantifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Quantifier({} {:?})", self.name, self.arities)
    }
}

impl Quantifier {
    pub fn new(
        name: impl Into<String>,
        arities: Vec<usize>,
        decide: impl Fn(&QStructure<'_>) -> Result<bool, EvalError> + Send + Sync + 'static,
    ) -> Self {
        Quantifier {
            name: name.into(),
            arities,
            universe_independent: false,
            order_invariant: false,
            decide: Arc::new(decide),
        }
    }

    /// A quantifier that only looks at slot cardinalities.
    pub fn by_sizes(name: impl Into<String>, slots: usize, test: impl Fn(&[usize]) -> bool + Send + Sync + 'static) -> Self {
        let mut q = Quantifier::new(name, vec![1; slots], move |s| {
            let sizes: Vec<usize> = s.slots.iter().map(Relation::len).collect();
            Ok(test(&sizes))
        });
        q.universe_independent = true;
        q.order_invariant = true;
        q
    }

    pub fn flags(mut self, universe_independent: bool, order_invariant: bool) -> Self {
        self.universe_independent = universe_independent;
        self.order_invariant = order_invariant;
        self
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Runs the decision procedure after checking slot shapes.
    pub fn decide(&self, s: &QStructure<'_>) -> Result<bool, EvalError> {
        if s.slots.len() != self.arities.len()
            || s.slots.iter().zip(&self.arities).any(|(r, &k)| r.arity() != k || r.domain_size() != s.n)
            || s.f.len() != s.n
        {
            return Err(EvalError::SlotShape(self.name.clone()));
        }
        (self.decide)(s)
    }

    /// Convenience wrapper owning its permutation and slots.
    pub fn decide_on(&self, n: usize, f: &Perm, slots: &[Relation]) -> Result<bool, EvalError> {
        self.decide(&QStructure { n, f, slots })
    }
}

/// C_S: |U| ∈ S.
pub fn cardinality(name: &str, s: NumericalSet) -> Quantifier {
    Quantifier::by_sizes(name, 1, move |z| s.contains(z[0] as u64))
}

/// Härtig quantifier: |U| = |V|.
pub fn hartig() -> Quantifier {
    Quantifier::by_sizes("I", 2, |z| z[0] == z[1])
}

/// |U| divides |V|, with 0 ∣ 0.
pub fn divisibility() -> Quantifier {
    Quantifier::by_sizes("D", 2, |z| if z[0] == 0 { z[1] == 0 } else { z[1] % z[0] == 0 })
}

/// D_m = C_{mℕ}.
pub fn divisible_by(m: u64) -> Quantifier {
    cardinality(&format!("D_{m}"), NumericalSet::multiples(m))
}

/// |U| > n/2.
pub fn majority() -> Quantifier {
    Quantifier::new("Maj", vec![1], |s| Ok(2 * s.slots[0].len() > s.n)).flags(false, true)
}

/// |R| > n²/2 for one binary slot.
pub fn majority_pairs() -> Quantifier {
    Quantifier::new("Maj2", vec![2], |s| Ok(2 * s.slots[0].len() > s.n * s.n)).flags(false, true)
}

/// U ≠ ∅.
pub fn exists_nonempty() -> Quantifier {
    Quantifier::by_sizes("NE", 1, |z| z[0] > 0)
}

type Membership = Arc<dyn Fn(&[char]) -> bool + Send + Sync>;

/// A language given by a membership oracle over an ordered alphabet.
#[derive(Clone)]
pub struct Language {
    pub name: String,
    pub alphabet: Vec<char>,
    member: Membership,
}

impl fmt::Debug for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Language({} over {:?})", self.name, self.alphabet)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QuantError {
    #[error("letter `{0}` already belongs to the alphabet")]
    LetterInAlphabet(char),
    #[error("invalid language spec `{0}`")]
    LanguageSpec(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
}

impl Language {
    pub fn new(name: impl Into<String>, alphabet: Vec<char>, member: impl Fn(&[char]) -> bool + Send + Sync + 'static) -> Self {
        Language { name: name.into(), alphabet, member: Arc::new(member) }
    }

    pub fn contains(&self, w: &[char]) -> bool {
        (self.member)(w)
    }

    pub fn contains_str(&self, w: &str) -> bool {
        self.contains(&w.chars().collect::<Vec<_>>())
    }

    /// {aⁿbⁿ}.
    pub fn anbn() -> Self {
        Language::new("anbn", vec!['a', 'b'], |w| {
            let k = w.iter().take_while(|&&c| c == 'a').count();
            w.len() == 2 * k && w[k..].iter().all(|&c| c == 'b')
        })
    }

    /// {aᵐbᵐcᵏ}.
    pub fn anbnck() -> Self {
        Language::new("anbnck", vec!['a', 'b', 'c'], |w| {
            let a = w.iter().take_while(|&&c| c == 'a').count();
            let b = w[a..].iter().take_while(|&&c| c == 'b').count();
            a == b && w[a + b..].iter().all(|&c| c == 'c')
        })
    }

    /// Words with an even number of `letter`.
    pub fn parity(letter: char, alphabet: Vec<char>) -> Self {
        Language::new(format!("parity:{letter}"), alphabet, move |w| w.iter().filter(|&&c| c == letter).count() % 2 == 0)
    }

    /// Σ*.
    pub fn everything(alphabet: Vec<char>) -> Self {
        Language::new("all", alphabet, |_| true)
    }

    /// Whole-word match of a regular expression.
    pub fn regex(alphabet: Vec<char>, pattern: &str) -> Result<Self, QuantError> {
        let re = regex::Regex::new(&format!("^(?:{pattern})$")).map_err(|_| QuantError::LanguageSpec(pattern.into()))?;
        Ok(Language::new(format!("regex:{pattern}"), alphabet, move |w| re.is_match(&w.iter().collect::<String>())))
    }

    /// `anbn`, `anbnck`, `parity:<letter>:<alphabet>`, `regex:<alphabet>:<pattern>`,
    /// `all:<alphabet>`, `neutral:<e>:<spec>`.
    pub fn parse(spec: &str) -> Result<Self, QuantError> {
        let bad = || QuantError::LanguageSpec(spec.to_string());
        let parts: Vec<&str> = spec.trim().splitn(3, ':').collect();
        match parts.as_slice() {
            ["anbn"] => Ok(Self::anbn()),
            ["anbnck"] => Ok(Self::anbnck()),
            ["parity", l, alpha] => {
                let l = single_char(l).ok_or_else(bad)?;
                Ok(Self::parity(l, alpha.chars().collect()))
            }
            ["all", alpha] => Ok(Self::everything(alpha.chars().collect())),
            ["regex", alpha, pat] => Self::regex(alpha.chars().collect(), pat),
            ["neutral", e, inner] => neutral_letter_extension(&Self::parse(inner)?, single_char(e).ok_or_else(bad)?),
            _ => Err(bad()),
        }
    }
}

fn single_char(s: &str) -> Option<char> {
    let mut it = s.chars();
    let c = it.next()?;
    it.next().is_none().then_some(c)
}

/// Q_L: one unary slot per letter; the slots must partition the domain and
/// the word read in f-order must belong to L.
pub fn language_quantifier(l: &Language) -> Quantifier {
    let lang = l.clone();
    let k = l.alphabet.len();
    Quantifier::new(format!("Q_{}", l.name), vec![1; k], move |s| {
        let mut word = Vec::with_capacity(s.n);
        for &a in s.f.order() {
            let mut letter = None;
            for (i, r) in s.slots.iter().enumerate() {
                if r.contains_index(a) {
                    if letter.is_some() {
                        return Ok(false);
                    }
                    letter = Some(lang.alphabet[i]);
                }
            }
            match letter {
                Some(c) => word.push(c),
                None => return Ok(false),
            }
        }
        Ok(lang.contains(&word))
    })
}

/// N(L): membership after deleting every e.
pub fn neutral_letter_extension(l: &Language, e: char) -> Result<Language, QuantError> {
    if l.alphabet.contains(&e) {
        return Err(QuantError::LetterInAlphabet(e));
    }
    let inner = l.clone();
    let mut alphabet = l.alphabet.clone();
    alphabet.push(e);
    Ok(Language::new(format!("N({})", l.name), alphabet, move |w| {
        let kept: Vec<char> = w.iter().copied().filter(|&c| c != e).collect();
        inner.contains(&kept)
    }))
}

/// Checks uv ∈ L ⟺ uev ∈ L for all u, v over L's alphabet (plus e) with |uv| < max_len.
pub fn is_neutral_letter(l: &Language, e: char, max_len: usize) -> bool {
    let mut alphabet = l.alphabet.clone();
    if !alphabet.contains(&e) {
        alphabet.push(e);
    }
    let mut word: Vec<char> = Vec::new();
    fn rec(l: &Language, e: char, alphabet: &[char], word: &mut Vec<char>, max_len: usize) -> bool {
        let base = l.contains(word);
        for split in 0..=word.len() {
            let mut w2 = word.clone();
            w2.insert(split, e);
            if l.contains(&w2) != base {
                return false;
            }
        }
        if word.len() + 1 < max_len {
            for &c in alphabet {
                word.push(c);
                let ok = rec(l, e, alphabet, word, max_len);
                word.pop();
                if !ok {
                    return false;
                }
            }
        }
        true
    }
    max_len == 0 || rec(l, e, &alphabet, &mut word, max_len)
}

/// The quantifier defined by a sentence over `vocab` (slot i is the relation vocab[i]).
pub fn quantifier_from_sentence(
    name: &str,
    vocab: &[(String, usize)],
    phi: &Formula,
    evaluator: &Evaluator<'_>,
) -> Result<Quantifier, EvalError> {
    let rel_names: Vec<String> = vocab.iter().map(|(r, _)| r.clone()).collect();
    let prog: Arc<Program> = Arc::new(evaluator.compile_over(phi, &[], &rel_names)?);
    for (i, (rname, k)) in vocab.iter().enumerate() {
        if let Some(a) = prog.relation_arity(i) {
            if a != *k {
                return Err(EvalError::Arity { name: rname.clone(), expected: *k, got: a });
            }
        }
    }
    let arities = vocab.iter().map(|(_, k)| *k).collect();
    Ok(Quantifier::new(name, arities, move |s| {
        let rels: Vec<&Relation> = s.slots.iter().collect();
        prog.eval_on(s.n, s.f, &rels, &[])
    }))
}

/// Q^reg: Q's slots plus a trailing unary slot P; relativize to P, then apply Q.
/// An empty P decides false.
pub fn regularize(q: &Quantifier) -> Quantifier {
    let inner = q.clone();
    let mut arities = q.arities.clone();
    arities.push(1);
    Quantifier::new(format!("{}^reg", q.name), arities, move |s| {
        let (p, rest) = s.slots.split_last().unwrap();
        let members: Vec<usize> = p.bits().iter_ones().collect();
        if members.is_empty() {
            return Ok(false);
        }
        let (perm, slots) = restrict(s, &members, rest);
        inner.decide(&QStructure { n: members.len(), f: &perm, slots: &slots })
    })
    .flags(true, q.order_invariant)
}

/// Relativizes slot relations to `members` (sorted element ids) with the order-collapse of f.
pub fn restrict(s: &QStructure<'_>, members: &[usize], rels: &[Relation]) -> (Perm, Vec<Relation>) {
    let k = members.len();
    let mut fwd = vec![usize::MAX; s.n];
    for (i, &a) in members.iter().enumerate() {
        fwd[a] = i;
    }
    let mut by_f: Vec<usize> = (0..k).collect();
    by_f.sort_by_key(|&i| s.f.apply(members[i]));
    let mut img = vec![0; k];
    for (rank, &i) in by_f.iter().enumerate() {
        img[i] = rank;
    }
    let perm = Perm::new(img).expect("rank map is a permutation");
    let slots = rels
        .iter()
        .map(|r| {
            let mut out = Relation::empty(r.arity(), k);
            for t in r.tuples() {
                if t.iter().all(|&a| fwd[a] != usize::MAX) {
                    let nt: Vec<usize> = t.iter().map(|&a| fwd[a]).collect();
                    let i = out.index(&nt);
                    out.set_index(i, true);
                }
            }
            out
        })
        .collect();
    (perm, slots)
}

/// Q^≤: Q's slots plus a trailing binary slot carrying an order. When that
/// slot is the reflexive closure of a strict total order on the whole domain,
/// Q is applied with the f it determines; otherwise the verdict is false.
pub fn lift_over_order(q: &Quantifier) -> Quantifier {
    let inner = q.clone();
    let mut arities = q.arities.clone();
    arities.push(2);
    Quantifier::new(format!("{}^le", q.name), arities, move |s| {
        let (le, rest) = s.slots.split_last().unwrap();
        match order_from_relation(le, s.n) {
            Some(g) => inner.decide(&QStructure { n: s.n, f: &g, slots: rest }),
            None => Ok(false),
        }
    })
    .flags(false, true)
}

/// The permutation g with ≤^g equal to `le`, if there is one.
pub fn order_from_relation(le: &Relation, n: usize) -> Option<Perm> {
    let mut g = vec![0usize; n];
    for (b, gb) in g.iter_mut().enumerate() {
        *gb = (0..n).filter(|&a| le.contains(&[a, b])).count().checked_sub(1)?;
    }
    let g = Perm::new(g).ok()?;
    for a in 0..n {
        for b in 0..n {
            if le.contains(&[a, b]) != (g.apply(a) <= g.apply(b)) {
                return None;
            }
        }
    }
    Some(g)
}

/// B_S: (|P₀|−1, …, |P_{k−1}|−1) ∈ S; an empty slot decides false.
pub fn bset_quantifier(rel: NumericalRelation) -> Quantifier {
    let k = rel.arity();
    let name = format!("B_{}", rel.name());
    Quantifier::by_sizes(name, k, move |z| {
        if z.contains(&0) {
            return false;
        }
        let v: Vec<u64> = z.iter().map(|&x| x as u64 - 1).collect();
        rel.holds(&v)
    })
}

/// Accepts exactly the binary relations whose field is a copy of the
/// membership structure between k atoms and the nonempty subsets, k ∈ Sq∖{0}.
pub fn powerset_quantifier() -> Quantifier {
    Quantifier::new("PS", vec![2], |s| Ok(is_powerset_membership(&s.slots[0], s.n))).flags(true, true)
}

fn is_powerset_membership(e: &Relation, n: usize) -> bool {
    let mut in_dom = bitvec![0; n];
    let mut in_rg = bitvec![0; n];
    for t in e.tuples() {
        in_dom.set(t[0], true);
        in_rg.set(t[1], true);
    }
    let d: Vec<usize> = in_dom.iter_ones().collect();
    let r: Vec<usize> = in_rg.iter_ones().collect();
    if d.is_empty() || (in_dom.clone() & in_rg).any() || d.len() >= 40 {
        return false;
    }
    if r.len() as u64 != (1u64 << d.len()) - 1 {
        return false;
    }
    let mut seen = BTreeSet::new();
    for &b in &r {
        let mask: u64 = d.iter().enumerate().filter(|(_, &a)| e.contains(&[a, b])).map(|(i, _)| 1u64 << i).sum();
        if mask == 0 || !seen.insert(mask) {
            return false;
        }
    }
    let k = d.len() as u64;
    k > 0 && NumericalSet::squares().contains(k)
}

/// Named quantifiers.
#[derive(Clone, Debug, Default)]
pub struct QuantifierRegistry {
    map: BTreeMap<String, Arc<Quantifier>>,
}

impl QuantifierSignatures for QuantifierRegistry {
    fn slot_arities(&self, name: &str) -> Option<Vec<usize>> {
        self.map.get(name).map(|q| q.arities.clone())
    }
}

impl QuantifierRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, q: Quantifier) {
        self.map.insert(q.name.clone(), Arc::new(q));
    }

    pub fn insert_as(&mut self, name: &str, q: Quantifier) {
        self.insert(q.renamed(name));
    }

    pub fn get(&self, name: &str) -> Option<&Arc<Quantifier>> {
        self.map.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    /// Reads `quant <name> = ...` and `set <id> = <set-spec>` lines.
    pub fn load_config(&mut self, text: &str, builtins: &mut BuiltinRegistry) -> Result<(), QuantError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| QuantError::Config { line: i + 1, msg };
            let (head, body) = line.split_once('=').ok_or_else(|| err("expected `=`".into()))?;
            let mut hw = head.split_whitespace();
            let (kind, name) = match (hw.next(), hw.next(), hw.next()) {
                (Some(k), Some(n), None) => (k, n),
                _ => return Err(err("expected `quant <name> =` or `set <id> =`".into())),
            };
            let body = body.trim();
            match kind {
                "set" => {
                    let s: NumericalSet = body.parse().map_err(|e: crate::sets::SetError| err(e.to_string()))?;
                    builtins.register_set(name, s);
                }
                "quant" => {
                    let q = self.quantifier_from_config(body, builtins).map_err(err)?;
                    self.insert_as(name, q);
                }
                _ => return Err(err(format!("unknown declaration `{kind}`"))),
            }
        }
        Ok(())
    }

    fn quantifier_from_config(&self, body: &str, builtins: &BuiltinRegistry) -> Result<Quantifier, String> {
        let (kind, arg) = match body.split_once(char::is_whitespace) {
            Some((k, a)) => (k, a.trim()),
            None => (body, ""),
        };
        let existing = |name: &str| self.get(name).map(|q| (**q).clone()).ok_or_else(|| format!("unknown quantifier `{name}`"));
        Ok(match kind {
            "cardinality" => cardinality("C", arg.parse().map_err(|e: crate::sets::SetError| e.to_string())?),
            "hartig" => hartig(),
            "div" => divisibility(),
            "divmod" => divisible_by(arg.parse().map_err(|_| format!("bad modulus `{arg}`"))?),
            "maj" => majority(),
            "maj2" => majority_pairs(),
            "nonempty" => exists_nonempty(),
            "language" => language_quantifier(&Language::parse(arg).map_err(|e| e.to_string())?),
            "reg" => regularize(&existing(arg)?),
            "lift" => lift_over_order(&existing(arg)?),
            "bset" => bset_quantifier(builtins.lookup(arg).ok_or_else(|| format!("unknown built-in `{arg}`"))?),
            "powerset" => powerset_quantifier(),
            "sentence" => {
                let (vocab_text, rest) = arg.split_once(char::is_whitespace).ok_or("expected vocabulary and formula")?;
                let formula = rest.trim().strip_prefix('"').and_then(|r| r.strip_suffix('"')).ok_or("formula must be quoted")?;
                let mut vocab = Vec::new();
                for item in vocab_text.split(',') {
                    let (r, k) = item.split_once(':').ok_or_else(|| format!("bad vocabulary item `{item}`"))?;
                    vocab.push((r.to_string(), k.parse::<usize>().map_err(|_| format!("bad arity in `{item}`"))?));
                }
                let voc: BTreeMap<String, usize> = vocab.iter().cloned().collect();
                let ctx = ParseContext::new(&voc, self).with_builtins(builtins);
                let phi = syntax::parse(formula, &ctx).map_err(|e| e.to_string())?;
                let ev = Evaluator::new(builtins, self);
                quantifier_from_sentence("S", &vocab, &phi, &ev).map_err(|e| e.to_string())?
            }
            _ => return Err(format!("unknown quantifier kind `{kind}`")),
        })
    }
}

/// C_Sq, C_E, C_F, I, D, D_2, D_3, D_5, Maj, Maj2, NE.
pub fn builtin_quantifiers() -> QuantifierRegistry {
    let mut r = QuantifierRegistry::empty();
    r.insert(cardinality("C_Sq", NumericalSet::squares()));
    r.insert(cardinality("C_E", NumericalSet::pow2()));
    r.insert(cardinality("C_F", NumericalSet::factorials()));
    r.insert(hartig());
    r.insert(divisibility());
    for m in [2, 3, 5] {
        r.insert(divisible_by(m));
    }
    r.insert(majority());
    r.insert(majority_pairs());
    r.insert(exists_nonempty());
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::powerset_structure;
    use proptest::prelude::*;
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unary(n: usize, elems: &[usize]) -> Relation {
        Relation::from_tuples(1, n, elems.iter().map(|&a| [a])).unwrap()
    }

    fn sized(n: usize, k: usize) -> Relation {
        unary(n, &(0..k).collect::<Vec<_>>())
    }

    fn run(q: &Quantifier, n: usize, slots: Vec<Relation>) -> bool {
        q.decide_on(n, &Perm::identity(n), &slots).unwrap()
    }

    #[test]
    fn builtin_examples() {
        let r = builtin_quantifiers();
        assert!(run(r.get("I").unwrap(), 7, vec![sized(7, 2), unary(7, &[4, 6])]));
        assert!(run(r.get("C_Sq").unwrap(), 10, vec![sized(10, 9)]));
        assert!(!run(r.get("C_Sq").unwrap(), 10, vec![sized(10, 8)]));
        let d = r.get("D").unwrap();
        assert!(run(d, 10, vec![sized(10, 3), sized(10, 9)]));
        assert!(run(d, 10, vec![sized(10, 0), sized(10, 0)]));
        assert!(!run(d, 10, vec![sized(10, 0), sized(10, 2)]));
        assert!(!run(d, 10, vec![sized(10, 2), sized(10, 3)]));
        assert!(run(r.get("D_3").unwrap(), 10, vec![sized(10, 6)]));
        assert!(run(r.get("Maj").unwrap(), 5, vec![sized(5, 3)]));
        assert!(!run(r.get("Maj").unwrap(), 6, vec![sized(6, 3)]));
        let pairs = Relation::from_tuples(2, 3, (0..5).map(|i| [i / 3, i % 3])).unwrap();
        assert!(run(r.get("Maj2").unwrap(), 3, vec![pairs]));
        assert!(!run(r.get("NE").unwrap(), 3, vec![sized(3, 0)]));
        assert!(r.get("I").unwrap().decide_on(3, &Perm::identity(3), &[sized(3, 1)]).is_err());
    }

    #[test]
    fn language_examples() {
        let q = language_quantifier(&Language::anbnck());
        let word = |w: &str| {
            let n = w.len();
            let slots = ['a', 'b', 'c']
                .iter()
                .map(|&c| unary(n, &w.char_indices().filter(|&(_, x)| x == c).map(|(i, _)| i).collect::<Vec<_>>()))
                .collect::<Vec<_>>();
            run(&q, n, slots)
        };
        assert!(word("aabbc"));
        assert!(word("ab"));
        assert!(!word("aba"));
        assert!(!run(&q, 2, vec![unary(2, &[0]), unary(2, &[0, 1]), unary(2, &[])]));
        assert!(!run(&q, 2, vec![unary(2, &[0]), unary(2, &[]), unary(2, &[])]));
        // positions are read in f-order
        let f = Perm::new(vec![1, 0]).unwrap();
        assert!(q.decide_on(2, &f, &[unary(2, &[1]), unary(2, &[0]), unary(2, &[])]).unwrap());
        assert!(!q.decide_on(2, &f, &[unary(2, &[0]), unary(2, &[1]), unary(2, &[])]).unwrap());
    }

    #[test]
    fn neutral_letters() {
        let l = Language::anbn();
        let n = neutral_letter_extension(&l, 'e').unwrap();
        assert!(n.contains_str("aeeb"));
        assert_eq!(n.contains_str("e"), l.contains_str(""));
        for w in ["", "ab", "aab", "ba", "aabb"] {
            assert_eq!(n.contains_str(w), l.contains_str(w));
        }
        assert!(is_neutral_letter(&n, 'e', 6));
        assert!(!is_neutral_letter(&l, 'a', 6));
        assert!(is_neutral_letter(&Language::everything(vec!['a', 'b']), 'b', 6));
        assert_eq!(neutral_letter_extension(&l, 'a').unwrap_err(), QuantError::LetterInAlphabet('a'));
        let p = Language::parse("neutral:e:parity:a:ab").unwrap();
        assert!(is_neutral_letter(&p, 'e', 7));
        let r = Language::parse("regex:ab:a*b*").unwrap();
        assert!(r.contains_str("aab") && !r.contains_str("ba"));
    }

    #[test]
    fn b_set_examples() {
        let le = bset_quantifier(NumericalRelation::Le);
        assert!(run(&le, 8, vec![sized(8, 3), sized(8, 5)]));
        assert!(!run(&le, 8, vec![sized(8, 5), sized(8, 3)]));
        assert!(!run(&le, 8, vec![sized(8, 0), sized(8, 3)]));
        let plus = bset_quantifier(NumericalRelation::Plus);
        assert!(run(&plus, 8, vec![sized(8, 3), sized(8, 4), sized(8, 6)]));
        assert!(!run(&plus, 8, vec![sized(8, 3), sized(8, 4), sized(8, 7)]));
    }

    #[test]
    fn powerset_examples() {
        let q = powerset_quantifier();
        for k in 1..=5 {
            let m = powerset_structure(k, 5).unwrap();
            let e = m.relation("E").unwrap().clone();
            assert_eq!(run(&q, m.size(), vec![e]), k == 1 || k == 4, "k={k}");
        }
        assert!(!run(&q, 4, vec![Relation::empty(2, 4)]));
        // padded copy of the k=4 structure is still accepted
        let m = powerset_structure(4, 5).unwrap();
        let n = m.size() + 3;
        let e = Relation::from_tuples(2, n, m.relation("E").unwrap().tuples().map(|t| [t[0] + 3, t[1] + 3])).unwrap();
        assert!(run(&q, n, vec![e.clone()]));
        // dropping one membership edge breaks extensionality or surjectivity
        let mut broken = e;
        assert!(broken.contains(&[6, 7]));
        broken.set_index(broken.index(&[6, 7]), false);
        assert!(!run(&q, n, vec![broken]));
    }

    #[test]
    fn regularize_examples() {
        let q = regularize(&cardinality("C_Sq", NumericalSet::squares()));
        let u = unary(10, &[0, 1, 4, 5]);
        assert!(run(&q, 10, vec![u.clone(), u.clone()]));
        assert!(run(&q, 10, vec![u.clone(), sized(10, 10)]));
        assert!(!run(&q, 10, vec![unary(10, &[0, 1]), sized(10, 10)]));
        assert!(!run(&q, 10, vec![u, sized(10, 0)]));
    }

    #[test]
    fn lift_examples() {
        let i = hartig();
        let lifted = lift_over_order(&i);
        let n = 5;
        let amb = Relation::from_tuples(2, n, (0..n).flat_map(|a| (a..n).map(move |b| [a, b]))).unwrap();
        assert!(run(&lifted, n, vec![sized(n, 2), unary(n, &[3, 4]), amb.clone()]));
        let mut not_order = amb.clone();
        not_order.set_index(not_order.index(&[0, 2]), false);
        assert!(!run(&lifted, n, vec![sized(n, 2), unary(n, &[3, 4]), not_order]));
        // the language quantifier reads the order from the lifted slot
        let ql = lift_over_order(&language_quantifier(&Language::anbn()));
        let rev = Relation::from_tuples(2, 2, [[0, 0], [1, 1], [1, 0]]).unwrap();
        assert!(run(&ql, 2, vec![unary(2, &[1]), unary(2, &[0]), rev]));
        assert!(!run(&ql, 2, vec![unary(2, &[0]), unary(2, &[1]), Relation::from_tuples(2, 2, [[0, 0], [1, 1], [1, 0]]).unwrap()]));
    }

    #[test]
    fn sentence_defined_quantifier() {
        let mut b = BuiltinRegistry::default();
        b.register_set("S", NumericalSet::list([2]));
        let reg = QuantifierRegistry::empty();
        let ev = Evaluator::new(&b, &reg);
        let voc: BTreeMap<String, usize> = [("U".to_string(), 1)].into();
        let phi = syntax::parse("E x. (@set:S(x) & A y. (U(y) <-> y <= x))", &ParseContext::new(&voc, &reg)).unwrap();
        let q = quantifier_from_sentence("Q", &[("U".into(), 1)], &phi, &ev).unwrap();
        assert!(run(&q, 6, vec![sized(6, 3)]));
        assert!(!run(&q, 6, vec![unary(6, &[0, 1, 3])]));
        assert!(!run(&q, 6, vec![sized(6, 2)]));
        let taut = quantifier_from_sentence("T", &[("U".into(), 1)], &Formula::True, &ev).unwrap();
        assert!(run(&taut, 3, vec![sized(3, 1)]));
        let wrong = syntax::parse("E x. U(x)", &ParseContext::new(&voc, &reg)).unwrap();
        assert!(quantifier_from_sentence("W", &[("U".into(), 2)], &wrong, &ev).is_err());
    }

    #[test]
    fn config_loading() {
        let mut b = BuiltinRegistry::default();
        let mut r = builtin_quantifiers();
        let cfg = "# comment\n\
                   set two = list:2\n\
                   quant Cfact = cardinality fact\n\
                   quant L = language anbnck\n\
                   quant Lr = reg L\n\
                   quant Ile = lift I\n\
                   quant Bp = bset plus\n\
                   quant PS = powerset\n\
                   quant D7 = divmod 7\n\
                   quant S2 = sentence U:1 \"E x. (@set:two(x) & A y. (U(y) <-> y <= x))\"\n";
        r.load_config(cfg, &mut b).unwrap();
        assert!(b.set("two").is_some());
        assert_eq!(r.get("Lr").unwrap().arities, vec![1, 1, 1, 1]);
        assert_eq!(r.get("Ile").unwrap().arities, vec![1, 1, 2]);
        assert!(run(r.get("Cfact").unwrap(), 8, vec![sized(8, 6)]));
        assert!(run(r.get("D7").unwrap(), 8, vec![sized(8, 7)]));
        assert!(run(r.get("S2").unwrap(), 8, vec![sized(8, 3)]));
        let mut r2 = builtin_quantifiers();
        assert!(matches!(r2.load_config("quant X = reg Nope", &mut b), Err(QuantError::Config { line: 1, .. })));
        assert!(r2.load_config("quant X = frobnicate", &mut b).is_err());
        assert!(r2.load_config("set y = nonsense:1", &mut b).is_err());
    }

    fn all_quantifiers() -> Vec<Quantifier> {
        let mut v: Vec<Quantifier> = builtin_quantifiers().map.values().map(|q| (**q).clone()).collect();
        v.push(language_quantifier(&Language::anbn()));
        v.push(language_quantifier(&Language::anbnck()));
        v.push(bset_quantifier(NumericalRelation::Plus));
        v.push(powerset_quantifier());
        v.push(regularize(&hartig()));
        v.push(regularize(&language_quantifier(&Language::anbn())));
        v.push(lift_over_order(&hartig()));
        v
    }

    fn random_slots(rng: &mut ChaCha8Rng, q: &Quantifier, n: usize) -> Vec<Relation> {
        q.arities
            .iter()
            .map(|&k| {
                let mut r = Relation::empty(k, n);
                let density = rng.gen_range(0.0..1.0);
                for i in 0..n.pow(k as u32) {
                    if rng.gen_bool(density) {
                        r.set_index(i, true);
                    }
                }
                r
            })
            .collect()
    }

    /// Language-shaped slots: a random partition of the domain.
    fn partition_slots(rng: &mut ChaCha8Rng, k: usize, n: usize) -> Vec<Relation> {
        let mut slots = vec![Relation::empty(1, n); k];
        for a in 0..n {
            slots[rng.gen_range(0..k)].set_index(a, true);
        }
        slots
    }

    fn relabel(slots: &[Relation], sigma: &[usize], n: usize) -> Vec<Relation> {
        slots
            .iter()
            .map(|r| Relation::from_tuples(r.arity(), n, r.tuples().map(|t| t.iter().map(|&a| sigma[a]).collect::<Vec<_>>())).unwrap())
            .collect()
    }

    proptest! {
        #[test]
        fn decide_is_br_isomorphism_invariant(seed in any::<u64>(), n in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for q in all_quantifiers() {
                let slots = if q.name.starts_with("Q_") {
                    partition_slots(&mut rng, q.arities.len(), n)
                } else {
                    random_slots(&mut rng, &q, n)
                };
                let mut f: Vec<usize> = (0..n).collect();
                f.shuffle(&mut rng);
                let f = Perm::new(f).unwrap();
                let mut sigma: Vec<usize> = (0..n).collect();
                sigma.shuffle(&mut rng);
                let mut g = vec![0; n];
                for a in 0..n { g[sigma[a]] = f.apply(a); }
                let g = Perm::new(g).unwrap();
                let before = q.decide_on(n, &f, &slots).unwrap();
                let after = q.decide_on(n, &g, &relabel(&slots, &sigma, n)).unwrap();
                prop_assert_eq!(before, after, "{}", q.name);
                if q.order_invariant {
                    prop_assert_eq!(before, q.decide_on(n, &Perm::identity(n), &slots).unwrap(), "{}", q.name);
                }
            }
        }

        #[test]
        fn regularized_is_padding_invariant(seed in any::<u64>(), n in 1usize..8, extra in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for base in [hartig(), language_quantifier(&Language::anbn()), cardinality("C_Sq", NumericalSet::squares())] {
                let q = regularize(&base);
                let mut slots = if base.name.starts_with("Q_") {
                    partition_slots(&mut rng, 2, n)
                } else {
                    random_slots(&mut rng, &base, n)
                };
                slots.push(sized(n, n));
                let f: Vec<usize> = { let mut v: Vec<usize> = (0..n).collect(); v.shuffle(&mut rng); v };
                let before = q.decide_on(n, &Perm::new(f.clone()).unwrap(), &slots).unwrap();
                // new points n..n+extra, old elements keep relative f-order
                let big = n + extra;
                let mut positions: Vec<usize> = (0..big).collect();
                positions.shuffle(&mut rng);
                let mut old_pos: Vec<usize> = positions[..n].to_vec();
                old_pos.sort();
                let new_pos = &positions[n..];
                let mut img = vec![0; big];
                for a in 0..n { img[a] = old_pos[f[a]]; }
                for (j, &p) in new_pos.iter().enumerate() { img[n + j] = p; }
                let padded: Vec<Relation> = slots.iter().map(|r| Relation::from_tuples(r.arity(), big, r.tuples()).unwrap()).collect();
                let after = q.decide_on(big, &Perm::new(img).unwrap(), &padded).unwrap();
                prop_assert_eq!(before, after, "{}", q.name);
            }
        }

        #[test]
        fn lift_with_ambient_order_agrees(seed in any::<u64>(), n in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for base in [language_quantifier(&Language::anbnck()), hartig(), language_quantifier(&Language::anbn())] {
                let slots = if base.name.starts_with("Q_") {
                    partition_slots(&mut rng, base.arities.len(), n)
                } else {
                    random_slots(&mut rng, &base, n)
                };
                let mut f: Vec<usize> = (0..n).collect();
                f.shuffle(&mut rng);
                let f = Perm::new(f).unwrap();
                let le = Relation::from_tuples(2, n, (0..n).flat_map(|a| (0..n).map(move |b| [a, b])).filter(|t| f.apply(t[0]) <= f.apply(t[1]))).unwrap();
                let mut lifted_slots = slots.clone();
                lifted_slots.push(le);
                let lifted = lift_over_order(&base);
                // ambient permutation is ignored by the lift
                prop_assert_eq!(
                    base.decide_on(n, &f, &slots).unwrap(),
                    lifted.decide_on(n, &Perm::identity(n), &lifted_slots).unwrap()
                );
            }
        }
    }
}
