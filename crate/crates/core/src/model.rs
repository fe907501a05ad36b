//! Finite structures with a permutation interpreting built-in relations.

use crate::sets::NumericalSet;
use bitvec::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("f is not a permutation of 0..{0}")]
    NotPermutation(usize),
    #[error("relation {name}: tuple {tuple:?} has a component outside 0..{n}")]
    OutOfRange { name: String, tuple: Vec<usize>, n: usize },
    #[error("{name}: expected arity {expected}, got {got}")]
    Arity { name: String, expected: usize, got: usize },
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("duplicate relation `{0}`")]
    DuplicateRelation(String),
    #[error("vocabularies differ")]
    VocabularyMismatch,
    #[error("empty word")]
    EmptyWord,
    #[error("relativization to the empty set")]
    EmptySubset,
    #[error("{what} {value} exceeds the cap {cap}")]
    Cap { what: &'static str, value: usize, cap: usize },
    #[error("relation {name} would need {bits} bits")]
    TooLarge { name: String, bits: u128 },
    #[error("not a partial multiplication, offending tuples {0:?}")]
    NonMultiplicative(Vec<(u64, u64, u64)>),
    #[error("model file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

const MAX_RELATION_BITS: u128 = 1 << 28;

/// A permutation of {0,…,n−1} together with its inverse.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Perm {
    img: Vec<usize>,
    inv: Vec<usize>,
}

impl Perm {
    pub fn identity(n: usize) -> Self {
        Perm { img: (0..n).collect(), inv: (0..n).collect() }
    }
    pub fn reversal(n: usize) -> Self {
        Self::new((0..n).rev().collect()).unwrap()
    }
    pub fn new(img: Vec<usize>) -> Result<Self, ModelError> {
        let n = img.len();
        let mut inv = vec![usize::MAX; n];
        for (a, &b) in img.iter().enumerate() {
            if b >= n || inv[b] != usize::MAX {
                return Err(ModelError::NotPermutation(n));
            }
            inv[b] = a;
        }
        Ok(Perm { img, inv })
    }
    pub fn len(&self) -> usize {
        self.img.len()
    }
    pub fn is_empty(&self) -> bool {
        self.img.is_empty()
    }
    pub fn apply(&self, a: usize) -> usize {
        self.img[a]
    }
    pub fn inverse(&self, b: usize) -> usize {
        self.inv[b]
    }
    pub fn images(&self) -> &[usize] {
        &self.img
    }
    /// Elements listed in increasing f-value.
    pub fn order(&self) -> &[usize] {
        &self.inv
    }
    pub fn is_identity(&self) -> bool {
        self.img.iter().enumerate().all(|(a, &b)| a == b)
    }
}

/// A relation over {0,…,n−1} stored densely (index Σ aᵢ·nⁱ).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Relation {
    arity: usize,
    n: usize,
    bits: BitVec,
}

impl fmt::Debug for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.tuples()).finish()
    }
}

impl Relation {
    pub fn empty(arity: usize, n: usize) -> Self {
        Self::try_empty("", arity, n).expect("relation too large")
    }

    pub fn try_empty(name: &str, arity: usize, n: usize) -> Result<Self, ModelError> {
        let bits = (n as u128).pow(arity as u32);
        if bits > MAX_RELATION_BITS {
            return Err(ModelError::TooLarge { name: name.to_string(), bits });
        }
        Ok(Relation { arity, n, bits: bitvec![0; bits as usize] })
    }

    pub fn from_tuples<I, T>(arity: usize, n: usize, tuples: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[usize]>,
    {
        let mut r = Self::try_empty("", arity, n)?;
        for t in tuples {
            r.insert(t.as_ref())?;
        }
        Ok(r)
    }

    /// Unary relation from a membership vector.
    pub fn unary_from_bits(bits: BitVec) -> Self {
        Relation { arity: 1, n: bits.len(), bits }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }
    pub fn domain_size(&self) -> usize {
        self.n
    }
    pub fn bits(&self) -> &BitSlice {
        &self.bits
    }

    #[inline]
    pub fn index(&self, t: &[usize]) -> usize {
        t.iter().rev().fold(0, |acc, &a| acc * self.n + a)
    }

    pub fn decode(&self, mut idx: usize) -> Vec<usize> {
        let mut t = Vec::with_capacity(self.arity);
        for _ in 0..self.arity {
            t.push(idx % self.n);
            idx /= self.n;
        }
        t
    }

    #[inline]
    pub fn contains(&self, t: &[usize]) -> bool {
        debug_assert_eq!(t.len(), self.arity);
        self.bits[self.index(t)]
    }

    #[inline]
    pub fn contains_index(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn insert(&mut self, t: &[usize]) -> Result<(), ModelError> {
        if t.len() != self.arity {
            return Err(ModelError::Arity { name: String::new(), expected: self.arity, got: t.len() });
        }
        if t.iter().any(|&a| a >= self.n) {
            return Err(ModelError::OutOfRange { name: String::new(), tuple: t.to_vec(), n: self.n });
        }
        let i = self.index(t);
        self.bits.set(i, true);
        Ok(())
    }

    #[inline]
    /// Overwrites the tuples with those of a relation of the same shape.
    pub fn copy_bits_from(&mut self, other: &Relation) {
        assert!(self.arity == other.arity && self.n == other.n, "relation shapes differ");
        self.bits.copy_from_bitslice(&other.bits);
    }

    pub fn set_index(&mut self, idx: usize, v: bool) {
        self.bits.set(idx, v);
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones()
    }
    pub fn is_empty(&self) -> bool {
        self.bits.not_any()
    }

    pub fn tuples(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        self.bits.iter_ones().map(move |i| self.decode(i))
    }

    /// Elements occurring in some tuple.
    pub fn support(&self) -> BTreeSet<usize> {
        self.tuples().flatten().collect()
    }
}

/// Relation symbol name to arity.
pub type Vocabulary = BTreeMap<String, usize>;

/// A br-model: finite relational structure on {0,…,n−1} with a permutation f.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BrModel {
    n: usize,
    rels: BTreeMap<String, Relation>,
    f: Perm,
}

impl BrModel {
    pub fn new(n: usize) -> Self {
        BrModel { n, rels: BTreeMap::new(), f: Perm::identity(n) }
    }

    pub fn with_perm(mut self, f: Perm) -> Result<Self, ModelError> {
        if f.len() != self.n {
            return Err(ModelError::NotPermutation(self.n));
        }
        self.f = f;
        Ok(self)
    }

    pub fn set_perm(&mut self, f: Perm) -> Result<(), ModelError> {
        if f.len() != self.n {
            return Err(ModelError::NotPermutation(self.n));
        }
        self.f = f;
        Ok(())
    }

    pub fn add_relation(&mut self, name: &str, rel: Relation) -> Result<(), ModelError> {
        if rel.n != self.n {
            return Err(ModelError::OutOfRange { name: name.to_string(), tuple: vec![], n: self.n });
        }
        if self.rels.contains_key(name) {
            return Err(ModelError::DuplicateRelation(name.to_string()));
        }
        self.rels.insert(name.to_string(), rel);
        Ok(())
    }

    /// Adds or replaces a relation.
    pub fn put_relation(&mut self, name: &str, rel: Relation) {
        assert_eq!(rel.n, self.n, "relation over the wrong domain");
        self.rels.insert(name.to_string(), rel);
    }

    pub fn with_tuples<I, T>(mut self, name: &str, arity: usize, tuples: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[usize]>,
    {
        let rel = Relation::from_tuples(arity, self.n, tuples).map_err(|e| rename_err(e, name))?;
        self.add_relation(name, rel)?;
        Ok(self)
    }

    pub fn with_unary<I: IntoIterator<Item = usize>>(self, name: &str, elems: I) -> Result<Self, ModelError> {
        self.with_tuples(name, 1, elems.into_iter().map(|a| [a]))
    }

    pub fn size(&self) -> usize {
        self.n
    }
    pub fn perm(&self) -> &Perm {
        &self.f
    }
    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.rels.get(name)
    }
    pub fn relations(&self) -> impl Iterator<Item = (&str, &Relation)> {
        self.rels.iter().map(|(k, v)| (k.as_str(), v))
    }
    pub fn vocabulary(&self) -> Vocabulary {
        self.rels.iter().map(|(k, v)| (k.clone(), v.arity)).collect()
    }

    /// Elements occurring in some relation.
    pub fn support(&self) -> BTreeSet<usize> {
        self.rels.values().flat_map(|r| r.support()).collect()
    }
}

fn rename_err(e: ModelError, name: &str) -> ModelError {
    match e {
        ModelError::Arity { expected, got, .. } => ModelError::Arity { name: name.to_string(), expected, got },
        ModelError::OutOfRange { tuple, n, .. } => ModelError::OutOfRange { name: name.to_string(), tuple, n },
        ModelError::TooLarge { bits, .. } => ModelError::TooLarge { name: name.to_string(), bits },
        other => other,
    }
}

/// A relation on ℕ usable as built-in vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub enum NumericalRelation {
    Le,
    Lt,
    Plus,
    Times,
    /// BIT(i, j): bit j of i is 1.
    Bit,
    Set(String, Arc<NumericalSet>),
}

impl NumericalRelation {
    pub fn arity(&self) -> usize {
        match self {
            NumericalRelation::Le | NumericalRelation::Lt | NumericalRelation::Bit => 2,
            NumericalRelation::Plus | NumericalRelation::Times => 3,
            NumericalRelation::Set(..) => 1,
        }
    }

    pub fn name(&self) -> String {
        match self {
            NumericalRelation::Le => "le".into(),
            NumericalRelation::Lt => "lt".into(),
            NumericalRelation::Plus => "plus".into(),
            NumericalRelation::Times => "times".into(),
            NumericalRelation::Bit => "bit".into(),
            NumericalRelation::Set(id, _) => format!("set:{id}"),
        }
    }

    /// Membership of a tuple of naturals.
    #[inline]
    pub fn holds(&self, v: &[u64]) -> bool {
        match self {
            NumericalRelation::Le => v[0] <= v[1],
            NumericalRelation::Lt => v[0] < v[1],
            NumericalRelation::Plus => v[0].checked_add(v[1]) == Some(v[2]),
            NumericalRelation::Times => v[0].checked_mul(v[1]) == Some(v[2]),
            NumericalRelation::Bit => v[1] < 64 && (v[0] >> v[1]) & 1 == 1,
            NumericalRelation::Set(_, s) => s.contains(v[0]),
        }
    }
}

/// Named built-in relations, including registered unary sets `set:<id>`.
#[derive(Clone, Debug)]
pub struct BuiltinRegistry {
    sets: BTreeMap<String, Arc<NumericalSet>>,
}

impl Default for BuiltinRegistry {
    fn default() -> Self {
        let mut r = BuiltinRegistry { sets: BTreeMap::new() };
        r.register_set("sq", NumericalSet::squares());
        r.register_set("pow2", NumericalSet::pow2());
        r.register_set("fact", NumericalSet::factorials());
        r.register_set("primes", NumericalSet::primes());
        r
    }
}

impl BuiltinRegistry {
    pub fn empty() -> Self {
        BuiltinRegistry { sets: BTreeMap::new() }
    }
    pub fn register_set(&mut self, id: &str, s: NumericalSet) {
        self.sets.insert(id.to_string(), Arc::new(s));
    }
    pub fn set(&self, id: &str) -> Option<&Arc<NumericalSet>> {
        self.sets.get(id)
    }
    /// Resolves `le`, `lt`, `plus`, `times`, `bit` or `set:<id>`.
    pub fn lookup(&self, name: &str) -> Option<NumericalRelation> {
        Some(match name {
            "le" => NumericalRelation::Le,
            "lt" => NumericalRelation::Lt,
            "plus" => NumericalRelation::Plus,
            "times" => NumericalRelation::Times,
            "bit" => NumericalRelation::Bit,
            _ => {
                let id = name.strip_prefix("set:")?;
                NumericalRelation::Set(id.to_string(), self.sets.get(id)?.clone())
            }
        })
    }
}

/// rel^f(tuple): whether (f(a₁),…,f(a_k)) ∈ rel.
pub fn builtin_eval(rel: &NumericalRelation, m: &BrModel, tuple: &[usize]) -> Result<bool, ModelError> {
    if tuple.len() != rel.arity() {
        return Err(ModelError::Arity { name: rel.name(), expected: rel.arity(), got: tuple.len() });
    }
    let mut v = Vec::with_capacity(tuple.len());
    for &a in tuple {
        if a >= m.n {
            return Err(ModelError::OutOfRange { name: rel.name(), tuple: tuple.to_vec(), n: m.n });
        }
        v.push(m.f.apply(a) as u64);
    }
    Ok(rel.holds(&v))
}

/// (M,f)|U with the order-collapsed bijection. Returns the model and the
/// map from new elements to old ones (new element i is the i-th element of U).
pub fn relativize(m: &BrModel, u: &BTreeSet<usize>) -> Result<(BrModel, Vec<usize>), ModelError> {
    if u.is_empty() {
        return Err(ModelError::EmptySubset);
    }
    if let Some(&a) = u.iter().find(|&&a| a >= m.n) {
        return Err(ModelError::OutOfRange { name: "U".into(), tuple: vec![a], n: m.n });
    }
    let back: Vec<usize> = u.iter().copied().collect();
    let mut fwd = vec![usize::MAX; m.n];
    for (i, &a) in back.iter().enumerate() {
        fwd[a] = i;
    }
    let k = back.len();
    let mut by_f: Vec<usize> = (0..k).collect();
    by_f.sort_by_key(|&i| m.f.apply(back[i]));
    let mut img = vec![0; k];
    for (rank, &i) in by_f.iter().enumerate() {
        img[i] = rank;
    }
    let mut out = BrModel::new(k).with_perm(Perm::new(img)?)?;
    for (name, r) in &m.rels {
        let mut nr = Relation::try_empty(name, r.arity, k)?;
        for t in r.tuples() {
            if t.iter().all(|&a| fwd[a] != usize::MAX) {
                let nt: Vec<usize> = t.iter().map(|&a| fwd[a]).collect();
                let i = nr.index(&nt);
                nr.set_index(i, true);
            }
        }
        out.rels.insert(name.clone(), nr);
    }
    Ok((out, back))
}

/// br-isomorphism test: the only candidate is h = g⁻¹∘f.
pub fn br_isomorphic(m1: &BrModel, m2: &BrModel) -> Result<bool, ModelError> {
    if m1.vocabulary() != m2.vocabulary() {
        return Err(ModelError::VocabularyMismatch);
    }
    if m1.n != m2.n {
        return Ok(false);
    }
    let h: Vec<usize> = (0..m1.n).map(|a| m2.f.inverse(m1.f.apply(a))).collect();
    for (name, r1) in &m1.rels {
        let r2 = &m2.rels[name];
        if r1.len() != r2.len() {
            return Ok(false);
        }
        for t in r1.tuples() {
            let ht: Vec<usize> = t.iter().map(|&a| h[a]).collect();
            if !r2.contains(&ht) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

pub const DEFAULT_PADDING_CAP: usize = 16;

/// Whether `small` ≤_P `big`: some U ⊆ dom(big) holds every relation of big
/// and big|U is br-isomorphic to small. Returns the witness U.
pub fn is_padding(
    small: &BrModel,
    big: &BrModel,
    cap: usize,
    candidate: Option<&BTreeSet<usize>>,
) -> Result<Option<BTreeSet<usize>>, ModelError> {
    if small.vocabulary() != big.vocabulary() {
        return Err(ModelError::VocabularyMismatch);
    }
    let support = big.support();
    let check = |u: &BTreeSet<usize>| -> Result<bool, ModelError> {
        if u.len() != small.n || !support.is_subset(u) || u.is_empty() {
            return Ok(false);
        }
        let (rel, _) = relativize(big, u)?;
        br_isomorphic(&rel, small)
    };
    if let Some(u) = candidate {
        return Ok(check(u)?.then(|| u.clone()));
    }
    if big.n > cap {
        return Err(ModelError::Cap { what: "padding search domain", value: big.n, cap });
    }
    if small.n < support.len() || small.n > big.n {
        return Ok(None);
    }
    let rest: Vec<usize> = (0..big.n).filter(|a| !support.contains(a)).collect();
    let need = small.n - support.len();
    let mut found = None;
    for_each_combination(rest.len(), need, &mut |idx| {
        let mut u = support.clone();
        u.extend(idx.iter().map(|&i| rest[i]));
        match check(&u) {
            Ok(true) => {
                found = Some(Ok(u));
                true
            }
            Ok(false) => false,
            Err(e) => {
                found = Some(Err(e));
                true
            }
        }
    });
    found.transpose()
}

/// Visits k-subsets of 0..n in lexicographic order until the visitor returns true.
fn for_each_combination(n: usize, k: usize, visit: &mut dyn FnMut(&[usize]) -> bool) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if visit(&idx) {
            return;
        }
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else { return };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Name of the unary relation for a letter.
pub fn letter_relation(c: char) -> String {
    format!("P_{c}")
}

/// Word model over the letters occurring in w.
pub fn word_model(w: &str) -> Result<BrModel, ModelError> {
    let alphabet: BTreeSet<char> = w.chars().collect();
    word_model_over(w, &alphabet.into_iter().collect::<Vec<_>>())
}

/// Word model with one unary relation P_c per letter of `alphabet`.
pub fn word_model_over(w: &str, alphabet: &[char]) -> Result<BrModel, ModelError> {
    let letters: Vec<char> = w.chars().collect();
    if letters.is_empty() {
        return Err(ModelError::EmptyWord);
    }
    let mut m = BrModel::new(letters.len());
    for &c in alphabet {
        let pos = letters.iter().enumerate().filter(|(_, &x)| x == c).map(|(i, _)| i);
        m = m.with_unary(&letter_relation(c), pos)?;
    }
    if let Some(&c) = letters.iter().find(|c| !alphabet.contains(c)) {
        return Err(ModelError::UnknownRelation(letter_relation(c)));
    }
    Ok(m)
}

pub const DEFAULT_POWERSET_CAP: usize = 5;

/// Bit carried by atom i in a subset mask (atom 0 most significant).
pub fn atom_bit(k: usize, i: usize) -> u32 {
    1 << (k - 1 - i)
}

/// The ordered powerset structure: k atoms, then the nonempty subsets in
/// increasing mask order; E relates an atom to each subset containing it.
pub fn powerset_structure(k: usize, cap: usize) -> Result<BrModel, ModelError> {
    if k > cap {
        return Err(ModelError::Cap { what: "powerset size", value: k, cap });
    }
    let n = k + (1usize << k) - 1;
    let mut e = Vec::new();
    for mask in 1u32..(1 << k) {
        let elem = k + mask as usize - 1;
        for i in 0..k {
            if mask & atom_bit(k, i) != 0 {
                e.push([i, elem]);
            }
        }
    }
    BrModel::new(n).with_tuples("E", 2, e)
}

/// Subset mask of a subset point of `powerset_structure(k)`.
pub fn powerset_mask(k: usize, elem: usize) -> Option<u32> {
    (elem >= k && elem < k + (1 << k) - 1).then(|| (elem - k + 1) as u32)
}

/// A partial model of arithmetic on {0,…,n−1}: full restricted addition
/// and a partial multiplication M, stored as the set of pairs (a,b) with
/// (a,b,ab) ∈ M.
#[derive(Clone, PartialEq, Eq)]
pub struct PartialArithModel {
    n: usize,
    pairs: BitVec,
}

impl fmt::Debug for PartialArithModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PartialArithModel(n={}, |M|={})", self.n, self.len())
    }
}

/// How seeds are completed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SeedPolicy {
    /// Add (b,a,ab) for every seed (a,b,ab).
    pub symmetrize: bool,
    /// Add every (a,0,0) and (0,b,0).
    pub zero_rows: bool,
}

impl PartialArithModel {
    pub fn empty(n: usize) -> Self {
        PartialArithModel { n, pairs: bitvec![0; n * n] }
    }

    /// Validates seed tuples (a·b = c < n) and applies the policy.
    pub fn new<I>(n: usize, seed: I, policy: SeedPolicy) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (u64, u64, u64)>,
    {
        let mut p = Self::empty(n);
        let mut bad = Vec::new();
        for (a, b, c) in seed {
            if a.checked_mul(b) != Some(c) || c >= n as u64 {
                bad.push((a, b, c));
            } else {
                p.insert(a as usize, b as usize);
                if policy.symmetrize {
                    p.insert(b as usize, a as usize);
                }
            }
        }
        if !bad.is_empty() {
            return Err(ModelError::NonMultiplicative(bad));
        }
        if policy.zero_rows {
            p.add_zero_rows();
        }
        Ok(p)
    }

    /// Full multiplication restricted to n.
    pub fn full(n: usize) -> Self {
        let mut p = Self::empty(n);
        for a in 0..n {
            for b in 0..n {
                if a * b < n {
                    p.insert(a, b);
                }
            }
        }
        p
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Whether (a,b,ab) ∈ M.
    #[inline]
    pub fn contains(&self, a: usize, b: usize) -> bool {
        a < self.n && b < self.n && self.pairs[a * self.n + b]
    }

    /// Inserts (a,b,ab); panics unless ab < n.
    pub fn insert(&mut self, a: usize, b: usize) {
        assert!(a * b < self.n, "({a},{b}) leaves the domain");
        self.pairs.set(a * self.n + b, true);
    }

    pub fn add_zero_rows(&mut self) {
        for a in 0..self.n {
            self.insert(a, 0);
            self.insert(0, a);
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.count_ones()
    }
    pub fn is_empty(&self) -> bool {
        self.pairs.not_any()
    }

    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.pairs.iter_ones().map(move |i| (i / self.n, i % self.n, (i / self.n) * (i % self.n)))
    }

    pub fn is_full(&self) -> bool {
        *self == Self::full(self.n)
    }

    pub fn is_subset(&self, other: &PartialArithModel) -> bool {
        self.n == other.n && self.pairs.iter_ones().all(|i| other.pairs[i])
    }

    /// γ(M,k): largest r with r = 0 or (a,b,ab) ∈ M for all a ≤ k, b ≤ r.
    pub fn gamma(&self, k: usize) -> usize {
        if k >= self.n {
            return 0;
        }
        let mut r = self.n - 1;
        for a in 0..=k {
            let run = (0..self.n).take_while(|&b| self.contains(a, b)).count();
            if run == 0 {
                return 0;
            }
            r = r.min(run - 1);
        }
        r
    }

    /// As a br-model with ternary relations A (restricted addition) and M.
    pub fn to_br_model(&self) -> Result<BrModel, ModelError> {
        let n = self.n;
        let mut a = Relation::try_empty("A", 3, n)?;
        for x in 0..n {
            for y in 0..n - x {
                let i = a.index(&[x, y, x + y]);
                a.set_index(i, true);
            }
        }
        let mut m = Relation::try_empty("M", 3, n)?;
        for (x, y, z) in self.triples() {
            let i = m.index(&[x, y, z]);
            m.set_index(i, true);
        }
        let mut model = BrModel::new(n);
        model.put_relation("A", a);
        model.put_relation("M", m);
        Ok(model)
    }

    /// Reads M from a br-model's ternary relation `M`.
    pub fn from_br_model(m: &BrModel) -> Result<Self, ModelError> {
        let r = m.relation("M").ok_or_else(|| ModelError::UnknownRelation("M".into()))?;
        let seed = r.tuples().map(|t| (t[0] as u64, t[1] as u64, t[2] as u64));
        Self::new(m.size(), seed, SeedPolicy::default())
    }
}

/// γ(M,k) for a partial arithmetic model.
pub fn gamma_control(p: &PartialArithModel, k: usize) -> usize {
    p.gamma(k)
}

impl fmt::Display for BrModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model")?;
        writeln!(f, "n {}", self.n)?;
        if !self.f.is_identity() {
            let imgs: Vec<String> = self.f.img.iter().map(|x| x.to_string()).collect();
            writeln!(f, "f {}", imgs.join(" "))?;
        }
        for (name, r) in &self.rels {
            write!(f, "rel {name} {} :", r.arity)?;
            for t in r.tuples() {
                let parts: Vec<String> = t.iter().map(|x| x.to_string()).collect();
                write!(f, " ({})", parts.join(","))?;
            }
            writeln!(f)?;
        }
        write!(f, "end")
    }
}

/// Parses the line-oriented model file format.
pub fn parse_model(text: &str) -> Result<BrModel, ModelError> {
    let err = |line: usize, msg: &str| ModelError::Parse { line, msg: msg.to_string() };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, "model")) => {}
        Some((i, _)) => return Err(err(i, "expected `model`")),
        None => return Err(err(0, "empty input")),
    }
    let (i, nline) = lines.next().ok_or_else(|| err(0, "missing `n` line"))?;
    let n: usize = nline
        .strip_prefix("n ")
        .and_then(|x| x.trim().parse().ok())
        .ok_or_else(|| err(i, "expected `n <int>`"))?;
    let mut m = BrModel::new(n);
    let mut ended = false;
    for (i, line) in lines {
        if ended {
            return Err(err(i, "content after `end`"));
        }
        if line == "end" {
            ended = true;
        } else if let Some(rest) = line.strip_prefix("f ") {
            let img: Result<Vec<usize>, _> = rest.split_whitespace().map(str::parse).collect();
            let img = img.map_err(|_| err(i, "bad permutation"))?;
            if img.len() != n {
                return Err(err(i, "permutation length differs from n"));
            }
            m.set_perm(Perm::new(img).map_err(|e| err(i, &e.to_string()))?).map_err(|e| err(i, &e.to_string()))?;
        } else if let Some(rest) = line.strip_prefix("rel ") {
            let (head, body) = rest.split_once(':').ok_or_else(|| err(i, "expected `:`"))?;
            let mut hw = head.split_whitespace();
            let name = hw.next().ok_or_else(|| err(i, "missing relation name"))?;
            let arity: usize = hw
                .next()
                .and_then(|a| a.parse().ok())
                .ok_or_else(|| err(i, "missing arity"))?;
            let tuples = parse_tuples(body, arity).map_err(|msg| err(i, &msg))?;
            let rel = Relation::from_tuples(arity, n, tuples).map_err(|e| err(i, &rename_err(e, name).to_string()))?;
            m.add_relation(name, rel).map_err(|e| err(i, &e.to_string()))?;
        } else {
            return Err(err(i, "unrecognised line"));
        }
    }
    if !ended {
        return Err(err(0, "missing `end`"));
    }
    Ok(m)
}

fn parse_tuples(body: &str, arity: usize) -> Result<Vec<Vec<usize>>, String> {
    let mut out = Vec::new();
    let mut rest = body.trim();
    while !rest.is_empty() {
        if let Some(r) = rest.strip_prefix('(') {
            let close = r.find(')').ok_or("unclosed tuple")?;
            let inner = &r[..close];
            let t: Result<Vec<usize>, _> =
                inner.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).map(str::parse).collect();
            let t = t.map_err(|_| format!("bad tuple ({inner})"))?;
            if t.len() != arity {
                return Err(format!("tuple ({inner}) has arity {}, expected {arity}", t.len()));
            }
            out.push(t);
            rest = r[close + 1..].trim_start();
        } else {
            let end = rest.find(|c: char| c.is_whitespace() || c == '(').unwrap_or(rest.len());
            if arity != 1 {
                return Err("parentheses are required for non-unary tuples".into());
            }
            let v = rest[..end].parse().map_err(|_| format!("bad element `{}`", &rest[..end]))?;
            out.push(vec![v]);
            rest = rest[end..].trim_start();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(xs: &[usize]) -> BTreeSet<usize> {
        xs.iter().copied().collect()
    }

    #[test]
    fn builtin_examples() {
        let id5 = BrModel::new(5);
        assert!(builtin_eval(&NumericalRelation::Le, &id5, &[2, 4]).unwrap());
        let rev = BrModel::new(5).with_perm(Perm::reversal(5)).unwrap();
        assert!(!builtin_eval(&NumericalRelation::Plus, &rev, &[4, 3, 2]).unwrap());
        assert!(builtin_eval(&NumericalRelation::Plus, &rev, &[4, 3, 3]).unwrap());
        assert!(builtin_eval(&NumericalRelation::Times, &BrModel::new(10), &[3, 3, 9]).unwrap());
        assert!(builtin_eval(&NumericalRelation::Times, &id5, &[3, 3]).is_err());
        assert!(builtin_eval(&NumericalRelation::Bit, &BrModel::new(8), &[5, 2]).unwrap());
        assert!(!builtin_eval(&NumericalRelation::Bit, &BrModel::new(8), &[5, 1]).unwrap());
    }

    #[test]
    fn relativize_examples() {
        let m = BrModel::new(4).with_unary("U", [1, 3]).unwrap();
        let (r, back) = relativize(&m, &set(&[1, 3])).unwrap();
        assert_eq!((r.size(), back.clone()), (2, vec![1, 3]));
        assert_eq!(r.perm().images(), &[0, 1]);
        let (full, back) = relativize(&m, &set(&[0, 1, 2, 3])).unwrap();
        assert_eq!(full, m);
        assert_eq!(back, vec![0, 1, 2, 3]);
        let rev = BrModel::new(3).with_perm(Perm::reversal(3)).unwrap();
        let (r, back) = relativize(&rev, &set(&[0, 2])).unwrap();
        assert_eq!(back, vec![0, 2]);
        // old 0 ↦ 1, old 2 ↦ 0
        assert_eq!(r.perm().images(), &[1, 0]);
        assert_eq!(relativize(&m, &BTreeSet::new()), Err(ModelError::EmptySubset));
    }

    #[test]
    fn padding_examples() {
        let ab = word_model("ab").unwrap();
        let padded = BrModel::new(4)
            .with_unary("P_a", [0])
            .unwrap()
            .with_unary("P_b", [1])
            .unwrap();
        assert_eq!(is_padding(&ab, &padded, 16, None).unwrap(), Some(set(&[0, 1])));
        assert_eq!(is_padding(&ab, &ab, 16, None).unwrap(), Some(set(&[0, 1])));
        let ba = word_model("ba").unwrap();
        assert_eq!(is_padding(&ab, &ba, 16, None).unwrap(), None);
        let big = BrModel::new(20).with_unary("P_a", [0]).unwrap().with_unary("P_b", [1]).unwrap();
        assert!(is_padding(&ab, &big, 16, None).is_err());
        assert!(is_padding(&ab, &big, 16, Some(&set(&[0, 1]))).unwrap().is_some());
        // fresh points interleaved in the order
        let mid = BrModel::new(3)
            .with_unary("P_a", [0])
            .unwrap()
            .with_unary("P_b", [2])
            .unwrap()
            .with_perm(Perm::new(vec![0, 2, 1]).unwrap())
            .unwrap();
        assert_eq!(is_padding(&ab, &mid, 16, None).unwrap(), Some(set(&[0, 2])));
    }

    #[test]
    fn isomorphism_examples() {
        let ab = word_model("ab").unwrap();
        // same letters on swapped elements, f adjusted so that the order is unchanged
        let swapped = BrModel::new(2)
            .with_unary("P_a", [1])
            .unwrap()
            .with_unary("P_b", [0])
            .unwrap()
            .with_perm(Perm::new(vec![1, 0]).unwrap())
            .unwrap();
        assert!(br_isomorphic(&ab, &swapped).unwrap());
        assert!(br_isomorphic(&ab, &ab).unwrap());
        let aa = word_model_over("aa", &['a', 'b']).unwrap();
        assert!(!br_isomorphic(&ab, &aa).unwrap());
        assert!(br_isomorphic(&ab, &word_model("aa").unwrap()).is_err());
        assert!(!br_isomorphic(&ab, &word_model_over("aab", &['a', 'b']).unwrap()).unwrap());
    }

    #[test]
    fn word_models() {
        let m = word_model("aab").unwrap();
        assert_eq!(m.size(), 3);
        assert_eq!(m.relation("P_a").unwrap().support(), set(&[0, 1]));
        assert_eq!(m.relation("P_b").unwrap().support(), set(&[2]));
        assert_eq!(word_model("e").unwrap().relation("P_e").unwrap().support(), set(&[0]));
        let m = word_model("abab").unwrap();
        assert_eq!(m.relation("P_a").unwrap().support(), set(&[0, 2]));
        assert_eq!(m.relation("P_b").unwrap().support(), set(&[1, 3]));
        assert_eq!(word_model(""), Err(ModelError::EmptyWord));
    }

    #[test]
    fn powerset_structures() {
        let m = powerset_structure(1, 5).unwrap();
        assert_eq!(m.size(), 2);
        assert_eq!(m.relation("E").unwrap().tuples().collect::<Vec<_>>(), vec![vec![0, 1]]);
        let m = powerset_structure(2, 5).unwrap();
        assert_eq!((m.size(), m.relation("E").unwrap().len()), (5, 4));
        // order: {1}, {0}, {0,1}
        let e = m.relation("E").unwrap();
        assert!(e.contains(&[1, 2]) && e.contains(&[0, 3]) && e.contains(&[0, 4]) && e.contains(&[1, 4]));
        let m = powerset_structure(3, 5).unwrap();
        assert_eq!((m.size(), m.relation("E").unwrap().len()), (10, 12));
        assert!(powerset_structure(6, 5).is_err());
        assert_eq!(powerset_mask(3, 3), Some(1));
        assert_eq!(powerset_mask(3, 2), None);
    }

    #[test]
    fn partial_arith_examples() {
        assert!(PartialArithModel::new(10, [(2, 3, 6)], SeedPolicy::default()).is_ok());
        assert_eq!(
            PartialArithModel::new(10, [(2, 3, 7)], SeedPolicy::default()),
            Err(ModelError::NonMultiplicative(vec![(2, 3, 7)]))
        );
        let all = (0..10u64).flat_map(|a| (0..10u64).filter(move |b| a * b < 10).map(move |b| (a, b, a * b)));
        let p = PartialArithModel::new(10, all, SeedPolicy::default()).unwrap();
        assert!(p.is_full());
        let s = PartialArithModel::new(10, [(2, 3, 6)], SeedPolicy { symmetrize: true, zero_rows: false }).unwrap();
        assert!(s.contains(3, 2));
    }

    #[test]
    fn gamma_examples() {
        let full = PartialArithModel::full(10);
        assert_eq!(gamma_control(&full, 3), 3);
        assert_eq!(gamma_control(&full, 0), 9);
        let empty = PartialArithModel::empty(10);
        for k in 0..12 {
            assert_eq!(gamma_control(&empty, k), 0);
        }
        for k in 1..10 {
            assert!(full.gamma(k) <= (10 - 1) / k);
        }
    }

    #[test]
    fn model_file_round_trip() {
        let text = "model\nn 4\nf 3 2 1 0\nrel U 1 : 0 2 (3)\nrel E 2 : (0,1) (2 3)\nend\n";
        let m = parse_model(text).unwrap();
        assert_eq!(m.relation("U").unwrap().support(), set(&[0, 2, 3]));
        assert!(m.relation("E").unwrap().contains(&[2, 3]));
        assert_eq!(parse_model(&m.to_string()).unwrap(), m);
        assert!(matches!(parse_model("model\nn 2\nrel U 1 : 5\nend"), Err(ModelError::Parse { line: 3, .. })));
        assert!(parse_model("model\nn 2\nf 0 0\nend").is_err());
        assert!(parse_model("model\nn 2\nrel E 2 : 1\nend").is_err());
        assert!(parse_model("model\nn 2\n").is_err());
    }

    fn arb_model(max_n: usize) -> impl Strategy<Value = BrModel> {
        (1..=max_n).prop_flat_map(|n| {
            (
                Just(n),
                Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
                proptest::collection::vec(any::<bool>(), n),
                proptest::collection::vec(any::<bool>(), n * n),
            )
                .prop_map(|(n, f, u, e)| {
                    let mut m = BrModel::new(n).with_perm(Perm::new(f).unwrap()).unwrap();
                    m.put_relation("U", Relation::from_tuples(1, n, (0..n).filter(|&i| u[i]).map(|i| [i])).unwrap());
                    let pairs = (0..n * n).filter(|&i| e[i]).map(|i| [i / n, i % n]);
                    m.put_relation("E", Relation::from_tuples(2, n, pairs).unwrap());
                    m
                })
        })
    }

    /// Relabels elements by σ and composes f so the result is br-isomorphic.
    fn relabel(m: &BrModel, sigma: &[usize]) -> BrModel {
        let n = m.size();
        let mut img = vec![0; n];
        for a in 0..n {
            img[sigma[a]] = m.perm().apply(a);
        }
        let mut out = BrModel::new(n).with_perm(Perm::new(img).unwrap()).unwrap();
        for (name, r) in m.relations() {
            let ts: Vec<Vec<usize>> = r.tuples().map(|t| t.iter().map(|&a| sigma[a]).collect()).collect();
            out.put_relation(name, Relation::from_tuples(r.arity(), n, ts).unwrap());
        }
        out
    }

    proptest! {
        #[test]
        fn relabeling_is_isomorphism(m in arb_model(7), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut sigma: Vec<usize> = (0..m.size()).collect();
            sigma.shuffle(&mut rng);
            let m2 = relabel(&m, &sigma);
            prop_assert!(br_isomorphic(&m, &m2).unwrap());
            prop_assert!(br_isomorphic(&m2, &m).unwrap());
            let mut tau: Vec<usize> = (0..m.size()).collect();
            tau.shuffle(&mut rng);
            let m3 = relabel(&m2, &tau);
            prop_assert!(br_isomorphic(&m, &m3).unwrap());
        }

        #[test]
        fn isomorphism_is_equivalence(a in arb_model(3), b in arb_model(3), c in arb_model(3)) {
            prop_assert!(br_isomorphic(&a, &a).unwrap());
            let ab = br_isomorphic(&a, &b).unwrap();
            prop_assert_eq!(ab, br_isomorphic(&b, &a).unwrap());
            if ab && br_isomorphic(&b, &c).unwrap() {
                prop_assert!(br_isomorphic(&a, &c).unwrap());
            }
        }

        #[test]
        fn double_relativization(m in arb_model(8), mask in any::<u16>()) {
            let u: BTreeSet<usize> = (0..m.size()).filter(|i| mask >> i & 1 == 1).collect();
            prop_assume!(!u.is_empty());
            let (r, _) = relativize(&m, &u).unwrap();
            let all: BTreeSet<usize> = (0..r.size()).collect();
            let (rr, back) = relativize(&r, &all).unwrap();
            prop_assert_eq!(&rr, &r);
            prop_assert_eq!(back, (0..r.size()).collect::<Vec<_>>());
        }

        #[test]
        fn order_is_linear(m in arb_model(8)) {
            let n = m.size();
            let le = |a, b| builtin_eval(&NumericalRelation::Le, &m, &[a, b]).unwrap();
            for a in 0..n {
                prop_assert!(le(a, a));
                for b in 0..n {
                    prop_assert!(le(a, b) || le(b, a));
                    if a != b { prop_assert!(!(le(a, b) && le(b, a))); }
                    for c in 0..n {
                        if le(a, b) && le(b, c) { prop_assert!(le(a, c)); }
                    }
                }
            }
        }

        #[test]
        fn gamma_monotone(n in 2usize..30, seed in proptest::collection::vec(any::<bool>(), 900), k in 0usize..30, k2 in 0usize..30) {
            let mut small = PartialArithModel::empty(n);
            let mut big = PartialArithModel::full(n);
            let mut bits = seed.into_iter();
            for (a, b, _) in PartialArithModel::full(n).triples().collect::<Vec<_>>() {
                if bits.next().unwrap_or(false) { small.insert(a, b); }
            }
            big.add_zero_rows();
            let (hi, lo) = (k.max(k2), k.min(k2));
            prop_assert!(small.gamma(hi) <= big.gamma(lo));
            prop_assert!(small.gamma(hi) <= small.gamma(lo));
            if hi > 0 && hi < n { prop_assert!(small.gamma(hi) <= (n - 1) / hi); }
        }

        #[test]
        fn model_text_round_trip(m in arb_model(6)) {
            prop_assert_eq!(parse_model(&m.to_string()).unwrap(), m);
        }
    }
}
