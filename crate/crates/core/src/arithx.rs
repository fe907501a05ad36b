//! Extension of partial multiplication: the step μ, its iteration π, the
//! hypothesis that guarantees π is full multiplication, and the pipeline
//! that builds a starting model from the gaps of a numerical set.

use crate::evaluator::{Assignment, EvalError, Evaluator};
use crate::model::{BuiltinRegistry, ModelError, PartialArithModel, SeedPolicy};
use crate::quantifiers::QuantifierRegistry;
use crate::sets::{delta, occurrence_set, pseudoloose_at, Gap, LoosenessReport, NumericalSet, Rational, SetError, Verdict, WordPolicy};
use crate::syntax::{parse, Formula, ParseContext};
use bitvec::prelude::*;
use num_bigint::BigUint;
use num_traits::One;
use rand::Rng;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArithError {
    #[error("k must be at least 2, got {0}")]
    SmallK(usize),
    #[error("precondition n ≥ k² fails: n = {n}, k = {k}")]
    SmallN { n: usize, k: usize },
    #[error("k·ε must exceed 1: k = {k}, ε = {p}/{q}")]
    Epsilon { k: usize, p: u64, q: u64 },
    #[error("the word must be nonempty and t positive")]
    BadWitness,
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// One application of μ, computed combinatorially.
///
/// For each y the good pairs are (t,u) with (u,y), (t,u), (t,uy) ∈ M; every x
/// that is a sum of two good products with xy < n yields (x,y) and (y,x).
pub fn mu_step(p: &PartialArithModel) -> PartialArithModel {
    let n = p.size();
    let mut out = PartialArithModel::empty(n);
    let mut prods = bitvec![0; n];
    for y in 0..n {
        prods.fill(false);
        for u in 0..n {
            if !p.contains(u, y) {
                continue;
            }
            let uy = u * y;
            for t in 0..n {
                if p.contains(t, u) && p.contains(t, uy) {
                    prods.set(t * u, true);
                }
            }
        }
        let xmax = (n - 1).checked_div(y).map_or(n, |q| q + 1);
        let mut sums = bitvec![0; n];
        let ones: Vec<usize> = prods.iter_ones().collect();
        for &a in &ones {
            for &b in &ones {
                if a + b >= xmax.min(n) {
                    break;
                }
                sums.set(a + b, true);
            }
        }
        for x in sums.iter_ones() {
            out.insert(x, y);
            out.insert(y, x);
        }
    }
    debug_assert!(out.triples().all(|(a, b, c)| a * b == c && c < n));
    out
}

/// μ as a formula over A and M, with quantifiers pushed inward.
pub fn mu_formula() -> Formula {
    let minus = |x: &str, y: &str, z: &str| {
        format!(
            "(E u. E v. (M(u,{y},v) & E t. E s. (M(t,u,s) & E r. (M(t,v,r) & \
             E u2. E v2. (M(u2,{y},v2) & E t2. E s2. (M(t2,u2,s2) & A(s,s2,{x}) & \
             E r2. (M(t2,v2,r2) & A(r,r2,{z}))))))))"
        )
    };
    let text = format!("{} | {}", minus("x", "y", "z"), minus("y", "x", "z"));
    let vocab = [("A".to_string(), 3), ("M".to_string(), 3)].into();
    let q: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    parse(&text, &ParseContext::new(&vocab, &q)).expect("μ formula parses")
}

/// μ evaluated directly on the model; the reference for `mu_step`.
pub fn mu_step_naive(p: &PartialArithModel) -> Result<PartialArithModel, ArithError> {
    let b = BuiltinRegistry::empty();
    let q = QuantifierRegistry::empty();
    let ev = Evaluator::new(&b, &q);
    let m = p.to_br_model()?;
    let rel = ev.defined_relation(&m, &mu_formula(), &["x", "y", "z"], &Assignment::new())?;
    let triples = rel.tuples().map(|t| (t[0] as u64, t[1] as u64, t[2] as u64));
    Ok(PartialArithModel::new(p.size(), triples, SeedPolicy::default())?)
}

/// i* = 2⌈lb k⌉ + 2.
pub fn iteration_count(k: usize) -> usize {
    let mut ceil_lb = 0;
    while (1usize << ceil_lb) < k {
        ceil_lb += 1;
    }
    2 * ceil_lb + 2
}

/// The stages π_0 = M, π_{i+1} = μ(π_i).
#[derive(Clone, Debug)]
pub struct PiTrace {
    pub k: usize,
    pub probes: Vec<usize>,
    pub stages: Vec<PartialArithModel>,
}

impl PiTrace {
    pub fn result(&self) -> &PartialArithModel {
        self.stages.last().expect("at least π_0")
    }

    /// Rows (i, a, γ(π_i, a)) for the probes.
    pub fn rows(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for (i, s) in self.stages.iter().enumerate() {
            for &a in &self.probes {
                out.push((i, a, s.gamma(a)));
            }
        }
        out
    }

    /// The first stage violating γ(π_{i+1},a) ≥ min{2γ(π_i,a), ⌊(n−1)/a⌋}
    /// for some i ≥ 1 and a ∈ {1,…,n−1}, if any.
    pub fn doubling_violation(&self) -> Option<(usize, usize)> {
        let n = self.result().size();
        for i in 1..self.stages.len().saturating_sub(1) {
            for a in 1..n {
                let before = self.stages[i].gamma(a);
                let after = self.stages[i + 1].gamma(a);
                if after < (2 * before).min((n - 1) / a) {
                    return Some((i, a));
                }
            }
        }
        None
    }
}

impl fmt::Display for PiTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "i\tprobe\tgamma")?;
        for (i, a, g) in self.rows() {
            writeln!(f, "{i}\t{a}\t{g}")?;
        }
        Ok(())
    }
}

/// Applies μ i* times.
pub fn pi_extend(p: &PartialArithModel, k: usize, probes: &[usize]) -> Result<PiTrace, ArithError> {
    if k < 2 {
        return Err(ArithError::SmallK(k));
    }
    let mut stages = vec![p.clone()];
    for _ in 0..iteration_count(k) {
        let next = mu_step(stages.last().unwrap());
        stages.push(next);
    }
    Ok(PiTrace { k, probes: probes.to_vec(), stages })
}

fn pow(x: usize, e: usize) -> BigUint {
    BigUint::from(x).pow(e as u32)
}

/// Whether n^{1/k} ≤ a ≤ n^{1−1/k}/k, by exact integer powers.
pub fn in_hypothesis_range(a: usize, n: usize, k: usize) -> bool {
    pow(a, k) >= BigUint::from(n) && pow(k * a, k) <= pow(n, k - 1)
}

/// The least a* with n^{1/k} ≤ a* ≤ n^{1−1/k}/k and k·a*·γ(M,a*) ≥ n.
pub fn check_mulext_hypothesis(p: &PartialArithModel, k: usize) -> Result<Option<usize>, ArithError> {
    let n = p.size();
    if k < 2 {
        return Err(ArithError::SmallK(k));
    }
    if n < k * k {
        return Err(ArithError::SmallN { n, k });
    }
    Ok((1..n).filter(|&a| in_hypothesis_range(a, n, k)).find(|&a| k * a * p.gamma(a) >= n))
}

/// The least a in the hypothesis range, if the range is not empty.
pub fn recipe_a_star(n: usize, k: usize) -> Option<usize> {
    (1..n).find(|&a| in_hypothesis_range(a, n, k))
}

/// Zero rows plus the rectangle a ≤ a*, b ≤ ⌈n/(k·a*)⌉ (products below n).
pub fn recipe_seed(n: usize, k: usize) -> Result<(PartialArithModel, usize), ArithError> {
    if k < 2 {
        return Err(ArithError::SmallK(k));
    }
    if n < k * k {
        return Err(ArithError::SmallN { n, k });
    }
    let a_star = recipe_a_star(n, k).ok_or(ArithError::SmallN { n, k })?;
    let b_max = n.div_ceil(k * a_star);
    let mut p = PartialArithModel::empty(n);
    for a in 0..=a_star {
        for b in 0..=b_max {
            if a * b < n {
                p.insert(a, b);
            }
        }
    }
    p.add_zero_rows();
    Ok((p, a_star))
}

/// A random partial multiplication: a filled rectangle, scattered products
/// and, usually, the zero rows.
pub fn random_seed<R: Rng>(rng: &mut R, n: usize) -> PartialArithModel {
    let mut p = PartialArithModel::empty(n);
    let w = rng.gen_range(0..n.min(12));
    let h = rng.gen_range(0..n);
    for a in 0..=w {
        for b in 0..=h {
            if a * b < n {
                p.insert(a, b);
            }
        }
    }
    let density = rng.gen_range(0.0..0.3);
    for a in 0..n {
        for b in 0..n {
            if a * b < n && rng.gen_bool(density) {
                p.insert(a, b);
            }
        }
    }
    if rng.gen_bool(0.8) {
        p.add_zero_rows();
    }
    p
}

/// Checks the step lemma for M and μ(M): μ is a partial multiplication and,
/// for all a, b in 1..n, (a) γ does not drop, (b) γ is symmetric, and (c)
/// the floor-quotient bound holds when a < b ≤ a² + a.
pub fn mulext_lemma_violation(m: &PartialArithModel, mu: &PartialArithModel) -> Option<String> {
    let n = m.size();
    if let Some(t) = mu.triples().find(|&(a, b, c)| a * b != c) {
        return Some(format!("μ contains the non-product {t:?}"));
    }
    let gm: Vec<usize> = (0..n).map(|a| m.gamma(a)).collect();
    let gu: Vec<usize> = (0..n).map(|a| mu.gamma(a)).collect();
    for a in 1..n {
        if gu[a] < gm[a] {
            return Some(format!("(a) fails at a={a}: {} < {}", gu[a], gm[a]));
        }
        for b in 1..n {
            if (gu[a] >= b) != (gu[b] >= a) {
                return Some(format!("(b) fails at a={a}, b={b}"));
            }
            if a < b && b <= a * a + a {
                let bound = (gm[a] / ((b - 1) / a)).min((n - 1) / b);
                if gu[b] < bound {
                    return Some(format!("(c) fails at a={a}, b={b}: {} < {bound}", gu[b]));
                }
            }
        }
    }
    None
}

/// T′ = {m ∈ T : δ_T(m) ≥ t, m+t < n} ∩ [0, n−s−t] for T the occurrence set of w.
pub fn t_prime(s: &NumericalSet, n: usize, w: &[bool], t: usize) -> Result<Vec<usize>, ArithError> {
    if w.is_empty() || t == 0 {
        return Err(ArithError::BadWitness);
    }
    let bound = (n + t + 1) as u64;
    let occ = occurrence_set(s, w, bound);
    let limit = n as i64 - w.len() as i64 - t as i64;
    let mut out = Vec::new();
    for m in occ.elements_below(n as u64) {
        if m as i64 > limit || m as usize + t >= n {
            continue;
        }
        let far = match delta(&occ, m)? {
            Gap::Infinite => true,
            Gap::Finite(g) => g >= t as u64,
        };
        if far {
            out.push(m as usize);
        }
    }
    Ok(out)
}

/// ν: zero rows plus (a,b) whenever the intervals [d, d+a) for the first b
/// elements d of T′ are pairwise disjoint and inside the domain, ab < n.
pub fn nu_from_t_prime(n: usize, tp: &[usize]) -> PartialArithModel {
    let mut p = PartialArithModel::empty(n);
    p.add_zero_rows();
    for a in 1..n {
        let mut b = 0;
        while b < tp.len() && tp[b] + a <= n && (b == 0 || tp[b] - tp[b - 1] >= a) {
            b += 1;
        }
        for bb in 1..=b {
            if a * bb >= n {
                break;
            }
            p.insert(a, bb);
        }
    }
    p
}

pub fn nu_from_set(s: &NumericalSet, n: usize, w: &[bool], t: usize) -> Result<PartialArithModel, ArithError> {
    Ok(nu_from_t_prime(n, &t_prime(s, n, w, t)?))
}

/// What the hypothesis check said about ν.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Hypothesis {
    Witness(usize),
    NoWitness,
    /// n < k², so the check's precondition does not hold.
    Unavailable,
}

#[derive(Clone, Debug)]
pub struct SynthesisReport {
    pub n: usize,
    pub k: usize,
    pub looseness: LoosenessReport,
    pub word: Option<String>,
    pub t: Option<usize>,
    pub t_prime_len: usize,
    pub nu_gamma_t: usize,
    pub nu_bound_holds: bool,
    pub hypothesis: Option<Hypothesis>,
    pub trace: Option<PiTrace>,
    pub full: bool,
    /// Set when the pipeline stopped early.
    pub failure: Option<String>,
}

impl fmt::Display for SynthesisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n={} k={}", self.n, self.k)?;
        writeln!(f, "looseness: {}", self.looseness.verdict)?;
        if let Some(msg) = &self.failure {
            return writeln!(f, "failure: {msg}");
        }
        writeln!(f, "word={} t={}", self.word.as_deref().unwrap_or("-"), self.t.unwrap_or(0))?;
        writeln!(f, "|T'|={} gamma(nu,t)={} bound={}", self.t_prime_len, self.nu_gamma_t, if self.nu_bound_holds { "holds" } else { "fails" })?;
        match &self.hypothesis {
            Some(Hypothesis::Witness(a)) => writeln!(f, "hypothesis: a*={a}")?,
            Some(Hypothesis::NoWitness) => writeln!(f, "hypothesis: no witness")?,
            Some(Hypothesis::Unavailable) => writeln!(f, "hypothesis: unavailable (n < k^2)")?,
            None => {}
        }
        if let Some(tr) = &self.trace {
            write!(f, "{tr}")?;
        }
        writeln!(f, "full multiplication: {}", if self.full { "reached" } else { "not reached" })
    }
}

/// The semantic pipeline: witness (w,t), ν, hypothesis check, π.
pub fn synthesize_multiplication(s: &NumericalSet, n: usize, eps: Rational, k: usize) -> Result<SynthesisReport, ArithError> {
    if k < 2 {
        return Err(ArithError::SmallK(k));
    }
    if (k as u128) * (eps.p as u128) <= eps.q as u128 {
        return Err(ArithError::Epsilon { k, p: eps.p, q: eps.q });
    }
    let looseness = pseudoloose_at(s, n as u64, eps, WordPolicy::default());
    let mut report = SynthesisReport {
        n,
        k,
        looseness: looseness.clone(),
        word: None,
        t: None,
        t_prime_len: 0,
        nu_gamma_t: 0,
        nu_bound_holds: false,
        hypothesis: None,
        trace: None,
        full: false,
        failure: None,
    };
    let (Verdict::PseudolooseAtN | Verdict::LooseAtN, Some(word), Some(t)) = (looseness.verdict, looseness.witness_word.clone(), looseness.witness_t) else {
        report.failure = Some(format!("no pseudolooseness witness at n={n} under the word policy"));
        return Ok(report);
    };
    let w = crate::sets::parse_word(&word)?;
    let t = t as usize;
    let tp = t_prime(s, n, &w, t)?;
    let nu = nu_from_t_prime(n, &tp);
    report.word = Some(word);
    report.t = Some(t);
    report.t_prime_len = tp.len();
    report.nu_gamma_t = nu.gamma(t);
    // γ(ν,t) ≥ |T′| − s/t − 2, compared as t·γ ≥ t·|T′| − s − 2t
    report.nu_bound_holds = (t * report.nu_gamma_t + w.len() + 2 * t) as i64 >= (t * tp.len()) as i64;
    report.hypothesis = Some(match check_mulext_hypothesis(&nu, k) {
        Ok(Some(a)) => Hypothesis::Witness(a),
        Ok(None) => Hypothesis::NoWitness,
        Err(ArithError::SmallN { .. }) => Hypothesis::Unavailable,
        Err(e) => return Err(e),
    });
    let mut probes = vec![1, t];
    if let Some(Hypothesis::Witness(a)) = report.hypothesis {
        probes.push(a);
    }
    probes.sort_unstable();
    probes.dedup();
    probes.retain(|&a| a < n);
    let trace = pi_extend(&nu, k, &probes)?;
    report.full = trace.result().is_full();
    report.trace = Some(trace);
    Ok(report)
}

/// Numerical recap of a seed for printing: (|M|, γ at each probe).
pub fn seed_summary(p: &PartialArithModel, probes: &[usize]) -> (usize, Vec<usize>) {
    (p.len(), probes.iter().map(|&a| p.gamma(a)).collect())
}

/// BigUint helper used by callers comparing k-th powers.
pub fn is_kth_power_at_least(a: usize, k: usize, n: usize) -> bool {
    pow(a, k) >= BigUint::from(n) || BigUint::from(n) <= BigUint::one()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn full_multiplication_is_fixed() {
        for n in [1, 2, 10, 37] {
            let f = PartialArithModel::full(n);
            assert_eq!(mu_step(&f), f);
        }
        let tr = pi_extend(&PartialArithModel::full(30), 3, &[1, 2]).unwrap();
        assert!(tr.stages.iter().all(|s| s.is_full()));
    }

    #[test]
    fn empty_stays_empty() {
        assert!(mu_step(&PartialArithModel::empty(12)).is_empty());
        assert!(mu_step_naive(&PartialArithModel::empty(6)).unwrap().is_empty());
    }

    #[test]
    fn fast_path_matches_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 3, 5, 7, 9] {
            for _ in 0..3 {
                let p = random_seed(&mut rng, n);
                assert_eq!(mu_step(&p), mu_step_naive(&p).unwrap(), "n={n} {p:?}");
            }
        }
        // identity columns plus zero rows on n=12
        let seed = (0..12u64).flat_map(|a| [(a, 1, a), (1, a, a)]);
        let p = PartialArithModel::new(12, seed, SeedPolicy { symmetrize: false, zero_rows: true }).unwrap();
        assert_eq!(mu_step(&p), mu_step_naive(&p).unwrap());
    }

    #[test]
    fn iteration_counts() {
        assert_eq!(iteration_count(2), 4);
        assert_eq!(iteration_count(3), 6);
        assert_eq!(iteration_count(4), 6);
        assert_eq!(iteration_count(11), 10);
    }

    #[test]
    fn hypothesis_examples() {
        let full = PartialArithModel::full(100);
        let a = check_mulext_hypothesis(&full, 3).unwrap().unwrap();
        assert!(in_hypothesis_range(a, 100, 3));
        assert_eq!(full.gamma(a), 99 / a);
        assert_eq!(check_mulext_hypothesis(&PartialArithModel::empty(100), 3).unwrap(), None);
        assert_eq!(check_mulext_hypothesis(&PartialArithModel::full(8), 3), Err(ArithError::SmallN { n: 8, k: 3 }));
        assert!(in_hypothesis_range(5, 100, 3));
        assert!(!in_hypothesis_range(4, 100, 3));
        assert!(!in_hypothesis_range(8, 100, 3));
    }

    #[test]
    fn recipe_reaches_full_multiplication() {
        for (n, expected) in [(64, 4), (100, 5), (216, 6)] {
            let (seed, a) = recipe_seed(n, 3).unwrap();
            assert_eq!(a, expected);
            assert_eq!(check_mulext_hypothesis(&seed, 3).unwrap(), Some(a));
            let tr = pi_extend(&seed, 3, &[1, a]).unwrap();
            assert!(tr.result().is_full(), "n={n}");
            assert_eq!(tr.doubling_violation(), None);
        }
    }

    #[test]
    fn nu_examples() {
        let sq = NumericalSet::squares();
        let nu = nu_from_set(&sq, 100, &[true], 5).unwrap();
        assert!(nu.triples().all(|(a, b, c)| a * b == c));
        let tp = t_prime(&sq, 100, &[true], 1).unwrap();
        let nu1 = nu_from_t_prime(100, &tp);
        for b in 1..=tp.len().min(99) {
            assert!(nu1.contains(1, b), "b={b}");
        }
        let none = nu_from_set(&NumericalSet::list([3]), 50, &[true, true], 2).unwrap();
        let mut zero = PartialArithModel::empty(50);
        zero.add_zero_rows();
        assert_eq!(none, zero);
        assert_eq!(nu_from_set(&sq, 10, &[], 1), Err(ArithError::BadWitness));
    }

    #[test]
    fn nu_gamma_bound() {
        let sets = [NumericalSet::squares(), NumericalSet::poly(vec![0, 1, 1]), NumericalSet::primes()];
        for s in &sets {
            for n in [100, 400] {
                for t in 1..8 {
                    for w in [vec![true], vec![false], vec![true, false]] {
                        let tp = t_prime(s, n, &w, t).unwrap();
                        let nu = nu_from_t_prime(n, &tp);
                        assert!(t * nu.gamma(t) + w.len() + 2 * t >= t * tp.len(), "{s} n={n} t={t}");
                    }
                }
            }
        }
    }

    #[test]
    fn pipeline_examples() {
        let eps = Rational::new(1, 10).unwrap();
        let r = synthesize_multiplication(&NumericalSet::squares(), 100, eps, 11).unwrap();
        assert!(r.failure.is_none());
        assert_eq!(r.hypothesis, Some(Hypothesis::Unavailable));
        let r = synthesize_multiplication(&NumericalSet::poly(vec![0, 1, 1]), 100, eps, 11).unwrap();
        assert!(r.failure.is_none() && r.nu_bound_holds);
        assert!(matches!(synthesize_multiplication(&NumericalSet::squares(), 100, eps, 10), Err(ArithError::Epsilon { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(96))]
        #[test]
        fn step_lemma(seed in any::<u64>(), n in 2usize..=60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_seed(&mut rng, n);
            let mu = mu_step(&p);
            prop_assert_eq!(mulext_lemma_violation(&p, &mu), None);
        }

        #[test]
        fn doubling_along_traces(seed in any::<u64>(), n in 2usize..=60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tr = pi_extend(&random_seed(&mut rng, n), 3, &[1]).unwrap();
            prop_assert_eq!(tr.doubling_violation(), None);
        }
    }
}
