//! Named pass/fail checks with fixed parameters. Randomized suites draw from
//! a ChaCha stream seeded by the suite seed, which is printed.

use crate::CliError;
use brlogic::arithx::{check_mulext_hypothesis, iteration_count, mu_step, mulext_lemma_violation, pi_extend, random_seed, recipe_seed};
use brlogic::evaluator::{ef::ef_equivalent, Assignment, Evaluator};
use brlogic::generate::{random_model, random_perm, FormulaGen};
use brlogic::model::{
    is_padding, powerset_structure, word_model, BrModel, BuiltinRegistry, NumericalRelation, Perm, Relation, Vocabulary, DEFAULT_PADDING_CAP,
};
use brlogic::quantifiers::{
    builtin_quantifiers, cardinality, is_neutral_letter, language_quantifier, lift_over_order, neutral_letter_extension, quantifier_from_sentence,
    regularize, Language, Quantifier, QuantifierRegistry,
};
use brlogic::sets::{f_s_omega_s, loose_at, non_periodicity_criterion, pseudoloose_at, NumericalSet, Rational, Verdict, WordPolicy};
use brlogic::syntax::{parse, quantifier_rank, Formula, ParseContext};
use brlogic::transforms::{mso_correspondence_holds, relativization_contract_holds, substitution_contract_holds, Substitution};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::fmt;
use std::time::Instant;

pub const DEFAULT_SEED: u64 = 20_240_229;

pub struct Suite {
    pub name: &'static str,
    pub claim: &'static str,
    run: fn(&mut Log) -> Result<bool, CliError>,
}

pub const SUITES: &[Suite] = &[
    Suite { name: "haertig-addition", claim: "the equicardinality formula defines restricted addition", run: haertig_addition },
    Suite { name: "order-from-plus", claim: "E z. plus(x,z,y) defines the order through f", run: order_from_plus },
    Suite { name: "mulext-lemma", claim: "one mu step keeps partial multiplication and the gamma bounds", run: mulext_lemma },
    Suite { name: "mulext-prop", claim: "pi reaches full multiplication under the hypothesis", run: mulext_prop },
    Suite { name: "set-criteria", claim: "periodicity values and the non-periodicity criterion", run: set_criteria },
    Suite { name: "looseness-examples", claim: "looseness verdicts for Sq, x^2+x, E and the complement of Sq", run: looseness_examples },
    Suite { name: "relativization", claim: "relativized formulas agree with relativized models", run: relativization },
    Suite { name: "substitution", claim: "substitution agrees with redefined relations", run: substitution },
    Suite { name: "regularization-ui", claim: "regularized quantifiers ignore padding", run: regularization_ui },
    Suite { name: "lift-hartig", claim: "the lifted a^m b^m c^k quantifier with a tailored order defines I", run: lift_hartig },
    Suite { name: "rc-unary", claim: "the regularized initial-segment quantifier equals C_{S+1}", run: rc_unary },
    Suite { name: "divmod-interdef", claim: "C_{mN+1} counts residue 1 modulo m", run: divmod_interdef },
    Suite { name: "median-trick", claim: "medians and the neutral-letter quantifier decide |U|=|V|", run: median_trick },
    Suite { name: "mso-counterexample", claim: "powerset structures and MSO on words correspond", run: mso_counterexample },
    Suite { name: "neutral-letter", claim: "neutral letters of N(L)", run: neutral_letter },
    Suite { name: "ef-games", claim: "EF game verdicts on linear orders, reflexivity and symmetry", run: ef_games },
];

pub fn find(name: &str) -> Option<&'static Suite> {
    SUITES.iter().find(|s| s.name == name)
}

/// Collects the lines a suite prints.
pub struct Log {
    pub seed: u64,
    pub lines: Vec<String>,
    rng: ChaCha8Rng,
}

impl Log {
    fn new(seed: u64) -> Self {
        Log { seed, lines: Vec::new(), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn say(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }

    /// Records a sub-check and returns its verdict.
    fn check(&mut self, ok: bool, what: impl fmt::Display) -> bool {
        self.say(format!("  [{}] {what}", if ok { "ok" } else { "FAIL" }));
        ok
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: &'static str,
    pub claim: &'static str,
    pub seed: u64,
    pub pass: bool,
    pub seconds: f64,
    pub lines: Vec<String>,
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "suite {} (seed {}): {}", self.name, self.seed, self.claim)?;
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        write!(f, "{} {} in {:.2}s", if self.pass { "PASS" } else { "FAIL" }, self.name, self.seconds)?;
        if !self.pass {
            write!(f, "\nreproduce: brlogic check {} --seed {}", self.name, self.seed)?;
        }
        Ok(())
    }
}

pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport, CliError> {
    let suite = find(name).ok_or_else(|| CliError::UnknownSuite(name.to_string()))?;
    let mut log = Log::new(seed);
    let start = Instant::now();
    let pass = (suite.run)(&mut log)?;
    Ok(SuiteReport { name: suite.name, claim: suite.claim, seed, pass, seconds: start.elapsed().as_secs_f64(), lines: log.lines })
}

fn vocab(items: &[(&str, usize)]) -> Vocabulary {
    items.iter().map(|&(r, k)| (r.to_string(), k)).collect()
}

fn formula(text: &str, voc: &[(&str, usize)], q: &QuantifierRegistry, b: &BuiltinRegistry) -> Result<Formula, CliError> {
    let v = vocab(voc);
    Ok(parse(text, &ParseContext::new(&v, q).with_builtins(b))?)
}

fn unary_from_mask(n: usize, mask: u64) -> Relation {
    Relation::from_tuples(1, n, (0..n).filter(|&a| mask >> a & 1 == 1).map(|a| [a])).expect("elements in range")
}

fn first_difference(got: &Relation, want: &Relation) -> Option<Vec<usize>> {
    let diff = got.bits().to_bitvec() ^ want.bits();
    diff.first_one().map(|i| got.decode(i))
}

fn haertig_addition(log: &mut Log) -> Result<bool, CliError> {
    let b = BuiltinRegistry::default();
    let q = builtin_quantifiers();
    let ev = Evaluator::new(&b, &q);
    let literal = formula("I(u: u < x; v: y < v & v <= z)", &[], &q, &b)?;
    let guarded = formula("y <= z & I(u: u < x; v: y < v & v <= z)", &[], &q, &b)?;
    let mut literal_ok = true;
    let mut guarded_ok = true;
    let mut first_bad = None;
    for n in 2..=64 {
        let m = BrModel::new(n);
        let want = Relation::from_tuples(3, n, (0..n).flat_map(|x| (0..n - x).map(move |y| [x, y, x + y])))?;
        let got = ev.defined_relation(&m, &literal, &["x", "y", "z"], &Assignment::new())?;
        if let Some(t) = first_difference(&got, &want) {
            literal_ok = false;
            first_bad.get_or_insert((n, t));
        }
        let got = ev.defined_relation(&m, &guarded, &["x", "y", "z"], &Assignment::new())?;
        guarded_ok &= got == want;
    }
    let detail = match &first_bad {
        Some((n, t)) => format!("first disagreement at n={n}, (x,y,z)={t:?}"),
        None => "no disagreement".into(),
    };
    let ok = log.check(literal_ok, format!("I(u: u<x; v: y<v<=z) equals x+y=z for n in 2..=64 ({detail})"));
    log.say(format!("  [info] guarded form y<=z & I(...) equals x+y=z: {guarded_ok}"));
    Ok(ok)
}

fn order_from_plus(log: &mut Log) -> Result<bool, CliError> {
    let b = BuiltinRegistry::default();
    let q = builtin_quantifiers();
    let ev = Evaluator::new(&b, &q);
    let phi = formula("E z. @plus(x,z,y)", &[], &q, &b)?;
    let mut ok = true;
    for n in 1..=64 {
        for _ in 0..20 {
            let f = random_perm(&mut log.rng, n);
            let want = Relation::from_tuples(2, n, (0..n).flat_map(|x| (0..n).map(move |y| [x, y])).filter(|t| f.apply(t[0]) <= f.apply(t[1])))?;
            let m = BrModel::new(n).with_perm(f)?;
            let got = ev.defined_relation(&m, &phi, &["x", "y"], &Assignment::new())?;
            if let Some(t) = first_difference(&got, &want) {
                log.say(format!("  n={n} f={:?} differs at {t:?}", m.perm().images()));
                ok = false;
            }
        }
    }
    Ok(log.check(ok, "defined relation equals <=^f for n <= 64, 20 permutations each"))
}

fn mulext_lemma(log: &mut Log) -> Result<bool, CliError> {
    let mut ok = true;
    for n in [10, 20, 40, 60] {
        let mut bad = 0;
        for i in 0..200 {
            let p = random_seed(&mut log.rng, n);
            if let Some(msg) = mulext_lemma_violation(&p, &mu_step(&p)) {
                if bad == 0 {
                    log.say(format!("  n={n} seed #{i}: {msg}"));
                }
                bad += 1;
            }
        }
        ok &= log.check(bad == 0, format!("n={n}: 200 seeds, {bad} violations"));
    }
    Ok(ok)
}

fn mulext_prop(log: &mut Log) -> Result<bool, CliError> {
    let k = 3;
    let mut ok = log.check(iteration_count(k) == 6, format!("i* = {} for k=3", iteration_count(k)));
    for n in [64, 100, 216] {
        let (seed, a) = recipe_seed(n, k)?;
        let hyp = check_mulext_hypothesis(&seed, k)?;
        let trace = pi_extend(&seed, k, &[1, a])?;
        let gammas: Vec<String> = trace.rows().iter().filter(|r| r.1 == a).map(|r| r.2.to_string()).collect();
        log.say(format!("  n={n}: recipe a*={a}, |M|={}, witness {hyp:?}, gamma(pi_i,{a}) = {}", seed.len(), gammas.join(" ")));
        let full = trace.result().is_full();
        if hyp.is_some() {
            ok &= log.check(full, format!("n={n}: pi is full multiplication"));
        } else {
            log.say(format!("  n={n}: no witness, nothing claimed (full={full})"));
        }
        ok &= log.check(trace.doubling_violation().is_none(), format!("n={n}: doubling holds along the trace"));
    }
    Ok(ok)
}

fn set_criteria(log: &mut Log) -> Result<bool, CliError> {
    let fact = NumericalSet::factorials();
    let (f, w) = f_s_omega_s(&fact, 23);
    let mut ok = log.check((f, w) == (8, 1), format!("f_F(23)={f}, omega_F(23)={w}"));
    let e = NumericalSet::pow2();
    for n in [18, 36, 72, 144] {
        let (f, _) = f_s_omega_s(&e, n);
        ok &= log.check(f >= n.div_ceil(9), format!("f_E({n})={f} >= {}", n.div_ceil(9)));
    }
    for (n, v) in non_periodicity_criterion(&NumericalSet::squares(), 5, 0, &[100, 1000, 10000]) {
        ok &= log.check(v, format!("Sq, (k,l)=(5,0), n={n}: criterion {v}"));
    }
    for (m, v) in non_periodicity_criterion(&fact, 10, 5, &[23, 119, 719]) {
        let (f, w) = f_s_omega_s(&fact, m);
        ok &= log.check(!v, format!("F, (k,l)=(10,5), m={m}: criterion {v} (f={f}, omega={w}, k*f*omega^l={})", 10 * f * w.pow(5)));
    }
    Ok(ok)
}

fn looseness_examples(log: &mut Log) -> Result<bool, CliError> {
    let tenth = Rational::new(1, 10)?;
    let mut ok = true;
    for (name, s) in [("Sq", NumericalSet::squares()), ("x^2+x", NumericalSet::poly(vec![0, 1, 1]))] {
        for n in [10_000, 100_000] {
            let r = loose_at(&s, n, tenth);
            ok &= log.check(r.verdict == Verdict::LooseAtN && r.revalidate(&s), format!("{name} n={n} eps=1/10: {} (t={:?})", r.verdict, r.witness_t));
        }
    }
    let e = NumericalSet::pow2();
    let quarter = Rational::new(1, 4)?;
    let r = pseudoloose_at(&e, 4096, quarter, WordPolicy::default());
    let witness = match (r.witness_t, &r.witness_word) {
        (Some(t), Some(w)) => format!(", witness t={t} w={w} gamma={}", r.gamma_value.unwrap_or(0)),
        _ => String::new(),
    };
    ok &= log.check(r.verdict == Verdict::Neither, format!("E n=4096 eps=1/4: {}{witness}", r.verdict));
    let co = NumericalSet::complement(NumericalSet::squares());
    let r = pseudoloose_at(&co, 10_000, Rational::new(1, 20)?, WordPolicy::default());
    ok &= log.check(
        matches!(r.verdict, Verdict::PseudolooseAtN | Verdict::LooseAtN) && r.revalidate(&co),
        format!("compl(Sq) n=10000 eps=1/20: {} (w={:?}, t={:?})", r.verdict, r.witness_word, r.witness_t),
    );
    Ok(ok)
}

const UI_QUANTS: [(&str, &[usize]); 5] = [("C_Sq", &[1]), ("C_E", &[1]), ("I", &[1, 1]), ("D", &[1, 1]), ("D_2", &[1])];

fn relativization(log: &mut Log) -> Result<bool, CliError> {
    let b = BuiltinRegistry::default();
    let q = builtin_quantifiers();
    let ev = Evaluator::new(&b, &q);
    let voc = [("U", 1), ("V", 1), ("E", 2)];
    let quants: Vec<(&str, Vec<usize>)> = UI_QUANTS.iter().map(|&(n, a)| (n, a.to_vec())).collect();
    let gen = FormulaGen::new(&voc).with_builtins(&[("le", 2), ("lt", 2)]).with_quants(&quants).depth(3);
    let mut failures = 0;
    for i in 0..500 {
        let n = log.rng.gen_range(1..=8);
        let m = random_model(&mut log.rng, n, &voc, true);
        let phi = gen.formula(&mut log.rng, &["x".to_string()]);
        let psi = gen.formula(&mut log.rng, &["u".to_string()]);
        if !relativization_contract_holds(&ev, &m, &phi, "u", &psi)? {
            if failures == 0 {
                log.say(format!("  instance #{i}: n={n} phi={phi} psi={psi}"));
            }
            failures += 1;
        }
    }
    Ok(log.check(failures == 0, format!("500 instances, n <= 8, {failures} failures")))
}

fn substitution(log: &mut Log) -> Result<bool, CliError> {
    let b = BuiltinRegistry::default();
    let q = builtin_quantifiers();
    let ev = Evaluator::new(&b, &q);
    let voc = [("U", 1), ("V", 1), ("E", 2)];
    let gen = FormulaGen::new(&voc).with_builtins(&[("le", 2)]).with_quants(&[("I", vec![1, 1]), ("C_Sq", vec![1])]).depth(3);
    let xs = ["x".to_string(), "y".to_string()];
    let mut failures = 0;
    for i in 0..500 {
        let n = log.rng.gen_range(1..=6);
        let m = random_model(&mut log.rng, n, &voc, true);
        let phi = gen.formula(&mut log.rng, &xs[..1]);
        let mut subs = Substitution::new();
        subs.insert("U".into(), (xs[..1].to_vec(), gen.formula(&mut log.rng, &xs[..1])));
        if log.rng.gen_bool(0.5) {
            subs.insert("E".into(), (xs.to_vec(), gen.formula(&mut log.rng, &xs)));
        }
        if !substitution_contract_holds(&ev, &m, &phi, &subs)? {
            if failures == 0 {
                log.say(format!("  instance #{i}: n={n} phi={phi}"));
            }
            failures += 1;
        }
    }
    Ok(log.check(failures == 0, format!("500 instances, n <= 6, {failures} failures")))
}

/// Base slots for a regularization check: the quantifier's own slots plus P.
fn ui_base(rng: &mut ChaCha8Rng, which: usize, n: usize) -> (Perm, Vec<Relation>) {
    let f = random_perm(rng, n);
    let rand_unary = |rng: &mut ChaCha8Rng| unary_from_mask(n, rng.gen_range(0..1u64 << n));
    let mut slots = match which {
        0 => vec![rand_unary(rng)],
        1 => vec![rand_unary(rng), rand_unary(rng)],
        _ => {
            // a/b partition, often shaped a^k b^k along f
            let mut letters: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            if rng.gen_bool(0.5) {
                let k = n / 2;
                for (rank, &a) in f.order().iter().enumerate() {
                    letters[a] = rank >= k;
                }
            }
            let a = Relation::from_tuples(1, n, (0..n).filter(|&i| !letters[i]).map(|i| [i])).unwrap();
            let b = Relation::from_tuples(1, n, (0..n).filter(|&i| letters[i]).map(|i| [i])).unwrap();
            vec![a, b]
        }
    };
    let p = if rng.gen_bool(0.5) { unary_from_mask(n, (1u64 << n) - 1) } else { rand_unary(rng) };
    slots.push(p);
    (f, slots)
}

fn regularization_ui(log: &mut Log) -> Result<bool, CliError> {
    let quants: [Quantifier; 3] = [
        cardinality("C_Sq", NumericalSet::squares()),
        brlogic::quantifiers::hartig(),
        language_quantifier(&Language::anbn()),
    ];
    let mut ok = true;
    for (which, q) in quants.iter().enumerate() {
        let reg = regularize(q);
        let mut bad = 0;
        let mut accepted = 0;
        for _ in 0..20 {
            let n0 = log.rng.gen_range(1..=6);
            let (f, slots) = ui_base(&mut log.rng, which, n0);
            let base = reg.decide_on(n0, &f, &slots)?;
            accepted += usize::from(base);
            let small = slot_model(n0, &f, &slots)?;
            for _ in 0..100 {
                let n = log.rng.gen_range(n0..=10);
                let g = random_perm(&mut log.rng, n);
                let mut u: Vec<usize> = (0..n).collect();
                u.shuffle(&mut log.rng);
                u.truncate(n0);
                u.sort_by_key(|&a| g.apply(a));
                // base element with f-rank r goes to the r-th element of U in g-order
                let mut emb = vec![0; n0];
                for (r, &a) in f.order().iter().enumerate() {
                    emb[a] = u[r];
                }
                let big_slots: Vec<Relation> = slots
                    .iter()
                    .map(|r| Relation::from_tuples(r.arity(), n, r.tuples().map(|t| t.iter().map(|&a| emb[a]).collect::<Vec<_>>())).unwrap())
                    .collect();
                let big = slot_model(n, &g, &big_slots)?;
                let uset: BTreeSet<usize> = u.iter().copied().collect();
                let is_pad = is_padding(&small, &big, DEFAULT_PADDING_CAP, Some(&uset))?.is_some();
                if !is_pad || reg.decide_on(n, &g, &big_slots)? != base {
                    bad += 1;
                }
            }
        }
        ok &= log.check(bad == 0, format!("{}: 20 base models x 100 paddings, {accepted} bases accepted, {bad} disagreements", reg.name));
    }
    Ok(ok)
}

fn slot_model(n: usize, f: &Perm, slots: &[Relation]) -> Result<BrModel, CliError> {
    let mut m = BrModel::new(n).with_perm(f.clone())?;
    for (i, r) in slots.iter().enumerate() {
        m.put_relation(&format!("R{i}"), r.clone());
    }
    Ok(m)
}

/// Runs `phi` and `reference` over every (U,V) on n elements for the given perms.
fn agree_on_pairs(ev: &Evaluator<'_>, phi: &Formula, reference: impl Fn(u64, u64) -> bool, n: usize, perms: &[Perm]) -> Result<Option<(u64, u64)>, CliError> {
    let rels = ["U".to_string(), "V".to_string()];
    let prog = ev.compile_over(phi, &[], &rels)?;
    for f in perms {
        for mu in 0..1u64 << n {
            let u = unary_from_mask(n, mu);
            for mv in 0..1u64 << n {
                let v = unary_from_mask(n, mv);
                if prog.eval_on(n, f, &[&u, &v], &[])? != reference(mu, mv) {
                    return Ok(Some((mu, mv)));
                }
            }
        }
    }
    Ok(None)
}

fn lift_hartig(log: &mut Log) -> Result<bool, CliError> {
    let b = BuiltinRegistry::default();
    let mut q = builtin_quantifiers();
    let abc = language_quantifier(&Language::anbnck());
    q.insert_as("Qle", lift_over_order(&abc));
    q.insert_as("Q", abc);
    let ev = Evaluator::new(&b, &q);
    let le2 = "((U(t) <-> U(u)) & (V(t) <-> V(u)) & t <= u) | (U(t) & !V(t) & !(U(u) & !V(u))) \
               | (!U(t) & V(t) & (U(u) <-> V(u))) | (U(t) & V(t) & !U(u) & !V(u))";
    let voc = [("U", 1), ("V", 1)];
    let lifted = formula(&format!("Qle(x: U(x) & !V(x); y: V(y) & !U(y); z: U(z) <-> V(z); t,u: {le2})"), &voc, &q, &b)?;
    let hartig = formula("I(x: U(x); y: V(y))", &voc, &q, &b)?;
    let iprog = ev.compile_over(&hartig, &[], &["U".into(), "V".into()])?;
    let mut ok = true;
    for n in 1..=9 {
        let mut perms = vec![Perm::identity(n)];
        if n <= 6 {
            perms.push(Perm::reversal(n));
        }
        let reference = |mu: u64, mv: u64| {
            let (u, v) = (unary_from_mask(n, mu), unary_from_mask(n, mv));
            iprog.eval_on(n, &Perm::identity(n), &[&u, &v], &[]).unwrap_or(false)
        };
        if let Some((mu, mv)) = agree_on_pairs(&ev, &lifted, reference, n, &perms)? {
            ok &= log.check(false, format!("n={n}: disagreement at U={mu:#b} V={mv:#b}"));
        }
    }
    Ok(log.check(ok, "lifted quantifier agrees with I on all (U,V), n <= 9"))
}

fn rc_unary(log: &mut Log) -> Result<bool, CliError> {
    let mut b = BuiltinRegistry::default();
    b.register_set("S", NumericalSet::list([2, 5]));
    let mut q = builtin_quantifiers();
    let voc = [("U", 1)];
    let sentence = {
        let ev = Evaluator::new(&b, &q);
        let phi = formula("E x. (@set:S(x) & A y. (U(y) <-> y <= x))", &voc, &q, &b)?;
        quantifier_from_sentence("Q", &[("U".into(), 1)], &phi, &ev)?
    };
    q.insert_as("Qreg", regularize(&sentence));
    q.insert(cardinality("C_S1", NumericalSet::shift(1, NumericalSet::list([2, 5]))));
    let ev = Evaluator::new(&b, &q);
    let lhs = ev.compile_over(&formula("Qreg(x: U(x); y: U(y))", &voc, &q, &b)?, &[], &["U".into()])?;
    let rhs = ev.compile_over(&formula("C_S1(x: U(x))", &voc, &q, &b)?, &[], &["U".into()])?;
    let mut bad = 0;
    let mut accepted = 0;
    for n in 1..=12 {
        let perms = [Perm::identity(n), random_perm(&mut log.rng, n)];
        for f in &perms {
            for mask in 0..1u64 << n {
                let u = unary_from_mask(n, mask);
                let l = lhs.eval_on(n, f, &[&u], &[])?;
                accepted += usize::from(l);
                if l != rhs.eval_on(n, f, &[&u], &[])? || l != [3, 6].contains(&mask.count_ones()) {
                    bad += 1;
                }
            }
        }
    }
    Ok(log.check(bad == 0, format!("S={{2,5}}: all U over n <= 12, two orders each, {accepted} accepted, {bad} disagreements")))
}

fn divmod_interdef(log: &mut Log) -> Result<bool, CliError> {
    let b = BuiltinRegistry::default();
    let mut ok = true;
    for m in [2u64, 3, 5] {
        let mut q = builtin_quantifiers();
        q.insert(cardinality("C", NumericalSet::shift(1, NumericalSet::multiples(m))));
        let ev = Evaluator::new(&b, &q);
        let c = ev.compile_over(&formula("C(x: U(x))", &[("U", 1)], &q, &b)?, &[], &["U".into()])?;
        let d = ev.compile_over(&formula(&format!("D_{m}(x: U(x))"), &[("U", 1)], &q, &b)?, &[], &["U".into()])?;
        let mut bad = 0;
        for n in 1..=12 {
            let f = Perm::identity(n);
            for mask in 0..1u64 << n {
                let u = unary_from_mask(n, mask);
                let size = mask.count_ones() as u64;
                if c.eval_on(n, &f, &[&u], &[])? != (size % m == 1) || d.eval_on(n, &f, &[&u], &[])? != size.is_multiple_of(m) {
                    bad += 1;
                }
            }
        }
        ok &= log.check(bad == 0, format!("m={m}: C_(mN+1) iff |U| = 1 mod m, D_{m} iff |U| = 0 mod m, all U over n <= 12, {bad} failures"));
    }
    Ok(ok)
}

/// L1 applied with letter a on `a` and b on `b`; the rest of the domain is e.
fn l1(a: impl Fn(&str) -> String, b: impl Fn(&str) -> String) -> String {
    format!("L1(x: {}; y: {}; w: !({}) & !({}))", a("x"), b("y"), a("w"), b("w"))
}

/// The |U| = |V| sentence built from medians: even medians split X into
/// {≤ m} and {> m}, odd ones into {< m}, {m}, {> m}.
pub fn median_sentence() -> String {
    let split = |set: &'static str, z: &'static str, strict: bool| {
        let op = if strict { "<" } else { "<=" };
        let lower = move |v: &str| format!("{set}({v}) & {v} {op} {z}");
        let upper = move |v: &str| format!("{set}({v}) & {z} < {v}");
        (lower, upper)
    };
    let median = |set: &'static str, z: &'static str, strict: bool| {
        let (lo, hi) = split(set, z, strict);
        format!("({set}({z}) & {})", l1(lo, hi))
    };
    let even = |set: &'static str| format!("(E z. {})", median(set, "z", false));
    let case = |strict: bool| {
        let (u_lo, u_hi) = split("U", "z", strict);
        let (v_lo, v_hi) = split("V", "z2", strict);
        format!(
            "E z. E z2. ({} & {} & ((z <= z2 & {}) | (z2 < z & {})))",
            median("U", "z", strict),
            median("V", "z2", strict),
            l1(u_lo, v_hi),
            l1(v_lo, u_hi)
        )
    };
    format!(
        "(!(E x. U(x)) & !(E x. V(x))) | ({eu} & {ev} & {c0}) | (!{eu} & !{ev} & {c1})",
        eu = even("U"),
        ev = even("V"),
        c0 = case(false),
        c1 = case(true)
    )
}

fn median_trick(log: &mut Log) -> Result<bool, CliError> {
    let b = BuiltinRegistry::default();
    let mut q = builtin_quantifiers();
    let l1q = language_quantifier(&neutral_letter_extension(&Language::anbn(), 'e')?);
    q.insert_as("L1", l1q);
    let ev = Evaluator::new(&b, &q);
    let phi = formula(&median_sentence(), &[("U", 1), ("V", 1)], &q, &b)?;
    let mut ok = true;
    for n in 1..=10 {
        let perms = [Perm::identity(n)];
        if let Some((mu, mv)) = agree_on_pairs(&ev, &phi, |mu, mv| mu.count_ones() == mv.count_ones(), n, &perms)? {
            ok &= log.check(false, format!("n={n}: wrong at U={mu:#b} V={mv:#b}"));
        }
    }
    Ok(log.check(ok, "median construction decides |U|=|V| on all (U,V), n <= 10"))
}

/// Rank ≤ 3 first-order sentences over E with the order.
pub const MSO_CORPUS: [&str; 30] = [
    "true",
    "E x. x = x",
    "E x. E y. E(x,y)",
    "A x. E y. (E(x,y) | E(y,x))",
    "E x. A y. !E(y,x)",
    "A x. A y. (E(x,y) -> !E(y,x))",
    "E x. E y. (x < y & E(x,y))",
    "E x. E y. (y < x & E(x,y))",
    "A x. A y. (E(x,y) -> x < y)",
    "E x. A y. (x <= y)",
    "E x. E y. E z. (E(x,z) & E(y,z) & !(x = y))",
    "A x. A y. (E(x,y) -> A z. (z < x -> E(z,y) | !E(z,y)))",
    "E x. E y. E z. (x < y & y < z)",
    "E x. E y. E z. (x < y & y < z & E(x,z) & E(y,z))",
    "A x. (E(x,x) | !E(x,x))",
    "E x. (A y. !E(y,x) & A y. !E(x,y))",
    "A x. (E y. E(x,y) -> E y. (E(x,y) & A z. (E(z,y) -> z = x)))",
    "E y. A x. (E z. E(x,z) -> E(x,y))",
    "E x. E y. (!(x = y) & A z. (E(z,x) <-> E(z,y)))",
    "A x. A y. ((A z. (E(z,x) <-> E(z,y))) -> x = y)",
    "E x. E y. (E(x,y) & A z. (E(z,y) -> z = x))",
    "A x. (E y. E(y,x) -> E z. (E(z,x) & A w. (w < z -> !E(w,x))))",
    "E x. E y. E z. (E(x,y) & E(x,z) & y < z)",
    "A x. A y. (x < y -> E z. (x < z & z < y))",
    "E x. E y. (x < y & A z. !(x < z & z < y))",
    "A x. E y. (x <= y & E z. E(z,y))",
    "E x. (E y. E(y,x) & E y. (E(y,x) & E z. (E(z,x) & !(y = z))))",
    "A x. A y. A z. ((E(x,z) & E(y,z)) -> (x <= y | y <= x))",
    "E x. A y. (E(y,x) <-> E z. E(y,z))",
    "A x. (E y. E(x,y) | A y. (E(y,x) -> E z. E(z,x)))",
];

fn mso_counterexample(log: &mut Log) -> Result<bool, CliError> {
    let b = BuiltinRegistry::default();
    let mut q = builtin_quantifiers();
    q.insert(brlogic::quantifiers::powerset_quantifier());
    let ev = Evaluator::new(&b, &q);
    let voc = [("E", 2)];
    let mut ok = true;
    let mut mismatches = Vec::new();
    for (i, text) in MSO_CORPUS.iter().enumerate() {
        let phi = formula(text, &voc, &q, &b)?;
        if quantifier_rank(&phi) > 3 {
            ok &= log.check(false, format!("corpus #{i} has rank {}", quantifier_rank(&phi)));
        }
        for k in 1..=4 {
            if !mso_correspondence_holds(&ev, &phi, k)? {
                mismatches.push((i, k));
            }
        }
    }
    ok &= log.check(mismatches.is_empty(), format!("30 sentences x k in 1..=4: mismatches {mismatches:?}"));
    let ps = formula("PS(x,y: E(x,y))", &voc, &q, &b)?;
    for k in 1..=5 {
        let m = powerset_structure(k, 5)?;
        let got = ev.eval(&m, &ps, &Assignment::new())?;
        let square = NumericalSet::squares().contains(k as u64);
        ok &= log.check(got == square, format!("PS accepts the k={k} powerset structure: {got}"));
    }
    Ok(ok)
}

fn neutral_letter(log: &mut Log) -> Result<bool, CliError> {
    let anbn = Language::anbn();
    let n0 = neutral_letter_extension(&anbn, 'e')?;
    let par = neutral_letter_extension(&Language::parity('a', vec!['a', 'b']), 'e')?;
    let mut ok = log.check(is_neutral_letter(&n0, 'e', 8), "e is neutral for N(a^n b^n)");
    ok &= log.check(is_neutral_letter(&par, 'e', 8), "e is neutral for N(even number of a)");
    ok &= log.check(!is_neutral_letter(&anbn, 'a', 8), "a is not neutral for a^n b^n");
    Ok(ok)
}

fn ef_games(log: &mut Log) -> Result<bool, CliError> {
    let le = [NumericalRelation::Le];
    let a7 = word_model(&"a".repeat(7))?;
    let a9 = word_model(&"a".repeat(9))?;
    let r3 = ef_equivalent(&a7, &a9, 3, &le)?;
    let r4 = ef_equivalent(&a7, &a9, 4, &le)?;
    let mut ok = log.check(r3, format!("a^7 ~3 a^9 under <=: {r3}"));
    ok &= log.check(!r4, format!("a^7 ~4 a^9 under <=: {r4}"));
    let voc = [("U", 1), ("E", 2)];
    let mut bad = 0;
    let mut equivalent = 0;
    for _ in 0..50 {
        let n1 = log.rng.gen_range(1..=8);
        let n2 = log.rng.gen_range(1..=8);
        let r = log.rng.gen_range(1..=3);
        let m1 = random_model(&mut log.rng, n1, &voc, true);
        let m2 = if log.rng.gen_bool(0.3) {
            let mut c = m1.clone();
            c.set_perm(random_perm(&mut log.rng, n1))?;
            c
        } else {
            random_model(&mut log.rng, n2, &voc, true)
        };
        let builtins: &[NumericalRelation] = if log.rng.gen_bool(0.5) { &le } else { &[] };
        let refl = ef_equivalent(&m1, &m1, r, builtins)? && ef_equivalent(&m2, &m2, r, builtins)?;
        let ab = ef_equivalent(&m1, &m2, r, builtins)?;
        let ba = ef_equivalent(&m2, &m1, r, builtins)?;
        equivalent += usize::from(ab);
        if !refl || ab != ba {
            bad += 1;
        }
    }
    ok &= log.check(bad == 0, format!("50 random pairs, n <= 8: reflexive and symmetric ({equivalent} equivalent pairs, {bad} failures)"));
    Ok(ok)
}
