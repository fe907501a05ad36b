//! Random formulas and models for property checks and suites.

use crate::model::{BrModel, Perm, Relation};
use crate::syntax::{Formula, Slot};
use rand::seq::SliceRandom;
use rand::Rng;

/// Shape of generated formulas.
#[derive(Clone, Debug)]
pub struct FormulaGen {
    pub vocab: Vec<(String, usize)>,
    /// Built-in names with arities, e.g. `("le", 2)`.
    pub builtins: Vec<(String, usize)>,
    /// Quantifier names with slot arities.
    pub quants: Vec<(String, Vec<usize>)>,
    pub max_depth: usize,
    pub equality: bool,
    pub counting: bool,
    /// Pool of bound variable names; reuse exercises shadowing.
    pub var_pool: Vec<String>,
}

impl FormulaGen {
    pub fn new(vocab: &[(&str, usize)]) -> Self {
        FormulaGen {
            vocab: vocab.iter().map(|&(r, k)| (r.to_string(), k)).collect(),
            builtins: Vec::new(),
            quants: Vec::new(),
            max_depth: 3,
            equality: true,
            counting: false,
            var_pool: ["x", "y", "z", "w"].iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn with_builtins(mut self, b: &[(&str, usize)]) -> Self {
        self.builtins = b.iter().map(|&(r, k)| (r.to_string(), k)).collect();
        self
    }

    pub fn with_quants(mut self, q: &[(&str, Vec<usize>)]) -> Self {
        self.quants = q.iter().map(|(r, k)| (r.to_string(), k.clone())).collect();
        self
    }

    pub fn depth(mut self, d: usize) -> Self {
        self.max_depth = d;
        self
    }

    /// A formula whose free variables lie within `free`.
    pub fn formula<R: Rng>(&self, rng: &mut R, free: &[String]) -> Formula {
        let mut scope = free.to_vec();
        self.gen(rng, &mut scope, self.max_depth)
    }

    pub fn sentence<R: Rng>(&self, rng: &mut R) -> Formula {
        self.formula(rng, &[])
    }

    fn atom<R: Rng>(&self, rng: &mut R, scope: &[String]) -> Formula {
        if scope.is_empty() {
            let nullary: Vec<&(String, usize)> = self.vocab.iter().filter(|(_, k)| *k == 0).collect();
            if let Some((r, _)) = nullary.choose(rng) {
                return Formula::Rel(r.clone(), vec![]);
            }
            return if rng.gen_bool(0.5) { Formula::True } else { Formula::False };
        }
        let pick = |rng: &mut R| scope.choose(rng).unwrap().clone();
        let vocab_weight = self.vocab.len() * 3;
        let builtin_weight = self.builtins.len() * 2;
        let eq_weight = usize::from(self.equality);
        let total = vocab_weight + builtin_weight + eq_weight;
        if total == 0 {
            return Formula::True;
        }
        let roll = rng.gen_range(0..total);
        if roll < vocab_weight {
            let (r, k) = self.vocab.choose(rng).unwrap();
            Formula::Rel(r.clone(), (0..*k).map(|_| pick(rng)).collect())
        } else if roll < vocab_weight + builtin_weight {
            let (b, k) = self.builtins.choose(rng).unwrap();
            Formula::Builtin(b.clone(), (0..*k).map(|_| pick(rng)).collect())
        } else {
            Formula::Eq(pick(rng), pick(rng))
        }
    }

    fn gen<R: Rng>(&self, rng: &mut R, scope: &mut Vec<String>, depth: usize) -> Formula {
        if depth == 0 || rng.gen_bool(0.25) {
            return self.atom(rng, scope);
        }
        let mut choices = vec![0, 1, 2, 3, 4, 5, 6, 7];
        if !self.quants.is_empty() {
            choices.extend([8, 8]);
        }
        if self.counting && !scope.is_empty() {
            choices.push(9);
        }
        match *choices.choose(rng).unwrap() {
            0 => Formula::not(self.gen(rng, scope, depth - 1)),
            1 => Formula::and(self.gen(rng, scope, depth - 1), self.gen(rng, scope, depth - 1)),
            2 => Formula::or(self.gen(rng, scope, depth - 1), self.gen(rng, scope, depth - 1)),
            3 => Formula::implies(self.gen(rng, scope, depth - 1), self.gen(rng, scope, depth - 1)),
            4 => Formula::iff(self.gen(rng, scope, depth - 1), self.gen(rng, scope, depth - 1)),
            5 | 6 => {
                let x = self.var_pool.choose(rng).unwrap().clone();
                scope.push(x.clone());
                let body = self.gen(rng, scope, depth - 1);
                scope.pop();
                if rng.gen_bool(0.5) {
                    Formula::Exists(x, Box::new(body))
                } else {
                    Formula::Forall(x, Box::new(body))
                }
            }
            7 => self.atom(rng, scope),
            8 => {
                let (q, arities) = self.quants.choose(rng).unwrap().clone();
                let slots = arities
                    .iter()
                    .map(|&k| {
                        let mut vars: Vec<String> = Vec::new();
                        while vars.len() < k {
                            let v = self.var_pool.choose(rng).unwrap().clone();
                            if !vars.contains(&v) {
                                vars.push(v);
                            } else if vars.len() >= self.var_pool.len() {
                                vars.push(format!("{v}{}", vars.len()));
                            }
                        }
                        let base = scope.len();
                        scope.extend(vars.iter().cloned());
                        let body = self.gen(rng, scope, depth - 1);
                        scope.truncate(base);
                        Slot { vars, body }
                    })
                    .collect();
                Formula::Quant { name: q, slots }
            }
            _ => {
                let y = scope.choose(rng).unwrap().clone();
                let x = self.var_pool.choose(rng).unwrap().clone();
                scope.push(x.clone());
                let body = self.gen(rng, scope, depth - 1);
                scope.pop();
                Formula::Count { bound: x, count: y, body: Box::new(body) }
            }
        }
    }
}

/// A uniformly random permutation of 0..n.
pub fn random_perm<R: Rng>(rng: &mut R, n: usize) -> Perm {
    let mut img: Vec<usize> = (0..n).collect();
    img.shuffle(rng);
    Perm::new(img).expect("shuffle is a permutation")
}

/// A relation in which each tuple is present with the given probability.
pub fn random_relation<R: Rng>(rng: &mut R, arity: usize, n: usize, density: f64) -> Relation {
    let mut r = Relation::empty(arity, n);
    for i in 0..n.pow(arity as u32) {
        if rng.gen_bool(density) {
            r.set_index(i, true);
        }
    }
    r
}

/// A model over `vocab` with a random density per relation; `shuffle` picks f at random.
pub fn random_model<R: Rng>(rng: &mut R, n: usize, vocab: &[(&str, usize)], shuffle: bool) -> BrModel {
    let mut m = BrModel::new(n);
    for &(name, k) in vocab {
        let density = rng.gen_range(0.1..0.9);
        m.put_relation(name, random_relation(rng, k, n, density));
    }
    if shuffle {
        m.set_perm(random_perm(rng, n)).expect("sizes agree");
    }
    m
}
