//! r-round Ehrenfeucht–Fraïssé games on br-models, with built-in relations
//! read through each model's permutation.

use super::EvalError;
use crate::model::{BrModel, NumericalRelation, Relation};
use std::collections::HashMap;

pub const EF_MAX_N: usize = 12;
pub const EF_MAX_ROUNDS: usize = 4;

/// Whether Duplicator wins the r-round game on (m1,f) and (m2,g).
pub fn ef_equivalent(m1: &BrModel, m2: &BrModel, r: usize, builtins: &[NumericalRelation]) -> Result<bool, EvalError> {
    if m1.vocabulary() != m2.vocabulary() {
        return Err(EvalError::Ef("the models have different vocabularies".into()));
    }
    if m1.size() > EF_MAX_N || m2.size() > EF_MAX_N {
        return Err(EvalError::EfBounds(format!("domain sizes {} and {} exceed {EF_MAX_N}", m1.size(), m2.size())));
    }
    if r > EF_MAX_ROUNDS {
        return Err(EvalError::EfBounds(format!("rank {r} exceeds {EF_MAX_ROUNDS}")));
    }
    let mut checks: Vec<Check<'_>> = Vec::new();
    for (name, r1) in m1.relations() {
        checks.push(Check::Rel(r1, m2.relation(name).expect("same vocabulary")));
    }
    for b in builtins {
        checks.push(Check::Builtin(b));
    }
    let g = Game { m1, m2, checks, memo: HashMap::new() };
    Ok(g.solve(r))
}

enum Check<'a> {
    Rel(&'a Relation, &'a Relation),
    Builtin(&'a NumericalRelation),
}

impl Check<'_> {
    fn arity(&self) -> usize {
        match self {
            Check::Rel(r, _) => r.arity(),
            Check::Builtin(b) => b.arity(),
        }
    }
}

struct Game<'a> {
    m1: &'a BrModel,
    m2: &'a BrModel,
    checks: Vec<Check<'a>>,
    memo: HashMap<(Vec<(u8, u8)>, usize), bool>,
}

impl Game<'_> {
    fn solve(mut self, r: usize) -> bool {
        // Constants are absent, so the empty map is a partial isomorphism
        // unless a nullary relation differs.
        if !self.consistent(&[]) {
            return false;
        }
        self.wins(Vec::new(), r)
    }

    /// Whether the pebbled map is still a partial isomorphism; only tuples
    /// that mention the last pair are checked.
    fn consistent(&self, pos: &[(u8, u8)]) -> bool {
        let p = pos.len();
        if let Some(&(a, b)) = pos.last() {
            if pos[..p - 1].iter().any(|&(x, y)| (x == a) != (y == b)) {
                return false;
            }
        }
        let mut idx = Vec::new();
        for c in &self.checks {
            let k = c.arity();
            if p == 0 {
                if k == 0 && !self.agree(c, &[], &[]) {
                    return false;
                }
                continue;
            }
            let total = p.pow(k as u32);
            let mut t1 = vec![0usize; k];
            let mut t2 = vec![0usize; k];
            for code in 0..total {
                idx.clear();
                let mut rem = code;
                for _ in 0..k {
                    idx.push(rem % p);
                    rem /= p;
                }
                if !idx.contains(&(p - 1)) {
                    continue;
                }
                for (j, &i) in idx.iter().enumerate() {
                    t1[j] = pos[i].0 as usize;
                    t2[j] = pos[i].1 as usize;
                }
                if !self.agree(c, &t1, &t2) {
                    return false;
                }
            }
        }
        true
    }

    fn agree(&self, c: &Check<'_>, t1: &[usize], t2: &[usize]) -> bool {
        match c {
            Check::Rel(r1, r2) => r1.contains(t1) == r2.contains(t2),
            Check::Builtin(b) => {
                let v1: Vec<u64> = t1.iter().map(|&a| self.m1.perm().apply(a) as u64).collect();
                let v2: Vec<u64> = t2.iter().map(|&a| self.m2.perm().apply(a) as u64).collect();
                b.holds(&v1) == b.holds(&v2)
            }
        }
    }

    fn wins(&mut self, mut pos: Vec<(u8, u8)>, left: usize) -> bool {
        if left == 0 {
            return true;
        }
        pos.sort_unstable();
        let key = (pos, left);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let pos = key.0.clone();
        let (n1, n2) = (self.m1.size(), self.m2.size());
        let mut result = true;
        // Spoiler moves on an already pebbled element gain nothing.
        'spoiler: for side in 0..2 {
            let (own, other) = if side == 0 { (n1, n2) } else { (n2, n1) };
            for a in 0..own as u8 {
                let taken = pos.iter().any(|&(x, y)| if side == 0 { x == a } else { y == a });
                if taken {
                    continue;
                }
                let mut answered = false;
                for b in 0..other as u8 {
                    let pair = if side == 0 { (a, b) } else { (b, a) };
                    let mut next = pos.clone();
                    next.push(pair);
                    if self.consistent(&next) && self.wins(next, left - 1) {
                        answered = true;
                        break;
                    }
                }
                if !answered {
                    result = false;
                    break 'spoiler;
                }
            }
        }
        self.memo.insert(key, result);
        result
    }
}
