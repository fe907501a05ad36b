//! Fixtures shared by the criterion benches.

use brlogic::arithx::recipe_seed;
use brlogic::model::{BuiltinRegistry, PartialArithModel};
use brlogic::quantifiers::{builtin_quantifiers, QuantifierRegistry};
use brlogic::syntax::{parse, Formula, ParseContext};
use std::collections::BTreeMap;

/// The Härtig formula that is meant to define x+y=z.
pub const HARTIG_PLUS: &str = "I(u: u < x; v: y < v & v <= z)";

pub fn registries() -> (BuiltinRegistry, QuantifierRegistry) {
    (BuiltinRegistry::default(), builtin_quantifiers())
}

pub fn formula(text: &str, b: &BuiltinRegistry, q: &QuantifierRegistry) -> Formula {
    let voc = BTreeMap::new();
    parse(text, &ParseContext::new(&voc, q).with_builtins(b)).expect("bench formula parses")
}

/// Seed model for the multiplication extension at size n.
pub fn arith_seed(n: usize, k: usize) -> PartialArithModel {
    recipe_seed(n, k).expect("seed exists").0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        let (b, q) = registries();
        formula(HARTIG_PLUS, &b, &q);
        assert_eq!(arith_seed(216, 3).size(), 216);
    }
}
