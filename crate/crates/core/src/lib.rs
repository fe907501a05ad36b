//! Logics over finite structures with built-in relations: numerical sets,
//! br-models, formulas, generalized quantifiers, evaluation, syntactic
//! transformations and partial multiplication extension.

pub mod arithx;
pub mod evaluator;
pub mod generate;
pub mod model;
pub mod quantifiers;
pub mod sets;
pub mod syntax;
pub mod transforms;
