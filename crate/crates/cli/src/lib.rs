//! Command implementations and the named verification suites behind the
//! `brlogic` binary.

pub mod commands;
pub mod suites;

use brlogic::arithx::ArithError;
use brlogic::evaluator::EvalError;
use brlogic::model::ModelError;
use brlogic::quantifiers::QuantError;
use brlogic::sets::SetError;
use brlogic::syntax::ParseError;
use brlogic::transforms::{ContractError, TransformError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("formula: {0}")]
    Parse(#[from] ParseError),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
    #[error("set: {0}")]
    Set(#[from] SetError),
    #[error("config: {0}")]
    Quant(#[from] QuantError),
    #[error("transform: {0}")]
    Transform(#[from] TransformError),
    #[error("{0}")]
    Contract(#[from] ContractError),
    #[error("{0}")]
    Arith(#[from] ArithError),
}

impl CliError {
    /// 2 for usage and input errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::UnknownSuite(_) | CliError::Io { .. } | CliError::Model(_) | CliError::Parse(_) | CliError::Set(_) | CliError::Quant(_) => 2,
            _ => 1,
        }
    }
}

/// Text printed by a command plus whether the claim it checks holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub text: String,
    pub ok: bool,
}

impl Output {
    pub fn ok(text: impl Into<String>) -> Self {
        Output { text: text.into(), ok: true }
    }

    pub fn exit_code(&self) -> i32 {
        if self.ok {
            0
        } else {
            1
        }
    }
}
