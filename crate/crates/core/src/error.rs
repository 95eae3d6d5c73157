use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// A validation problem attached to one non-terminal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub nonterminal: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(nonterminal: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic { nonterminal: nonterminal.into(), message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.nonterminal.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.nonterminal, self.message)
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid model: {}", join(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("{0}")]
    Structure(String),
    #[error("`{0}` is not in simple normal form")]
    NotSnf(String),
    #[error("unknown non-terminal `{0}`")]
    UnknownNonTerminal(String),
    #[error("`{0}` is an auxiliary introduced by normalization")]
    Auxiliary(String),
    #[error("`{0}` has no witness: it is not in the required set")]
    NoWitness(String),
    #[error("strategy: {0}")]
    Strategy(String),
    #[error("query: {0}")]
    Query(String),
    #[error("dimacs line {line}: {message}")]
    Dimacs { line: usize, message: String },
}

fn join(d: &[Diagnostic]) -> String {
    d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
