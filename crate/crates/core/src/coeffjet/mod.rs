//! Coefficient expressions and their Taylor jets.
//!
//! Expressions are parsed once and then propagated through truncated
//! multivariate Taylor arithmetic to obtain the derivatives `D^l a(x^E)`
//! consumed by the quasi-Trefftz recursion.

mod expr;
mod jet;

pub use expr::{parse, BinOp, Expr, Func};
pub use jet::{jet_derivative, jet_eval, Jet, JetLayout};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at offset {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown identifier '{name}' at offset {position}")]
    UnknownIdentifier { name: String, position: usize },
    #[error("function '{name}' at offset {position} takes {expected} argument(s), got {found}")]
    ArityMismatch { name: String, expected: usize, found: usize, position: usize },
    #[error("expression is singular at the expansion point: {0}")]
    SingularPoint(String),
    #[error("derivative of order {requested} requested from a jet of order {order}")]
    OrderExceeded { requested: usize, order: usize },
}
