//! A small modelling language: declarations, composite laws over catalog
//! distributions, range loops and arithmetic parameter expressions.
//!
//! ```text
//! model Doomsday {
//!   param RealVar rate
//!   random RealVar y
//!   random RealVar z
//!   laws {
//!     z | rate ~ Exponential(rate)
//!     y | z ~ ContinuousUniform(0.0, z)
//!   }
//! }
//! ```

mod ast;
mod lexer;
mod lower;
mod parser;

use std::fmt;

pub use ast::{BinOp, CompositeLaw, Conditioner, Decl, Expr, Law, Loop, ModelAst, Place, TypeName};
pub use lexer::{tokenize, Token, TokenKind};
pub use lower::{eval_expr, lower, Binding, Bindings, EnvValue};
pub use parser::parse_model;

/// Source position, 1-based. Positions never take part in AST equality.
#[derive(Clone, Copy, Debug, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl PartialEq for Pos {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DslError {
    pub message: String,
    pub pos: Option<Pos>,
    pub file: Option<String>,
}

impl DslError {
    pub fn new(message: impl Into<String>, pos: Option<Pos>) -> Self {
        DslError { message: message.into(), pos, file: None }
    }

    pub fn at(pos: Pos, message: impl Into<String>) -> Self {
        DslError::new(message, Some(pos))
    }

    pub fn in_file(mut self, file: impl Into<String>) -> Self {
        self.file = Some(file.into());
        self
    }
}

impl fmt::Display for DslError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(file) = &self.file {
            write!(f, "{file}:")?;
        }
        if let Some(p) = self.pos {
            write!(f, "{p}: ")?;
        }
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for DslError {}

/// Parses and lowers in one go; errors carry `file` for `file:line:col` reporting.
pub fn compile(source: &str, file: &str, bindings: &Bindings) -> Result<crate::model::Model, DslError> {
    let ast = parse_model(source).map_err(|e| e.in_file(file))?;
    lower(&ast, bindings).map_err(|e| e.in_file(file))
}
