//! Model language front-end: parsing, flattening of module instances, symbol
//! classification and extraction of the mode-labeled incidence structure.
//!
//! Symbols are classified by declaration: `boolean` declarations are mode
//! variables, `real` declarations are unknowns and `constant ... : real`
//! declarations are parameters, measured signals or fault signals. Faults are
//! recognized by a name prefix (`f_` for fault signals, `F_` for Boolean
//! faults) unless an explicit list is configured.

pub mod ast;
pub mod config;
pub mod flatten;
pub mod lexer;
pub mod parser;
pub mod structure;

use std::fmt;
use std::path::Path;

pub use ast::SourceModel;
pub use config::ModelConfig;
pub use flatten::{
    flatten, flatten_with, Approach, FaultInfo, FlatEquation, FlatExpr, FlatModel, FlattenOptions,
};
pub use lexer::Pos;
pub use parser::{parse, parse_file};
pub use structure::{extract_structure, Edge, LabeledGraph};

use crate::boolfn::BddError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub pos: Pos,
    pub message: String,
    pub file: Option<String>,
}

impl ParseError {
    pub fn new(pos: Pos, message: impl Into<String>) -> Self {
        ParseError {
            pos,
            message: message.into(),
            file: None,
        }
    }

    pub fn in_file(mut self, path: &Path) -> Self {
        self.file = Some(path.display().to_string());
        self
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.file {
            Some(file) => write!(f, "{file}:{}: {}", self.pos, self.message),
            None => write!(f, "{}: {}", self.pos, self.message),
        }
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("syntax error at {0}")]
    Parse(#[from] ParseError),
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unresolved parameter `{name}` at {pos}")]
    UnresolvedParameter { name: String, pos: Pos },
    #[error("index {index} of `{name}` outside its declared range {lo} .. {hi} at {pos}")]
    IndexOutOfRange {
        name: String,
        index: i64,
        lo: i64,
        hi: i64,
        pos: Pos,
    },
    #[error("{message} at {pos}")]
    Semantic { message: String, pos: Pos },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Bdd(#[from] BddError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Reads, parses and flattens a model file.
pub fn load_model(path: &Path, options: &FlattenOptions) -> Result<FlatModel, ModelError> {
    let ast = parse_file(path)?;
    flatten_with(&ast, options)
}
