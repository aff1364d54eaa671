//! Textual front-end for the schema DSL.
//!
//! The grammar follows the four instruction forms, one statement per line:
//!
//! ```text
//! l1: x = f(y, a[i + 1]) then l2;
//! l2: if p(x) then l3 else lf;
//! l3: do Body while p(x) then lf;
//! l4: do Helper then lf;
//! lk: for (k = 1; k < N + 1; k++) { ... }
//! proc Body { final bf;  b1: x = g(x) then bf; }
//! final lf;
//! ```
//!
//! `//` starts a comment. Identifiers are ASCII letters, digits and
//! underscores, starting with a letter; names beginning with `$` are the
//! interpreted builtins, and `'name` is a label literal. A counted `for`
//! block is sugar for a loop instruction with an interpreted counter; its
//! body is an anonymous procedure and its successor is the next statement
//! in the block (or the block's final label). The final label may be
//! declared with `final`; otherwise it is derived as the unique output
//! label that is not an input label.

pub(crate) mod lex;
mod parse;
mod print;

pub use parse::parse_schema;
pub use print::{index_expr_text, pretty_print, variable_text};

use std::fmt;

use serde::Serialize;

/// A location in the input text, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
    pub length: usize,
}

impl SourceSpan {
    pub fn new(line: usize, column: usize, length: usize) -> Self {
        SourceSpan {
            line,
            column,
            length,
        }
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{span}: {message}")]
pub struct ParseError {
    pub span: SourceSpan,
    pub message: String,
}

impl ParseError {
    pub fn new(span: SourceSpan, message: impl Into<String>) -> Self {
        ParseError {
            span,
            message: message.into(),
        }
    }
}
