//! Loop dependence analysis toolkit for program schemas.
//!
//! A *schema* is an uninterpreted program: instructions over function and
//! predicate symbols that only become executable once the symbols receive
//! interpretations together with start data. This crate provides:
//!
//! - [`schema`]: the core data model (instructions, variables, index
//!   expressions) with validation and the Ind/Arg/Val variable-set calculus;
//! - [`text`]: a textual DSL, parser and canonical pretty-printer;
//! - [`interp`]: execution under concrete integer interpretations and under
//!   the symbolic term-level ("Herbrand") interpretation driven by a
//!   predicate diagram, plus a randomized equivalence falsifier;
//! - [`normalize`]: loop-structure checks, goto elimination into a
//!   program-counter loop, forward orientation, and separation of loop
//!   bodies into index controllers plus a kernel;
//! - [`dependence`]: connection equations between loop iterations, an exact
//!   linear Diophantine solver, and an execution-based dependence oracle;
//! - [`parallel`]: predecessor-style programs, dataflow wavefront
//!   scheduling, dependency cones, and hyperplane detection.

pub mod dependence;
pub mod interp;
pub mod normalize;
pub mod parallel;
pub mod schema;
pub mod text;

pub use interp::{Diagram, Interpretation, Memory, Outcome, RunStatus, Term, Value};
pub use schema::{
    AffineExpr, Arg, AssignRhs, IndexExpr, InstrKind, Instruction, Label, LoopCond, Schema,
    VarSets, Variable,
};
pub use text::{parse_schema, pretty_print, ParseError};
