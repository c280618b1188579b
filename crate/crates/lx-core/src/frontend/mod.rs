//! Surface syntax: lexer, AST, recursive descent parser, datatype
//! expansion, and canonical printer. `parse_program` is the entry point the
//! rest of the crate uses; `expand_adts` runs immediately after it.

pub mod ast;
pub mod expand;
pub mod parser;
pub mod render;
pub mod token;

pub use expand::expand_adts;
pub use parser::{parse_program, ParseResult};
pub use render::{render_expr, render_program, render_type};
