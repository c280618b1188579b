//! Core of the lx language stack.
//!
//! lx is a small reasoning-oriented language: a block-structured surface
//! syntax with typed literals, flow-typing operators, and algebraic data
//! types, lowered into a loop-free, let-bound, first-order intermediate
//! representation. The IR has a total deterministic evaluator and a bounded
//! checker that searches for inputs triggering any runtime error site by
//! emitting SMTLIB2 queries.
//!
//! This crate is `no_std` (alloc required) and performs no IO. The `lx`
//! companion crate carries the CLI, file handling, and subprocess solver
//! plumbing.
//!
//! Pipeline overview:
//!
//! ```text
//! source text -(frontend)-> SurfaceProgram -(types)-> HIR
//!             -(lowering)-> IRProgram -(eval | verify | harness)
//! ```

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod diag;
pub mod eval;
pub mod frontend;
pub mod hir;
pub mod ir;
pub mod rx;
pub mod samples;
pub mod types;
