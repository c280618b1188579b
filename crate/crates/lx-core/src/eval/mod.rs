//! Runtime values and evaluation.
//!
//! `value` defines the dynamic value model and error outcomes, `num` the
//! arithmetic shared by both interpreters. The IR machine, the functor
//! catalog, and external-data admission live in their own submodules.

pub mod fits;
pub mod functors;
pub mod num;
pub mod surface;
pub mod value;

pub use fits::value_fits;
pub use surface::Interp;
pub use value::{key_cmp, print_value, value_eq, ErrorCode, Outcome, RuntimeError, Value};
