//! Symbolic semantics for operation-expression (OE) programs.

pub mod diag;
pub mod expr;
pub mod syntax;
pub mod semantics;
pub mod calculus;
pub mod funcsem;
pub mod interp;
pub mod par;
pub mod pointers;
