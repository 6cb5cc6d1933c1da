//! Multi-level integrity calculus: labels, syntax, an abstract machine with
//! flow tracking, a data-flow integrity monitor, and two typecheckers.

pub mod algo;
pub mod decl;
pub mod dfi;
pub mod harness;
pub mod labels;
pub mod machine;
pub mod parser;
pub mod subtype;
pub mod syntax;
