//! Synthetic corpora: hand builders, bytecode templates and the seeded generator.

pub mod builder;
pub mod bytecode;
mod generate;

pub use generate::*;
