pub mod classify;
pub mod context;
pub mod detector;
pub mod digest;
pub mod fixture;
pub mod ingest;
pub mod lineage;
pub mod model;
pub mod pipeline;
pub mod stats;
pub mod tracegraph;

#[cfg(test)]
#[path = "../tests/support/keccak_oracle.rs"]
mod keccak_oracle;
