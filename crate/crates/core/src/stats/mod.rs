//! Statistical kernels, deployment-cost aggregation and the analysis reports
//! built on them.

mod analyses;
mod cost;
mod kernels;

pub use analyses::*;
pub use cost::*;
pub use kernels::*;
