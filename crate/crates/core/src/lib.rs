//! Random DeGroot opinion dynamics: stochastic matrices, random interaction
//! generators, consensus and influence estimation, the wisdom-of-crowds
//! laboratory and fragmentation analysis of realized networks.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod fragmentation;
pub mod generators;
pub mod matrix;
pub mod report;
pub mod seed;
pub mod stats;
pub mod wisdom;

pub use error::{Error, Result};
pub use fragmentation::{Graph, GraphDistribution};
pub use generators::{Dependence, GeneratorSpec, GeneratorState, SupportDescriptor};
pub use matrix::{SkeletonMask, StochasticMatrix};
