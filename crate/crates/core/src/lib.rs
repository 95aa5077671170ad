//! Evolution strategies with population-based directed exploration.
//!
//! Four algorithms over one deterministic worker/coordinator core: plain
//! rank-based ES, novelty-only NS-ES, the even novelty/reward blend NSR-ES,
//! and NSRA-ES with an adaptively weighted blend. Perturbations are slices of
//! a shared Gaussian noise table, workers return scalar (fitness, novelty)
//! pairs in sample order, and every random decision draws from a stream
//! derived from `(run_seed, generation, agent, sample)`, so runs replay
//! byte-identically for any worker count.

pub mod archive;
pub mod config;
pub mod env;
pub mod error;
pub mod es;
pub mod exec;
pub mod explore;
pub mod noise;
pub mod policy;
pub mod rng;
pub mod runner;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
