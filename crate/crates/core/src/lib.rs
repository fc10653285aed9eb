//! Multi-scale message passing neural PDE solver.
//!
//! Ground-truth generation for three periodic 1D benchmarks (inviscid
//! Burgers, forced viscous Burgers and a two-speed advection system), a
//! binary dataset format, the six encoder/processor model variants, the
//! autoregressive training loop with pushforward truncation and the
//! trajectory-level relative L2 evaluation.

pub mod error;
pub mod nn;

pub use error::{Error, Result};
pub mod experiment;
pub mod solvers;

pub use experiment::{Experiment, Split, SplitSizes};
pub mod datasets;
pub mod graph;
pub mod model;
pub mod evaluation;
pub mod training;
