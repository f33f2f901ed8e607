//! Branching random walks seeded by a Poisson process of intensity
//! c e^{-lambda x} dx: analytics of the Laplace exponent, simulation in
//! an observation window, backward-tree diagnostics and statistics.

pub mod analytics;
pub mod backward_tree;
pub mod cli;
pub mod config;
pub mod error;
pub mod model;
pub mod report;
pub mod rng;
pub mod simulator;
mod spine;
pub mod statistics;
pub mod table;

pub use analytics::{Classification, Criticality, LaplaceProfile, Verdict};
pub use error::{Error, Result};
pub use model::{ClusterModel, CountLaw, DisplacementLaw};
