//! Probabilistic models as factor graphs, with annealed samplers.

pub mod anneal;
pub mod dists;
pub mod dsl;
pub mod math;
pub mod model;
pub mod models;
pub mod pt;
pub mod rng;
pub mod samplers;
pub mod scm;
pub mod testkit;
