//! Ontology-grounded construction of four-quadrant clinical statement
//! benchmarks, their evaluation, and risk-aware preference training of a
//! small log-linear verifier.

pub mod corpus;
pub mod error;
pub mod fixtures;
pub mod metrics;
pub mod forge;
pub mod ontology;
pub mod par;
pub mod pipeline;
pub mod quadrant;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use quadrant::Quadrant;
