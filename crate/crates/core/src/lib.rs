//! Seeded mechanistic simulators for generating labelled synthetic corpora.
//!
//! The crate covers four simulator families (epidemics, ecology, reaction yields,
//! diffusion cascades), the surveillance observation model, analytic baselines and
//! evaluation metrics, embedding-based attribution retrieval, and the binary corpus
//! container the generators write into.

pub mod attribution;
pub mod cascade;
pub mod chem;
pub mod corpus;
pub mod eco;
pub mod epi;
pub mod error;
pub mod metrics;
pub mod observation;
pub mod stochastics;

pub use error::{Error, Result};
