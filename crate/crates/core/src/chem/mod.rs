//! Reaction-yield generator: structured effects fitted to an empirical
//! screen, rule-based failures, heteroscedastic noise and stratified,
//! calibrated sampling.

pub mod data;
pub mod model;
pub mod standin;

pub use data::*;
pub use model::*;
