//! Travel-time factorization model (TTFM) for lunch-visit panels.
//!
//! The crate turns raw location pings into restaurant-visit panels, fits a
//! hierarchical Bayesian discrete-choice model of where people eat lunch, and
//! answers counterfactual questions (what happens to nearby demand when a
//! restaurant closes, where would a concept do best) from the fitted
//! posterior.
//!
//! See the guide under `book/` for a narrative walkthrough of each stage.

pub mod counterfactual;
pub mod data;
pub mod error;
pub mod eval;
pub mod geo;
pub mod inference;
pub mod io;
pub(crate) mod math;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
