//! Empirical coordination with two descriptions over finite alphabets.
//!
//! The crate evaluates the two inner bounds on the rate region for
//! coordinating an action `Y` with a source `X` through two rate-limited
//! descriptions, and runs the matching random-coding schemes at small
//! blocklength to measure how close the realized joint type gets to the
//! target distribution when one, the other, or both descriptions arrive.
//!
//! Modules:
//! - [`probability`]: tables, types, total variation, information measures.
//! - [`typicality`]: strong typicality and its closed-form bounds.
//! - [`coding`]: codebooks, the typicality encoder, the three decoders.
//! - [`region`]: rate constraints, feasibility, frontier search.
//! - [`montecarlo`]: seeded simulation of the coding schemes.

pub mod coding;
pub mod error;
pub mod montecarlo;
pub mod probability;
pub mod region;
pub mod seeding;
pub mod typicality;

pub use error::{Error, Result};
