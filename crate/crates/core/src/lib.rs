//! Similarity-based implicit representation learning.
//!
//! A trajectory embedding is trained from triplet similarity answers ("which
//! two of these three are most alike?"), then reused as the input space for
//! many Bradley-Terry reward models learned from pairwise preferences.

pub mod config;
pub mod env;
pub mod eval;
pub mod error;
pub mod manifest;
pub mod oracle;
pub mod representation;
pub mod reward;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
