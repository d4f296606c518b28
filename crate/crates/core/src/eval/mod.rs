//! Metrics and experiment drivers: feature prediction error, test preference
//! accuracy, nearest/farthest retrieval, held-out responders, and sweeps.

pub mod fpe;
pub mod heldout;
pub mod methods;
pub mod retrieve;
pub mod split;
pub mod sweep;
pub mod tpa;

pub use fpe::{fpe, FpeReport};
pub use heldout::{heldout_eval, HeldoutConfig, HeldoutReport, ResponderData};
pub use methods::{build_embedding, Method};
pub use retrieve::retrieve_extremes;
pub use sweep::{run_sweep, SweepConfig, SweepOutcome, SweepRow};
pub use tpa::{tpa, TpaConfig, TpaReport};
