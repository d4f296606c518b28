//! Labeling sessions over HTTP.
//!
//! Each responder walks through practice similarity queries, recorded
//! similarity queries, practice preference queries, and recorded preference
//! queries. Answers go to an append-only log; exports replay that log into
//! the record format the trainers read.

pub mod api;
pub mod log;
pub mod render;
pub mod session;

pub use api::{router, serve, AppState};
pub use log::{AnswerLog, LogEntry};
pub use render::{render, RenderableTrajectory, SceneObject};
pub use session::{Phase, PlannedQuery, QueryKind, ServiceConfig};
