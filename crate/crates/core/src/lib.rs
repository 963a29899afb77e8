//! Spatial single-cell analysis engine.

pub mod api;
pub mod clustering;
pub mod error;
pub mod graph;
pub mod ingest;
pub mod par;
pub mod spatial;
pub mod stats;
pub mod summaries;
pub mod transforms;
pub mod table;

pub use error::{Error, Result};
pub use table::{CellTable, Matrix};
