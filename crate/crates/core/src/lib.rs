pub mod analyses;
pub mod counts;
pub mod dissemination;
pub mod error;
pub mod ingest;
pub mod numstats;
pub mod pipeline;
pub mod series;
pub mod survival;
pub mod synthgen;
pub mod wordsets;

pub use error::{Error, Result};
