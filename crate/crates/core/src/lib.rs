//! Retinal vessel graph extraction and artery/vein topology estimation.

pub mod clean;
pub mod config;
pub mod contract;
pub mod error;
pub mod eval;
pub mod flow;
pub mod graph;
pub mod grid;
pub mod io;
pub mod pipeline;
pub mod phantom;
pub mod prop;
pub mod skeleton;
pub mod spatial;
pub mod topo;
pub mod track;

pub use error::{Error, Result};
