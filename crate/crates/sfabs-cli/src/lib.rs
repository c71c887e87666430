//! File formats, experiment drivers, and CLI plumbing around `sfabs-core`.
//!
//! The core crate is IO-free; everything that reads or writes JSON/CSV, talks
//! to a thread pool, or measures wall-clock time lives here.

pub mod experiment;
pub mod io;
pub mod schema;
pub mod sweep;
