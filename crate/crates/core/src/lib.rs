pub mod describer;
pub mod embedder;
pub mod error;
mod http;
pub mod projection;
pub mod promptkit;
pub mod signalgen;
pub mod tasks;
pub mod vectorstore;
pub use error::{Error, Result};
