//! Command-line pipeline and HTTP service on top of `gnssrag-core`.

pub mod app;
pub mod bench;
pub mod config;
pub mod error;
pub mod indexing;
pub mod pipeline;
pub mod projection;
pub mod service;

pub use error::{AppError, Stage};
