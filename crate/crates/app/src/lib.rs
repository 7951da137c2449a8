//! Command-line tool and HTTP service around the `spheretopic` engine.

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod jobs;
pub mod service;
pub mod store;

pub use error::{AppError, AppResult};

/// Version stamped on every JSON response and stored record.
pub const SCHEMA_VERSION: u32 = 1;
