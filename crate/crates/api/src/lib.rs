//! HTTP API and command line over the twai workbench.

pub mod cli;
pub mod config;
pub mod error;
pub mod http;

pub use error::{ApiError, ERROR_CODES};
pub use http::router;
