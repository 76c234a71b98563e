//! Command-line pipeline and HTTP prediction service.

pub mod cli;
pub mod pipeline;
pub mod service;
