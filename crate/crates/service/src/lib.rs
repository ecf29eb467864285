//! HTTP service and CLI around the `nl2bi-core` query pipeline.

pub mod backend;
pub mod cli;
pub mod config;
pub mod engine;
pub mod http;
pub mod problem;
pub mod store;
