//! Command-line front end and HTTP service for design-space navigation.

pub mod commands;
pub mod server;
