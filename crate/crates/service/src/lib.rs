//! Command line and HTTP front ends for the screenshot-to-HTML pipeline.

pub mod backends;
pub mod http;
pub mod session;
