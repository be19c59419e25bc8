//! Command-line tools and the local HTTP service.

pub mod cli;
pub mod jobs;
pub mod server;
pub mod store;

pub use cli::run;
