//! Command line and HTTP service for the ClustCube engine.
//!
//! - [`commands`]: the `clustcube` command line
//! - [`server`]: the `/api` JSON service
//! - [`workspace`]: data directory layout, cuboid definitions, saved cubes

pub mod commands;
pub mod error;
pub mod server;
pub mod views;
pub mod workspace;

pub use commands::run;
pub use error::AppError;

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
