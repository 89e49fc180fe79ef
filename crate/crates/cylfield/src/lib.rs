//! File formats, threaded execution and the `cylfield` command line on top
//! of the `no_std` core.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod ppm;
pub mod threads;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use model::{AnyField, Model};
pub use threads::Threaded;

/// Configures logging from `CYLFIELD_LOG` (`quiet`, `info` or `debug`; default `info`).
pub fn init_logging() {
    let level = match std::env::var("CYLFIELD_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Error,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Info,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .try_init();
}
