//! Networked ODNS: the stub and resolver daemons, configuration files,
//! trace tooling and diagnostics built on `odns-core`.

pub mod config;
pub mod diag;
pub mod net;
pub mod observer;
pub mod resolver;
pub mod stub;
pub mod testnet;
pub mod trace;

pub use odns_core as core;

/// Installs a `tracing` subscriber writing to stderr, filtered by
/// `RUST_LOG` (default `info`).
pub fn init_logging() {
    use tracing_subscriber::EnvFilter;
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}
