//! Local ODNS stub resolver.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::Context;
use clap::Parser;
use odns::config::{self, StubConfig};
use odns::core::policy::{FallbackMode, Striping};
use odns::core::DnsName;
use odns::stub::Stub;

/// Accepts ordinary DNS queries and resolves them through ODNS.
///
/// Settings come from `--config` first; flags override them.
#[derive(Parser, Debug)]
#[command(name = "odns-stub", version)]
struct Args {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Address to serve clients on [default: 127.0.0.1:5300].
    #[arg(long)]
    listen: Option<SocketAddr>,
    /// Recursive resolver(s) to send ODNS queries through; comma-separated.
    #[arg(long, value_delimiter = ',')]
    recursive: Vec<SocketAddr>,
    /// Zone the ODNS resolver is authoritative for.
    #[arg(long)]
    suffix: Option<DnsName>,
    /// What to do when a query cannot go through ODNS: `formerr` or
    /// `conventional` (plaintext lookup).
    #[arg(long)]
    fallback: Option<FallbackMode>,
    /// Recursive selection: `single` or `round_robin`.
    #[arg(long)]
    stripe: Option<Striping>,
    /// Identity refresh interval, e.g. `7d`.
    #[arg(long, value_parser = humantime::parse_duration)]
    refresh: Option<Duration>,
    /// Per-attempt upstream timeout, e.g. `2s`.
    #[arg(long, value_parser = humantime::parse_duration)]
    timeout: Option<Duration>,
}

fn build_config(args: Args) -> anyhow::Result<StubConfig> {
    let mut cfg = match &args.config {
        Some(path) => StubConfig::from_file(path)?,
        None => StubConfig::new(Vec::new(), config::DEFAULT_SUFFIX.parse()?),
    };
    if let Some(v) = args.listen {
        cfg.listen_address = v;
    }
    if !args.recursive.is_empty() {
        cfg.recursive_addresses = args.recursive;
    }
    if let Some(v) = args.suffix {
        cfg.odns_suffix = v;
    }
    if let Some(v) = args.fallback {
        cfg.fallback_mode = v;
    }
    if let Some(v) = args.stripe {
        cfg.striping = v;
    }
    if let Some(v) = args.refresh {
        cfg.bootstrap_refresh_interval = v;
    }
    if let Some(v) = args.timeout {
        cfg.query_timeout = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    odns::init_logging();
    let cfg = build_config(Args::parse())?;
    let socket = tokio::net::UdpSocket::bind(cfg.listen_address)
        .await
        .with_context(|| format!("binding {}", cfg.listen_address))?;
    tracing::info!(
        listen = %socket.local_addr()?,
        recursives = ?cfg.recursive_addresses,
        suffix = %cfg.odns_suffix,
        fallback = %cfg.fallback_mode,
        "stub serving"
    );
    Stub::new(cfg).serve(socket).await?;
    Ok(())
}
