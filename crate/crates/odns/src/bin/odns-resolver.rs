//! ODNS resolver: authoritative for the ODNS zone, forwards decrypted
//! queries to upstream recursives.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, Subcommand};
use odns::config::{self, ResolverConfig};
use odns::core::DnsName;
use odns::observer::EchoObserver;
use odns::resolver::{keygen, load_keypair, Resolver};

#[derive(Parser, Debug)]
#[command(name = "odns-resolver", version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    serve: ServeArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a keypair and write it (64 bytes, mode 0600).
    Keygen {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args, Debug)]
struct ServeArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Address to listen on [default: 0.0.0.0:5301].
    #[arg(long)]
    listen: Option<SocketAddr>,
    /// Zone this resolver is authoritative for.
    #[arg(long)]
    zone: Option<DnsName>,
    /// Keypair file written by `keygen`.
    #[arg(long)]
    keypair: Option<PathBuf>,
    /// Upstream recursive(s) for plaintext resolution; comma-separated.
    #[arg(long, value_delimiter = ',')]
    upstream: Vec<SocketAddr>,
    /// Answer cache size in entries; 0 is unbounded.
    #[arg(long)]
    cache_capacity: Option<usize>,
    /// Per-attempt upstream timeout, e.g. `2s`.
    #[arg(long, value_parser = humantime::parse_duration)]
    timeout: Option<Duration>,
    /// Instead of resolving, act as the echo observer for `odns-diag probe`.
    #[arg(long)]
    echo_observer: bool,
}

fn build_config(args: &ServeArgs) -> anyhow::Result<ResolverConfig> {
    let mut cfg = match &args.config {
        Some(path) => ResolverConfig::from_file(path)?,
        None => ResolverConfig::new(config::DEFAULT_SUFFIX.parse()?, Vec::new()),
    };
    if let Some(v) = args.listen {
        cfg.listen_address = v;
    }
    if let Some(v) = &args.zone {
        cfg.zone_suffix = v.clone();
    }
    if let Some(v) = &args.keypair {
        cfg.keypair_path = v.clone();
    }
    if !args.upstream.is_empty() {
        cfg.upstream_addresses = args.upstream.clone();
    }
    if let Some(v) = args.cache_capacity {
        cfg.cache_capacity = v;
    }
    if let Some(v) = args.timeout {
        cfg.query_timeout = v;
    }
    Ok(cfg)
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    odns::init_logging();
    let cli = Cli::parse();
    if let Some(Command::Keygen { out }) = cli.command {
        let keypair = keygen(&out)?;
        println!("{}", odns::core::derive_self_certifying_name(&keypair.public_bytes()));
        return Ok(());
    }

    let cfg = build_config(&cli.serve)?;
    let socket = tokio::net::UdpSocket::bind(cfg.listen_address)
        .await
        .with_context(|| format!("binding {}", cfg.listen_address))?;
    if cli.serve.echo_observer {
        tracing::info!(listen = %socket.local_addr()?, zone = %cfg.zone_suffix, "echo observer serving");
        EchoObserver::new(cfg.zone_suffix).serve(socket).await?;
        return Ok(());
    }

    cfg.validate()?;
    let keypair = load_keypair(&cfg.keypair_path)?;
    let resolver = Resolver::new(cfg, keypair);
    tracing::info!(
        listen = %socket.local_addr()?,
        zone = %resolver.config().zone_suffix,
        label = %resolver.announcement().name_label,
        upstreams = ?resolver.config().upstream_addresses,
        "resolver serving"
    );
    resolver.serve(socket).await?;
    Ok(())
}
