//! Diagnostics: crypto microbenchmarks, QNAME length analysis and recursive
//! compatibility probing.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand};
use odns::config::DEFAULT_SUFFIX;
use odns::core::DnsName;
use odns::diag::{analyze_qnames, bench_crypto, bench_csv, probe_recursive, read_domain_list};

#[derive(Parser, Debug)]
#[command(name = "odns-diag", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Time each per-query cryptographic operation.
    Bench {
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        /// CSV output; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate encrypted QNAME lengths for a list of domains.
    Qnames {
        /// One domain per line.
        #[arg(long)]
        list: PathBuf,
        #[arg(long, default_value = DEFAULT_SUFFIX)]
        suffix: DnsName,
        /// Leave out the 32-character resolver label the stub normally adds.
        #[arg(long)]
        no_resolver_label: bool,
        /// Histogram CSV; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check what a recursive does to ECS, QNAME case and EDNS options,
    /// using an `odns-resolver --echo-observer` instance as the authority.
    Probe {
        #[arg(long)]
        recursive: SocketAddr,
        #[arg(long)]
        observer: SocketAddr,
        /// Zone the observer serves; the recursive must route it there.
        #[arg(long, default_value = DEFAULT_SUFFIX)]
        zone: DnsName,
        #[arg(long, default_value = "2s", value_parser = humantime::parse_duration)]
        timeout: Duration,
    },
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Bench { iters, out } => {
            let rows = bench_crypto(iters)?;
            let total: f64 = rows.iter().map(|r| r.median_us).sum();
            emit(out.as_deref(), &bench_csv(&rows))?;
            eprintln!("sum of medians: {total:.1} us");
        }
        Command::Qnames {
            list,
            suffix,
            no_resolver_label,
            out,
        } => {
            let domains = read_domain_list(&list)?;
            let report = analyze_qnames(&domains, &suffix, !no_resolver_label);
            emit(out.as_deref(), &report.histogram_csv())?;
            eprintln!(
                "{} of {} domains oversize ({:.3}%)",
                report.oversize,
                report.total(),
                100.0 * report.oversize_fraction()
            );
        }
        Command::Probe {
            recursive,
            observer,
            zone,
            timeout,
        } => {
            let runtime = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
            let report = runtime.block_on(probe_recursive(recursive, observer, &zone, timeout))?;
            println!("forwards_ecs={}", report.forwards_ecs);
            println!("applies_0x20={}", report.applies_0x20);
            println!("strips_additional={}", report.strips_additional);
        }
    }
    Ok(())
}
