//! Trace-driven simulation of a recursive resolver's cache under partial
//! ODNS adoption.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use odns::core::sim::{PreparedTrace, SimConfig, SimResult, SweepRow, DEFAULT_ASSUMED_TTL};
use odns::trace::{generate_trace, load_trace, parallel_sweep, write_trace, TraceSpec};

/// Clients are assigned to ODNS by a seeded hash of their id compared with
/// the fraction, so with a fixed seed the ODNS clients at a smaller fraction
/// are always a subset of those at a larger one.
#[derive(Parser, Debug)]
#[command(name = "odns-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one configuration.
    Run {
        #[arg(long)]
        trace: PathBuf,
        /// Fraction of clients using ODNS, in [0, 1].
        #[arg(long)]
        fraction: f64,
        /// Recursive cache capacity in entries; 0 is unbounded.
        #[arg(long, default_value_t = 0)]
        capacity: usize,
        /// TTL in seconds applied to every cache entry.
        #[arg(long, default_value_t = DEFAULT_ASSUMED_TTL)]
        ttl: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// CSV output; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate every fraction x capacity combination.
    Sweep {
        #[arg(long)]
        trace: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1"
        )]
        fractions: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "100000")]
        capacities: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_ASSUMED_TTL)]
        ttl: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic trace with Zipf domain popularity.
    GenTrace {
        #[arg(long, default_value_t = 10_000)]
        clients: usize,
        #[arg(long, default_value_t = 1_000_000)]
        queries: usize,
        #[arg(long, default_value_t = 1.0)]
        zipf: f64,
        /// Size of the domain pool.
        #[arg(long, default_value_t = 100_000)]
        names: usize,
        /// Trace length in seconds.
        #[arg(long, default_value_t = 86_400.0)]
        duration: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load(path: &Path) -> anyhow::Result<PreparedTrace> {
    let parsed = load_trace(path)?;
    if parsed.skipped > 0 {
        eprintln!("skipped {} malformed lines", parsed.skipped);
    }
    Ok(PreparedTrace::new(&parsed.records))
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run {
            trace,
            fraction,
            capacity,
            ttl,
            seed,
            out,
        } => {
            let prepared = load(&trace)?;
            let result = prepared.run(&SimConfig {
                odns_fraction: fraction,
                recursive_cache_capacity: capacity,
                assumed_ttl: ttl,
                rng_seed: seed,
            })?;
            emit(
                out.as_deref(),
                &format!("{}\n{}\n", SimResult::CSV_HEADER, result.to_csv_fields()),
            )
        }
        Command::Sweep {
            trace,
            fractions,
            capacities,
            ttl,
            seed,
            out,
        } => {
            let prepared = load(&trace)?;
            let rows = parallel_sweep(&prepared, &fractions, &capacities, ttl, seed)?;
            let mut text = format!("{}\n", SweepRow::CSV_HEADER);
            for row in rows {
                text.push_str(&row.to_csv_line());
                text.push('\n');
            }
            emit(out.as_deref(), &text)
        }
        Command::GenTrace {
            clients,
            queries,
            zipf,
            names,
            duration,
            seed,
            out,
        } => {
            let records = generate_trace(&TraceSpec {
                clients,
                queries,
                zipf_s: zipf,
                names,
                duration_secs: duration,
                seed,
                ..TraceSpec::default()
            })?;
            write_trace(&out, &records)?;
            Ok(())
        }
    }
}
