//! Query traces: loading CSV files, generating seeded synthetic traces, and
//! running simulation sweeps across threads.

use std::collections::HashSet;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use odns_core::sim::{self, ParsedTrace, PreparedTrace, SimConfig, SimError, SweepRow, TraceRecord, TRACE_HEADER};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Exp, LogNormal, Zipf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace file not found: {0}")]
    FileNotFound(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("invalid trace parameters: {0}")]
    InvalidSpec(&'static str),
}

/// Reads and validates a `timestamp,client_id,qname,qtype` CSV file.
pub fn load_trace(path: &Path) -> Result<ParsedTrace, TraceError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => TraceError::FileNotFound(path.display().to_string()),
        _ => TraceError::Io(e),
    })?;
    Ok(sim::parse_trace(&text)?)
}

pub fn write_trace(path: &Path, records: &[TraceRecord]) -> io::Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{TRACE_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.to_csv_line())?;
    }
    out.flush()
}

/// Parameters for [`generate_trace`].
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSpec {
    pub clients: usize,
    pub queries: usize,
    /// Zipf exponent of domain popularity.
    pub zipf_s: f64,
    /// Size of the domain pool popularity is drawn over.
    pub names: usize,
    /// Trace length in seconds; arrivals are a Poisson process over it.
    pub duration_secs: f64,
    /// Spread of per-client activity (sigma of a log-normal weight).
    pub activity_sigma: f64,
    pub seed: u64,
}

impl Default for TraceSpec {
    fn default() -> Self {
        Self {
            clients: 10_000,
            queries: 1_000_000,
            zipf_s: 1.0,
            names: 100_000,
            duration_secs: 86_400.0,
            activity_sigma: 1.0,
            seed: 1,
        }
    }
}

const SYLLABLES: [&str; 32] = [
    "ba", "ce", "di", "fo", "gu", "ha", "je", "ki", "lo", "mu", "na", "pe", "qui", "ro", "su", "ta", "ve", "wi", "xo",
    "yu", "za", "bri", "cla", "dro", "fle", "gri", "plo", "sna", "tre", "vor", "ster", "nix",
];
const TLDS: [&str; 8] = ["com", "net", "org", "io", "de", "co.uk", "info", "tv"];

/// A pool of `n` distinct, deterministic domain names. Index 0 is the most
/// popular under a Zipf draw.
pub fn domain_pool(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x646f_6d61_696e);
    let mut seen = HashSet::with_capacity(n);
    let mut pool = Vec::with_capacity(n);
    while pool.len() < n {
        let words = rng.gen_range(2..=4);
        let mut name: String = (0..words)
            .map(|_| SYLLABLES[rng.gen_range(0..SYLLABLES.len())])
            .collect();
        if rng.gen_bool(0.2) {
            name = format!("www.{name}");
        }
        let name = format!("{name}.{}", TLDS[rng.gen_range(0..TLDS.len())]);
        if seen.insert(name.clone()) {
            pool.push(name);
        }
    }
    pool
}

/// Generates a trace with Zipf-distributed domain popularity, log-normal
/// per-client activity and exponential inter-arrival times. Only A queries.
pub fn generate_trace(spec: &TraceSpec) -> Result<Vec<TraceRecord>, TraceError> {
    if spec.clients == 0 || spec.names == 0 {
        return Err(TraceError::InvalidSpec("clients and names must be positive"));
    }
    if spec.queries == 0 || spec.duration_secs <= 0.0 {
        return Err(TraceError::InvalidSpec("queries and duration must be positive"));
    }
    let zipf = Zipf::new(spec.names as u64, spec.zipf_s).map_err(|_| TraceError::InvalidSpec("zipf exponent"))?;
    let activity = LogNormal::new(0.0, spec.activity_sigma).map_err(|_| TraceError::InvalidSpec("activity sigma"))?;
    let gap = Exp::new(spec.queries as f64 / spec.duration_secs).map_err(|_| TraceError::InvalidSpec("rate"))?;

    let pool = domain_pool(spec.names, spec.seed);
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let weights: Vec<f64> = (0..spec.clients).map(|_| activity.sample(&mut rng)).collect();
    let pick_client = WeightedIndex::new(&weights).map_err(|_| TraceError::InvalidSpec("client weights"))?;
    let client_ids: Vec<String> = (0..spec.clients).map(|i| format!("c{i:06}")).collect();

    let mut t = 0.0f64;
    let mut records = Vec::with_capacity(spec.queries);
    for _ in 0..spec.queries {
        t += gap.sample(&mut rng);
        let rank = zipf.sample(&mut rng) as usize;
        records.push(TraceRecord {
            timestamp: (t * 1000.0).round() / 1000.0,
            client_id: client_ids[pick_client.sample(&mut rng)].clone(),
            qname: pool[rank - 1].clone(),
            qtype: 1,
        });
    }
    Ok(records)
}

/// Same rows as [`sim::sweep`], with configurations spread over threads.
pub fn parallel_sweep(
    trace: &PreparedTrace,
    fractions: &[f64],
    capacities: &[usize],
    assumed_ttl: u64,
    seed: u64,
) -> Result<Vec<SweepRow>, SimError> {
    let configs: Vec<SimConfig> = fractions
        .iter()
        .flat_map(|&odns_fraction| {
            capacities.iter().map(move |&recursive_cache_capacity| SimConfig {
                odns_fraction,
                recursive_cache_capacity,
                assumed_ttl,
                rng_seed: seed,
            })
        })
        .collect();
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(configs.len().max(1));
    let chunk = configs.len().div_ceil(workers).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|config| {
                            trace.run(config).map(|result| SweepRow {
                                config: *config,
                                result,
                            })
                        })
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        let mut rows = Vec::with_capacity(configs.len());
        for h in handles {
            rows.extend(h.join().expect("sweep worker panicked")?);
        }
        Ok(rows)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TraceSpec {
        TraceSpec {
            clients: 50,
            queries: 5_000,
            names: 1_000,
            ..TraceSpec::default()
        }
    }

    #[test]
    fn generation_is_deterministic_and_ordered() {
        let a = generate_trace(&small()).unwrap();
        let b = generate_trace(&small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5_000);
        assert!(a.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        let c = generate_trace(&TraceSpec { seed: 2, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn popularity_is_skewed() {
        let trace = generate_trace(&small()).unwrap();
        let pool = domain_pool(1_000, small().seed);
        let top = trace.iter().filter(|r| r.qname == pool[0]).count();
        let tail = trace.iter().filter(|r| r.qname == pool[999]).count();
        // rank 1 gets about 1/H(1000) = 13% of queries under s = 1
        assert!(top > 400, "top name drew {top}");
        assert!(tail < top / 50);
    }

    #[test]
    fn pool_names_are_distinct_and_valid() {
        let pool = domain_pool(5_000, 9);
        let set: HashSet<_> = pool.iter().collect();
        assert_eq!(set.len(), pool.len());
        for name in &pool {
            name.parse::<odns_core::DnsName>().unwrap();
            assert_eq!(name, &name.to_ascii_lowercase());
        }
    }

    #[test]
    fn round_trips_through_csv() {
        let records = generate_trace(&TraceSpec {
            queries: 200,
            ..small()
        })
        .unwrap();
        let dir = std::env::temp_dir().join(format!("odns-trace-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.csv");
        write_trace(&path, &records).unwrap();
        let parsed = load_trace(&path).unwrap();
        assert_eq!(parsed.records, records);
        assert_eq!(parsed.skipped, 0);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn missing_file_is_reported() {
        assert!(matches!(
            load_trace(Path::new("/nonexistent/trace.csv")),
            Err(TraceError::FileNotFound(_))
        ));
    }

    #[test]
    fn parallel_sweep_matches_sequential() {
        let records = generate_trace(&small()).unwrap();
        let prepared = PreparedTrace::new(&records);
        let fractions = [0.0, 0.3, 0.7, 1.0];
        let caps = [0, 100];
        let seq = sim::sweep(&prepared, &fractions, &caps, 3600, 5).unwrap();
        let par = parallel_sweep(&prepared, &fractions, &caps, 3600, 5).unwrap();
        assert_eq!(seq, par);
    }
}
