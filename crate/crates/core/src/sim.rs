//! Trace-driven simulation of a shared recursive cache under partial ODNS
//! adoption.
//!
//! Every client is either an ODNS client or a conventional one, decided by a
//! seeded hash of its id. ODNS clients keep an unbounded local cache; on a
//! local miss their query reaches the recursive as a never-repeating
//! ciphertext name, so it always misses there and, when the recursive cache
//! is bounded, occupies a slot of its own. Conventional clients have no cache
//! and share the recursive's entries keyed by `(qname, qtype)`.
//!
//! A "bad ejection" is an LRU eviction of a conventional entry caused by
//! inserting an ODNS entry. `bad_ejection_percent` is bad ejections as a
//! share of all evictions.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use hashbrown::HashMap;
use thiserror::Error;

use crate::lru::LruCache;

pub const DEFAULT_ASSUMED_TTL: u64 = 3600;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("trace contains no usable records")]
    EmptyTrace,
    #[error("timestamp decreases at line {line}")]
    InvariantViolation { line: usize },
    #[error("odns fraction {0} outside [0, 1]")]
    InvalidFraction(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// Seconds; non-decreasing through a trace.
    pub timestamp: f64,
    pub client_id: String,
    pub qname: String,
    pub qtype: u16,
}

impl TraceRecord {
    pub fn to_csv_line(&self) -> String {
        format!("{},{},{},{}", self.timestamp, self.client_id, self.qname, self.qtype)
    }
}

pub const TRACE_HEADER: &str = "timestamp,client_id,qname,qtype";

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub records: Vec<TraceRecord>,
    /// Lines that were not four well-formed fields.
    pub skipped: usize,
}

fn parse_qtype(s: &str) -> Option<u16> {
    match s {
        "A" | "a" => Some(1),
        "AAAA" | "aaaa" => Some(28),
        _ => s.parse().ok(),
    }
}

fn parse_line(line: &str) -> Option<TraceRecord> {
    let mut fields = line.split(',');
    let (ts, client, qname, qtype) = (fields.next()?, fields.next()?, fields.next()?, fields.next()?);
    if fields.next().is_some() {
        return None;
    }
    let timestamp: f64 = ts.trim().parse().ok().filter(|t: &f64| t.is_finite() && *t >= 0.0)?;
    let qname = qname.trim();
    let qname = qname.strip_suffix('.').unwrap_or(qname);
    let client = client.trim();
    if qname.is_empty() || client.is_empty() {
        return None;
    }
    Some(TraceRecord {
        timestamp,
        client_id: client.into(),
        qname: qname.to_ascii_lowercase(),
        qtype: parse_qtype(qtype.trim())?,
    })
}

/// Parses `timestamp,client_id,qname,qtype` lines. An optional header line
/// and blank lines are ignored; malformed lines are skipped and counted.
pub fn parse_trace(text: &str) -> Result<ParsedTrace, SimError> {
    let mut records: Vec<TraceRecord> = Vec::new();
    let mut skipped = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("timestamp")) {
            continue;
        }
        match parse_line(line) {
            Some(rec) => {
                if records.last().is_some_and(|prev| rec.timestamp < prev.timestamp) {
                    return Err(SimError::InvariantViolation { line: i + 1 });
                }
                records.push(rec);
            }
            None => skipped += 1,
        }
    }
    if records.is_empty() {
        return Err(SimError::EmptyTrace);
    }
    Ok(ParsedTrace { records, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub odns_fraction: f64,
    /// Entries; 0 means unbounded.
    pub recursive_cache_capacity: usize,
    /// Seconds every cached entry lives.
    pub assumed_ttl: u64,
    pub rng_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            odns_fraction: 0.0,
            recursive_cache_capacity: 0,
            assumed_ttl: DEFAULT_ASSUMED_TTL,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimResult {
    pub total_queries: u64,
    pub queries_reaching_recursive: u64,
    pub recursive_hits: u64,
    pub recursive_misses: u64,
    pub stub_hits: u64,
    pub bad_ejections: u64,
    pub bad_ejection_percent: f64,
    pub evictions: u64,
    /// Recursive hits on ODNS ciphertext entries.
    pub odns_recursive_hits: u64,
}

impl SimResult {
    pub const CSV_HEADER: &'static str = "total_queries,queries_reaching_recursive,recursive_hits,recursive_misses,stub_hits,bad_ejections,bad_ejection_percent,evictions,odns_recursive_hits";

    pub fn to_csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.6},{},{}",
            self.total_queries,
            self.queries_reaching_recursive,
            self.recursive_hits,
            self.recursive_misses,
            self.stub_hits,
            self.bad_ejections,
            self.bad_ejection_percent,
            self.evictions,
            self.odns_recursive_hits
        )
    }
}

#[derive(Clone, Copy)]
struct Event {
    timestamp: f64,
    client: u32,
    name: u32,
    qtype: u16,
}

/// A trace with names and clients interned, reusable across runs.
pub struct PreparedTrace {
    events: Vec<Event>,
    clients: Vec<String>,
}

impl PreparedTrace {
    pub fn new(records: &[TraceRecord]) -> Self {
        let mut names: HashMap<&str, u32> = HashMap::new();
        let mut client_ids: HashMap<&str, u32> = HashMap::new();
        let mut clients = Vec::new();
        let events = records
            .iter()
            .map(|r| {
                let next = names.len() as u32;
                let name = *names.entry(r.qname.as_str()).or_insert(next);
                let client = *client_ids.entry(r.client_id.as_str()).or_insert_with(|| {
                    clients.push(r.client_id.clone());
                    (clients.len() - 1) as u32
                });
                Event {
                    timestamp: r.timestamp,
                    client,
                    name,
                    qtype: r.qtype,
                }
            })
            .collect();
        Self { events, clients }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn client_count(&self) -> usize {
        self.clients.len()
    }

    pub fn run(&self, cfg: &SimConfig) -> Result<SimResult, SimError> {
        if !(0.0..=1.0).contains(&cfg.odns_fraction) {
            return Err(SimError::InvalidFraction(cfg.odns_fraction));
        }
        if self.events.is_empty() {
            return Err(SimError::EmptyTrace);
        }
        let is_odns: Vec<bool> = self
            .clients
            .iter()
            .map(|c| client_is_odns(cfg.rng_seed, c, cfg.odns_fraction))
            .collect();
        Ok(replay(&self.events, &is_odns, cfg))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum SimKey {
    Plain { name: u32, qtype: u16 },
    Ciphertext(u64),
}

struct SimEntry {
    expires: f64,
    odns: bool,
}

fn replay(events: &[Event], is_odns: &[bool], cfg: &SimConfig) -> SimResult {
    let ttl = cfg.assumed_ttl as f64;
    let bounded = cfg.recursive_cache_capacity > 0;
    let mut stub: HashMap<(u32, u32, u16), f64> = HashMap::new();
    let mut recursive: LruCache<SimKey, SimEntry> = LruCache::new(cfg.recursive_cache_capacity);
    let mut next_ciphertext = 0u64;
    let mut r = SimResult::default();

    for ev in events {
        r.total_queries += 1;
        let now = ev.timestamp;
        if is_odns[ev.client as usize] {
            let local = (ev.client, ev.name, ev.qtype);
            if stub.get(&local).is_some_and(|&exp| now < exp) {
                r.stub_hits += 1;
                continue;
            }
            stub.insert(local, now + ttl);
            r.queries_reaching_recursive += 1;

            let key = SimKey::Ciphertext(next_ciphertext);
            next_ciphertext += 1;
            if recursive.get(&key).is_some_and(|e| now < e.expires) {
                r.recursive_hits += 1;
                r.odns_recursive_hits += 1;
                continue;
            }
            r.recursive_misses += 1;
            if bounded {
                let evicted = recursive.insert(
                    key,
                    SimEntry {
                        expires: now + ttl,
                        odns: true,
                    },
                );
                record_eviction(&mut r, evicted, true);
            }
        } else {
            r.queries_reaching_recursive += 1;
            let key = SimKey::Plain {
                name: ev.name,
                qtype: ev.qtype,
            };
            if recursive.get(&key).is_some_and(|e| now < e.expires) {
                r.recursive_hits += 1;
                continue;
            }
            r.recursive_misses += 1;
            let evicted = recursive.insert(
                key,
                SimEntry {
                    expires: now + ttl,
                    odns: false,
                },
            );
            record_eviction(&mut r, evicted, false);
        }
    }

    r.bad_ejection_percent = if r.evictions == 0 {
        0.0
    } else {
        100.0 * r.bad_ejections as f64 / r.evictions as f64
    };
    r
}

fn record_eviction(r: &mut SimResult, evicted: Option<(SimKey, SimEntry)>, by_odns: bool) {
    if let Some((_, victim)) = evicted {
        r.evictions += 1;
        if by_odns && !victim.odns {
            r.bad_ejections += 1;
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform value in [0, 1) derived from the seed and client id. Since it does
/// not depend on the fraction, ODNS client sets nest as the fraction grows.
pub fn client_draw(seed: u64, client_id: &str) -> f64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in client_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let x = splitmix64(h ^ splitmix64(seed));
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn client_is_odns(seed: u64, client_id: &str, fraction: f64) -> bool {
    client_draw(seed, client_id) < fraction
}

pub fn run_simulation(trace: &[TraceRecord], cfg: &SimConfig) -> Result<SimResult, SimError> {
    PreparedTrace::new(trace).run(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub config: SimConfig,
    pub result: SimResult,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "odns_fraction,capacity,assumed_ttl,seed,total_queries,queries_reaching_recursive,recursive_hits,recursive_misses,stub_hits,bad_ejections,bad_ejection_percent,evictions,odns_recursive_hits";

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.config.odns_fraction,
            self.config.recursive_cache_capacity,
            self.config.assumed_ttl,
            self.config.rng_seed,
            self.result.to_csv_fields()
        )
    }
}

/// Runs every `fraction x capacity` combination with the same seed, in
/// fraction-major order.
pub fn sweep(
    trace: &PreparedTrace,
    fractions: &[f64],
    capacities: &[usize],
    assumed_ttl: u64,
    seed: u64,
) -> Result<Vec<SweepRow>, SimError> {
    let mut rows = Vec::with_capacity(fractions.len() * capacities.len());
    for &odns_fraction in fractions {
        for &recursive_cache_capacity in capacities {
            let config = SimConfig {
                odns_fraction,
                recursive_cache_capacity,
                assumed_ttl,
                rng_seed: seed,
            };
            rows.push(SweepRow {
                result: trace.run(&config)?,
                config,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn rec(ts: f64, client: &str, qname: &str) -> TraceRecord {
        TraceRecord {
            timestamp: ts,
            client_id: client.into(),
            qname: qname.into(),
            qtype: 1,
        }
    }

    #[test]
    fn parses_well_formed_lines() {
        let t = parse_trace("timestamp,client_id,qname,qtype\n0,c1,a.com,1\n1.5,c2,B.com.,A\n2,c1,c.com,28\n").unwrap();
        assert_eq!(t.records.len(), 3);
        assert_eq!(t.skipped, 0);
        assert_eq!(t.records[1].qname, "b.com");
        assert_eq!(t.records[1].qtype, 1);
    }

    #[test]
    fn skips_and_counts_malformed() {
        let t = parse_trace("0,c1,a.com,1\n1,c2,b.com\n2,c3,c.com,1,extra\nx,c,d,1\n3,c1,e.com,1\n").unwrap();
        assert_eq!(t.records.len(), 2);
        assert_eq!(t.skipped, 3);
    }

    #[test]
    fn decreasing_timestamps_rejected() {
        assert_eq!(
            parse_trace("5,c1,a.com,1\n4,c1,b.com,1\n"),
            Err(SimError::InvariantViolation { line: 2 })
        );
        assert_eq!(parse_trace("\n\n"), Err(SimError::EmptyTrace));
    }

    #[test]
    fn zero_fraction_is_plain_shared_cache() {
        let trace = vec![
            rec(0.0, "a", "x.com"),
            rec(1.0, "b", "x.com"),
            rec(2.0, "a", "y.com"),
            rec(5000.0, "b", "x.com"),
        ];
        let r = run_simulation(&trace, &SimConfig::default()).unwrap();
        assert_eq!(r.stub_hits, 0);
        assert_eq!(r.bad_ejections, 0);
        assert_eq!(r.queries_reaching_recursive, 4);
        assert_eq!(r.recursive_hits, 1);
        assert_eq!(r.recursive_misses, 3);
    }

    #[test]
    fn odns_stub_cache_absorbs_repeats() {
        let trace: Vec<_> = (0..10).map(|i| rec(f64::from(i), "solo", "x.com")).collect();
        let cfg = SimConfig {
            odns_fraction: 1.0,
            ..SimConfig::default()
        };
        let r = run_simulation(&trace, &cfg).unwrap();
        assert_eq!(r.queries_reaching_recursive, 1);
        assert_eq!(r.stub_hits, 9);
        assert_eq!(r.recursive_misses, 1);
    }

    #[test]
    fn stub_cache_expires_after_ttl() {
        let trace = vec![
            rec(0.0, "solo", "x.com"),
            rec(3599.0, "solo", "x.com"),
            rec(3600.0, "solo", "x.com"),
        ];
        let cfg = SimConfig {
            odns_fraction: 1.0,
            ..SimConfig::default()
        };
        let r = run_simulation(&trace, &cfg).unwrap();
        assert_eq!(r.stub_hits, 1);
        assert_eq!(r.queries_reaching_recursive, 2);
    }

    #[test]
    fn bad_ejection_counted_when_odns_evicts_plain() {
        // capacity 1: plain entry in, then an ODNS query evicts it.
        let trace = vec![
            rec(0.0, "plain", "x.com"),
            rec(1.0, "odns", "y.com"),
            rec(2.0, "odns", "z.com"),
        ];
        let prepared = PreparedTrace::new(&trace);
        // find a seed/fraction pair that splits the two clients
        let seed = (0..1000u64)
            .find(|&s| client_draw(s, "odns") < 0.5 && client_draw(s, "plain") >= 0.5)
            .unwrap();
        let r = prepared
            .run(&SimConfig {
                odns_fraction: 0.5,
                recursive_cache_capacity: 1,
                assumed_ttl: 3600,
                rng_seed: seed,
            })
            .unwrap();
        assert_eq!(r.evictions, 2);
        assert_eq!(r.bad_ejections, 1);
        assert!((r.bad_ejection_percent - 50.0).abs() < 1e-9);
    }

    #[test]
    fn unlimited_capacity_never_evicts() {
        let trace: Vec<_> = (0..200)
            .map(|i| {
                rec(
                    f64::from(i),
                    ["a", "b", "c", "d"][i as usize % 4],
                    &format!("n{}.com", i % 17),
                )
            })
            .collect();
        let prepared = PreparedTrace::new(&trace);
        for row in sweep(&prepared, &[0.0, 0.5, 1.0], &[0], 3600, 1).unwrap() {
            assert_eq!(row.result.bad_ejections, 0);
            assert_eq!(row.result.evictions, 0);
        }
        assert_eq!(sweep(&prepared, &[0.0, 0.5, 1.0], &[1000], 3600, 1).unwrap().len(), 3);
    }

    #[test]
    fn fraction_out_of_range_rejected() {
        let trace = vec![rec(0.0, "a", "x.com")];
        assert!(run_simulation(
            &trace,
            &SimConfig {
                odns_fraction: 1.5,
                ..SimConfig::default()
            }
        )
        .is_err());
    }

    #[test]
    fn client_draw_is_uniformish() {
        let n = 20_000;
        let below = (0..n).filter(|i| client_draw(42, &format!("client{i}")) < 0.3).count();
        let share = below as f64 / n as f64;
        assert!((share - 0.3).abs() < 0.02, "{share}");
    }

    fn trace_strategy() -> impl Strategy<Value = Vec<TraceRecord>> {
        proptest::collection::vec((0u32..30, 0u8..6, 0u8..20), 1..300).prop_map(|evs| {
            let mut t = 0.0;
            evs.into_iter()
                .map(|(dt, c, n)| {
                    t += f64::from(dt) * 50.0;
                    rec(t, &format!("c{c}"), &format!("d{n}.test"))
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn conservation_and_no_ciphertext_hits(
            trace in trace_strategy(),
            fraction in 0.0f64..=1.0,
            capacity in prop_oneof![Just(0usize), 1usize..20],
            seed in any::<u64>(),
        ) {
            let cfg = SimConfig { odns_fraction: fraction, recursive_cache_capacity: capacity, assumed_ttl: 600, rng_seed: seed };
            let r = run_simulation(&trace, &cfg).unwrap();
            prop_assert_eq!(r.stub_hits + r.recursive_hits + r.recursive_misses, r.total_queries);
            prop_assert_eq!(r.recursive_hits + r.recursive_misses, r.queries_reaching_recursive);
            prop_assert_eq!(r.odns_recursive_hits, 0);
            prop_assert!(r.bad_ejections <= r.evictions);
            prop_assert_eq!(run_simulation(&trace, &cfg).unwrap(), r);
        }

        #[test]
        fn reaching_recursive_non_increasing_in_fraction(trace in trace_strategy(), seed in any::<u64>()) {
            let prepared = PreparedTrace::new(&trace);
            let fractions: Vec<f64> = (0..=10).map(|i| f64::from(i) / 10.0).collect();
            let rows = sweep(&prepared, &fractions, &[0], 600, seed).unwrap();
            for w in rows.windows(2) {
                prop_assert!(w[1].result.queries_reaching_recursive <= w[0].result.queries_reaching_recursive);
            }
        }
    }
}
