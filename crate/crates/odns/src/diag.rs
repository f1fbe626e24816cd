//! Operator diagnostics: crypto microbenchmarks, QNAME length analysis over
//! a domain list, and recursive compatibility probing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::net::SocketAddr;
use std::path::Path;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use odns_core::crypto::{self, ResolverKeyPair, SessionKey};
use odns_core::identity::SELF_CERTIFYING_LABEL_LEN;
use odns_core::qname::tail_len;
use odns_core::wire::{
    DnsMessage, DnsName, EdnsOption, RecordType, ResourceRecord, MAX_LABEL_LEN, MAX_PRESENTATION_LEN,
};
use odns_core::{build_odns_qname, estimate_qname_length, AnswerSet, QnameError, Rcode, OPTION_PROBE_MARKER};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::net::{self, ExchangeError};
use crate::observer::Observation;

pub const MIN_BENCH_ITERATIONS: usize = 100;

#[derive(Debug, Error)]
pub enum DiagError {
    #[error("at least {MIN_BENCH_ITERATIONS} iterations are required, got {0}")]
    TooFewIterations(usize),
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Operations timed by [`bench_crypto`], in protocol order.
pub const BENCH_OPERATIONS: [&str; 7] = [
    "session_key_generation",
    "seal_domain",
    "wrap_key",
    "unwrap_key",
    "open_domain",
    "seal_answer",
    "open_answer",
];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub operation: &'static str,
    pub iterations: usize,
    pub median_us: f64,
    pub p95_us: f64,
}

pub const BENCH_CSV_HEADER: &str = "operation,iterations,median_us,p95_us";

impl BenchRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{:.3},{:.3}",
            self.operation, self.iterations, self.median_us, self.p95_us
        )
    }
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[Duration], p: f64) -> Duration {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

const BENCH_DOMAINS: [&str; 8] = [
    "www.example.com",
    "mail.google.com",
    "en.wikipedia.org",
    "cdn.jsdelivr.net",
    "a.b.c.d.example.co.uk",
    "news.ycombinator.com",
    "x.io",
    "static.xx.fbcdn.net",
];

/// Times each per-query cryptographic operation `iterations` times on the
/// current thread and reports median and 95th percentile.
pub fn bench_crypto(iterations: usize) -> Result<Vec<BenchRow>, DiagError> {
    if iterations < MIN_BENCH_ITERATIONS {
        return Err(DiagError::TooFewIterations(iterations));
    }
    let mut rng = ChaCha20Rng::from_entropy();
    let keypair = ResolverKeyPair::generate(&mut rng).expect("rng");
    let public = keypair.public_bytes();
    let mut samples: Vec<Vec<Duration>> = vec![Vec::with_capacity(iterations); BENCH_OPERATIONS.len()];

    for i in 0..iterations {
        let domain = BENCH_DOMAINS[i % BENCH_DOMAINS.len()];
        let answers = AnswerSet::new(
            Rcode::NOERROR,
            vec![
                ResourceRecord::a(domain.parse().expect("valid name"), 300, [192, 0, 2, 1]),
                ResourceRecord::a(domain.parse().expect("valid name"), 300, [192, 0, 2, 2]),
            ],
        );
        let mut time = |op: usize, t: Instant| samples[op].push(t.elapsed());

        let t = Instant::now();
        let key = SessionKey::generate(&mut rng).expect("rng");
        time(0, t);
        let t = Instant::now();
        let sealed = crypto::seal_domain(domain, &key, &mut rng).expect("seal");
        time(1, t);
        let t = Instant::now();
        let wrapped = crypto::wrap_key(&key, &public, &mut rng).expect("wrap");
        time(2, t);
        let t = Instant::now();
        let unwrapped = crypto::unwrap_key(&wrapped, &keypair).expect("unwrap");
        time(3, t);
        let t = Instant::now();
        let opened = crypto::open_domain(&sealed, &unwrapped).expect("open");
        time(4, t);
        let t = Instant::now();
        let sealed_answer = crypto::seal_answer(&answers, &unwrapped, &mut rng).expect("seal answer");
        time(5, t);
        let t = Instant::now();
        let opened_answer = crypto::open_answer(&sealed_answer, &key).expect("open answer");
        time(6, t);
        assert_eq!(opened, domain);
        assert_eq!(opened_answer, answers);
    }

    Ok(BENCH_OPERATIONS
        .iter()
        .zip(samples)
        .map(|(&operation, mut s)| {
            s.sort_unstable();
            BenchRow {
                operation,
                iterations,
                median_us: percentile(&s, 50.0).as_secs_f64() * 1e6,
                p95_us: percentile(&s, 95.0).as_secs_f64() * 1e6,
            }
        })
        .collect())
}

/// Reads one domain per line, lowercased, without trailing dots. Blank lines
/// and `#` comments are skipped.
pub fn read_domain_list(path: &Path) -> Result<Vec<String>, DiagError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => DiagError::FileNotFound(path.display().to_string()),
        _ => DiagError::Io(e),
    })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.trim_end_matches('.').to_ascii_lowercase())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct QnameReport {
    /// Estimated encrypted QNAME length per input domain, in input order.
    pub lengths: Vec<usize>,
    pub oversize: usize,
}

impl QnameReport {
    pub fn total(&self) -> usize {
        self.lengths.len()
    }

    pub fn oversize_fraction(&self) -> f64 {
        if self.lengths.is_empty() {
            0.0
        } else {
            self.oversize as f64 / self.lengths.len() as f64
        }
    }

    /// Domains per estimated QNAME length. Lengths move in base64 steps, so
    /// there are few distinct values.
    pub fn histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for &len in &self.lengths {
            *h.entry(len).or_insert(0) += 1;
        }
        h
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("qname_length,count,oversize\n");
        for (len, count) in self.histogram() {
            let _ = writeln!(out, "{len},{count},{}", u8::from(len > MAX_PRESENTATION_LEN));
        }
        out
    }
}

/// Estimates the encrypted QNAME length of every domain under `suffix`.
/// With `with_resolver_label` the 32-character resolver label the stub
/// normally inserts is counted too.
pub fn analyze_qnames(domains: &[String], suffix: &DnsName, with_resolver_label: bool) -> QnameReport {
    let tail = tail_len(with_resolver_label, suffix);
    let lengths: Vec<usize> = domains.iter().map(|d| estimate_qname_length(d.len(), tail)).collect();
    let oversize = lengths.iter().filter(|&&l| l > MAX_PRESENTATION_LEN).count();
    QnameReport { lengths, oversize }
}

/// Result of actually encrypting every domain and measuring the QNAME.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BruteForceCount {
    pub oversize: usize,
    /// Domains whose measured length differs from the estimate.
    pub mismatches: Vec<String>,
}

fn measured_qname_length(
    domain: &str,
    key: &SessionKey,
    public: &[u8; 32],
    tail: usize,
    rng: &mut ChaCha20Rng,
) -> usize {
    let sealed = crypto::seal_domain(domain, key, rng).expect("seal");
    let wrapped = crypto::wrap_key(key, public, rng).expect("wrap");
    let ct_text = URL_SAFE_NO_PAD.encode(sealed.to_bytes());
    let key_text = URL_SAFE_NO_PAD.encode(wrapped.to_bytes());
    let labels = ct_text.len().div_ceil(MAX_LABEL_LEN) + key_text.len().div_ceil(MAX_LABEL_LEN);
    let head = ct_text.len() + key_text.len() + labels - 1;
    if tail == 0 {
        head
    } else {
        head + 1 + tail
    }
}

/// Encrypts every domain for real, measures the resulting QNAME and compares
/// it with [`estimate_qname_length`]. Domains that fit are also run through
/// [`build_odns_qname`] to check the builder produces that same length.
pub fn brute_force_oversize(
    domains: &[String],
    suffix: &DnsName,
    with_resolver_label: bool,
    seed: u64,
) -> BruteForceCount {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let keypair = ResolverKeyPair::generate(&mut rng).expect("rng");
    let public = keypair.public_bytes();
    let label = "a".repeat(SELF_CERTIFYING_LABEL_LEN);
    let label = with_resolver_label.then_some(label.as_str());
    let tail = tail_len(with_resolver_label, suffix);
    let mut count = BruteForceCount {
        oversize: 0,
        mismatches: Vec::new(),
    };
    for domain in domains {
        let key = SessionKey::generate(&mut rng).expect("rng");
        let measured = measured_qname_length(domain, &key, &public, tail, &mut rng);
        let mut agrees = measured == estimate_qname_length(domain.len(), tail);
        if measured > MAX_PRESENTATION_LEN {
            count.oversize += 1;
            agrees &= matches!(
                build_odns_qname(domain, &key, &public, label, suffix, &mut rng),
                Err(QnameError::QnameOversize { .. })
            );
        } else {
            agrees &= build_odns_qname(domain, &key, &public, label, suffix, &mut rng)
                .ok()
                .filter(|q| q.to_name().is_ok())
                .is_some_and(|q| q.presentation_len() == measured);
        }
        if !agrees {
            count.mismatches.push(domain.clone());
        }
    }
    count
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeReport {
    /// The recursive attached a client-subnet option.
    pub forwards_ecs: bool,
    /// The QNAME arrived with its letter case changed.
    pub applies_0x20: bool,
    /// An EDNS option the probe attached did not arrive.
    pub strips_additional: bool,
}

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("recursive did not answer the probe in time")]
    ProbeTimeout,
    #[error("observer at {0} did not answer")]
    ObserverUnreachable(SocketAddr),
    #[error("observer has no record of the probe; the recursive did not forward it")]
    NotObserved,
    #[error("observer returned an unreadable result")]
    BadObserverReply,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Mixed-case probe label; a recursive that rewrites case cannot leave all
/// of these letters untouched except by chance.
pub const PROBE_CASE_LABEL: &str = "OdNsPrObEcAsE";

fn exchange_error(e: ExchangeError, on_timeout: ProbeError) -> ProbeError {
    match e {
        ExchangeError::Timeout => on_timeout,
        ExchangeError::Io(e) => ProbeError::Io(e),
        ExchangeError::Wire(_) => ProbeError::BadObserverReply,
    }
}

/// Sends a marked, mixed-case query for a unique name under the observer's
/// zone through `recursive`, then asks the observer what arrived.
pub async fn probe_recursive(
    recursive: SocketAddr,
    observer: SocketAddr,
    zone: &DnsName,
    timeout: Duration,
) -> Result<ProbeReport, ProbeError> {
    let bind = net::egress_bind("0.0.0.0:0".parse().expect("valid"), observer);
    let mut rng = ChaCha20Rng::from_entropy();

    let ping = DnsMessage::query(
        rng.gen(),
        zone.prepend(["ping"]).map_err(|_| ProbeError::BadObserverReply)?,
        RecordType::TXT,
    );
    net::exchange(bind, observer, &ping, timeout, 2)
        .await
        .map_err(|e| exchange_error(e, ProbeError::ObserverUnreachable(observer)))?;

    let nonce = format!("{:016x}", rng.gen::<u64>());
    let probe_name = zone
        .prepend([nonce.as_str(), PROBE_CASE_LABEL, "probe"])
        .map_err(|_| ProbeError::BadObserverReply)?;
    let probe = DnsMessage::query(rng.gen(), probe_name.clone(), RecordType::A)
        .with_edns_option(EdnsOption::new(OPTION_PROBE_MARKER, nonce.as_bytes().to_vec()));
    let bind = net::egress_bind("0.0.0.0:0".parse().expect("valid"), recursive);
    net::exchange(bind, recursive, &probe, timeout, 2)
        .await
        .map_err(|e| exchange_error(e, ProbeError::ProbeTimeout))?;

    let result_name = zone
        .prepend([nonce.as_str(), "result"])
        .map_err(|_| ProbeError::BadObserverReply)?;
    let bind = net::egress_bind("0.0.0.0:0".parse().expect("valid"), observer);
    let reply = net::exchange(
        bind,
        observer,
        &DnsMessage::query(rng.gen(), result_name, RecordType::TXT),
        timeout,
        2,
    )
    .await
    .map_err(|e| exchange_error(e, ProbeError::ObserverUnreachable(observer)))?;
    if reply.rcode() == Rcode::NXDOMAIN {
        return Err(ProbeError::NotObserved);
    }
    let txt = reply
        .answers
        .iter()
        .find(|r| r.rtype == RecordType::TXT && !r.rdata.is_empty())
        .ok_or(ProbeError::BadObserverReply)?;
    let text = std::str::from_utf8(&txt.rdata[1..]).map_err(|_| ProbeError::BadObserverReply)?;
    let obs = Observation::from_txt(text).ok_or(ProbeError::BadObserverReply)?;

    Ok(ProbeReport {
        forwards_ecs: obs.ecs_present,
        applies_0x20: obs.qname != probe_name && obs.qname.eq_ignore_case(&probe_name),
        strips_additional: !obs.marker_present,
    })
}
