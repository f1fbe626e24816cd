//! The ODNS resolver: authoritative for the ODNS zone, it decrypts queries,
//! resolves the plaintext name through an upstream recursive and returns the
//! answer sealed under the query's session key.

use std::fmt;
use std::io::{self, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use odns_core::crypto::{self, CryptoError, ResolverKeyPair, Sealed};
use odns_core::policy::{scrub_outgoing, select_upstream};
use odns_core::wire::{DnsMessage, DnsName, Edns, EdnsOption, Rcode};
use odns_core::{
    parse_odns_qname, AnswerCache, AnswerSet, CacheKey, IdentityAnnouncement, SessionKey, OPTION_SEALED_ANSWER,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;
use tokio::net::UdpSocket;

use crate::config::ResolverConfig;
use crate::net::{self, ServerHandle};
use crate::stub::special_name;

const ATTEMPTS: u32 = 2;

#[derive(Debug, Error)]
pub enum KeyFileError {
    #[error("reading key file {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("key file {0} is not a 64-byte keypair")]
    Malformed(String),
}

/// Generates a keypair and writes it as 64 bytes (secret ‖ public), readable
/// only by the owner.
pub fn keygen(path: &Path) -> Result<ResolverKeyPair, KeyFileError> {
    let keypair = ResolverKeyPair::generate(&mut rand::rngs::OsRng).expect("OS randomness");
    let io_err = |source| KeyFileError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut options = std::fs::OpenOptions::new();
    options.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        options.mode(0o600);
    }
    let mut file = options.open(path).map_err(io_err)?;
    file.write_all(&keypair.to_bytes()).map_err(io_err)?;
    file.sync_all().map_err(io_err)?;
    Ok(keypair)
}

pub fn load_keypair(path: &Path) -> Result<ResolverKeyPair, KeyFileError> {
    let bytes = std::fs::read(path).map_err(|source| KeyFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ResolverKeyPair::from_bytes(&bytes).map_err(|_| KeyFileError::Malformed(path.display().to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Identity,
    CacheHit,
    Resolved,
    /// Key recovered but resolution failed; the failure went out sealed.
    SealedFailure,
    Formerr,
    Refused,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Identity => "identity",
            Outcome::CacheHit => "cache_hit",
            Outcome::Resolved => "resolved",
            Outcome::SealedFailure => "sealed_failure",
            Outcome::Formerr => "formerr",
            Outcome::Refused => "refused",
        })
    }
}

struct Inner {
    cfg: ResolverConfig,
    keypair: ResolverKeyPair,
    announcement: IdentityAnnouncement,
    special: DnsName,
    cache: Mutex<AnswerCache>,
    rng: Mutex<ChaCha20Rng>,
    upstream_queries: AtomicU64,
    epoch: Instant,
}

#[derive(Clone)]
pub struct Resolver {
    inner: Arc<Inner>,
}

impl Resolver {
    pub fn new(cfg: ResolverConfig, keypair: ResolverKeyPair) -> Self {
        Self {
            inner: Arc::new(Inner {
                announcement: IdentityAnnouncement::for_key(keypair.public_bytes()),
                special: special_name(&cfg.zone_suffix),
                cache: Mutex::new(AnswerCache::new(cfg.cache_capacity)),
                rng: Mutex::new(ChaCha20Rng::from_entropy()),
                upstream_queries: AtomicU64::new(0),
                epoch: Instant::now(),
                keypair,
                cfg,
            }),
        }
    }

    pub fn config(&self) -> &ResolverConfig {
        &self.inner.cfg
    }

    pub fn announcement(&self) -> &IdentityAnnouncement {
        &self.inner.announcement
    }

    /// Plaintext queries sent upstream so far.
    pub fn upstream_queries(&self) -> u64 {
        self.inner.upstream_queries.load(Ordering::Relaxed)
    }

    fn now_ms(&self) -> u64 {
        self.inner.epoch.elapsed().as_millis() as u64
    }

    /// Dispatches on the question name. `ingress` is the address the query
    /// came from, normally the client's recursive.
    pub async fn handle(&self, msg: &DnsMessage, ingress: SocketAddr) -> (DnsMessage, Outcome) {
        let started = Instant::now();
        let (reply, outcome, upstream, cache) = match msg.question() {
            Some(q) if !msg.header.qr && q.name.eq_ignore_case(&self.inner.special) => {
                (self.handle_special_query(msg), Outcome::Identity, None, None)
            }
            Some(q) if !msg.header.qr && q.name.ends_with(&self.inner.cfg.zone_suffix) => {
                let r = self.handle_odns_query(msg, ingress.ip()).await;
                (r.reply, r.outcome, r.upstream, r.cache_hit)
            }
            Some(_) if !msg.header.qr => (
                DnsMessage::response_to(msg, Rcode::REFUSED),
                Outcome::Refused,
                None,
                None,
            ),
            _ => (
                DnsMessage::response_to(msg, Rcode::FORMERR),
                Outcome::Formerr,
                None,
                None,
            ),
        };
        tracing::info!(
            target: "odns::resolver",
            outcome = %outcome,
            upstream = upstream.map(|u: SocketAddr| u.to_string()).unwrap_or_default(),
            cache = match cache { Some(true) => "hit", Some(false) => "miss", None => "-" },
            latency_us = started.elapsed().as_micros() as u64,
            "query"
        );
        (reply, outcome)
    }

    /// Answers `special.<zone>` with the public key and self-certifying name.
    pub fn handle_special_query(&self, msg: &DnsMessage) -> DnsMessage {
        let mut reply = DnsMessage::response_to(msg, Rcode::NOERROR);
        reply.header.aa = true;
        reply.edns = Some(Edns {
            options: vec![self.inner.announcement.to_option()],
            ..Edns::default()
        });
        reply
    }

    pub async fn handle_odns_query(&self, msg: &DnsMessage, ingress: IpAddr) -> OdnsReply {
        let formerr = || OdnsReply {
            reply: DnsMessage::response_to(msg, Rcode::FORMERR),
            outcome: Outcome::Formerr,
            upstream: None,
            cache_hit: None,
        };
        let Some(question) = msg.question() else {
            return formerr();
        };
        let (key, domain) = match self.decrypt(&question.name) {
            Ok(v) => v,
            Err(e) => {
                tracing::debug!(error = %e, "undecryptable ODNS query");
                return formerr();
            }
        };
        let sealed_reply = |answers: &AnswerSet, outcome, upstream, cache_hit| OdnsReply {
            reply: self.sealed_reply(msg, answers, &key),
            outcome,
            upstream,
            cache_hit,
        };
        let Ok(name) = domain.parse::<DnsName>() else {
            return sealed_reply(&AnswerSet::failure(Rcode::FORMERR), Outcome::SealedFailure, None, None);
        };
        let cache_key = CacheKey::new(&domain, question.qtype);
        if let Some(answers) = self
            .inner
            .cache
            .lock()
            .expect("cache lock")
            .get(&cache_key, self.now_ms())
        {
            return sealed_reply(&answers, Outcome::CacheHit, None, Some(true));
        }

        let upstream = match select_upstream(&self.inner.cfg.upstream_addresses, ingress) {
            Ok(u) => u,
            Err(e) => {
                tracing::warn!(error = %e, "refusing to resolve through the ingress recursive");
                return sealed_reply(
                    &AnswerSet::failure(Rcode::SERVFAIL),
                    Outcome::SealedFailure,
                    None,
                    Some(false),
                );
            }
        };
        let id = self.inner.rng.lock().expect("rng lock").gen();
        let query = scrub_outgoing(DnsMessage::query(id, name, question.qtype));
        let bind = net::egress_bind(self.inner.cfg.listen_address, upstream);
        self.inner.upstream_queries.fetch_add(1, Ordering::Relaxed);
        let answers = match net::exchange(bind, upstream, &query, self.inner.cfg.query_timeout, ATTEMPTS).await {
            Ok(r) if !r.header.tc => AnswerSet::new(r.rcode(), r.answers),
            Ok(_) => AnswerSet::failure(Rcode::SERVFAIL),
            Err(e) => {
                tracing::debug!(error = %e, %upstream, "upstream exchange failed");
                AnswerSet::failure(Rcode::SERVFAIL)
            }
        };
        self.inner
            .cache
            .lock()
            .expect("cache lock")
            .insert(cache_key, answers.clone(), self.now_ms());
        let outcome = if answers.rcode == Rcode::SERVFAIL {
            Outcome::SealedFailure
        } else {
            Outcome::Resolved
        };
        sealed_reply(&answers, outcome, Some(upstream), Some(false))
    }

    /// The plaintext domain inside an ODNS QNAME addressed to this resolver.
    pub fn open_qname(&self, qname: &DnsName) -> Option<String> {
        self.decrypt(qname).ok().map(|(_, domain)| domain)
    }

    fn decrypt(&self, qname: &DnsName) -> Result<(SessionKey, String), odns_core::QnameError> {
        let parsed = parse_odns_qname(qname, &self.inner.cfg.zone_suffix)?;
        let key = crypto::unwrap_key(&parsed.wrapped, &self.inner.keypair)?;
        let domain = crypto::open_domain(&parsed.sealed, &key)?;
        Ok((key, domain))
    }

    /// A NOERROR response carrying `answers` sealed in the OPT record, with
    /// no outer records and every TTL zero.
    fn sealed_reply(&self, msg: &DnsMessage, answers: &AnswerSet, key: &SessionKey) -> DnsMessage {
        let mut rng = self.inner.rng.lock().expect("rng lock");
        let sealed = match crypto::seal_answer(answers, key, &mut *rng) {
            Ok(s) => s,
            Err(CryptoError::PayloadOversize) => {
                crypto::seal_answer(&AnswerSet::failure(Rcode::SERVFAIL), key, &mut *rng).expect("tiny answer seals")
            }
            Err(e) => {
                tracing::error!(error = %e, "sealing failed");
                return DnsMessage::response_to(msg, Rcode::SERVFAIL);
            }
        };
        let mut reply = DnsMessage::response_to(msg, Rcode::NOERROR);
        reply.header.aa = true;
        reply.edns = Some(Edns {
            options: vec![EdnsOption::new(OPTION_SEALED_ANSWER, Sealed::to_bytes(&sealed))],
            ..Edns::default()
        });
        reply
    }

    pub async fn serve(self, socket: UdpSocket) -> io::Result<()> {
        net::serve_datagrams(Arc::new(socket), move |datagram, from| {
            let resolver = self.clone();
            async move {
                let msg = match DnsMessage::decode(&datagram) {
                    Ok(m) => m,
                    Err(_) => return formerr_for_raw(&datagram),
                };
                let (reply, _) = resolver.handle(&msg, from).await;
                reply.encode().ok()
            }
        })
        .await
    }

    /// Binds the configured listen address and serves in a background task.
    pub async fn spawn(self) -> io::Result<ServerHandle> {
        let socket = UdpSocket::bind(self.inner.cfg.listen_address).await?;
        self.spawn_on(socket)
    }

    pub fn spawn_on(self, socket: UdpSocket) -> io::Result<ServerHandle> {
        let addr = socket.local_addr()?;
        Ok(ServerHandle::new(addr, tokio::spawn(self.serve(socket))))
    }
}

pub struct OdnsReply {
    pub reply: DnsMessage,
    pub outcome: Outcome,
    pub upstream: Option<SocketAddr>,
    pub cache_hit: Option<bool>,
}

/// A bare FORMERR header for a datagram that did not parse, echoing its id.
pub(crate) fn formerr_for_raw(datagram: &[u8]) -> Option<Vec<u8>> {
    if datagram.len() < 12 || datagram[2] & 0x80 != 0 {
        return None;
    }
    let mut reply = vec![0u8; 12];
    reply[..2].copy_from_slice(&datagram[..2]);
    reply[2] = 0x80 | (datagram[2] & 0x79);
    reply[3] = Rcode::FORMERR.0;
    Some(reply)
}
