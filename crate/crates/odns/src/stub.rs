//! The client-side stub: a local UDP DNS service that turns ordinary queries
//! into ODNS queries.

use std::fmt;
use std::io;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use odns_core::crypto::{self, Sealed};
use odns_core::policy::{select_recursive, FallbackMode};
use odns_core::wire::{canonical_domain, ClientSubnet, DnsMessage, DnsName, Rcode, RecordType};
use odns_core::{
    build_odns_qname, AnswerCache, AnswerSet, CacheKey, IdentityAnnouncement, QnameError, SessionKey, OPTION_IDENTITY,
    OPTION_SEALED_ANSWER, SPECIAL_LABEL,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;
use tokio::net::UdpSocket;

use crate::config::StubConfig;
use crate::net::{self, ExchangeError, ServerHandle};

/// Attempts per upstream exchange: the first send plus one retry.
const ATTEMPTS: u32 = 2;
const BOOTSTRAP_RETRY: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolverIdentity {
    pub public_key: [u8; 32],
    pub name_label: String,
    pub obtained_at: Instant,
}

#[derive(Debug, Error)]
pub enum StubError {
    #[error("no bootstrap response within the query timeout")]
    BootstrapTimeout,
    #[error("resolver identity failed verification")]
    IdentityVerificationFailure,
    #[error("bootstrap response carried no identity option (rcode {0})")]
    IdentityMissing(Rcode),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Exchange(ExchangeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    CacheHit,
    OdnsOk,
    Fallback,
    Formerr,
    Servfail,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::CacheHit => "cache_hit",
            Outcome::OdnsOk => "odns_ok",
            Outcome::Fallback => "fallback",
            Outcome::Formerr => "formerr",
            Outcome::Servfail => "servfail",
        })
    }
}

struct Inner {
    cfg: StubConfig,
    identity: RwLock<Option<ResolverIdentity>>,
    cache: Mutex<AnswerCache>,
    counter: AtomicU64,
    rng: Mutex<ChaCha20Rng>,
    epoch: Instant,
}

/// Cheap to clone; clones share cache, identity and counters.
#[derive(Clone)]
pub struct Stub {
    inner: Arc<Inner>,
}

impl Stub {
    pub fn new(cfg: StubConfig) -> Self {
        Self::with_rng(cfg, ChaCha20Rng::from_entropy())
    }

    /// A stub whose session keys and nonces come from a seeded generator.
    /// Only for reproducible tests.
    pub fn with_seed(cfg: StubConfig, seed: u64) -> Self {
        Self::with_rng(cfg, ChaCha20Rng::seed_from_u64(seed))
    }

    fn with_rng(cfg: StubConfig, rng: ChaCha20Rng) -> Self {
        Self {
            inner: Arc::new(Inner {
                cfg,
                identity: RwLock::new(None),
                cache: Mutex::new(AnswerCache::new(0)),
                counter: AtomicU64::new(0),
                rng: Mutex::new(rng),
                epoch: Instant::now(),
            }),
        }
    }

    pub fn config(&self) -> &StubConfig {
        &self.inner.cfg
    }

    pub fn identity(&self) -> Option<ResolverIdentity> {
        self.inner.identity.read().expect("identity lock").clone()
    }

    /// Forgets the current identity, as if bootstrap never completed.
    pub fn clear_identity(&self) {
        *self.inner.identity.write().expect("identity lock") = None;
    }

    fn now_ms(&self) -> u64 {
        self.inner.epoch.elapsed().as_millis() as u64
    }

    fn next_recursive(&self) -> SocketAddr {
        let n = self.inner.counter.fetch_add(1, Ordering::Relaxed);
        select_recursive(&self.inner.cfg.recursive_addresses, self.inner.cfg.striping, n)
            .expect("config validated: at least one recursive")
    }

    fn random_id(&self) -> u16 {
        self.inner.rng.lock().expect("rng lock").gen()
    }

    async fn send(&self, query: &DnsMessage) -> Result<DnsMessage, ExchangeError> {
        let recursive = self.next_recursive();
        let bind = net::egress_bind(self.inner.cfg.listen_address, recursive);
        net::exchange(bind, recursive, query, self.inner.cfg.query_timeout, ATTEMPTS).await
    }

    /// Fetches and verifies the resolver identity by querying
    /// `special.<suffix>`; stores it on success.
    pub async fn bootstrap_identity(&self) -> Result<ResolverIdentity, StubError> {
        let name = special_name(&self.inner.cfg.odns_suffix);
        let query = DnsMessage::query(self.random_id(), name, RecordType::TXT)
            .with_edns_option(ClientSubnet::zero().to_option());
        let response = self.send(&query).await.map_err(|e| match e {
            ExchangeError::Timeout => StubError::BootstrapTimeout,
            e => StubError::Exchange(e),
        })?;
        let opt = response
            .edns_option(OPTION_IDENTITY)
            .ok_or(StubError::IdentityMissing(response.rcode()))?;
        let announcement =
            IdentityAnnouncement::from_payload(&opt.payload).map_err(|_| StubError::IdentityVerificationFailure)?;
        announcement
            .verify()
            .map_err(|_| StubError::IdentityVerificationFailure)?;
        let identity = ResolverIdentity {
            public_key: announcement.public_key,
            name_label: announcement.name_label,
            obtained_at: Instant::now(),
        };
        *self.inner.identity.write().expect("identity lock") = Some(identity.clone());
        tracing::info!(label = %identity.name_label, "resolver identity verified");
        Ok(identity)
    }

    /// Re-runs bootstrap whenever the identity is missing or older than the
    /// refresh interval.
    pub async fn refresh_loop(self) {
        loop {
            let due = match self.identity() {
                None => Duration::ZERO,
                Some(id) => self
                    .inner
                    .cfg
                    .bootstrap_refresh_interval
                    .saturating_sub(id.obtained_at.elapsed()),
            };
            tokio::time::sleep(due).await;
            if let Err(e) = self.bootstrap_identity().await {
                tracing::warn!(error = %e, "bootstrap failed");
                tokio::time::sleep(BOOTSTRAP_RETRY).await;
            }
        }
    }

    /// Answers one client query. Never fails: errors become DNS rcodes.
    pub async fn handle_client_query(&self, msg: &DnsMessage) -> (DnsMessage, Outcome) {
        let started = Instant::now();
        let (reply, outcome) = self.resolve(msg).await;
        tracing::info!(
            target: "odns::stub",
            outcome = %outcome,
            latency_us = started.elapsed().as_micros() as u64,
            "query"
        );
        (reply, outcome)
    }

    async fn resolve(&self, msg: &DnsMessage) -> (DnsMessage, Outcome) {
        let question = match msg.question() {
            Some(q) if !msg.header.qr && msg.header.opcode == 0 => q.clone(),
            _ => return (DnsMessage::response_to(msg, Rcode::FORMERR), Outcome::Formerr),
        };
        let domain = canonical_domain(&question.name);
        let key = CacheKey::new(&domain, question.qtype);
        if let Some(answers) = self.inner.cache.lock().expect("cache lock").get(&key, self.now_ms()) {
            return (answer_reply(msg, answers), Outcome::CacheHit);
        }

        let Some(identity) = self.identity() else {
            return self.fallback(msg).await;
        };
        let session_key;
        let qname = {
            let mut rng = self.inner.rng.lock().expect("rng lock");
            session_key = match SessionKey::generate(&mut *rng) {
                Ok(k) => k,
                Err(_) => return (DnsMessage::response_to(msg, Rcode::SERVFAIL), Outcome::Servfail),
            };
            build_odns_qname(
                &domain,
                &session_key,
                &identity.public_key,
                Some(&identity.name_label),
                &self.inner.cfg.odns_suffix,
                &mut *rng,
            )
        };
        let qname = match qname.and_then(|q| Ok(q.to_name()?)) {
            Ok(name) => name,
            Err(QnameError::QnameOversize { .. }) => return self.fallback(msg).await,
            Err(e) => {
                tracing::debug!(error = %e, "building ODNS query failed");
                return (DnsMessage::response_to(msg, Rcode::SERVFAIL), Outcome::Servfail);
            }
        };

        let query = DnsMessage::query(self.random_id(), qname.clone(), question.qtype)
            .with_edns_option(ClientSubnet::zero().to_option());
        let servfail = || (DnsMessage::response_to(msg, Rcode::SERVFAIL), Outcome::Servfail);
        let response = match self.send(&query).await {
            Ok(r) => r,
            Err(e) => {
                tracing::debug!(error = %e, "ODNS exchange failed");
                return servfail();
            }
        };
        if response.header.tc || !response.question().is_some_and(|q| q.name.eq_ignore_case(&qname)) {
            return servfail();
        }
        let Some(answers) = open_response(&response, &session_key) else {
            return servfail();
        };
        self.inner
            .cache
            .lock()
            .expect("cache lock")
            .insert(key, answers.clone(), self.now_ms());
        (answer_reply(msg, answers), Outcome::OdnsOk)
    }

    async fn fallback(&self, msg: &DnsMessage) -> (DnsMessage, Outcome) {
        match self.inner.cfg.fallback_mode {
            FallbackMode::Formerr => (DnsMessage::response_to(msg, Rcode::FORMERR), Outcome::Formerr),
            FallbackMode::Conventional => match self.send(msg).await {
                Ok(response) if !response.header.tc => (response, Outcome::Fallback),
                _ => (DnsMessage::response_to(msg, Rcode::SERVFAIL), Outcome::Servfail),
            },
        }
    }

    /// Serves clients on `socket` and keeps the identity fresh in the
    /// background.
    pub async fn serve(self, socket: UdpSocket) -> io::Result<()> {
        let refresher = tokio::spawn(self.clone().refresh_loop());
        let result = net::serve_datagrams(Arc::new(socket), move |datagram, _from| {
            let stub = self.clone();
            async move {
                let msg = DnsMessage::decode(&datagram).ok()?;
                let (reply, _) = stub.handle_client_query(&msg).await;
                reply.encode().ok()
            }
        })
        .await;
        refresher.abort();
        result
    }

    /// Binds the configured listen address and serves in a background task.
    pub async fn spawn(self) -> io::Result<ServerHandle> {
        let socket = UdpSocket::bind(self.inner.cfg.listen_address).await?;
        let addr = socket.local_addr()?;
        Ok(ServerHandle::new(addr, tokio::spawn(self.serve(socket))))
    }
}

fn open_response(response: &DnsMessage, key: &SessionKey) -> Option<AnswerSet> {
    let opt = response.edns_option(OPTION_SEALED_ANSWER)?;
    let sealed = Sealed::from_bytes(&opt.payload).ok()?;
    crypto::open_answer(&sealed, key).ok()
}

fn answer_reply(query: &DnsMessage, answers: AnswerSet) -> DnsMessage {
    let mut reply = DnsMessage::response_to(query, answers.rcode);
    reply.answers = answers.records;
    reply
}

/// The `special.<suffix>` bootstrap name.
pub fn special_name(suffix: &DnsName) -> DnsName {
    suffix
        .prepend([SPECIAL_LABEL])
        .expect("suffix leaves room for one label")
}
