//! Loopback test network: a configurable forwarding recursive, a scripted
//! upstream, and a helper that wires them to a stub and a resolver.
//!
//! Each component gets its own loopback address so address-based rules
//! behave as they would across hosts:
//!
//! | component  | address   |
//! |------------|-----------|
//! | stub       | 127.0.0.1 |
//! | recursive  | 127.0.0.2 |
//! | resolver   | 127.0.0.3 |
//! | upstream   | 127.0.0.4 |

use std::collections::{HashMap, HashSet};
use std::io;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use odns_core::policy::FallbackMode;
use odns_core::wire::{ClientSubnet, DnsMessage, DnsName, Edns, Rcode, RecordType, ResourceRecord};
use odns_core::ResolverKeyPair;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tokio::net::UdpSocket;

use crate::config::{ResolverConfig, StubConfig, DEFAULT_SUFFIX};
use crate::net::{self, ExchangeError, ServerHandle};
use crate::resolver::Resolver;
use crate::stub::{Stub, StubError};

pub const STUB_IP: Ipv4Addr = Ipv4Addr::new(127, 0, 0, 1);
pub const RECURSIVE_IP: Ipv4Addr = Ipv4Addr::new(127, 0, 0, 2);
pub const RESOLVER_IP: Ipv4Addr = Ipv4Addr::new(127, 0, 0, 3);
pub const UPSTREAM_IP: Ipv4Addr = Ipv4Addr::new(127, 0, 0, 4);
pub const OBSERVER_IP: Ipv4Addr = Ipv4Addr::new(127, 0, 0, 5);

pub async fn bind(ip: Ipv4Addr) -> io::Result<UdpSocket> {
    UdpSocket::bind(SocketAddr::new(IpAddr::V4(ip), 0)).await
}

/// One client exchange as seen by the recursive.
#[derive(Debug, Clone)]
pub struct Capture {
    pub from: SocketAddr,
    /// The datagram received from the client.
    pub query: Vec<u8>,
    /// The datagram sent back to the client, if any.
    pub response: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Default)]
pub struct RecursiveBehavior {
    /// Attach this client-subnet option to every forwarded query.
    pub add_ecs: Option<ClientSubnet>,
    /// Randomize letter case in forwarded QNAMEs, restoring it in replies.
    pub randomize_case: bool,
    /// Forward a fresh OPT record instead of the client's additionals.
    pub strip_additional: bool,
}

struct RecursiveInner {
    routes: Vec<(DnsName, SocketAddr)>,
    default_upstream: Option<SocketAddr>,
    behavior: RecursiveBehavior,
    timeout: Duration,
    rng: Mutex<ChaCha20Rng>,
    captures: Mutex<Vec<Capture>>,
}

/// A non-caching forwarder that routes by zone suffix and records every
/// client exchange.
#[derive(Clone)]
pub struct TestRecursive {
    inner: Arc<RecursiveInner>,
}

impl TestRecursive {
    pub fn new(
        routes: Vec<(DnsName, SocketAddr)>,
        default_upstream: Option<SocketAddr>,
        behavior: RecursiveBehavior,
        seed: u64,
    ) -> Self {
        Self {
            inner: Arc::new(RecursiveInner {
                routes,
                default_upstream,
                behavior,
                timeout: Duration::from_secs(2),
                rng: Mutex::new(ChaCha20Rng::seed_from_u64(seed)),
                captures: Mutex::default(),
            }),
        }
    }

    pub fn captures(&self) -> Vec<Capture> {
        self.inner.captures.lock().expect("capture lock").clone()
    }

    pub fn clear_captures(&self) {
        self.inner.captures.lock().expect("capture lock").clear();
    }

    fn route(&self, name: &DnsName) -> Option<SocketAddr> {
        self.inner
            .routes
            .iter()
            .filter(|(zone, _)| name.ends_with(zone))
            .max_by_key(|(zone, _)| zone.labels().len())
            .map(|(_, addr)| *addr)
            .or(self.inner.default_upstream)
    }

    fn perturb_case(&self, name: &DnsName) -> DnsName {
        let mut rng = self.inner.rng.lock().expect("rng lock");
        let mut labels: Vec<Vec<u8>> = name.labels().to_vec();
        let letters: Vec<(usize, usize)> = labels
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.iter()
                    .enumerate()
                    .filter(|(_, b)| b.is_ascii_alphabetic())
                    .map(move |(j, _)| (i, j))
            })
            .collect();
        for &(i, j) in &letters {
            if rng.gen::<bool>() {
                labels[i][j] ^= 0x20;
            }
        }
        // guarantee a visible change so tests see the behaviour every time
        if !letters.is_empty() && DnsName::from_labels_unchecked(labels.clone()) == *name {
            let (i, j) = letters[rng.gen_range(0..letters.len())];
            labels[i][j] ^= 0x20;
        }
        DnsName::from_labels_unchecked(labels)
    }

    async fn forward(&self, msg: &DnsMessage, local: SocketAddr) -> DnsMessage {
        let servfail = DnsMessage::response_to(msg, Rcode::SERVFAIL);
        let Some(q) = msg.question() else {
            return DnsMessage::response_to(msg, Rcode::FORMERR);
        };
        let Some(target) = self.route(&q.name) else {
            return DnsMessage::response_to(msg, Rcode::REFUSED);
        };
        let mut out = msg.clone();
        out.header.id = self.inner.rng.lock().expect("rng lock").gen();
        let b = &self.inner.behavior;
        if b.strip_additional {
            out.additionals.clear();
            out.edns = Some(Edns::default());
        }
        if let Some(ecs) = &b.add_ecs {
            out.set_edns_option(ecs.to_option());
        }
        if b.randomize_case {
            out.questions[0].name = self.perturb_case(&q.name);
        }
        match net::exchange(net::egress_bind(local, target), target, &out, self.inner.timeout, 1).await {
            Ok(mut reply) => {
                reply.header.id = msg.header.id;
                reply.questions = msg.questions.clone();
                reply
            }
            Err(_) => servfail,
        }
    }

    pub async fn serve(self, socket: UdpSocket) -> io::Result<()> {
        let local = socket.local_addr()?;
        net::serve_datagrams(Arc::new(socket), move |datagram, from| {
            let recursive = self.clone();
            async move {
                let response = match DnsMessage::decode(&datagram) {
                    Ok(msg) => recursive.forward(&msg, local).await.encode().ok(),
                    Err(_) => None,
                };
                recursive.inner.captures.lock().expect("capture lock").push(Capture {
                    from,
                    query: datagram,
                    response: response.clone(),
                });
                response
            }
        })
        .await
    }

    pub async fn spawn(self, socket: UdpSocket) -> io::Result<ServerHandle> {
        let addr = socket.local_addr()?;
        Ok(ServerHandle::new(addr, tokio::spawn(self.serve(socket))))
    }
}

/// The scripted A answer for `name`: 10.x.y.z from a hash of the
/// lowercased name.
pub fn scripted_address(name: &str) -> [u8; 4] {
    let mut h: u32 = 0x811c_9dc5;
    for b in name.trim_end_matches('.').bytes() {
        h ^= u32::from(b.to_ascii_lowercase());
        h = h.wrapping_mul(0x0100_0193);
    }
    let [_, x, y, z] = h.to_be_bytes();
    [10, x, y, z]
}

pub const SCRIPTED_TTL: u32 = 300;

/// One query the upstream received.
#[derive(Debug, Clone)]
pub struct UpstreamQuery {
    pub from: SocketAddr,
    pub raw: Vec<u8>,
    pub message: DnsMessage,
}

struct UpstreamInner {
    overrides: Mutex<HashMap<String, [u8; 4]>>,
    nxdomain: Mutex<HashSet<String>>,
    log: Mutex<Vec<UpstreamQuery>>,
}

/// A deterministic upstream recursive: A queries get [`scripted_address`]
/// (or an override) with TTL [`SCRIPTED_TTL`].
#[derive(Clone)]
pub struct ScriptedUpstream {
    inner: Arc<UpstreamInner>,
}

impl Default for ScriptedUpstream {
    fn default() -> Self {
        Self::new()
    }
}

impl ScriptedUpstream {
    pub fn new() -> Self {
        Self {
            inner: Arc::new(UpstreamInner {
                overrides: Mutex::default(),
                nxdomain: Mutex::default(),
                log: Mutex::default(),
            }),
        }
    }

    pub fn set_address(&self, name: &str, addr: [u8; 4]) {
        self.inner
            .overrides
            .lock()
            .expect("lock")
            .insert(name.to_ascii_lowercase(), addr);
    }

    pub fn set_nxdomain(&self, name: &str) {
        self.inner
            .nxdomain
            .lock()
            .expect("lock")
            .insert(name.to_ascii_lowercase());
    }

    pub fn expected_address(&self, name: &str) -> [u8; 4] {
        let key = name.to_ascii_lowercase();
        self.inner
            .overrides
            .lock()
            .expect("lock")
            .get(&key)
            .copied()
            .unwrap_or_else(|| scripted_address(&key))
    }

    pub fn queries(&self) -> Vec<UpstreamQuery> {
        self.inner.log.lock().expect("lock").clone()
    }

    pub fn query_count(&self) -> usize {
        self.inner.log.lock().expect("lock").len()
    }

    pub fn answer(&self, msg: &DnsMessage) -> DnsMessage {
        let Some(q) = msg.question() else {
            return DnsMessage::response_to(msg, Rcode::FORMERR);
        };
        let name = q.name.to_lowercase().to_string();
        if self.inner.nxdomain.lock().expect("lock").contains(&name) {
            return DnsMessage::response_to(msg, Rcode::NXDOMAIN);
        }
        let mut reply = DnsMessage::response_to(msg, Rcode::NOERROR);
        if q.qtype == RecordType::A {
            reply.answers.push(ResourceRecord::a(
                q.name.clone(),
                SCRIPTED_TTL,
                self.expected_address(&name),
            ));
        }
        reply
    }

    pub async fn serve(self, socket: UdpSocket) -> io::Result<()> {
        net::serve_datagrams(Arc::new(socket), move |datagram, from| {
            let upstream = self.clone();
            async move {
                let msg = DnsMessage::decode(&datagram).ok()?;
                let reply = upstream.answer(&msg);
                upstream.inner.log.lock().expect("lock").push(UpstreamQuery {
                    from,
                    raw: datagram,
                    message: msg,
                });
                reply.encode().ok()
            }
        })
        .await
    }

    pub async fn spawn(self, socket: UdpSocket) -> io::Result<ServerHandle> {
        let addr = socket.local_addr()?;
        Ok(ServerHandle::new(addr, tokio::spawn(self.serve(socket))))
    }
}

#[derive(Debug, Clone)]
pub struct TestbedOptions {
    pub suffix: DnsName,
    pub fallback_mode: FallbackMode,
    pub stub_seed: Option<u64>,
    pub behavior: RecursiveBehavior,
    /// Upstreams for the resolver; `None` means the scripted upstream.
    pub resolver_upstreams: Option<Vec<SocketAddr>>,
    /// Also let the resolver fall back to the recursive itself.
    pub resolver_uses_recursive: bool,
    pub query_timeout: Duration,
    pub resolver_cache_capacity: usize,
    /// Run bootstrap before returning.
    pub bootstrap: bool,
}

impl Default for TestbedOptions {
    fn default() -> Self {
        Self {
            suffix: DEFAULT_SUFFIX.parse().expect("valid name"),
            fallback_mode: FallbackMode::Formerr,
            stub_seed: None,
            behavior: RecursiveBehavior::default(),
            resolver_upstreams: None,
            resolver_uses_recursive: false,
            query_timeout: Duration::from_secs(2),
            resolver_cache_capacity: 0,
            bootstrap: true,
        }
    }
}

/// Stub, recursive, resolver and scripted upstream running on loopback.
/// Dropping it stops every server.
pub struct Testbed {
    pub stub: Stub,
    pub stub_addr: SocketAddr,
    pub recursive: TestRecursive,
    pub recursive_addr: SocketAddr,
    pub resolver: Resolver,
    pub resolver_addr: SocketAddr,
    pub upstream: ScriptedUpstream,
    pub upstream_addr: SocketAddr,
    pub query_timeout: Duration,
    _handles: Vec<ServerHandle>,
}

#[derive(Debug, thiserror::Error)]
pub enum TestbedError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Bootstrap(#[from] StubError),
}

impl Testbed {
    pub async fn start(opts: TestbedOptions) -> Result<Self, TestbedError> {
        let upstream_sock = bind(UPSTREAM_IP).await?;
        let resolver_sock = bind(RESOLVER_IP).await?;
        let recursive_sock = bind(RECURSIVE_IP).await?;
        let (upstream_addr, resolver_addr, recursive_addr) = (
            upstream_sock.local_addr()?,
            resolver_sock.local_addr()?,
            recursive_sock.local_addr()?,
        );

        let upstream = ScriptedUpstream::new();
        let upstream_handle = upstream.clone().spawn(upstream_sock).await?;

        let mut upstreams = opts.resolver_upstreams.clone().unwrap_or_else(|| vec![upstream_addr]);
        if opts.resolver_uses_recursive {
            upstreams.insert(0, recursive_addr);
        }
        let mut rcfg = ResolverConfig::new(opts.suffix.clone(), upstreams);
        rcfg.listen_address = resolver_addr;
        rcfg.cache_capacity = opts.resolver_cache_capacity;
        rcfg.query_timeout = opts.query_timeout;
        let keypair = ResolverKeyPair::generate(&mut rand::rngs::OsRng).expect("OS randomness");
        let resolver = Resolver::new(rcfg, keypair);
        let resolver_handle = resolver.clone().spawn_on(resolver_sock)?;

        let recursive = TestRecursive::new(
            vec![(opts.suffix.clone(), resolver_addr)],
            Some(upstream_addr),
            opts.behavior.clone(),
            opts.stub_seed.unwrap_or(7),
        );
        let recursive_handle = recursive.clone().spawn(recursive_sock).await?;

        let mut scfg = StubConfig::new(vec![recursive_addr], opts.suffix.clone());
        scfg.listen_address = SocketAddr::new(IpAddr::V4(STUB_IP), 0);
        scfg.fallback_mode = opts.fallback_mode;
        scfg.query_timeout = opts.query_timeout;
        let stub = match opts.stub_seed {
            Some(seed) => Stub::with_seed(scfg, seed),
            None => Stub::new(scfg),
        };
        if opts.bootstrap {
            stub.bootstrap_identity().await?;
        }
        let stub_handle = stub.clone().spawn().await?;

        Ok(Self {
            stub,
            stub_addr: stub_handle.addr,
            recursive,
            recursive_addr,
            resolver,
            resolver_addr,
            upstream,
            upstream_addr,
            query_timeout: opts.query_timeout,
            _handles: vec![stub_handle, recursive_handle, resolver_handle, upstream_handle],
        })
    }

    /// Sends a query to the stub as a local client would.
    pub async fn query(&self, name: &str, qtype: RecordType) -> Result<DnsMessage, ExchangeError> {
        self.query_via(self.stub_addr, name, qtype).await
    }

    /// Sends a query straight to the recursive, bypassing ODNS.
    pub async fn conventional_query(&self, name: &str, qtype: RecordType) -> Result<DnsMessage, ExchangeError> {
        self.query_via(self.recursive_addr, name, qtype).await
    }

    async fn query_via(&self, server: SocketAddr, name: &str, qtype: RecordType) -> Result<DnsMessage, ExchangeError> {
        let name: DnsName = name.parse()?;
        let id = rand::thread_rng().gen();
        let query = DnsMessage::query(id, name, qtype);
        let bind = SocketAddr::new(IpAddr::V4(STUB_IP), 0);
        net::exchange(bind, server, &query, self.query_timeout * 3, 1).await
    }
}
