//! UDP plumbing: single query/response exchanges and a datagram server loop.

use std::future::Future;
use std::io;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr, SocketAddr};
use std::sync::Arc;
use std::time::Duration;

use odns_core::wire::{DnsMessage, WireError};
use thiserror::Error;
use tokio::net::UdpSocket;
use tokio::task::JoinHandle;
use tokio::time::{timeout_at, Instant};

pub const MAX_DATAGRAM: usize = 65_535;

#[derive(Debug, Error)]
pub enum ExchangeError {
    #[error("no response within the timeout")]
    Timeout,
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
}

/// Address to bind outgoing sockets to so they leave from the same address
/// a server listens on.
pub fn egress_bind(listen: SocketAddr, target: SocketAddr) -> SocketAddr {
    let ip = match (listen.ip(), target.ip()) {
        (ip, _) if !ip.is_unspecified() && ip.is_ipv4() == target.is_ipv4() => ip,
        (_, IpAddr::V4(_)) => IpAddr::V4(Ipv4Addr::UNSPECIFIED),
        (_, IpAddr::V6(_)) => IpAddr::V6(Ipv6Addr::UNSPECIFIED),
    };
    SocketAddr::new(ip, 0)
}

/// Sends `query` to `server` from a fresh socket bound to `bind` and waits
/// for a response with the same id from that address. Each attempt gets
/// `timeout`.
pub async fn exchange(
    bind: SocketAddr,
    server: SocketAddr,
    query: &DnsMessage,
    timeout: Duration,
    attempts: u32,
) -> Result<DnsMessage, ExchangeError> {
    let wire = query.encode()?;
    exchange_raw(bind, server, &wire, query.header.id, timeout, attempts).await
}

pub async fn exchange_raw(
    bind: SocketAddr,
    server: SocketAddr,
    wire: &[u8],
    id: u16,
    timeout: Duration,
    attempts: u32,
) -> Result<DnsMessage, ExchangeError> {
    let socket = UdpSocket::bind(bind).await?;
    socket.connect(server).await?;
    let mut buf = vec![0u8; MAX_DATAGRAM];
    for _ in 0..attempts.max(1) {
        socket.send(wire).await?;
        let deadline = Instant::now() + timeout;
        loop {
            let n = match timeout_at(deadline, socket.recv(&mut buf)).await {
                Err(_) => break,
                Ok(Err(e)) if e.kind() == io::ErrorKind::ConnectionRefused => break,
                Ok(r) => r?,
            };
            match DnsMessage::decode(&buf[..n]) {
                Ok(msg) if msg.header.qr && msg.header.id == id => return Ok(msg),
                _ => continue,
            }
        }
    }
    Err(ExchangeError::Timeout)
}

/// Runs `handler` for each datagram on `socket`, each in its own task, and
/// sends back whatever it returns.
pub async fn serve_datagrams<F, Fut>(socket: Arc<UdpSocket>, handler: F) -> io::Result<()>
where
    F: Fn(Vec<u8>, SocketAddr) -> Fut + Send + Sync + 'static,
    Fut: Future<Output = Option<Vec<u8>>> + Send + 'static,
{
    let handler = Arc::new(handler);
    let mut buf = vec![0u8; MAX_DATAGRAM];
    loop {
        let (n, from) = match socket.recv_from(&mut buf).await {
            Ok(r) => r,
            // ICMP errors from earlier sends surface here on some platforms
            Err(e) if e.kind() == io::ErrorKind::ConnectionReset => continue,
            Err(e) => return Err(e),
        };
        let datagram = buf[..n].to_vec();
        let socket = Arc::clone(&socket);
        let handler = Arc::clone(&handler);
        tokio::spawn(async move {
            if let Some(reply) = handler(datagram, from).await {
                if let Err(e) = socket.send_to(&reply, from).await {
                    tracing::debug!(%from, error = %e, "send failed");
                }
            }
        });
    }
}

/// A spawned server task; aborted on drop.
pub struct ServerHandle {
    pub addr: SocketAddr,
    task: JoinHandle<io::Result<()>>,
}

impl ServerHandle {
    pub fn new(addr: SocketAddr, task: JoinHandle<io::Result<()>>) -> Self {
        Self { addr, task }
    }

    pub fn abort(&self) {
        self.task.abort();
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.task.abort();
    }
}
