//! Upstream selection and outbound query hygiene.

use core::fmt;
use core::net::{IpAddr, SocketAddr};
use core::str::FromStr;

use thiserror::Error;

use crate::wire::{DnsMessage, OPTION_CLIENT_SUBNET};
use crate::{OPTION_IDENTITY, OPTION_PROBE_MARKER, OPTION_SEALED_ANSWER};

/// How the stub spreads ODNS queries over its recursive resolvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Striping {
    #[default]
    Single,
    RoundRobin,
}

/// What the stub does with a query it cannot send obliviously.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FallbackMode {
    /// Send the query in the clear.
    Conventional,
    /// Refuse with FORMERR.
    #[default]
    Formerr,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown value {0:?}")]
pub struct UnknownVariant(pub alloc::string::String);

impl FromStr for Striping {
    type Err = UnknownVariant;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "single" => Ok(Self::Single),
            "round_robin" | "round-robin" | "roundrobin" => Ok(Self::RoundRobin),
            _ => Err(UnknownVariant(s.into())),
        }
    }
}

impl fmt::Display for Striping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Single => "single",
            Self::RoundRobin => "round_robin",
        })
    }
}

impl FromStr for FallbackMode {
    type Err = UnknownVariant;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "conventional" => Ok(Self::Conventional),
            "formerr" => Ok(Self::Formerr),
            _ => Err(UnknownVariant(s.into())),
        }
    }
}

impl fmt::Display for FallbackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Conventional => "conventional",
            Self::Formerr => "formerr",
        })
    }
}

/// Picks the recursive for the `counter`-th query. Returns `None` only for an
/// empty list.
pub fn select_recursive(recursives: &[SocketAddr], striping: Striping, counter: u64) -> Option<SocketAddr> {
    if recursives.is_empty() {
        return None;
    }
    let idx = match striping {
        Striping::Single => 0,
        Striping::RoundRobin => (counter % recursives.len() as u64) as usize,
    };
    Some(recursives[idx])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("every configured upstream is the ingress resolver {ingress}")]
pub struct NoSafeUpstream {
    pub ingress: IpAddr,
}

/// Picks an upstream that is not the resolver the query arrived from, so no
/// single service sees both the encrypted and the plaintext query.
pub fn select_upstream(upstreams: &[SocketAddr], ingress: IpAddr) -> Result<SocketAddr, NoSafeUpstream> {
    upstreams
        .iter()
        .copied()
        .find(|u| u.ip() != ingress)
        .ok_or(NoSafeUpstream { ingress })
}

/// Strips options from a plaintext query leaving the resolver that could
/// carry client or ingress information.
pub fn scrub_outgoing(mut msg: DnsMessage) -> DnsMessage {
    for code in [
        OPTION_CLIENT_SUBNET,
        OPTION_IDENTITY,
        OPTION_SEALED_ANSWER,
        OPTION_PROBE_MARKER,
    ] {
        msg.remove_edns_option(code);
    }
    msg
}
