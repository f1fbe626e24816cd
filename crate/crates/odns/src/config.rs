//! `key = value` configuration files for the stub and the resolver.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are
//! comma-separated; durations accept `humantime` syntax (`2s`, `500ms`, `7d`)
//! or a bare number of seconds.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use odns_core::{DnsName, FallbackMode, Striping};
use thiserror::Error;

pub const DEFAULT_STUB_LISTEN: &str = "127.0.0.1:5300";
pub const DEFAULT_RESOLVER_LISTEN: &str = "0.0.0.0:5301";
pub const DEFAULT_SUFFIX: &str = "odns.example.net";
pub const DEFAULT_REFRESH: Duration = Duration::from_secs(7 * 24 * 3600);
pub const DEFAULT_QUERY_TIMEOUT: Duration = Duration::from_secs(2);

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
}

fn invalid(key: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason: reason.to_string(),
    }
}

/// Parses `key = value` lines into a map.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
        map.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
    }
    Ok(map)
}

fn read(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.into(),
        source,
    })?;
    parse_kv(&text)
}

pub fn parse_addr(key: &str, v: &str) -> Result<SocketAddr, ConfigError> {
    v.trim().parse().map_err(|e| invalid(key, e))
}

pub fn parse_addr_list(key: &str, v: &str) -> Result<Vec<SocketAddr>, ConfigError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_addr(key, s))
        .collect()
}

pub fn parse_duration(key: &str, v: &str) -> Result<Duration, ConfigError> {
    let v = v.trim();
    if let Ok(secs) = v.parse::<u64>() {
        return Ok(Duration::from_secs(secs));
    }
    humantime::parse_duration(v).map_err(|e| invalid(key, e))
}

pub fn parse_name(key: &str, v: &str) -> Result<DnsName, ConfigError> {
    v.trim().parse().map_err(|e| invalid(key, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StubConfig {
    pub listen_address: SocketAddr,
    pub recursive_addresses: Vec<SocketAddr>,
    pub odns_suffix: DnsName,
    pub fallback_mode: FallbackMode,
    pub striping: Striping,
    pub bootstrap_refresh_interval: Duration,
    pub query_timeout: Duration,
}

impl StubConfig {
    pub fn new(recursive_addresses: Vec<SocketAddr>, odns_suffix: DnsName) -> Self {
        Self {
            listen_address: DEFAULT_STUB_LISTEN.parse().expect("valid default"),
            recursive_addresses,
            odns_suffix,
            fallback_mode: FallbackMode::default(),
            striping: Striping::default(),
            bootstrap_refresh_interval: DEFAULT_REFRESH,
            query_timeout: DEFAULT_QUERY_TIMEOUT,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.recursive_addresses.is_empty() {
            return Err(ConfigError::Missing("recursive_addresses"));
        }
        if self.bootstrap_refresh_interval.is_zero() {
            return Err(invalid("bootstrap_refresh_interval", "must be positive"));
        }
        if self.query_timeout.is_zero() {
            return Err(invalid("query_timeout", "must be positive"));
        }
        Ok(())
    }

    /// Applies `key = value` settings on top of `self`.
    pub fn apply(&mut self, kv: &BTreeMap<String, String>) -> Result<(), ConfigError> {
        for (k, v) in kv {
            match k.as_str() {
                "listen_address" => self.listen_address = parse_addr(k, v)?,
                "recursive_addresses" => self.recursive_addresses = parse_addr_list(k, v)?,
                "odns_suffix" => self.odns_suffix = parse_name(k, v)?,
                "fallback_mode" => self.fallback_mode = v.parse().map_err(|e| invalid(k, e))?,
                "striping" => self.striping = v.parse().map_err(|e| invalid(k, e))?,
                "bootstrap_refresh_interval" => self.bootstrap_refresh_interval = parse_duration(k, v)?,
                "query_timeout" => self.query_timeout = parse_duration(k, v)?,
                _ => return Err(ConfigError::UnknownKey(k.clone())),
            }
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::new(Vec::new(), DEFAULT_SUFFIX.parse().expect("valid default"));
        cfg.apply(&read(path)?)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolverConfig {
    pub listen_address: SocketAddr,
    pub zone_suffix: DnsName,
    pub keypair_path: PathBuf,
    pub upstream_addresses: Vec<SocketAddr>,
    /// Entries; 0 means unbounded.
    pub cache_capacity: usize,
    pub query_timeout: Duration,
}

impl ResolverConfig {
    pub fn new(zone_suffix: DnsName, upstream_addresses: Vec<SocketAddr>) -> Self {
        Self {
            listen_address: DEFAULT_RESOLVER_LISTEN.parse().expect("valid default"),
            zone_suffix,
            keypair_path: PathBuf::from("odns-resolver.key"),
            upstream_addresses,
            cache_capacity: 0,
            query_timeout: DEFAULT_QUERY_TIMEOUT,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.upstream_addresses.is_empty() {
            return Err(ConfigError::Missing("upstream_addresses"));
        }
        if self.query_timeout.is_zero() {
            return Err(invalid("query_timeout", "must be positive"));
        }
        Ok(())
    }

    pub fn apply(&mut self, kv: &BTreeMap<String, String>) -> Result<(), ConfigError> {
        for (k, v) in kv {
            match k.as_str() {
                "listen_address" => self.listen_address = parse_addr(k, v)?,
                "zone_suffix" | "odns_suffix" => self.zone_suffix = parse_name(k, v)?,
                "keypair_path" => self.keypair_path = PathBuf::from(v),
                "upstream_addresses" => self.upstream_addresses = parse_addr_list(k, v)?,
                "cache_capacity" => self.cache_capacity = v.parse().map_err(|e| invalid(k, e))?,
                "query_timeout" => self.query_timeout = parse_duration(k, v)?,
                _ => return Err(ConfigError::UnknownKey(k.clone())),
            }
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::new(DEFAULT_SUFFIX.parse().expect("valid default"), Vec::new());
        cfg.apply(&read(path)?)?;
        Ok(cfg)
    }
}
