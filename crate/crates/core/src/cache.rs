//! TTL-bounded answer cache shared by the stub and the resolver.
//!
//! Time is passed in explicitly as milliseconds on a monotonic clock so the
//! cache stays deterministic and usable without `std`.

use alloc::string::String;

use crate::crypto::AnswerSet;
use crate::lru::LruCache;
use crate::wire::{Rcode, RecordType};

/// How long empty (NODATA / NXDOMAIN) answers are kept.
pub const NEGATIVE_TTL_SECS: u32 = 30;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub domain: String,
    pub qtype: RecordType,
}

impl CacheKey {
    /// Keys are case-insensitive; a trailing dot is ignored.
    pub fn new(domain: &str, qtype: RecordType) -> Self {
        let mut domain = String::from(domain.strip_suffix('.').unwrap_or(domain));
        domain.make_ascii_lowercase();
        Self { domain, qtype }
    }
}

struct Entry {
    answers: AnswerSet,
    stored_at_ms: u64,
    expires_at_ms: u64,
}

pub struct AnswerCache {
    entries: LruCache<CacheKey, Entry>,
}

impl AnswerCache {
    /// `capacity` of 0 means unbounded.
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: LruCache::new(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Returns the cached answers with TTLs reduced by the time spent in the
    /// cache. Expired entries are dropped and never returned.
    pub fn get(&mut self, key: &CacheKey, now_ms: u64) -> Option<AnswerSet> {
        let entry = self.entries.get(key)?;
        if now_ms >= entry.expires_at_ms {
            self.entries.remove(key);
            return None;
        }
        let elapsed = u32::try_from((now_ms - entry.stored_at_ms) / 1000).unwrap_or(u32::MAX);
        let mut answers = entry.answers.clone();
        for rr in &mut answers.records {
            rr.ttl = rr.ttl.saturating_sub(elapsed);
        }
        Some(answers)
    }

    /// The lifetime `answers` would be cached for, or `None` if they should
    /// not be cached (failures, TTL 0).
    pub fn lifetime_secs(answers: &AnswerSet) -> Option<u32> {
        let ttl = if answers.records.is_empty() {
            match answers.rcode {
                Rcode::NOERROR | Rcode::NXDOMAIN => NEGATIVE_TTL_SECS,
                _ => return None,
            }
        } else if answers.rcode != Rcode::NOERROR {
            return None;
        } else {
            answers.records.iter().map(|rr| rr.ttl).min()?
        };
        (ttl > 0).then_some(ttl)
    }

    /// Caches `answers` for their lifetime; returns whether they were stored.
    pub fn insert(&mut self, key: CacheKey, answers: AnswerSet, now_ms: u64) -> bool {
        let Some(ttl) = Self::lifetime_secs(&answers) else {
            return false;
        };
        self.entries.insert(
            key,
            Entry {
                answers,
                stored_at_ms: now_ms,
                expires_at_ms: now_ms + u64::from(ttl) * 1000,
            },
        );
        true
    }
}
