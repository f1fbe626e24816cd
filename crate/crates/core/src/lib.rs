//! Oblivious DNS protocol core.
//!
//! A stub hides the queried domain from its recursive resolver by sealing it
//! under a fresh session key and wrapping that key for an ODNS resolver. Both
//! ride inside the QNAME of an ordinary query for the ODNS zone; the resolver
//! decrypts, resolves the plaintext name and returns the answer sealed under
//! the same session key in an EDNS0 option.
//!
//! This crate has no I/O and builds without `std`:
//!
//! - [`wire`]: DNS message encoding/decoding with EDNS0
//! - [`crypto`]: session keys, key wrapping, domain and answer sealing
//! - [`qname`]: packing ciphertexts into a valid QNAME and back
//! - [`identity`]: self-certifying resolver names
//! - [`cache`], [`lru`]: TTL answer cache over an LRU map
//! - [`policy`]: recursive striping, upstream selection, query scrubbing
//! - [`sim`]: trace-driven cache simulation

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod cache;
pub mod crypto;
pub mod identity;
pub mod lru;
pub mod policy;
pub mod qname;
pub mod sim;
pub mod wire;

/// EDNS option carrying the resolver's public key and self-certifying name.
pub const OPTION_IDENTITY: u16 = 65001;
/// EDNS option carrying a sealed answer.
pub const OPTION_SEALED_ANSWER: u16 = 65002;
/// EDNS option the compatibility probe uses to detect stripped additionals.
pub const OPTION_PROBE_MARKER: u16 = 65003;

/// First label of the bootstrap query, `special.<zone>`.
pub const SPECIAL_LABEL: &str = "special";

pub use cache::{AnswerCache, CacheKey};
pub use crypto::{AnswerSet, CryptoError, ResolverKeyPair, SealedAnswer, SealedDomain, SessionKey, WrappedKey};
pub use identity::{derive_self_certifying_name, IdentityAnnouncement, IdentityError};
pub use policy::{FallbackMode, NoSafeUpstream, Striping};
pub use qname::{build_odns_qname, estimate_qname_length, parse_odns_qname, OdnsQname, QnameError};
pub use wire::{DnsMessage, DnsName, EdnsOption, Rcode, RecordType, ResourceRecord, WireError};
