//! Packing an encrypted query into a QNAME and back.
//!
//! Layout, left to right:
//!
//! ```text
//! [sealed domain, base64url, 63-char chunks]...
//! [wrapped key, chars 0..63] [wrapped key, chars 63..102]
//! [resolver label]?  [zone suffix labels]...
//! ```
//!
//! The wrapped key always encodes to 102 characters, so its two labels are
//! self-delimiting and the parser needs no length header. The optional
//! resolver label is the 32-character self-certifying name, distinguishable
//! from the 39-character second key label by length.

use alloc::string::String;
use alloc::vec::Vec;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use rand_core::{CryptoRng, RngCore};
use thiserror::Error;

use crate::crypto::{
    self, CryptoError, SealedDomain, SessionKey, WrappedKey, NONCE_LEN, PUBLIC_KEY_LEN, TAG_LEN, WRAPPED_KEY_LEN,
};
use crate::identity::SELF_CERTIFYING_LABEL_LEN;
use crate::wire::{DnsName, WireError, MAX_LABEL_LEN, MAX_PRESENTATION_LEN};

/// Base64url length of the wrapped key.
pub const KEY_TEXT_LEN: usize = base64_len(WRAPPED_KEY_LEN);
const KEY_LABEL_LENS: [usize; 2] = [MAX_LABEL_LEN, KEY_TEXT_LEN - MAX_LABEL_LEN];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QnameError {
    #[error("encrypted QNAME would be {length} characters, over the {MAX_PRESENTATION_LEN} limit")]
    QnameOversize { length: usize },
    #[error("name is not under the ODNS zone")]
    NotOdnsQuery,
    #[error("malformed ODNS QNAME: {0}")]
    MalformedOdnsQname(&'static str),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

impl From<WireError> for QnameError {
    fn from(_: WireError) -> Self {
        QnameError::MalformedOdnsQname("invalid DNS name")
    }
}

/// Unpadded base64 length of `n` bytes.
pub const fn base64_len(n: usize) -> usize {
    (n * 4).div_ceil(3)
}

/// Presentation length of the QNAME produced for a `domain_len`-character
/// domain, where `tail_len` is the presentation length of everything after
/// the key labels (resolver label and zone suffix, dots included; 0 for none).
pub fn estimate_qname_length(domain_len: usize, tail_len: usize) -> usize {
    let text = base64_len(NONCE_LEN + domain_len + TAG_LEN);
    let chunks = text.div_ceil(MAX_LABEL_LEN);
    let head = text + chunks + KEY_TEXT_LEN + 1;
    if tail_len == 0 {
        head
    } else {
        head + 1 + tail_len
    }
}

/// Presentation length following the key labels for the given options.
pub fn tail_len(with_resolver_label: bool, suffix: &DnsName) -> usize {
    let label = if with_resolver_label {
        SELF_CERTIFYING_LABEL_LEN
    } else {
        0
    };
    match (label, suffix.presentation_len()) {
        (0, s) => s,
        (l, 0) => l,
        (l, s) => l + 1 + s,
    }
}

/// A built ODNS query name, kept in its parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OdnsQname {
    pub ciphertext_labels: Vec<String>,
    pub key_labels: [String; 2],
    pub resolver_label: Option<String>,
    pub suffix: DnsName,
}

impl OdnsQname {
    fn labels(&self) -> impl Iterator<Item = Vec<u8>> + '_ {
        self.ciphertext_labels
            .iter()
            .chain(&self.key_labels)
            .chain(&self.resolver_label)
            .map(|l| l.as_bytes().to_vec())
    }

    pub fn to_name(&self) -> Result<DnsName, WireError> {
        self.suffix.prepend(self.labels())
    }

    pub fn presentation_len(&self) -> usize {
        let own: usize = self.labels().map(|l| l.len() + 1).sum();
        match self.suffix.presentation_len() {
            0 => own - 1,
            s => own + s,
        }
    }
}

fn chunk(text: &str) -> Vec<String> {
    text.as_bytes()
        .chunks(MAX_LABEL_LEN)
        .map(|c| String::from_utf8(c.to_vec()).expect("base64 is ASCII"))
        .collect()
}

/// Seals `domain` under `key`, wraps `key` for the resolver and lays both
/// out as a QNAME under `suffix`.
pub fn build_odns_qname<R: RngCore + CryptoRng + ?Sized>(
    domain: &str,
    key: &SessionKey,
    resolver_public: &[u8; PUBLIC_KEY_LEN],
    resolver_label: Option<&str>,
    suffix: &DnsName,
    rng: &mut R,
) -> Result<OdnsQname, QnameError> {
    if let Some(label) = resolver_label {
        if label.is_empty() || label.len() > MAX_LABEL_LEN || label.contains('.') {
            return Err(QnameError::MalformedOdnsQname("resolver label"));
        }
    }
    let tail = match (resolver_label.map_or(0, str::len), suffix.presentation_len()) {
        (0, s) => s,
        (l, 0) => l,
        (l, s) => l + 1 + s,
    };
    let length = estimate_qname_length(domain.len(), tail);
    if length > MAX_PRESENTATION_LEN {
        return Err(QnameError::QnameOversize { length });
    }

    let sealed = crypto::seal_domain(domain, key, rng)?;
    let wrapped = crypto::wrap_key(key, resolver_public, rng)?;
    let key_text = URL_SAFE_NO_PAD.encode(wrapped.to_bytes());
    let (k1, k2) = key_text.split_at(KEY_LABEL_LENS[0]);
    let qname = OdnsQname {
        ciphertext_labels: chunk(&URL_SAFE_NO_PAD.encode(sealed.to_bytes())),
        key_labels: [k1.into(), k2.into()],
        resolver_label: resolver_label.map(Into::into),
        suffix: suffix.clone(),
    };
    debug_assert_eq!(qname.presentation_len(), length);
    Ok(qname)
}

/// The pieces recovered from an ODNS QNAME.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedQname {
    pub sealed: SealedDomain,
    pub wrapped: WrappedKey,
    pub resolver_label: Option<String>,
}

pub fn parse_odns_qname(name: &DnsName, suffix: &DnsName) -> Result<ParsedQname, QnameError> {
    let mut rest = name.strip_suffix(suffix).ok_or(QnameError::NotOdnsQuery)?;

    let mut resolver_label = None;
    if let Some((last, head)) = rest.split_last() {
        if last.len() == SELF_CERTIFYING_LABEL_LEN {
            let label = core::str::from_utf8(last).map_err(|_| QnameError::MalformedOdnsQname("resolver label"))?;
            resolver_label = Some(label.into());
            rest = head;
        }
    }

    let [ciphertext @ .., k1, k2] = rest else {
        return Err(QnameError::MalformedOdnsQname("too few labels"));
    };
    if ciphertext.is_empty() {
        return Err(QnameError::MalformedOdnsQname("missing ciphertext"));
    }
    if [k1.len(), k2.len()] != KEY_LABEL_LENS {
        return Err(QnameError::MalformedOdnsQname("key label lengths"));
    }
    let mut key_text = k1.clone();
    key_text.extend_from_slice(k2);
    let key_bytes = URL_SAFE_NO_PAD
        .decode(&key_text)
        .map_err(|_| QnameError::MalformedOdnsQname("key encoding"))?;
    let wrapped = WrappedKey::from_bytes(&key_bytes).map_err(|_| QnameError::MalformedOdnsQname("wrapped key size"))?;

    let sealed_text: Vec<u8> = ciphertext.concat();
    let sealed_bytes = URL_SAFE_NO_PAD
        .decode(&sealed_text)
        .map_err(|_| QnameError::MalformedOdnsQname("ciphertext encoding"))?;
    let sealed =
        SealedDomain::from_bytes(&sealed_bytes).map_err(|_| QnameError::MalformedOdnsQname("ciphertext size"))?;

    Ok(ParsedQname {
        sealed,
        wrapped,
        resolver_label,
    })
}
