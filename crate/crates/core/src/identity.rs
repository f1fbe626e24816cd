//! Self-certifying resolver names and the identity announcement carried in
//! the bootstrap response.
//!
//! The name label is the lowercase, unpadded base32 encoding of the first 20
//! bytes of SHA-256 over the resolver's public key, so anyone holding the key
//! can check the name and vice versa.

use alloc::string::String;
use alloc::vec::Vec;

use data_encoding::BASE32_NOPAD;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crypto::PUBLIC_KEY_LEN;
use crate::wire::EdnsOption;
use crate::OPTION_IDENTITY;

/// Length of a self-certifying label: 20 bytes in base32.
pub const SELF_CERTIFYING_LABEL_LEN: usize = 32;
const NAME_DIGEST_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentityError {
    #[error("identity option is malformed")]
    Malformed,
    #[error("name label does not match the announced public key")]
    VerificationFailure,
}

pub fn derive_self_certifying_name(public_key: &[u8; PUBLIC_KEY_LEN]) -> String {
    let digest = Sha256::digest(public_key);
    let mut label = BASE32_NOPAD.encode(&digest[..NAME_DIGEST_LEN]);
    label.make_ascii_lowercase();
    label
}

/// `public_key (32) || name_label (UTF-8)`, sent as EDNS option 65001.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentityAnnouncement {
    pub public_key: [u8; PUBLIC_KEY_LEN],
    pub name_label: String,
}

impl IdentityAnnouncement {
    pub fn for_key(public_key: [u8; PUBLIC_KEY_LEN]) -> Self {
        Self {
            name_label: derive_self_certifying_name(&public_key),
            public_key,
        }
    }

    pub fn to_payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(PUBLIC_KEY_LEN + self.name_label.len());
        out.extend_from_slice(&self.public_key);
        out.extend_from_slice(self.name_label.as_bytes());
        out
    }

    pub fn to_option(&self) -> EdnsOption {
        EdnsOption::new(OPTION_IDENTITY, self.to_payload())
    }

    pub fn from_payload(payload: &[u8]) -> Result<Self, IdentityError> {
        if payload.len() <= PUBLIC_KEY_LEN {
            return Err(IdentityError::Malformed);
        }
        let (key, label) = payload.split_at(PUBLIC_KEY_LEN);
        let name_label = core::str::from_utf8(label)
            .map_err(|_| IdentityError::Malformed)?
            .into();
        Ok(Self {
            public_key: key.try_into().expect("split at key length"),
            name_label,
        })
    }

    /// Checks that the label was derived from the key.
    pub fn verify(&self) -> Result<(), IdentityError> {
        if derive_self_certifying_name(&self.public_key) == self.name_label {
            Ok(())
        } else {
            Err(IdentityError::VerificationFailure)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // base32(SHA-256(key)[..20]) computed with Python hashlib/base64.
    #[test]
    fn matches_reference_hash() {
        assert_eq!(
            derive_self_certifying_name(&[0u8; 32]),
            "mzuhvlpymk6xo3epygfy5h4oeaejofef"
        );
        let seq: [u8; 32] = core::array::from_fn(|i| i as u8);
        assert_eq!(derive_self_certifying_name(&seq), "mmg42klgyqzwneiskrelxms3j72bfje4");
    }

    #[test]
    fn deterministic_and_label_sized() {
        let pk = [9u8; 32];
        let a = derive_self_certifying_name(&pk);
        assert_eq!(a, derive_self_certifying_name(&pk));
        assert_eq!(a.len(), SELF_CERTIFYING_LABEL_LEN);
        assert!(a.bytes().all(|b| b.is_ascii_lowercase() || (b'2'..=b'7').contains(&b)));
    }

    #[test]
    fn distinct_keys_distinct_labels() {
        let labels: alloc::collections::BTreeSet<String> =
            (0..=255u8).map(|i| derive_self_certifying_name(&[i; 32])).collect();
        assert_eq!(labels.len(), 256);
    }

    #[test]
    fn announcement_payload_is_64_bytes_and_verifies() {
        let ann = IdentityAnnouncement::for_key([3u8; 32]);
        let payload = ann.to_payload();
        assert_eq!(payload.len(), 64);
        let back = IdentityAnnouncement::from_payload(&payload).unwrap();
        assert_eq!(back, ann);
        assert_eq!(back.verify(), Ok(()));
    }

    #[test]
    fn mismatched_label_fails_verification() {
        let mut ann = IdentityAnnouncement::for_key([3u8; 32]);
        ann.name_label = derive_self_certifying_name(&[4u8; 32]);
        assert_eq!(ann.verify(), Err(IdentityError::VerificationFailure));
        assert_eq!(
            IdentityAnnouncement::from_payload(&[1u8; 32]),
            Err(IdentityError::Malformed)
        );
    }
}
