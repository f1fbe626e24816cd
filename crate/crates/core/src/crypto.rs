//! Hybrid encryption for ODNS queries and answers.
//!
//! Each query gets a fresh 16-byte session key. The key encrypts the domain
//! and, on the way back, the answer (AES-128-GCM, random 12-byte nonce
//! prepended). The session key itself travels wrapped for the resolver with
//! ECIES over Curve25519:
//!
//! ```text
//! ephemeral_public (32) || nonce (12) || AES-128-GCM(wrap_key, k) (16 + 16)
//! wrap_key = HKDF-SHA256(ikm = X25519(ephemeral, resolver_public),
//!                        info = "odns-key-wrap-v1")[..16]
//! ```

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use aes_gcm::aead::{Aead, KeyInit};
use aes_gcm::{Aes128Gcm, Key, Nonce};
use hkdf::Hkdf;
use rand_core::{CryptoRng, RngCore};
use sha2::Sha256;
use thiserror::Error;
use x25519_dalek::{PublicKey, StaticSecret};
use zeroize::Zeroize;

use crate::wire::{self, Rcode, ResourceRecord, WireError};

pub const SESSION_KEY_LEN: usize = 16;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
pub const PUBLIC_KEY_LEN: usize = 32;
/// Serialized size of a [`WrappedKey`].
pub const WRAPPED_KEY_LEN: usize = PUBLIC_KEY_LEN + NONCE_LEN + SESSION_KEY_LEN + TAG_LEN;
/// Largest serialized [`SealedAnswer`] accepted, sized to keep responses
/// well inside a 4096-byte UDP payload.
pub const MAX_SEALED_ANSWER_LEN: usize = 3584;

const KEY_WRAP_INFO: &[u8] = b"odns-key-wrap-v1";
const ANSWER_FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("randomness source failed")]
    RngFailure,
    #[error("authentication failed")]
    AuthFailure,
    #[error("invalid public key")]
    InvalidPublicKey,
    #[error("malformed ciphertext")]
    Malformed,
    #[error("sealed answer would exceed {MAX_SEALED_ANSWER_LEN} bytes")]
    PayloadOversize,
}

fn fill<R: RngCore + CryptoRng + ?Sized>(rng: &mut R, buf: &mut [u8]) -> Result<(), CryptoError> {
    rng.try_fill_bytes(buf).map_err(|_| CryptoError::RngFailure)
}

/// Per-query symmetric key.
#[derive(Clone, PartialEq, Eq)]
pub struct SessionKey([u8; SESSION_KEY_LEN]);

impl SessionKey {
    pub fn generate<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Result<Self, CryptoError> {
        let mut k = [0u8; SESSION_KEY_LEN];
        fill(rng, &mut k)?;
        Ok(Self(k))
    }

    pub fn from_bytes(bytes: [u8; SESSION_KEY_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; SESSION_KEY_LEN] {
        &self.0
    }

    fn cipher(&self) -> Aes128Gcm {
        Aes128Gcm::new(Key::<Aes128Gcm>::from_slice(&self.0))
    }
}

impl Drop for SessionKey {
    fn drop(&mut self) {
        self.0.zeroize();
    }
}

impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SessionKey(..)")
    }
}

pub fn generate_session_key<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Result<SessionKey, CryptoError> {
    SessionKey::generate(rng)
}

/// The resolver's long-term Curve25519 key pair.
#[derive(Clone)]
pub struct ResolverKeyPair {
    secret: StaticSecret,
    public: PublicKey,
}

impl ResolverKeyPair {
    pub fn generate<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Result<Self, CryptoError> {
        let mut bytes = [0u8; 32];
        fill(rng, &mut bytes)?;
        let pair = Self::from_secret(bytes);
        bytes.zeroize();
        Ok(pair)
    }

    pub fn from_secret(secret: [u8; 32]) -> Self {
        let secret = StaticSecret::from(secret);
        let public = PublicKey::from(&secret);
        Self { secret, public }
    }

    /// Parses the 64-byte `secret || public` key file layout, checking that
    /// the public half matches the secret.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != 64 {
            return Err(CryptoError::Malformed);
        }
        let (secret, public) = bytes.split_at(32);
        let mut sk = [0u8; 32];
        sk.copy_from_slice(secret);
        let pair = Self::from_secret(sk);
        sk.zeroize();
        if pair.public.as_bytes() != public {
            return Err(CryptoError::InvalidPublicKey);
        }
        Ok(pair)
    }

    pub fn to_bytes(&self) -> [u8; 64] {
        let mut out = [0u8; 64];
        out[..32].copy_from_slice(self.secret.as_bytes());
        out[32..].copy_from_slice(self.public.as_bytes());
        out
    }

    pub fn public_bytes(&self) -> [u8; PUBLIC_KEY_LEN] {
        self.public.to_bytes()
    }
}

impl fmt::Debug for ResolverKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ResolverKeyPair")
            .field("public", self.public.as_bytes())
            .finish_non_exhaustive()
    }
}

/// A session key wrapped for the resolver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WrappedKey {
    pub ephemeral_public: [u8; PUBLIC_KEY_LEN],
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: [u8; SESSION_KEY_LEN + TAG_LEN],
}

impl WrappedKey {
    pub fn to_bytes(&self) -> [u8; WRAPPED_KEY_LEN] {
        let mut out = [0u8; WRAPPED_KEY_LEN];
        out[..32].copy_from_slice(&self.ephemeral_public);
        out[32..44].copy_from_slice(&self.nonce);
        out[44..].copy_from_slice(&self.ciphertext);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != WRAPPED_KEY_LEN {
            return Err(CryptoError::Malformed);
        }
        let mut w = Self {
            ephemeral_public: [0; PUBLIC_KEY_LEN],
            nonce: [0; NONCE_LEN],
            ciphertext: [0; SESSION_KEY_LEN + TAG_LEN],
        };
        w.ephemeral_public.copy_from_slice(&bytes[..32]);
        w.nonce.copy_from_slice(&bytes[32..44]);
        w.ciphertext.copy_from_slice(&bytes[44..]);
        Ok(w)
    }
}

fn derive_wrap_key(shared: &[u8; 32]) -> Aes128Gcm {
    let mut okm = [0u8; SESSION_KEY_LEN];
    Hkdf::<Sha256>::new(None, shared)
        .expand(KEY_WRAP_INFO, &mut okm)
        .expect("16 bytes is a valid HKDF-SHA256 output length");
    let cipher = Aes128Gcm::new(Key::<Aes128Gcm>::from_slice(&okm));
    okm.zeroize();
    cipher
}

pub fn wrap_key<R: RngCore + CryptoRng + ?Sized>(
    key: &SessionKey,
    resolver_public: &[u8; PUBLIC_KEY_LEN],
    rng: &mut R,
) -> Result<WrappedKey, CryptoError> {
    let mut eph = [0u8; 32];
    fill(rng, &mut eph)?;
    let ephemeral = StaticSecret::from(eph);
    eph.zeroize();
    let shared = ephemeral.diffie_hellman(&PublicKey::from(*resolver_public));
    if !shared.was_contributory() {
        return Err(CryptoError::InvalidPublicKey);
    }
    let mut nonce = [0u8; NONCE_LEN];
    fill(rng, &mut nonce)?;
    let ct = derive_wrap_key(shared.as_bytes())
        .encrypt(Nonce::from_slice(&nonce), key.as_bytes().as_slice())
        .map_err(|_| CryptoError::Malformed)?;
    let mut ciphertext = [0u8; SESSION_KEY_LEN + TAG_LEN];
    ciphertext.copy_from_slice(&ct);
    Ok(WrappedKey {
        ephemeral_public: PublicKey::from(&ephemeral).to_bytes(),
        nonce,
        ciphertext,
    })
}

pub fn unwrap_key(wrapped: &WrappedKey, keypair: &ResolverKeyPair) -> Result<SessionKey, CryptoError> {
    let shared = keypair
        .secret
        .diffie_hellman(&PublicKey::from(wrapped.ephemeral_public));
    if !shared.was_contributory() {
        return Err(CryptoError::AuthFailure);
    }
    let mut pt = derive_wrap_key(shared.as_bytes())
        .decrypt(Nonce::from_slice(&wrapped.nonce), wrapped.ciphertext.as_slice())
        .map_err(|_| CryptoError::AuthFailure)?;
    let mut k = [0u8; SESSION_KEY_LEN];
    k.copy_from_slice(&pt);
    pt.zeroize();
    Ok(SessionKey(k))
}

/// `nonce || AES-128-GCM ciphertext` under a session key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sealed {
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
}

impl Sealed {
    fn seal<R: RngCore + CryptoRng + ?Sized>(
        key: &SessionKey,
        plaintext: &[u8],
        rng: &mut R,
    ) -> Result<Self, CryptoError> {
        let mut nonce = [0u8; NONCE_LEN];
        fill(rng, &mut nonce)?;
        let ciphertext = key
            .cipher()
            .encrypt(Nonce::from_slice(&nonce), plaintext)
            .map_err(|_| CryptoError::Malformed)?;
        Ok(Self { nonce, ciphertext })
    }

    fn open(&self, key: &SessionKey) -> Result<Vec<u8>, CryptoError> {
        key.cipher()
            .decrypt(Nonce::from_slice(&self.nonce), self.ciphertext.as_slice())
            .map_err(|_| CryptoError::AuthFailure)
    }

    pub fn len(&self) -> usize {
        NONCE_LEN + self.ciphertext.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.ciphertext);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < NONCE_LEN + TAG_LEN {
            return Err(CryptoError::Malformed);
        }
        let mut nonce = [0u8; NONCE_LEN];
        nonce.copy_from_slice(&bytes[..NONCE_LEN]);
        Ok(Self {
            nonce,
            ciphertext: bytes[NONCE_LEN..].to_vec(),
        })
    }
}

/// The encrypted query name.
pub type SealedDomain = Sealed;
/// The encrypted answer set carried back in an OPT option.
pub type SealedAnswer = Sealed;

pub fn seal_domain<R: RngCore + CryptoRng + ?Sized>(
    domain: &str,
    key: &SessionKey,
    rng: &mut R,
) -> Result<SealedDomain, CryptoError> {
    Sealed::seal(key, domain.as_bytes(), rng)
}

pub fn open_domain(sealed: &SealedDomain, key: &SessionKey) -> Result<String, CryptoError> {
    String::from_utf8(sealed.open(key)?).map_err(|_| CryptoError::Malformed)
}

/// The plaintext of a [`SealedAnswer`]: the response code plus the answer
/// records with their real TTLs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerSet {
    pub rcode: Rcode,
    pub records: Vec<ResourceRecord>,
}

impl AnswerSet {
    pub fn new(rcode: Rcode, records: Vec<ResourceRecord>) -> Self {
        Self { rcode, records }
    }

    pub fn failure(rcode: Rcode) -> Self {
        Self {
            rcode,
            records: Vec::new(),
        }
    }

    /// `version(1) || rcode(1) || count(2) || records (uncompressed)`.
    pub fn to_bytes(&self) -> Result<Vec<u8>, WireError> {
        let count = u16::try_from(self.records.len()).map_err(|_| WireError::OversizeField)?;
        let mut out = alloc::vec![ANSWER_FORMAT_VERSION, self.rcode.0];
        out.extend_from_slice(&count.to_be_bytes());
        for rr in &self.records {
            rr.write(&mut out)?;
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let malformed = WireError::MalformedMessage("answer set");
        let [version, rcode, c0, c1, rest @ ..] = bytes else {
            return Err(malformed);
        };
        if *version != ANSWER_FORMAT_VERSION {
            return Err(malformed);
        }
        let count = u16::from_be_bytes([*c0, *c1]);
        let mut records = Vec::with_capacity(usize::from(count).min(64));
        let mut pos = 0;
        for _ in 0..count {
            let (rr, used) = wire::read_record(&rest[pos..])?;
            records.push(rr);
            pos += used;
        }
        if pos != rest.len() {
            return Err(malformed);
        }
        Ok(Self {
            rcode: Rcode(*rcode),
            records,
        })
    }
}

pub fn seal_answer<R: RngCore + CryptoRng + ?Sized>(
    answers: &AnswerSet,
    key: &SessionKey,
    rng: &mut R,
) -> Result<SealedAnswer, CryptoError> {
    let plain = answers.to_bytes().map_err(|_| CryptoError::PayloadOversize)?;
    if plain.len() + NONCE_LEN + TAG_LEN > MAX_SEALED_ANSWER_LEN {
        return Err(CryptoError::PayloadOversize);
    }
    Sealed::seal(key, &plain, rng)
}

pub fn open_answer(sealed: &SealedAnswer, key: &SessionKey) -> Result<AnswerSet, CryptoError> {
    let mut plain = sealed.open(key)?;
    let answers = AnswerSet::from_bytes(&plain).map_err(|_| CryptoError::Malformed);
    plain.zeroize();
    answers
}


#[cfg(test)]
mod tests {
    use super::test_rng::Replay;
    use super::*;
    use crate::wire::DnsName;
    use alloc::collections::BTreeSet;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(7)
    }

    fn seq(start: u8, len: usize) -> Vec<u8> {
        (0..len).map(|i| start + i as u8).collect()
    }

    // Vectors computed with the Python `cryptography` package (AESGCM,
    // X25519PrivateKey, HKDF) from the same fixed keys and nonces.
    const SEALED_WWW_FOO: &str = "101112131415161718191a1bb35974816920d9c174b2305e279e8d6a2c84d7dc7f714fe2d2048b";
    const RESOLVER_PUBLIC: &str = "79a631eede1bf9c98f12032cdeadd0e7a079398fc786b88cc846ec89af85a51a";
    const WRAPPED: &str = "358072d6365880d1aeea329adf9121383851ed21a28e3b75e965d0d2cd166254606162636465666768696a6b25e45196f17436bbe14771e6d5809f3fc8ddb2857d71bf952989641454edd448";

    fn fixed_key() -> SessionKey {
        SessionKey::from_bytes(seq(0, 16).try_into().unwrap())
    }

    #[test]
    fn session_keys_are_16_bytes_and_distinct() {
        let mut r = rng();
        let a = generate_session_key(&mut r).unwrap();
        let b = generate_session_key(&mut r).unwrap();
        assert_eq!(a.as_bytes().len(), 16);
        assert_ne!(a, b);
        let all: BTreeSet<[u8; 16]> = (0..1000)
            .map(|_| *generate_session_key(&mut r).unwrap().as_bytes())
            .collect();
        assert_eq!(all.len(), 1000);
    }

    #[test]
    fn rng_failure_is_reported() {
        let mut empty = Replay { bytes: &[0u8; 4] };
        assert_eq!(generate_session_key(&mut empty).unwrap_err(), CryptoError::RngFailure);
    }

    #[test]
    fn seal_domain_matches_reference_aead() {
        let nonce = seq(0x10, 12);
        let sealed = seal_domain("www.foo.com", &fixed_key(), &mut Replay { bytes: &nonce }).unwrap();
        assert_eq!(hex::encode(sealed.to_bytes()), SEALED_WWW_FOO);
        assert_eq!(sealed.ciphertext.len(), 11 + 16);
        assert_eq!(open_domain(&sealed, &fixed_key()).unwrap(), "www.foo.com");
    }

    #[test]
    fn seal_domain_uses_fresh_nonces() {
        let mut r = rng();
        let k = fixed_key();
        let a = seal_domain("www.foo.com", &k, &mut r).unwrap();
        let b = seal_domain("www.foo.com", &k, &mut r).unwrap();
        assert_ne!(a, b);
        assert_eq!(open_domain(&b, &k).unwrap(), "www.foo.com");
    }

    #[test]
    fn open_domain_rejects_tampering_and_wrong_key() {
        let mut r = rng();
        let k = fixed_key();
        let sealed = seal_domain("www.foo.com", &k, &mut r).unwrap();
        let mut bad = sealed.clone();
        bad.ciphertext[3] ^= 0x01;
        assert_eq!(open_domain(&bad, &k), Err(CryptoError::AuthFailure));
        let other = generate_session_key(&mut r).unwrap();
        assert_eq!(open_domain(&sealed, &other), Err(CryptoError::AuthFailure));
    }

    #[test]
    fn wrap_key_matches_reference_ecies() {
        let resolver = ResolverKeyPair::from_secret(seq(0x40, 32).try_into().unwrap());
        assert_eq!(hex::encode(resolver.public_bytes()), RESOLVER_PUBLIC);
        let mut stream = seq(0x20, 32);
        stream.extend(seq(0x60, 12));
        let wrapped = wrap_key(&fixed_key(), &resolver.public_bytes(), &mut Replay { bytes: &stream }).unwrap();
        assert_eq!(hex::encode(wrapped.to_bytes()), WRAPPED);
        assert_eq!(wrapped.to_bytes().len(), 76);
        assert_eq!(unwrap_key(&wrapped, &resolver).unwrap(), fixed_key());
    }

    #[test]
    fn unwrap_with_other_keypair_fails() {
        let mut r = rng();
        let a = ResolverKeyPair::generate(&mut r).unwrap();
        let b = ResolverKeyPair::generate(&mut r).unwrap();
        let k = generate_session_key(&mut r).unwrap();
        let w = wrap_key(&k, &a.public_bytes(), &mut r).unwrap();
        assert_eq!(unwrap_key(&w, &b), Err(CryptoError::AuthFailure));
        let mut tampered = w.clone();
        tampered.ciphertext[0] ^= 0x80;
        assert_eq!(unwrap_key(&tampered, &a), Err(CryptoError::AuthFailure));
    }

    #[test]
    fn low_order_public_key_is_rejected() {
        let mut r = rng();
        let k = generate_session_key(&mut r).unwrap();
        assert_eq!(wrap_key(&k, &[0u8; 32], &mut r), Err(CryptoError::InvalidPublicKey));
    }

    #[test]
    fn keypair_file_layout() {
        let mut r = rng();
        let pair = ResolverKeyPair::generate(&mut r).unwrap();
        let bytes = pair.to_bytes();
        let back = ResolverKeyPair::from_bytes(&bytes).unwrap();
        assert_eq!(back.public_bytes(), pair.public_bytes());
        let mut bad = bytes;
        bad[40] ^= 1;
        assert_eq!(
            ResolverKeyPair::from_bytes(&bad).unwrap_err(),
            CryptoError::InvalidPublicKey
        );
        assert!(ResolverKeyPair::from_bytes(&bytes[..63]).is_err());
    }

    #[test]
    fn answers_round_trip_with_ttl() {
        let mut r = rng();
        let k = generate_session_key(&mut r).unwrap();
        let name: DnsName = "example.com".parse().unwrap();
        let set = AnswerSet::new(Rcode::NOERROR, vec![ResourceRecord::a(name, 300, [93, 184, 216, 34])]);
        let sealed = seal_answer(&set, &k, &mut r).unwrap();
        let opened = open_answer(&sealed, &k).unwrap();
        assert_eq!(opened, set);
        assert_eq!(opened.records[0].ttl, 300);

        let empty = AnswerSet::failure(Rcode::NXDOMAIN);
        assert_eq!(
            open_answer(&seal_answer(&empty, &k, &mut r).unwrap(), &k).unwrap(),
            empty
        );

        let mut bad = sealed;
        let last = bad.ciphertext.len() - 1;
        bad.ciphertext[last] ^= 0x04;
        assert_eq!(open_answer(&bad, &k), Err(CryptoError::AuthFailure));
    }

    #[test]
    fn oversize_answer_rejected() {
        let mut r = rng();
        let k = generate_session_key(&mut r).unwrap();
        let name: DnsName = "big.example".parse().unwrap();
        let records = (0..300u32)
            .map(|i| ResourceRecord::a(name.clone(), 60, i.to_be_bytes()))
            .collect();
        assert_eq!(
            seal_answer(&AnswerSet::new(Rcode::NOERROR, records), &k, &mut r),
            Err(CryptoError::PayloadOversize)
        );
    }
}
