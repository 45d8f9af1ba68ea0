//! Cryptographic building blocks.
//!
//! * AES-256-GCM for readings, coordinates and directory records.
//! * A synthetic-IV variant of the same cipher for patient identities, so
//!   equal identities under one key produce byte-equal tokens.
//! * SHA-256 for per-reading, group, block and transaction digests.
//! * Ed25519 for edge, verification-node and ledger-account signatures.
//! * RSA-2048/OAEP-SHA256, applied chunk by chunk, for the timing comparison.

use std::fmt;

use aes_gcm::aead::{Aead, Payload};
use aes_gcm::{Aes256Gcm, KeyInit, Nonce};
use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use rsa::traits::PublicKeyParts;
use rsa::{Oaep, RsaPrivateKey, RsaPublicKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::encoding::{self, b64, b64_array};

pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
pub const DIGEST_LEN: usize = 32;
pub const KEY_ID_LEN: usize = 8;

/// OAEP with SHA-256 consumes 2 * 32 + 2 bytes of every RSA block.
pub const OAEP_SHA256_OVERHEAD: usize = 66;
pub const RSA_BENCH_BITS: usize = 2048;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("authentication failure")]
    AuthenticationFailure,
    #[error("identity must not be empty")]
    EmptyIdentity,
    #[error("invalid key material: {0}")]
    InvalidKey(String),
    #[error("rsa: {0}")]
    Rsa(String),
}

pub trait CryptoSource: RngCore + CryptoRng {}
impl<T: RngCore + CryptoRng> CryptoSource for T {}

/// 256-bit symmetric key.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey([u8; KEY_LEN]);

impl SecretKey {
    pub fn generate<R: CryptoSource>(rng: &mut R) -> Self {
        let mut k = [0u8; KEY_LEN];
        rng.fill_bytes(&mut k);
        SecretKey(k)
    }

    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        SecretKey(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; KEY_LEN] = bytes
            .try_into()
            .map_err(|_| CryptoError::InvalidKey(format!("expected {KEY_LEN} bytes, got {}", bytes.len())))?;
        Ok(SecretKey(arr))
    }

    pub fn from_hex(text: &str) -> Result<Self, CryptoError> {
        let raw = hex::decode(text.trim()).map_err(|e| CryptoError::InvalidKey(e.to_string()))?;
        Self::from_slice(&raw)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    fn cipher(&self) -> Aes256Gcm {
        Aes256Gcm::new_from_slice(&self.0).expect("32-byte key")
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

/// SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; DIGEST_LEN]);

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        encoding::hex_encode(&self.0)
    }

    pub fn from_hex(text: &str) -> Result<Self, String> {
        let raw = encoding::hex_decode(text)?;
        let arr: [u8; DIGEST_LEN] = raw
            .as_slice()
            .try_into()
            .map_err(|_| format!("digest must be {DIGEST_LEN} bytes, got {}", raw.len()))?;
        Ok(Digest(arr))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Digest::from_hex(&text).map_err(serde::de::Error::custom)
    }
}

pub fn hash_bytes(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// Nonce plus ciphertext-and-tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ciphertext {
    #[serde(with = "b64_array")]
    pub nonce: [u8; NONCE_LEN],
    #[serde(with = "b64")]
    pub body: Vec<u8>,
}

impl Ciphertext {
    /// `nonce || body`, the bytes a reading digest is computed over.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(NONCE_LEN + self.body.len());
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.body);
        out
    }
}

pub fn symmetric_encrypt<R: CryptoSource>(key: &SecretKey, plaintext: &[u8], rng: &mut R) -> Ciphertext {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let body = key
        .cipher()
        .encrypt(Nonce::from_slice(&nonce), plaintext)
        .expect("AES-GCM encryption of in-memory buffers cannot fail");
    Ciphertext { nonce, body }
}

pub fn symmetric_decrypt(key: &SecretKey, ct: &Ciphertext) -> Result<Vec<u8>, CryptoError> {
    key.cipher()
        .decrypt(Nonce::from_slice(&ct.nonce), ct.body.as_slice())
        .map_err(|_| CryptoError::AuthenticationFailure)
}

/// As [`symmetric_encrypt`], binding `aad` into the tag.
pub fn symmetric_encrypt_aad<R: CryptoSource>(key: &SecretKey, plaintext: &[u8], aad: &[u8], rng: &mut R) -> Ciphertext {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let body = key
        .cipher()
        .encrypt(Nonce::from_slice(&nonce), Payload { msg: plaintext, aad })
        .expect("in-memory encryption");
    Ciphertext { nonce, body }
}

pub fn symmetric_decrypt_aad(key: &SecretKey, ct: &Ciphertext, aad: &[u8]) -> Result<Vec<u8>, CryptoError> {
    key.cipher()
        .decrypt(Nonce::from_slice(&ct.nonce), Payload { msg: &ct.body, aad })
        .map_err(|_| CryptoError::AuthenticationFailure)
}

/// Deterministically encrypted patient identity: `siv || aes-gcm(body)`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IdentityToken(#[serde(with = "b64")] pub Vec<u8>);

impl IdentityToken {
    pub const MIN_LEN: usize = NONCE_LEN + TAG_LEN + 1;

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        encoding::hex_encode(&self.0)
    }
}

impl fmt::Debug for IdentityToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IdentityToken({})", self.to_hex())
    }
}

type HmacSha256 = Hmac<Sha256>;

fn hmac(key: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut mac = <HmacSha256 as Mac>::new_from_slice(key).expect("hmac accepts any key length");
    for p in parts {
        mac.update(p);
    }
    mac.finalize().into_bytes().into()
}

struct SivKeys {
    mac: [u8; 32],
    enc: SecretKey,
}

fn siv_keys(key: &SecretKey) -> SivKeys {
    SivKeys {
        mac: hmac(key.as_bytes(), &[b"hchain/identity/siv-mac"]),
        enc: SecretKey(hmac(key.as_bytes(), &[b"hchain/identity/siv-enc"])),
    }
}

/// Synthetic IV = truncated HMAC of the identity under a derived key; the
/// identity is then sealed with AES-GCM under a second derived key using
/// that IV. Same (key, identity) always gives the same token.
pub fn deterministic_encrypt_identity(key: &SecretKey, identity: &str) -> Result<IdentityToken, CryptoError> {
    if identity.is_empty() {
        return Err(CryptoError::EmptyIdentity);
    }
    let keys = siv_keys(key);
    let tag = hmac(&keys.mac, &[identity.as_bytes()]);
    let mut siv = [0u8; NONCE_LEN];
    siv.copy_from_slice(&tag[..NONCE_LEN]);
    let body = keys
        .enc
        .cipher()
        .encrypt(Nonce::from_slice(&siv), identity.as_bytes())
        .expect("in-memory encryption");
    let mut token = Vec::with_capacity(NONCE_LEN + body.len());
    token.extend_from_slice(&siv);
    token.extend_from_slice(&body);
    Ok(IdentityToken(token))
}

/// Opens a token and re-checks the synthetic IV.
pub fn decrypt_identity_token(key: &SecretKey, token: &IdentityToken) -> Result<String, CryptoError> {
    if token.0.len() < IdentityToken::MIN_LEN {
        return Err(CryptoError::AuthenticationFailure);
    }
    let keys = siv_keys(key);
    let (siv, body) = token.0.split_at(NONCE_LEN);
    let plain = keys
        .enc
        .cipher()
        .decrypt(Nonce::from_slice(siv), body)
        .map_err(|_| CryptoError::AuthenticationFailure)?;
    let expected = hmac(&keys.mac, &[&plain]);
    if expected[..NONCE_LEN] != *siv {
        return Err(CryptoError::AuthenticationFailure);
    }
    String::from_utf8(plain).map_err(|_| CryptoError::AuthenticationFailure)
}

/// First eight bytes of SHA-256 over the public key; rendered as hex.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyId(pub [u8; KEY_ID_LEN]);

impl KeyId {
    pub fn of(public: &PublicKey) -> KeyId {
        let d = hash_bytes(public.as_bytes());
        let mut id = [0u8; KEY_ID_LEN];
        id.copy_from_slice(&d.0[..KEY_ID_LEN]);
        KeyId(id)
    }

    pub fn to_hex(&self) -> String {
        encoding::hex_encode(&self.0)
    }

    pub fn from_hex(text: &str) -> Result<Self, String> {
        let raw = encoding::hex_decode(text)?;
        let arr: [u8; KEY_ID_LEN] = raw
            .as_slice()
            .try_into()
            .map_err(|_| format!("key id must be {KEY_ID_LEN} bytes"))?;
        Ok(KeyId(arr))
    }
}

impl fmt::Debug for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyId({})", self.to_hex())
    }
}

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for KeyId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for KeyId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        KeyId::from_hex(&text).map_err(serde::de::Error::custom)
    }
}

/// Ed25519 signature.
#[derive(Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Signature(#[serde(with = "b64_array")] pub [u8; 64]);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", encoding::hex_encode(&self.0[..8]))
    }
}

/// Ed25519 verification key.
#[derive(Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PublicKey(#[serde(with = "b64_array")] pub [u8; 32]);

impl PublicKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn key_id(&self) -> KeyId {
        KeyId::of(self)
    }

    /// Strict Ed25519 verification; malformed keys verify nothing.
    pub fn verify(&self, data: &[u8], sig: &Signature) -> bool {
        let Ok(vk) = VerifyingKey::from_bytes(&self.0) else {
            return false;
        };
        let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
        vk.verify_strict(data, &sig).is_ok()
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.key_id())
    }
}

#[derive(Clone)]
pub struct SignatureKeyPair {
    signing: SigningKey,
    public: PublicKey,
    key_id: KeyId,
}

impl SignatureKeyPair {
    pub fn generate<R: CryptoSource>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self::from_seed(seed)
    }

    pub fn from_seed(seed: [u8; 32]) -> Self {
        let signing = SigningKey::from_bytes(&seed);
        let public = PublicKey(signing.verifying_key().to_bytes());
        let key_id = public.key_id();
        SignatureKeyPair { signing, public, key_id }
    }

    pub fn public(&self) -> PublicKey {
        self.public
    }

    pub fn key_id(&self) -> KeyId {
        self.key_id
    }

    pub fn sign(&self, data: &[u8]) -> Signature {
        Signature(self.signing.sign(data).to_bytes())
    }
}

impl fmt::Debug for SignatureKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SignatureKeyPair").field("key_id", &self.key_id).finish_non_exhaustive()
    }
}

pub fn sign(kp: &SignatureKeyPair, data: &[u8]) -> Signature {
    kp.sign(data)
}

pub fn verify(public: &PublicKey, data: &[u8], sig: &Signature) -> bool {
    public.verify(data, sig)
}

/// RSA key pair used only by the encryption-time comparison.
#[derive(Clone)]
pub struct AsymmetricKeyPair {
    pub private: RsaPrivateKey,
    pub public: RsaPublicKey,
}

impl AsymmetricKeyPair {
    pub fn generate<R: CryptoSource>(rng: &mut R, bits: usize) -> Result<Self, CryptoError> {
        let private = RsaPrivateKey::new(rng, bits).map_err(|e| CryptoError::Rsa(e.to_string()))?;
        let public = RsaPublicKey::from(&private);
        Ok(AsymmetricKeyPair { private, public })
    }
}

/// Plaintext bytes that fit in one OAEP-SHA256 block under `public`.
pub fn chunk_payload_len(public: &RsaPublicKey) -> usize {
    public.size() - OAEP_SHA256_OVERHEAD
}

/// Splits `data` into key-sized pieces and encrypts each one on its own.
pub fn asymmetric_encrypt_chunked<R: CryptoSource>(
    public: &RsaPublicKey,
    data: &[u8],
    rng: &mut R,
) -> Result<Vec<Vec<u8>>, CryptoError> {
    data.chunks(chunk_payload_len(public))
        .map(|chunk| {
            public
                .encrypt(rng, Oaep::new::<Sha256>(), chunk)
                .map_err(|e| CryptoError::Rsa(e.to_string()))
        })
        .collect()
}

pub fn asymmetric_decrypt_chunked(private: &RsaPrivateKey, chunks: &[Vec<u8>]) -> Result<Vec<u8>, CryptoError> {
    let mut out = Vec::with_capacity(chunks.len() * (private.size() - OAEP_SHA256_OVERHEAD));
    for chunk in chunks {
        let plain = private
            .decrypt(Oaep::new::<Sha256>(), chunk)
            .map_err(|_| CryptoError::AuthenticationFailure)?;
        out.extend_from_slice(&plain);
    }
    Ok(out)
}
