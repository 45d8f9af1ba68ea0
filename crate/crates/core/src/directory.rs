//! Provider-internal secured directory: encrypted patient identities, home
//! coordinates and escrowed patient keys, all sealed under a master key.
//!
//! On disk (`directory.store`):
//!
//! ```text
//! {"records": {"<token hex>": {"blob": b64, "nonce": b64}}}
//! ```
//!
//! Each blob is the AES-GCM sealed JSON of a [`DirectoryRecord`], with the
//! token hex as associated data so blobs cannot be moved between keys.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{
    self, deterministic_encrypt_identity, Ciphertext, CryptoError, IdentityToken, SecretKey, NONCE_LEN,
};
use crate::encoding::{b64, b64_array, canonical_encode};
use crate::geo::GeoCoordinate;
use crate::rng::SimRng;

pub const MASTER_KEY_ENV: &str = "HCHAIN_MASTER_KEY";
pub const STORE_FILE: &str = "directory.store";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DirectoryError {
    #[error("identity already registered")]
    DuplicateIdentity,
    #[error("identity token not found")]
    NotFound,
    #[error("authentication failure: directory record corrupted or wrong master key")]
    AuthenticationFailure,
    #[error("invalid home coordinate")]
    InvalidCoordinate,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("directory i/o: {0}")]
    Io(String),
    #[error("directory format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectoryRecord {
    pub identity_token: IdentityToken,
    pub home_location_ct: Ciphertext,
    pub escrowed_patient_key_ct: Ciphertext,
    pub ledger_patient_id: String,
    pub enrolled_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct SealedRecord {
    #[serde(with = "b64")]
    blob: Vec<u8>,
    #[serde(with = "b64_array")]
    nonce: [u8; NONCE_LEN],
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct StoreFile {
    records: BTreeMap<String, SealedRecord>,
}

/// Registrations are serialized behind a write lock; lookups share a read lock.
#[derive(Debug)]
pub struct SecuredDirectory {
    master_key: SecretKey,
    records: RwLock<BTreeMap<String, SealedRecord>>,
    rng: Mutex<SimRng>,
    path: Option<PathBuf>,
}

impl SecuredDirectory {
    pub fn in_memory(master_key: SecretKey, rng: SimRng) -> Self {
        SecuredDirectory { master_key, records: RwLock::new(BTreeMap::new()), rng: Mutex::new(rng), path: None }
    }

    /// Opens `path`, loading existing records if the file exists. Every
    /// registration is written back to it.
    pub fn open(path: impl Into<PathBuf>, master_key: SecretKey, rng: SimRng) -> Result<Self, DirectoryError> {
        let path = path.into();
        let records = if path.exists() {
            let raw = fs::read(&path).map_err(|e| DirectoryError::Io(e.to_string()))?;
            Self::parse(&raw)?
        } else {
            BTreeMap::new()
        };
        Ok(SecuredDirectory { master_key, records: RwLock::new(records), rng: Mutex::new(rng), path: Some(path) })
    }

    fn parse(raw: &[u8]) -> Result<BTreeMap<String, SealedRecord>, DirectoryError> {
        let file: StoreFile = serde_json::from_slice(raw).map_err(|e| DirectoryError::Format(e.to_string()))?;
        Ok(file.records)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.records.read().expect("directory lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Serialized store exactly as written to disk.
    pub fn to_bytes(&self) -> Vec<u8> {
        let records = self.records.read().expect("directory lock").clone();
        canonical_encode(&StoreFile { records })
    }

    pub fn persist(&self) -> Result<(), DirectoryError> {
        match &self.path {
            Some(p) => fs::write(p, self.to_bytes()).map_err(|e| DirectoryError::Io(e.to_string())),
            None => Ok(()),
        }
    }

    pub fn persist_to(&self, path: &Path) -> Result<(), DirectoryError> {
        fs::write(path, self.to_bytes()).map_err(|e| DirectoryError::Io(e.to_string()))
    }

    pub fn register_patient(
        &self,
        identity: &str,
        patient_key: &SecretKey,
        home: GeoCoordinate,
        ledger_patient_id: &str,
        now: u64,
    ) -> Result<DirectoryRecord, DirectoryError> {
        if !home.in_bounds() {
            return Err(DirectoryError::InvalidCoordinate);
        }
        let token = deterministic_encrypt_identity(patient_key, identity)?;
        let token_hex = token.to_hex();

        let mut records = self.records.write().expect("directory lock");
        if records.contains_key(&token_hex) {
            return Err(DirectoryError::DuplicateIdentity);
        }
        let mut rng = self.rng.lock().expect("directory rng");
        let record = DirectoryRecord {
            identity_token: token,
            home_location_ct: crypto::symmetric_encrypt(&self.master_key, &canonical_encode(&home), &mut *rng),
            escrowed_patient_key_ct: crypto::symmetric_encrypt(&self.master_key, patient_key.as_bytes(), &mut *rng),
            ledger_patient_id: ledger_patient_id.to_string(),
            enrolled_at: now,
        };
        let sealed =
            crypto::symmetric_encrypt_aad(&self.master_key, &canonical_encode(&record), token_hex.as_bytes(), &mut *rng);
        records.insert(token_hex, SealedRecord { blob: sealed.body, nonce: sealed.nonce });
        drop(rng);
        drop(records);
        self.persist()?;
        Ok(record)
    }

    /// Byte-equality match on the token.
    pub fn lookup(&self, token: &IdentityToken) -> Result<DirectoryRecord, DirectoryError> {
        let token_hex = token.to_hex();
        let records = self.records.read().expect("directory lock");
        let sealed = records.get(&token_hex).ok_or(DirectoryError::NotFound)?;
        let ct = Ciphertext { nonce: sealed.nonce, body: sealed.blob.clone() };
        let plain = crypto::symmetric_decrypt_aad(&self.master_key, &ct, token_hex.as_bytes())
            .map_err(|_| DirectoryError::AuthenticationFailure)?;
        let record: DirectoryRecord =
            serde_json::from_slice(&plain).map_err(|_| DirectoryError::AuthenticationFailure)?;
        if record.identity_token != *token {
            return Err(DirectoryError::AuthenticationFailure);
        }
        Ok(record)
    }

    pub fn fetch_home_coordinate(&self, record: &DirectoryRecord) -> Result<GeoCoordinate, DirectoryError> {
        let plain = crypto::symmetric_decrypt(&self.master_key, &record.home_location_ct)
            .map_err(|_| DirectoryError::AuthenticationFailure)?;
        let home: GeoCoordinate = serde_json::from_slice(&plain).map_err(|_| DirectoryError::AuthenticationFailure)?;
        if !home.in_bounds() {
            return Err(DirectoryError::InvalidCoordinate);
        }
        Ok(home)
    }

    /// Escrowed patient key. Kept behind this one call so another key
    /// distribution scheme can replace escrow.
    pub fn fetch_patient_key(&self, record: &DirectoryRecord) -> Result<SecretKey, DirectoryError> {
        let plain = crypto::symmetric_decrypt(&self.master_key, &record.escrowed_patient_key_ct)
            .map_err(|_| DirectoryError::AuthenticationFailure)?;
        Ok(SecretKey::from_slice(&plain)?)
    }

    pub fn tokens(&self) -> Vec<String> {
        self.records.read().expect("directory lock").keys().cloned().collect()
    }

    /// Flips bits in one stored blob byte. Test support for corruption drills.
    #[doc(hidden)]
    pub fn corrupt_blob_byte(&self, token: &IdentityToken, index: usize, mask: u8) {
        let mut records = self.records.write().expect("directory lock");
        if let Some(r) = records.get_mut(&token.to_hex()) {
            let i = index % r.blob.len();
            r.blob[i] ^= mask;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::payload::{EncryptedReading, PhysiologicalReading, SensorKind};
    use crate::rng;

    fn dir() -> SecuredDirectory {
        SecuredDirectory::in_memory(SecretKey::from_bytes([7; 32]), rng::seeded(1))
    }

    fn home() -> GeoCoordinate {
        GeoCoordinate::new(33.2148, -97.1331).unwrap()
    }

    #[test]
    fn register_then_lookup() {
        let d = dir();
        let pk = SecretKey::from_bytes([2; 32]);
        let rec = d.register_patient("patient-001", &pk, home(), "P-001", 10).unwrap();
        let token = deterministic_encrypt_identity(&pk, "patient-001").unwrap();
        assert_eq!(d.lookup(&token).unwrap(), rec);
        assert_eq!(d.fetch_home_coordinate(&rec).unwrap(), home());
        assert_eq!(d.fetch_patient_key(&rec).unwrap(), pk);
    }

    #[test]
    fn duplicate_identity_rejected() {
        let d = dir();
        let pk = SecretKey::from_bytes([2; 32]);
        d.register_patient("patient-001", &pk, home(), "P-001", 10).unwrap();
        assert_eq!(
            d.register_patient("patient-001", &pk, home(), "P-001", 11),
            Err(DirectoryError::DuplicateIdentity)
        );
    }

    #[test]
    fn unknown_and_near_miss_tokens_not_found() {
        let d = dir();
        let pk = SecretKey::from_bytes([2; 32]);
        d.register_patient("patient-001", &pk, home(), "P-001", 10).unwrap();
        let other = deterministic_encrypt_identity(&pk, "patient-999").unwrap();
        assert_eq!(d.lookup(&other), Err(DirectoryError::NotFound));
        let mut near = deterministic_encrypt_identity(&pk, "patient-001").unwrap();
        near.0[0] ^= 1;
        assert_eq!(d.lookup(&near), Err(DirectoryError::NotFound));
    }

    #[test]
    fn fetched_key_opens_patient_readings() {
        let d = dir();
        let pk = SecretKey::from_bytes([4; 32]);
        let rec = d.register_patient("patient-004", &pk, home(), "P-004", 0).unwrap();
        let reading = PhysiologicalReading::scalar(SensorKind::Temperature, 36.6, 5);
        let enc = EncryptedReading::seal(&pk, &reading, &mut rng::seeded(3));
        let key = d.fetch_patient_key(&rec).unwrap();
        assert_eq!(enc.open(&key).unwrap(), reading);
    }

    #[test]
    fn corrupted_blob_fails_authentication() {
        let d = dir();
        let pk = SecretKey::from_bytes([2; 32]);
        d.register_patient("patient-001", &pk, home(), "P-001", 10).unwrap();
        let token = deterministic_encrypt_identity(&pk, "patient-001").unwrap();
        for i in [0usize, 17, 200] {
            let d2 = SecuredDirectory::in_memory(SecretKey::from_bytes([7; 32]), rng::seeded(1));
            d2.register_patient("patient-001", &pk, home(), "P-001", 10).unwrap();
            d2.corrupt_blob_byte(&token, i, 0x40);
            assert_eq!(d2.lookup(&token), Err(DirectoryError::AuthenticationFailure));
        }
        let mut rec = d.lookup(&token).unwrap();
        rec.home_location_ct.body[3] ^= 1;
        assert_eq!(d.fetch_home_coordinate(&rec), Err(DirectoryError::AuthenticationFailure));
        rec.escrowed_patient_key_ct.nonce[0] ^= 1;
        assert_eq!(d.fetch_patient_key(&rec), Err(DirectoryError::AuthenticationFailure));
    }

    #[test]
    fn wrong_master_key_cannot_open() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join(STORE_FILE);
        let pk = SecretKey::from_bytes([2; 32]);
        let d = SecuredDirectory::open(&path, SecretKey::from_bytes([7; 32]), rng::seeded(1)).unwrap();
        d.register_patient("patient-001", &pk, home(), "P-001", 10).unwrap();
        let token = deterministic_encrypt_identity(&pk, "patient-001").unwrap();

        let same = SecuredDirectory::open(&path, SecretKey::from_bytes([7; 32]), rng::seeded(2)).unwrap();
        assert_eq!(same.lookup(&token).unwrap(), d.lookup(&token).unwrap());
        let wrong = SecuredDirectory::open(&path, SecretKey::from_bytes([8; 32]), rng::seeded(2)).unwrap();
        assert_eq!(wrong.lookup(&token), Err(DirectoryError::AuthenticationFailure));
    }

    #[test]
    fn persisted_file_layout() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join(STORE_FILE);
        let d = SecuredDirectory::open(&path, SecretKey::from_bytes([7; 32]), rng::seeded(1)).unwrap();
        let pk = SecretKey::from_bytes([2; 32]);
        d.register_patient("patient-001", &pk, home(), "P-001", 10).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        let records = v["records"].as_object().unwrap();
        assert_eq!(records.len(), 1);
        let (k, r) = records.iter().next().unwrap();
        assert!(k.chars().all(|c| c.is_ascii_hexdigit()));
        assert!(r["blob"].is_string() && r["nonce"].is_string());
    }
}
