//! Patient data in flight: readings, grouped patient data (GPD), signed GPDs,
//! and their JSON wire form.
//!
//! Wire GPD:
//!
//! ```text
//! {"created_at": int-ms, "group_digest": hex, "identity_token": b64,
//!  "location_ct": {"body": b64, "nonce": b64},
//!  "readings": [{"ciphertext": {"body": b64, "nonce": b64}, "digest": hex}],
//!  "seq_no": int}
//! ```
//!
//! A signed GPD wraps it as `{"edge_sig": {"key_id": hex, "sig": b64},
//! "gpd": {..}, "vn_sig": {..} | null}`. Everything that is hashed or signed
//! is the canonical encoding from [`crate::encoding`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{
    self, hash_bytes, Ciphertext, CryptoError, CryptoSource, Digest, IdentityToken, KeyId, PublicKey, SecretKey,
    Signature, SignatureKeyPair, DIGEST_LEN, TAG_LEN,
};
use crate::encoding::{canonical_encode, hex_bytes};
pub use crate::geo::GeoCoordinate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    HeartRate,
    Spo2,
    Temperature,
    BloodPressure,
}

impl SensorKind {
    pub const ALL: [SensorKind; 4] =
        [SensorKind::HeartRate, SensorKind::Spo2, SensorKind::Temperature, SensorKind::BloodPressure];

    /// Plausible physical range in the sensor's natural unit.
    pub fn plausible_range(self) -> (f64, f64) {
        match self {
            SensorKind::HeartRate => (20.0, 300.0),
            SensorKind::Spo2 => (50.0, 100.0),
            SensorKind::Temperature => (25.0, 45.0),
            SensorKind::BloodPressure => (20.0, 300.0),
        }
    }
}

/// bpm, %, degrees C, or a systolic/diastolic mmHg pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReadingValue {
    Scalar(f64),
    Pair(f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysiologicalReading {
    pub sensor_kind: SensorKind,
    pub value: ReadingValue,
    /// UTC milliseconds.
    pub captured_at: u64,
}

impl PhysiologicalReading {
    pub fn scalar(sensor_kind: SensorKind, value: f64, captured_at: u64) -> Self {
        PhysiologicalReading { sensor_kind, value: ReadingValue::Scalar(value), captured_at }
    }

    pub fn blood_pressure(systolic: f64, diastolic: f64, captured_at: u64) -> Self {
        PhysiologicalReading {
            sensor_kind: SensorKind::BloodPressure,
            value: ReadingValue::Pair(systolic, diastolic),
            captured_at,
        }
    }

    pub fn validate_structure(&self) -> Result<(), ShapeError> {
        let finite = match self.value {
            ReadingValue::Scalar(v) => v.is_finite(),
            ReadingValue::Pair(a, b) => a.is_finite() && b.is_finite(),
        };
        if !finite {
            return Err(ShapeError::new("reading value not finite"));
        }
        let pair = matches!(self.value, ReadingValue::Pair(..));
        if pair != (self.sensor_kind == SensorKind::BloodPressure) {
            return Err(ShapeError::new("reading value arity"));
        }
        Ok(())
    }

    /// Out-of-range values are reported, not rejected.
    pub fn bounds_warning(&self) -> Option<String> {
        let (lo, hi) = self.sensor_kind.plausible_range();
        let values = match self.value {
            ReadingValue::Scalar(v) => vec![v],
            ReadingValue::Pair(a, b) => vec![a, b],
        };
        values
            .into_iter()
            .find(|v| !(lo..=hi).contains(v))
            .map(|v| format!("{:?} value {v} outside [{lo}, {hi}]", self.sensor_kind))
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical_encode(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptedReading {
    pub ciphertext: Ciphertext,
    #[serde(with = "hex_bytes")]
    pub digest: Vec<u8>,
}

impl EncryptedReading {
    pub fn seal<R: CryptoSource>(key: &SecretKey, reading: &PhysiologicalReading, rng: &mut R) -> Self {
        let ciphertext = crypto::symmetric_encrypt(key, &reading.canonical_bytes(), rng);
        let digest = hash_bytes(&ciphertext.to_bytes()).0.to_vec();
        EncryptedReading { ciphertext, digest }
    }

    pub fn recompute_digest(&self) -> Digest {
        hash_bytes(&self.ciphertext.to_bytes())
    }

    pub fn open(&self, key: &SecretKey) -> Result<PhysiologicalReading, CryptoError> {
        let plain = crypto::symmetric_decrypt(key, &self.ciphertext)?;
        serde_json::from_slice(&plain).map_err(|_| CryptoError::AuthenticationFailure)
    }
}

/// Everything in a GPD except its group digest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GpdBody<'a> {
    pub identity_token: &'a IdentityToken,
    pub location_ct: &'a Ciphertext,
    pub readings: &'a [EncryptedReading],
    pub created_at: u64,
    pub seq_no: u64,
}

/// SHA-256 over the canonical encoding of the digest-free GPD.
pub fn compute_group_digest(body: &GpdBody<'_>) -> Digest {
    hash_bytes(&canonical_encode(body))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupedPatientData {
    pub identity_token: IdentityToken,
    pub location_ct: Ciphertext,
    pub readings: Vec<EncryptedReading>,
    pub created_at: u64,
    pub seq_no: u64,
    #[serde(with = "hex_bytes")]
    pub group_digest: Vec<u8>,
}

impl GroupedPatientData {
    /// Assembles a GPD and fills in its group digest.
    pub fn seal(
        identity_token: IdentityToken,
        location_ct: Ciphertext,
        readings: Vec<EncryptedReading>,
        created_at: u64,
        seq_no: u64,
    ) -> Self {
        let mut gpd = GroupedPatientData {
            identity_token,
            location_ct,
            readings,
            created_at,
            seq_no,
            group_digest: Vec::new(),
        };
        gpd.group_digest = gpd.recompute_group_digest().0.to_vec();
        gpd
    }

    pub fn body(&self) -> GpdBody<'_> {
        GpdBody {
            identity_token: &self.identity_token,
            location_ct: &self.location_ct,
            readings: &self.readings,
            created_at: self.created_at,
            seq_no: self.seq_no,
        }
    }

    pub fn recompute_group_digest(&self) -> Digest {
        compute_group_digest(&self.body())
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical_encode(self)
    }

    pub fn to_wire(&self) -> Vec<u8> {
        self.canonical_bytes()
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Self, PayloadError> {
        serde_json::from_slice(bytes).map_err(|e| PayloadError::Parse(e.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("shape error: {0}")]
pub struct ShapeError(pub String);

impl ShapeError {
    fn new(what: &str) -> Self {
        ShapeError(what.to_string())
    }

    pub fn violated(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PayloadError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// Structural checks only; nothing is decrypted or re-hashed here.
pub fn validate_gpd_shape(gpd: &GroupedPatientData) -> Result<(), ShapeError> {
    if gpd.readings.is_empty() {
        return Err(ShapeError::new("readings empty"));
    }
    if gpd.group_digest.len() != DIGEST_LEN || gpd.readings.iter().any(|r| r.digest.len() != DIGEST_LEN) {
        return Err(ShapeError::new("digest length"));
    }
    if gpd.identity_token.as_bytes().len() < IdentityToken::MIN_LEN {
        return Err(ShapeError::new("identity token length"));
    }
    if gpd.location_ct.body.len() < TAG_LEN || gpd.readings.iter().any(|r| r.ciphertext.body.len() < TAG_LEN) {
        return Err(ShapeError::new("ciphertext length"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureEnvelope {
    pub key_id: KeyId,
    pub sig: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedGpd {
    pub gpd: GroupedPatientData,
    pub edge_sig: SignatureEnvelope,
    pub vn_sig: Option<SignatureEnvelope>,
}

impl SignedGpd {
    /// Edge signature over the canonical GPD.
    pub fn sign_edge(gpd: GroupedPatientData, edge: &SignatureKeyPair) -> Self {
        let sig = edge.sign(&gpd.canonical_bytes());
        SignedGpd { gpd, edge_sig: SignatureEnvelope { key_id: edge.key_id(), sig }, vn_sig: None }
    }

    /// Bytes the verification node countersigns: canonical GPD followed by
    /// the edge signature.
    pub fn vn_message(&self) -> Vec<u8> {
        let mut msg = self.gpd.canonical_bytes();
        msg.extend_from_slice(&self.edge_sig.sig.0);
        msg
    }

    pub fn countersign(&mut self, vn: &SignatureKeyPair) {
        let sig = vn.sign(&self.vn_message());
        self.vn_sig = Some(SignatureEnvelope { key_id: vn.key_id(), sig });
    }

    pub fn edge_signature_valid(&self, edge: &PublicKey) -> bool {
        edge.key_id() == self.edge_sig.key_id && edge.verify(&self.gpd.canonical_bytes(), &self.edge_sig.sig)
    }

    pub fn vn_signature_valid(&self, vn: &PublicKey) -> bool {
        match &self.vn_sig {
            Some(env) => vn.key_id() == env.key_id && vn.verify(&self.vn_message(), &env.sig),
            None => false,
        }
    }

    pub fn to_wire(&self) -> Vec<u8> {
        canonical_encode(self)
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Self, PayloadError> {
        serde_json::from_slice(bytes).map_err(|e| PayloadError::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::deterministic_encrypt_identity;
    use crate::rng;
    use rand::Rng;

    pub(crate) fn sample_gpd(n: usize, seed: u64) -> (GroupedPatientData, SecretKey) {
        let mut r = rng::seeded(seed);
        let key = SecretKey::generate(&mut r);
        let readings = (0..n)
            .map(|i| {
                let reading = PhysiologicalReading::scalar(SensorKind::HeartRate, 60.0 + i as f64, 1_000 + i as u64);
                EncryptedReading::seal(&key, &reading, &mut r)
            })
            .collect();
        let token = deterministic_encrypt_identity(&key, "patient-001").unwrap();
        let home = GeoCoordinate::new(33.2148, -97.1331).unwrap();
        let loc = crypto::symmetric_encrypt(&key, &canonical_encode(&home), &mut r);
        (GroupedPatientData::seal(token, loc, readings, 5_000, 1), key)
    }

    #[test]
    fn wire_schema_field_names() {
        let (gpd, _) = sample_gpd(1, 1);
        let v: serde_json::Value = serde_json::from_slice(&gpd.to_wire()).unwrap();
        let obj = v.as_object().unwrap();
        let keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        assert_eq!(keys, ["created_at", "group_digest", "identity_token", "location_ct", "readings", "seq_no"]);
        assert!(obj["location_ct"]["nonce"].is_string());
        assert!(obj["readings"][0]["ciphertext"]["body"].is_string());
        assert_eq!(obj["readings"][0]["digest"].as_str().unwrap().len(), 64);
        assert!(obj["created_at"].is_u64());
    }

    #[test]
    fn signed_wire_has_null_vn_sig_until_countersigned() {
        let (gpd, _) = sample_gpd(2, 2);
        let mut r = rng::seeded(9);
        let edge = SignatureKeyPair::generate(&mut r);
        let vn = SignatureKeyPair::generate(&mut r);
        let mut s = SignedGpd::sign_edge(gpd, &edge);
        let v: serde_json::Value = serde_json::from_slice(&s.to_wire()).unwrap();
        assert!(v["vn_sig"].is_null());
        assert_eq!(v["edge_sig"]["key_id"].as_str().unwrap(), edge.key_id().to_hex());
        assert!(s.edge_signature_valid(&edge.public()));
        s.countersign(&vn);
        assert!(s.vn_signature_valid(&vn.public()));
        assert!(!s.vn_signature_valid(&edge.public()));
        assert_eq!(SignedGpd::from_wire(&s.to_wire()).unwrap(), s);
    }

    #[test]
    fn group_digest_recomputes_and_roundtrips() {
        let (gpd, key) = sample_gpd(3, 3);
        assert_eq!(gpd.recompute_group_digest().0.to_vec(), gpd.group_digest);
        let back = GroupedPatientData::from_wire(&gpd.to_wire()).unwrap();
        assert_eq!(back, gpd);
        assert_eq!(back.to_wire(), gpd.to_wire());
        assert_eq!(gpd.readings[1].open(&key).unwrap().value, ReadingValue::Scalar(61.0));
    }

    #[test]
    fn removing_any_single_reading_changes_digest() {
        let (gpd, _) = sample_gpd(5, 4);
        let original = gpd.recompute_group_digest();
        for i in 0..5 {
            let mut g = gpd.clone();
            g.readings.remove(i);
            assert_ne!(g.recompute_group_digest(), original, "removal of {i}");
        }
    }

    #[test]
    fn swapping_two_readings_changes_digest() {
        let (gpd, _) = sample_gpd(5, 5);
        let original = gpd.recompute_group_digest();
        for i in 0..5 {
            for j in (i + 1)..5 {
                let mut g = gpd.clone();
                g.readings.swap(i, j);
                assert_ne!(g.recompute_group_digest(), original);
            }
        }
    }

    #[test]
    fn single_byte_flip_in_reading_changes_digest() {
        let (gpd, _) = sample_gpd(4, 6);
        let original = gpd.recompute_group_digest();
        let mut r = rng::seeded(10);
        for _ in 0..1000 {
            let mut g = gpd.clone();
            let ri = r.gen_range(0..g.readings.len());
            let bi = r.gen_range(0..g.readings[ri].ciphertext.body.len());
            g.readings[ri].ciphertext.body[bi] ^= r.gen_range(1..=255u8);
            assert_ne!(g.recompute_group_digest(), original);
        }
    }

    #[test]
    fn shape_errors() {
        let (gpd, _) = sample_gpd(1, 7);
        assert_eq!(validate_gpd_shape(&gpd), Ok(()));

        let mut empty = gpd.clone();
        empty.readings.clear();
        assert_eq!(validate_gpd_shape(&empty).unwrap_err().violated(), "readings empty");

        let mut short = gpd.clone();
        short.group_digest.truncate(31);
        assert_eq!(validate_gpd_shape(&short).unwrap_err().violated(), "digest length");

        let mut short_reading = gpd;
        short_reading.readings[0].digest.push(0);
        assert_eq!(validate_gpd_shape(&short_reading).unwrap_err().violated(), "digest length");
    }

    #[test]
    fn reading_structure_and_bounds() {
        let ok = PhysiologicalReading::scalar(SensorKind::HeartRate, 72.0, 1);
        assert!(ok.validate_structure().is_ok());
        assert!(ok.bounds_warning().is_none());
        let extreme = PhysiologicalReading::scalar(SensorKind::HeartRate, 350.0, 1);
        assert!(extreme.validate_structure().is_ok());
        assert!(extreme.bounds_warning().is_some());
        let bad_arity = PhysiologicalReading::scalar(SensorKind::BloodPressure, 120.0, 1);
        assert!(bad_arity.validate_structure().is_err());
        let bp = PhysiologicalReading::blood_pressure(120.0, 80.0, 1);
        assert!(bp.validate_structure().is_ok());
        assert_eq!(bp.canonical_bytes(), br#"{"captured_at":1,"sensor_kind":"blood_pressure","value":[120.0,80.0]}"#);
    }
}
