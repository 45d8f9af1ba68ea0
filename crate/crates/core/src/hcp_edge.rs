//! Provider-side edge device. Re-derives every per-reading digest and the
//! group digest of an arriving GPD; discards on any mismatch, otherwise signs
//! the GPD and hands it to the verification node. Holds no patient key and
//! never decrypts anything.

use serde::Serialize;
use thiserror::Error;

use crate::audit::AuditLog;
use crate::crypto::SignatureKeyPair;
use crate::payload::{validate_gpd_shape, GroupedPatientData, ShapeError, SignedGpd};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum IntegrityFailure {
    #[error("per-reading digest mismatch at index {index}")]
    PerReading { index: usize },
    #[error("group digest mismatch")]
    Group,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiscardReason {
    #[error("parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Shape(ShapeError),
    #[error("integrity: {0}")]
    Integrity(IntegrityFailure),
}

impl DiscardReason {
    pub fn kind(&self) -> &'static str {
        match self {
            DiscardReason::Parse(_) => "parse",
            DiscardReason::Shape(_) => "shape",
            DiscardReason::Integrity(_) => "integrity",
        }
    }
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HcpOutcome {
    Forwarded(SignedGpd),
    Discarded(DiscardReason),
}

/// `hcp_edge_audit.jsonl` line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HcpAuditEntry {
    pub ts: u64,
    pub outcome: &'static str,
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seq_no: Option<u64>,
}

/// Checks digests recomputed from the ciphertexts against the stored ones.
pub fn verify_integrity(gpd: &GroupedPatientData) -> Result<(), IntegrityFailure> {
    for (index, reading) in gpd.readings.iter().enumerate() {
        if reading.recompute_digest().as_bytes().as_slice() != reading.digest.as_slice() {
            return Err(IntegrityFailure::PerReading { index });
        }
    }
    if gpd.recompute_group_digest().as_bytes().as_slice() != gpd.group_digest.as_slice() {
        return Err(IntegrityFailure::Group);
    }
    Ok(())
}

#[derive(Debug)]
pub struct HcpEdge {
    keypair: SignatureKeyPair,
    accepted: u64,
    discarded: u64,
    audit: AuditLog<HcpAuditEntry>,
}

impl HcpEdge {
    pub fn new(keypair: SignatureKeyPair) -> Self {
        HcpEdge { keypair, accepted: 0, discarded: 0, audit: AuditLog::new() }
    }

    pub fn keypair(&self) -> &SignatureKeyPair {
        &self.keypair
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    pub fn discarded(&self) -> u64 {
        self.discarded
    }

    pub fn received(&self) -> u64 {
        self.accepted + self.discarded
    }

    pub fn audit(&self) -> &AuditLog<HcpAuditEntry> {
        &self.audit
    }

    pub fn audit_mut(&mut self) -> &mut AuditLog<HcpAuditEntry> {
        &mut self.audit
    }

    /// Signs a GPD that already passed [`verify_integrity`].
    pub fn sign_and_forward(&mut self, gpd: GroupedPatientData) -> SignedGpd {
        self.accepted += 1;
        SignedGpd::sign_edge(gpd, &self.keypair)
    }

    /// parse -> shape -> integrity -> sign. Discards are silent toward the
    /// sender and recorded in the audit log.
    pub fn handle_incoming(&mut self, wire: &[u8], now: u64) -> HcpOutcome {
        let gpd = match GroupedPatientData::from_wire(wire) {
            Ok(g) => g,
            Err(e) => return self.discard(now, DiscardReason::Parse(e.to_string()), None),
        };
        if let Err(e) = validate_gpd_shape(&gpd) {
            return self.discard(now, DiscardReason::Shape(e), Some(gpd.seq_no));
        }
        if let Err(e) = verify_integrity(&gpd) {
            return self.discard(now, DiscardReason::Integrity(e), Some(gpd.seq_no));
        }
        let seq_no = gpd.seq_no;
        let signed = self.sign_and_forward(gpd);
        self.audit.record(HcpAuditEntry { ts: now, outcome: "forwarded", reason: None, seq_no: Some(seq_no) });
        HcpOutcome::Forwarded(signed)
    }

    fn discard(&mut self, now: u64, reason: DiscardReason, seq_no: Option<u64>) -> HcpOutcome {
        self.discarded += 1;
        self.audit.record(HcpAuditEntry { ts: now, outcome: "discarded", reason: Some(reason.to_string()), seq_no });
        HcpOutcome::Discarded(reason)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{self, deterministic_encrypt_identity, SecretKey};
    use crate::encoding::canonical_encode;
    use crate::geo::GeoCoordinate;
    use crate::payload::{EncryptedReading, PhysiologicalReading, SensorKind};
    use crate::rng;
    use rand::Rng;

    fn gpd(n: usize, seed: u64) -> GroupedPatientData {
        let mut r = rng::seeded(seed);
        let key = SecretKey::generate(&mut r);
        let readings = (0..n)
            .map(|i| {
                let rd = PhysiologicalReading::scalar(SensorKind::Spo2, 95.0 + i as f64, i as u64);
                EncryptedReading::seal(&key, &rd, &mut r)
            })
            .collect();
        let token = deterministic_encrypt_identity(&key, "patient-042").unwrap();
        let home = GeoCoordinate::new(40.0, -75.0).unwrap();
        let loc = crypto::symmetric_encrypt(&key, &canonical_encode(&home), &mut r);
        GroupedPatientData::seal(token, loc, readings, 99, 3)
    }

    fn edge() -> HcpEdge {
        HcpEdge::new(SignatureKeyPair::from_seed([5; 32]))
    }

    #[test]
    fn untampered_gpd_is_valid_and_forwarded() {
        let g = gpd(3, 1);
        assert_eq!(verify_integrity(&g), Ok(()));
        let mut e = edge();
        let HcpOutcome::Forwarded(s) = e.handle_incoming(&g.to_wire(), 1) else { panic!() };
        assert!(s.edge_signature_valid(&e.keypair().public()));
        assert!(s.vn_sig.is_none());
        assert_eq!((e.accepted(), e.discarded()), (1, 0));
    }

    #[test]
    fn flipped_reading_byte_reports_its_index() {
        let mut r = rng::seeded(2);
        for _ in 0..200 {
            let mut g = gpd(4, 3);
            let i = r.gen_range(0..g.readings[2].ciphertext.body.len());
            g.readings[2].ciphertext.body[i] ^= r.gen_range(1..=255u8);
            assert_eq!(verify_integrity(&g), Err(IntegrityFailure::PerReading { index: 2 }));
        }
    }

    #[test]
    fn changed_header_fields_fail_group_digest() {
        let mut g = gpd(2, 4);
        g.created_at += 1;
        assert_eq!(verify_integrity(&g), Err(IntegrityFailure::Group));
        let mut g = gpd(2, 4);
        g.seq_no += 1;
        assert_eq!(verify_integrity(&g), Err(IntegrityFailure::Group));
        let mut g = gpd(2, 4);
        g.location_ct.body[0] ^= 1;
        assert_eq!(verify_integrity(&g), Err(IntegrityFailure::Group));
    }

    #[test]
    fn malformed_json_is_discarded_as_parse() {
        let mut e = edge();
        let HcpOutcome::Discarded(reason) = e.handle_incoming(b"{not json", 7) else { panic!() };
        assert_eq!(reason.kind(), "parse");
        assert_eq!(e.audit().entries()[0].outcome, "discarded");
        assert_eq!(e.audit().entries()[0].seq_no, None);
    }

    #[test]
    fn shape_violation_is_discarded() {
        let mut g = gpd(1, 5);
        g.readings.clear();
        let mut e = edge();
        let HcpOutcome::Discarded(reason) = e.handle_incoming(&g.to_wire(), 1) else { panic!() };
        assert_eq!(reason, DiscardReason::Shape(ShapeError("readings empty".into())));
    }

    #[test]
    fn whitespace_reencoding_verifies_identically() {
        let g = gpd(2, 6);
        let pretty = serde_json::to_vec_pretty(&g).unwrap();
        let mut e = edge();
        let HcpOutcome::Forwarded(a) = e.handle_incoming(&pretty, 1) else { panic!() };
        let HcpOutcome::Forwarded(b) = e.handle_incoming(&g.to_wire(), 2) else { panic!() };
        assert_eq!(a.edge_sig, b.edge_sig);
    }

    #[test]
    fn random_wire_byte_mutations_are_never_forwarded() {
        let wire = gpd(5, 7).to_wire();
        let mut r = rng::seeded(8);
        let mut e = edge();
        for _ in 0..1000 {
            let mut m = wire.clone();
            let i = r.gen_range(0..m.len());
            m[i] ^= r.gen_range(1..=255u8);
            assert!(matches!(e.handle_incoming(&m, 0), HcpOutcome::Discarded(_)));
        }
        assert_eq!(e.discarded(), 1000);
        assert_eq!(e.received(), e.accepted() + e.discarded());
    }
}
