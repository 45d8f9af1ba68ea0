//! Verification node: checks the edge signature, the patient's identity and
//! location against the secured directory, then countersigns and submits the
//! GPD to the ledger.
//!
//! Stage order is signature, location, identity, freshness, transaction. A
//! token absent from the directory has no home coordinate to compare
//! against, so it is rejected at the identity stage before location runs.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::audit::AuditLog;
use crate::crypto::{decrypt_identity_token, KeyId, PublicKey};
use crate::directory::{DirectoryError, DirectoryRecord, SecuredDirectory};
pub use crate::geo::haversine_distance;
use crate::geo::GeoCoordinate;
use crate::ledger::{Account, ContractCall, Ledger, LedgerError, TxOutcome, TxReceipt};
use crate::payload::{GroupedPatientData, SignedGpd};

pub const DEFAULT_HOME_RADIUS_M: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Signature,
    Location,
    Identity,
    Freshness,
    Transaction,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Signature, Stage::Location, Stage::Identity, Stage::Freshness, Stage::Transaction];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Signature => "signature",
            Stage::Location => "location",
            Stage::Identity => "identity",
            Stage::Freshness => "freshness",
            Stage::Transaction => "transaction",
        }
    }

    /// Short code used in `vn_audit.jsonl`.
    pub fn code(self) -> &'static str {
        match self {
            Stage::Signature => "sig",
            Stage::Location => "loc",
            Stage::Identity => "id",
            Stage::Freshness => "fresh",
            Stage::Transaction => "tx",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VnRejection {
    #[error("edge signature: {0}")]
    Signature(SignatureFault),
    #[error("location {distance_m:.1} m from home exceeds {radius_m} m")]
    Location { distance_m: f64, radius_m: f64 },
    #[error("location unreadable: {0}")]
    LocationUnreadable(String),
    #[error("identity: {0}")]
    Identity(String),
    #[error("seq_no {seq_no} not after {last}")]
    Freshness { seq_no: u64, last: u64 },
    #[error("ledger: {0}")]
    Transaction(LedgerError),
}

impl VnRejection {
    pub fn stage(&self) -> Stage {
        match self {
            VnRejection::Signature(_) => Stage::Signature,
            VnRejection::Location { .. } | VnRejection::LocationUnreadable(_) => Stage::Location,
            VnRejection::Identity(_) => Stage::Identity,
            VnRejection::Freshness { .. } => Stage::Freshness,
            VnRejection::Transaction(_) => Stage::Transaction,
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum SignatureFault {
    #[error("unknown_key")]
    UnknownKey,
    #[error("verify_failed")]
    VerifyFailed,
}

/// `vn_audit.jsonl` line; one per stage executed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VnAuditEntry {
    pub ts: u64,
    pub stage: &'static str,
    pub outcome: &'static str,
    pub detail: Option<String>,
}

pub fn verify_edge_signature(
    signed: &SignedGpd,
    trusted_edges: &BTreeMap<KeyId, PublicKey>,
) -> Result<(), SignatureFault> {
    let pk = trusted_edges.get(&signed.edge_sig.key_id).ok_or(SignatureFault::UnknownKey)?;
    if signed.edge_signature_valid(pk) {
        Ok(())
    } else {
        Err(SignatureFault::VerifyFailed)
    }
}

/// Distance in metres between the reported location and the enrolled home.
pub fn authenticate_location(
    gpd: &GroupedPatientData,
    record: &DirectoryRecord,
    directory: &SecuredDirectory,
    radius_m: f64,
) -> Result<f64, VnRejection> {
    let unreadable = |e: &dyn std::fmt::Display| VnRejection::LocationUnreadable(e.to_string());
    let home = directory.fetch_home_coordinate(record).map_err(|e| unreadable(&e))?;
    let key = directory.fetch_patient_key(record).map_err(|e| unreadable(&e))?;
    let plain = crate::crypto::symmetric_decrypt(&key, &gpd.location_ct).map_err(|e| unreadable(&e))?;
    let here: GeoCoordinate = serde_json::from_slice(&plain).map_err(|e| unreadable(&e))?;
    if !here.in_bounds() {
        return Err(VnRejection::LocationUnreadable("coordinate out of bounds".into()));
    }
    let distance_m = haversine_distance(&here, &home);
    if distance_m <= radius_m {
        Ok(distance_m)
    } else {
        Err(VnRejection::Location { distance_m, radius_m })
    }
}

/// Byte-equal directory match on the token.
pub fn lookup_identity(gpd: &GroupedPatientData, directory: &SecuredDirectory) -> Result<DirectoryRecord, VnRejection> {
    directory.lookup(&gpd.identity_token).map_err(|e| match e {
        DirectoryError::NotFound => VnRejection::Identity("token not enrolled".into()),
        other => VnRejection::Identity(other.to_string()),
    })
}

/// Confirms the enrolled token opens under the escrowed patient key.
pub fn authenticate_identity(
    gpd: &GroupedPatientData,
    record: &DirectoryRecord,
    directory: &SecuredDirectory,
) -> Result<(), VnRejection> {
    if record.identity_token != gpd.identity_token {
        return Err(VnRejection::Identity("token mismatch".into()));
    }
    let key = directory.fetch_patient_key(record).map_err(|e| VnRejection::Identity(e.to_string()))?;
    decrypt_identity_token(&key, &gpd.identity_token)
        .map(|_| ())
        .map_err(|e| VnRejection::Identity(e.to_string()))
}

#[derive(Debug)]
pub struct VerificationNode {
    account: Account,
    trusted_edges: BTreeMap<KeyId, PublicKey>,
    home_radius_m: f64,
    check_freshness: bool,
    last_seq: BTreeMap<String, u64>,
    stored: u64,
    rejected: BTreeMap<Stage, u64>,
    audit: AuditLog<VnAuditEntry>,
}

impl VerificationNode {
    /// `account` both countersigns GPDs and submits them as the provider's
    /// ledger member.
    pub fn new(account: Account, home_radius_m: f64) -> Self {
        VerificationNode {
            account,
            trusted_edges: BTreeMap::new(),
            home_radius_m,
            check_freshness: true,
            last_seq: BTreeMap::new(),
            stored: 0,
            rejected: BTreeMap::new(),
            audit: AuditLog::new(),
        }
    }

    pub fn trust_edge(&mut self, edge: PublicKey) {
        self.trusted_edges.insert(edge.key_id(), edge);
    }

    /// Turns the per-patient seq_no replay check on or off.
    pub fn set_freshness_check(&mut self, on: bool) {
        self.check_freshness = on;
    }

    pub fn account(&self) -> &Account {
        &self.account
    }

    pub fn home_radius_m(&self) -> f64 {
        self.home_radius_m
    }

    pub fn stored(&self) -> u64 {
        self.stored
    }

    pub fn rejected(&self, stage: Stage) -> u64 {
        self.rejected.get(&stage).copied().unwrap_or(0)
    }

    pub fn audit(&self) -> &AuditLog<VnAuditEntry> {
        &self.audit
    }

    pub fn audit_mut(&mut self) -> &mut AuditLog<VnAuditEntry> {
        &mut self.audit
    }

    pub fn countersign_and_submit(
        &self,
        mut signed: SignedGpd,
        patient_id: &str,
        ledger: &mut Ledger,
        now: u64,
    ) -> Result<TxReceipt, LedgerError> {
        signed.countersign(self.account.keypair());
        let call = ContractCall::AppendGpd { patient_id: patient_id.to_string(), signed_gpd: signed };
        match ledger.call_at(&self.account, call, now)? {
            TxOutcome::Committed(receipt) => Ok(receipt),
            TxOutcome::Records(_) => Err(LedgerError::Malformed("append answered as view".into())),
        }
    }

    pub fn process(
        &mut self,
        signed: SignedGpd,
        directory: &SecuredDirectory,
        ledger: &mut Ledger,
        now: u64,
    ) -> Result<TxReceipt, VnRejection> {
        let result = self.run_stages(signed, directory, ledger, now);
        match &result {
            Ok(receipt) => {
                self.stored += 1;
                self.log(now, Stage::Transaction, "stored", Some(format!("block {}", receipt.block_index)));
            }
            Err(rejection) => {
                *self.rejected.entry(rejection.stage()).or_default() += 1;
                self.log(now, rejection.stage(), "rejected", Some(rejection.to_string()));
            }
        }
        result
    }

    fn log(&mut self, ts: u64, stage: Stage, outcome: &'static str, detail: Option<String>) {
        self.audit.record(VnAuditEntry { ts, stage: stage.code(), outcome, detail });
    }

    fn run_stages(
        &mut self,
        signed: SignedGpd,
        directory: &SecuredDirectory,
        ledger: &mut Ledger,
        now: u64,
    ) -> Result<TxReceipt, VnRejection> {
        verify_edge_signature(&signed, &self.trusted_edges).map_err(VnRejection::Signature)?;
        self.log(now, Stage::Signature, "pass", None);

        let record = lookup_identity(&signed.gpd, directory)?;
        let distance_m = authenticate_location(&signed.gpd, &record, directory, self.home_radius_m)?;
        self.log(now, Stage::Location, "pass", Some(format!("{distance_m:.3} m")));

        authenticate_identity(&signed.gpd, &record, directory)?;
        self.log(now, Stage::Identity, "pass", None);

        let token = signed.gpd.identity_token.to_hex();
        let seq_no = signed.gpd.seq_no;
        if self.check_freshness {
            if let Some(&last) = self.last_seq.get(&token) {
                if seq_no <= last {
                    return Err(VnRejection::Freshness { seq_no, last });
                }
            }
            self.log(now, Stage::Freshness, "pass", None);
        }
        let receipt = self
            .countersign_and_submit(signed, &record.ledger_patient_id, ledger, now)
            .map_err(VnRejection::Transaction)?;
        self.last_seq.insert(token, seq_no);
        Ok(receipt)
    }
}
