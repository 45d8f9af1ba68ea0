//! Role-based access-control contract executed by every ledger transaction.
//!
//! | function            | allowed caller                                         |
//! |---------------------|--------------------------------------------------------|
//! | `add_membership`    | Administration (any role); HcpRegistration (role Hcp)  |
//! | `revoke_membership` | Administration                                         |
//! | `register_patient`  | active Hcp                                             |
//! | `append_gpd`        | active Hcp that owns the patient                       |
//! | `grant_access`      | the patient's own account                              |
//! | `revoke_access`     | the patient's own account                              |
//! | `read_records`      | the patient, the owning Hcp, or a current grantee      |

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::account::Address;
use crate::crypto::{Digest, PublicKey};
use crate::encoding::canonical_encode;
use crate::payload::SignedGpd;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Administration,
    HcpRegistration,
    Hcp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    pub address: Address,
    pub role: Role,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredEntry {
    pub signed_gpd: SignedGpd,
    pub stored_at: u64,
    pub tx_hash: Digest,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContractRejection {
    #[error("privilege")]
    Privilege,
    #[error("UI Registration required")]
    RegistrationRequired,
    #[error("access denied")]
    AccessDenied,
    #[error("patient already registered")]
    PatientExists,
    #[error("at least one active Administration must remain")]
    LastAdministration,
    #[error("seq_no not greater than last stored entry")]
    StaleSequence,
    #[error("verification node signature missing or invalid")]
    InvalidVnSignature,
    #[error("no such membership")]
    UnknownMembership,
    #[error("bootstrap only allowed in genesis")]
    NotGenesis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractFunction {
    Bootstrap,
    AddMembership,
    RevokeMembership,
    RegisterPatient,
    AppendGpd,
    GrantAccess,
    RevokeAccess,
    ReadRecords,
}

impl ContractFunction {
    /// The seven externally callable functions.
    pub const PUBLIC: [ContractFunction; 7] = [
        ContractFunction::AddMembership,
        ContractFunction::RevokeMembership,
        ContractFunction::RegisterPatient,
        ContractFunction::AppendGpd,
        ContractFunction::GrantAccess,
        ContractFunction::RevokeAccess,
        ContractFunction::ReadRecords,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ContractFunction::Bootstrap => "bootstrap",
            ContractFunction::AddMembership => "add_membership",
            ContractFunction::RevokeMembership => "revoke_membership",
            ContractFunction::RegisterPatient => "register_patient",
            ContractFunction::AppendGpd => "append_gpd",
            ContractFunction::GrantAccess => "grant_access",
            ContractFunction::RevokeAccess => "revoke_access",
            ContractFunction::ReadRecords => "read_records",
        }
    }

    pub fn is_view(self) -> bool {
        self == ContractFunction::ReadRecords
    }
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "function", content = "args", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContractCall {
    Bootstrap { admin: Address },
    AddMembership { address: Address, role: Role },
    RevokeMembership { address: Address },
    RegisterPatient { patient_id: String, patient_account: Address },
    AppendGpd { patient_id: String, signed_gpd: SignedGpd },
    GrantAccess { patient_id: String, grantee: Address },
    RevokeAccess { patient_id: String, grantee: Address },
    ReadRecords { patient_id: String },
}

impl ContractCall {
    pub fn function(&self) -> ContractFunction {
        match self {
            ContractCall::Bootstrap { .. } => ContractFunction::Bootstrap,
            ContractCall::AddMembership { .. } => ContractFunction::AddMembership,
            ContractCall::RevokeMembership { .. } => ContractFunction::RevokeMembership,
            ContractCall::RegisterPatient { .. } => ContractFunction::RegisterPatient,
            ContractCall::AppendGpd { .. } => ContractFunction::AppendGpd,
            ContractCall::GrantAccess { .. } => ContractFunction::GrantAccess,
            ContractCall::RevokeAccess { .. } => ContractFunction::RevokeAccess,
            ContractCall::ReadRecords { .. } => ContractFunction::ReadRecords,
        }
    }

    /// Canonical encoding of the arguments alone.
    pub fn payload(&self) -> Vec<u8> {
        let v = serde_json::to_value(self).expect("calls serialize");
        canonical_encode(&v["args"])
    }

    pub fn decode(function: ContractFunction, payload: &[u8]) -> Result<ContractCall, String> {
        let args: Value = serde_json::from_slice(payload).map_err(|e| e.to_string())?;
        let tagged = serde_json::json!({ "function": function.name(), "args": args });
        let call: ContractCall = serde_json::from_value(tagged).map_err(|e| e.to_string())?;
        if call.payload() != payload {
            return Err("payload not canonical".into());
        }
        Ok(call)
    }
}

/// Facts about the enclosing transaction that the contract may use.
#[derive(Debug, Clone, Copy)]
pub struct CallContext<'a> {
    pub caller: Address,
    pub caller_key: &'a PublicKey,
    pub timestamp: u64,
    pub tx_hash: Digest,
    pub genesis: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallOutput {
    Done,
    Records(Vec<StoredEntry>),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractState {
    pub memberships: BTreeMap<Address, Membership>,
    pub patients: BTreeMap<String, Vec<StoredEntry>>,
    pub patient_owner_hcp: BTreeMap<String, Address>,
    pub grants: BTreeMap<String, BTreeSet<Address>>,
    pub patient_accounts: BTreeMap<String, Address>,
}

impl ContractState {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical_encode(self)
    }

    /// Role of an address with an active membership.
    pub fn role_of(&self, address: &Address) -> Option<Role> {
        self.memberships.get(address).filter(|m| m.active).map(|m| m.role)
    }

    fn active_admins(&self) -> usize {
        self.memberships.values().filter(|m| m.active && m.role == Role::Administration).count()
    }

    pub fn is_registered(&self, patient_id: &str) -> bool {
        self.patients.contains_key(patient_id)
    }

    pub fn entries(&self, patient_id: &str) -> Option<&[StoredEntry]> {
        self.patients.get(patient_id).map(Vec::as_slice)
    }

    pub fn entry_count(&self) -> usize {
        self.patients.values().map(Vec::len).sum()
    }

    pub fn can_read(&self, reader: &Address, patient_id: &str) -> bool {
        if !self.is_registered(patient_id) {
            return false;
        }
        if self.patient_accounts.get(patient_id) == Some(reader) {
            return true;
        }
        if self.patient_owner_hcp.get(patient_id) == Some(reader) && self.role_of(reader) == Some(Role::Hcp) {
            return true;
        }
        self.grants.get(patient_id).is_some_and(|g| g.contains(reader))
    }

    /// Applies `call` on behalf of `ctx.caller`. On rejection the state is
    /// left untouched.
    pub fn execute(&mut self, call: &ContractCall, ctx: &CallContext<'_>) -> Result<CallOutput, ContractRejection> {
        let caller_role = self.role_of(&ctx.caller);
        match call {
            ContractCall::Bootstrap { admin } => {
                if !ctx.genesis || !self.memberships.is_empty() {
                    return Err(ContractRejection::NotGenesis);
                }
                if *admin != ctx.caller {
                    return Err(ContractRejection::Privilege);
                }
                self.memberships
                    .insert(*admin, Membership { address: *admin, role: Role::Administration, active: true });
                Ok(CallOutput::Done)
            }
            ContractCall::AddMembership { address, role } => {
                match caller_role {
                    Some(Role::Administration) => {
                        let demotes_admin = self.role_of(address) == Some(Role::Administration)
                            && *role != Role::Administration;
                        if demotes_admin && self.active_admins() == 1 {
                            return Err(ContractRejection::LastAdministration);
                        }
                    }
                    Some(Role::HcpRegistration) => {
                        // Registrars enroll new providers and cannot touch existing memberships.
                        if *role != Role::Hcp || self.role_of(address).is_some_and(|r| r != Role::Hcp) {
                            return Err(ContractRejection::Privilege);
                        }
                    }
                    _ => return Err(ContractRejection::Privilege),
                }
                self.memberships.insert(*address, Membership { address: *address, role: *role, active: true });
                Ok(CallOutput::Done)
            }
            ContractCall::RevokeMembership { address } => {
                if caller_role != Some(Role::Administration) {
                    return Err(ContractRejection::Privilege);
                }
                let target_role = self.role_of(address).ok_or(ContractRejection::UnknownMembership)?;
                if target_role == Role::Administration && self.active_admins() == 1 {
                    return Err(ContractRejection::LastAdministration);
                }
                if let Some(m) = self.memberships.get_mut(address) {
                    m.active = false;
                }
                Ok(CallOutput::Done)
            }
            ContractCall::RegisterPatient { patient_id, patient_account } => {
                if caller_role != Some(Role::Hcp) {
                    return Err(ContractRejection::Privilege);
                }
                if self.is_registered(patient_id) {
                    return Err(ContractRejection::PatientExists);
                }
                self.patients.insert(patient_id.clone(), Vec::new());
                self.patient_owner_hcp.insert(patient_id.clone(), ctx.caller);
                self.grants.insert(patient_id.clone(), BTreeSet::new());
                self.patient_accounts.insert(patient_id.clone(), *patient_account);
                Ok(CallOutput::Done)
            }
            ContractCall::AppendGpd { patient_id, signed_gpd } => {
                if caller_role != Some(Role::Hcp) {
                    return Err(ContractRejection::Privilege);
                }
                if self.patient_owner_hcp.get(patient_id) != Some(&ctx.caller) {
                    return Err(ContractRejection::RegistrationRequired);
                }
                // The submitting provider account is the verification node's key.
                let vn_ok = signed_gpd.vn_sig.is_some_and(|s| s.key_id == ctx.caller)
                    && signed_gpd.vn_signature_valid(ctx.caller_key);
                if !vn_ok {
                    return Err(ContractRejection::InvalidVnSignature);
                }
                let entries = self.patients.get_mut(patient_id).expect("owned patient is registered");
                if entries.last().is_some_and(|e| e.signed_gpd.gpd.seq_no >= signed_gpd.gpd.seq_no) {
                    return Err(ContractRejection::StaleSequence);
                }
                entries.push(StoredEntry {
                    signed_gpd: signed_gpd.clone(),
                    stored_at: ctx.timestamp,
                    tx_hash: ctx.tx_hash,
                });
                Ok(CallOutput::Done)
            }
            ContractCall::GrantAccess { patient_id, grantee } => {
                self.require_patient_account(patient_id, &ctx.caller)?;
                self.grants.entry(patient_id.clone()).or_default().insert(*grantee);
                Ok(CallOutput::Done)
            }
            ContractCall::RevokeAccess { patient_id, grantee } => {
                self.require_patient_account(patient_id, &ctx.caller)?;
                if let Some(g) = self.grants.get_mut(patient_id) {
                    g.remove(grantee);
                }
                Ok(CallOutput::Done)
            }
            ContractCall::ReadRecords { patient_id } => {
                if !self.can_read(&ctx.caller, patient_id) {
                    return Err(ContractRejection::AccessDenied);
                }
                Ok(CallOutput::Records(self.patients[patient_id].clone()))
            }
        }
    }

    fn require_patient_account(&self, patient_id: &str, caller: &Address) -> Result<(), ContractRejection> {
        match self.patient_accounts.get(patient_id) {
            None => Err(ContractRejection::RegistrationRequired),
            Some(owner) if owner == caller => Ok(()),
            Some(_) => Err(ContractRejection::Privilege),
        }
    }
}
