//! Simulator for an encrypted IoMT data pipeline: patient edge devices seal
//! physiological readings, a provider edge checks integrity, a verification
//! node authenticates signature, location and identity, and a hash-linked
//! ledger with role-based access control stores the result.

pub mod audit;
pub mod bench;
pub mod crypto;
pub mod directory;
pub mod encoding;
pub mod geo;
pub mod hcp_edge;
pub mod ledger;
pub mod patient_edge;
pub mod payload;
pub mod rng;
pub mod simnet;
pub mod verification;

pub use crypto::{
    CryptoError, Digest, IdentityToken, KeyId, PublicKey, SecretKey, Signature, SignatureKeyPair,
};
pub use directory::{DirectoryError, DirectoryRecord, SecuredDirectory};
pub use geo::{haversine_distance, GeoCoordinate};
pub use hcp_edge::{HcpEdge, HcpOutcome};
pub use ledger::{Account, Address, Block, ChainCorruption, ContractCall, ContractRejection, Ledger, Role};
pub use patient_edge::{PatientEdge, PatientEdgeConfig};
pub use payload::{EncryptedReading, GroupedPatientData, PhysiologicalReading, SensorKind, SignedGpd};
pub use simnet::{AdversaryKind, AdversaryPolicy, ScenarioReport, ScenarioSpec, Simulation};
pub use verification::{Stage, VerificationNode};
