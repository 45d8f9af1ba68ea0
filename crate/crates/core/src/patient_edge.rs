//! Patient edge device: encrypts each plaintext reading, hashes it, and
//! groups a batch with the encrypted identity and location into a GPD.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{self, deterministic_encrypt_identity, CryptoError, IdentityToken, SecretKey};
use crate::encoding::canonical_encode;
use crate::geo::GeoCoordinate;
use crate::payload::{EncryptedReading, GroupedPatientData, PhysiologicalReading, ShapeError};
use crate::rng::SimRng;

pub const DEFAULT_BATCH_SIZE: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PatientEdgeError {
    #[error("batch size must be at least 1")]
    ZeroBatch,
    #[error("empty batch")]
    EmptyBatch,
    #[error("home location out of bounds")]
    BadHome,
    #[error(transparent)]
    Identity(#[from] CryptoError),
    #[error(transparent)]
    Reading(#[from] ShapeError),
    #[error("reading captured at {got} precedes previous reading at {previous}")]
    OutOfOrder { previous: u64, got: u64 },
}

/// Where the device reports itself to be when it emits a GPD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationSource {
    Home,
    /// Fixed displacement from home.
    Offset { bearing_deg: f64, distance_m: f64 },
    /// Uniformly random bearing and distance up to `max_m` per emission.
    Jitter { max_m: f64 },
    Fixed(GeoCoordinate),
}

#[derive(Debug, Clone)]
pub struct PatientEdgeConfig {
    pub patient_identity: String,
    pub secret_key: SecretKey,
    pub home_location: GeoCoordinate,
    pub batch_size: usize,
    pub location: LocationSource,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IngestOutcome {
    Buffered,
    Emitted(GroupedPatientData),
}

#[derive(Debug)]
pub struct PatientEdge {
    config: PatientEdgeConfig,
    identity_token: IdentityToken,
    claimed_identity: Option<String>,
    rng: SimRng,
    buffer: Vec<EncryptedReading>,
    next_seq: u64,
    last_captured_at: Option<u64>,
    warnings: Vec<String>,
}

impl PatientEdge {
    pub fn new(config: PatientEdgeConfig, rng: SimRng) -> Result<Self, PatientEdgeError> {
        if config.batch_size == 0 {
            return Err(PatientEdgeError::ZeroBatch);
        }
        if !config.home_location.in_bounds() {
            return Err(PatientEdgeError::BadHome);
        }
        let identity_token = deterministic_encrypt_identity(&config.secret_key, &config.patient_identity)?;
        Ok(PatientEdge {
            config,
            identity_token,
            claimed_identity: None,
            rng,
            buffer: Vec::new(),
            next_seq: 1,
            last_captured_at: None,
            warnings: Vec::new(),
        })
    }

    pub fn config(&self) -> &PatientEdgeConfig {
        &self.config
    }

    pub fn identity_token(&self) -> &IdentityToken {
        &self.identity_token
    }

    pub fn next_seq_no(&self) -> u64 {
        self.next_seq
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    /// True when the next ingest completes a batch.
    pub fn emits_on_next_ingest(&self) -> bool {
        self.buffer.len() + 1 >= self.config.batch_size
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn set_location_source(&mut self, source: LocationSource) {
        self.config.location = source;
    }

    /// Makes subsequent GPDs carry a token for `identity` instead of the
    /// configured one. Used to simulate a device presenting foreign credentials.
    pub fn set_claimed_identity(&mut self, identity: Option<String>) {
        self.claimed_identity = identity;
    }

    pub fn current_location(&mut self) -> GeoCoordinate {
        let home = self.config.home_location;
        match self.config.location {
            LocationSource::Home => home,
            LocationSource::Offset { bearing_deg, distance_m } => home.destination(bearing_deg, distance_m),
            LocationSource::Jitter { max_m } => {
                let bearing = self.rng.gen_range(0.0..360.0);
                let dist = if max_m > 0.0 { self.rng.gen_range(0.0..max_m) } else { 0.0 };
                home.destination(bearing, dist)
            }
            LocationSource::Fixed(c) => c,
        }
    }

    pub fn ingest_reading(&mut self, reading: PhysiologicalReading) -> Result<IngestOutcome, PatientEdgeError> {
        reading.validate_structure()?;
        if let Some(prev) = self.last_captured_at {
            if reading.captured_at < prev {
                return Err(PatientEdgeError::OutOfOrder { previous: prev, got: reading.captured_at });
            }
        }
        if let Some(w) = reading.bounds_warning() {
            self.warnings.push(w);
        }
        self.last_captured_at = Some(reading.captured_at);
        let sealed = EncryptedReading::seal(&self.config.secret_key, &reading, &mut self.rng);
        self.buffer.push(sealed);
        if self.buffer.len() < self.config.batch_size {
            return Ok(IngestOutcome::Buffered);
        }
        let batch = std::mem::take(&mut self.buffer);
        let gpd = self.build_gpd(batch, reading.captured_at)?;
        Ok(IngestOutcome::Emitted(gpd))
    }

    pub fn build_gpd(
        &mut self,
        readings: Vec<EncryptedReading>,
        now: u64,
    ) -> Result<GroupedPatientData, PatientEdgeError> {
        if readings.is_empty() {
            return Err(PatientEdgeError::EmptyBatch);
        }
        let token = match &self.claimed_identity {
            Some(id) => deterministic_encrypt_identity(&self.config.secret_key, id)?,
            None => self.identity_token.clone(),
        };
        let location = self.current_location();
        let location_ct = crypto::symmetric_encrypt(&self.config.secret_key, &canonical_encode(&location), &mut self.rng);
        let seq_no = self.next_seq;
        self.next_seq += 1;
        Ok(GroupedPatientData::seal(token, location_ct, readings, now, seq_no))
    }
}
