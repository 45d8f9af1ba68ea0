//! Deterministic in-process transport wiring PED -> HCP-E -> VN -> ledger,
//! with pluggable adversaries on the links.
//!
//! Everything runs on one thread over a logical clock; all randomness is
//! derived from the scenario seed and the adversary seed, so equal specs give
//! byte-identical reports and chain files.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::io;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{SecretKey, SignatureKeyPair};
use crate::directory::{SecuredDirectory, STORE_FILE};
use crate::encoding::canonical_encode;
use crate::geo::GeoCoordinate;
use crate::hcp_edge::{DiscardReason, HcpEdge, HcpOutcome};
use crate::ledger::{self, Account, ContractCall, Ledger, Role};
use crate::patient_edge::{IngestOutcome, LocationSource, PatientEdge, PatientEdgeConfig, DEFAULT_BATCH_SIZE};
use crate::payload::{GroupedPatientData, PhysiologicalReading, SensorKind, SignedGpd};
use crate::rng::{self, SimRng};
use crate::verification::{Stage, VerificationNode, DEFAULT_HOME_RADIUS_M};

pub const CHAIN_FILE: &str = "chain.jsonl";
pub const HCP_AUDIT_FILE: &str = "hcp_edge_audit.jsonl";
pub const VN_AUDIT_FILE: &str = "vn_audit.jsonl";
pub const REPORT_FILE: &str = "scenario_report.json";
pub const STATE_FILE: &str = "state.json";

/// Distance used by the wrong-location adversary.
pub const REROUTE_OFFSET_M: f64 = 5_000.0;

pub const FRESHNESS_NOTE: &str =
    "freshness: per-patient seq_no must strictly increase at the verification node (extension to the base protocol)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryKind {
    None,
    /// Flips one uniformly chosen byte on the PED -> HCP-E link.
    TamperRandomByte,
    /// Re-enqueues the previous PED -> HCP-E message after the current one.
    ReplayPrevious,
    /// Adds an attacker-signed copy on the HCP-E -> VN link, claiming the
    /// legitimate edge key id.
    InjectForged,
    /// Makes the device report a position 5 km from home.
    RerouteWrongLocation,
    /// Makes the device present a token for an identity never enrolled.
    SpoofIdentity,
}

impl AdversaryKind {
    pub const ATTACKS: [AdversaryKind; 5] = [
        AdversaryKind::TamperRandomByte,
        AdversaryKind::ReplayPrevious,
        AdversaryKind::InjectForged,
        AdversaryKind::RerouteWrongLocation,
        AdversaryKind::SpoofIdentity,
    ];

    /// Stage at which the protocol should stop this attack.
    pub fn expected_stage(self) -> Option<&'static str> {
        match self {
            AdversaryKind::None => None,
            AdversaryKind::TamperRandomByte => Some("integrity"),
            AdversaryKind::ReplayPrevious => Some(Stage::Freshness.name()),
            AdversaryKind::InjectForged => Some(Stage::Signature.name()),
            AdversaryKind::RerouteWrongLocation => Some(Stage::Location.name()),
            AdversaryKind::SpoofIdentity => Some(Stage::Identity.name()),
        }
    }

    fn acts_at_source(self) -> bool {
        matches!(self, AdversaryKind::RerouteWrongLocation | AdversaryKind::SpoofIdentity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversaryPolicy {
    pub kind: AdversaryKind,
    pub probability: f64,
    pub seed: u64,
}

impl AdversaryPolicy {
    pub fn none() -> Self {
        AdversaryPolicy { kind: AdversaryKind::None, probability: 0.0, seed: 0 }
    }

    pub fn always(kind: AdversaryKind, seed: u64) -> Self {
        AdversaryPolicy { kind, probability: 1.0, seed }
    }
}

impl Default for AdversaryPolicy {
    fn default() -> Self {
        AdversaryPolicy::none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub bytes: Vec<u8>,
    /// True when the adversary produced or altered this message, or when it
    /// descends from one that was.
    pub attacked: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ChannelCounters {
    pub sent: u64,
    pub delivered: u64,
    pub tampered: u64,
    pub replayed: u64,
    pub forged: u64,
    pub rerouted: u64,
    pub spoofed: u64,
}

#[derive(Debug)]
struct Adversary {
    policy: AdversaryPolicy,
    rng: SimRng,
    forger: SignatureKeyPair,
}

#[derive(Debug)]
pub struct Channel {
    name: String,
    queue: VecDeque<Delivery>,
    adversary: Option<Adversary>,
    last: Option<Delivery>,
    counters: ChannelCounters,
}

impl Channel {
    pub fn new(name: &str, policy: Option<AdversaryPolicy>) -> Self {
        let adversary = policy.filter(|p| p.kind != AdversaryKind::None).map(|policy| Adversary {
            policy,
            rng: rng::derive(policy.seed, &format!("adversary/{name}")),
            forger: SignatureKeyPair::from_seed(rng::derive_bytes(policy.seed, "adversary/forger")),
        });
        Channel { name: name.to_string(), queue: VecDeque::new(), adversary, last: None, counters: ChannelCounters::default() }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn counters(&self) -> ChannelCounters {
        self.counters
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    fn fires(&mut self) -> bool {
        match &mut self.adversary {
            Some(a) => a.rng.gen_bool(a.policy.probability),
            None => false,
        }
    }

    /// Whether a source-side adversary on this link acts on the next
    /// emission. Link-level kinds never act here.
    pub fn source_attack(&mut self) -> Option<AdversaryKind> {
        let kind = self.adversary.as_ref().map(|a| a.policy.kind).filter(|k| k.acts_at_source())?;
        if !self.fires() {
            return None;
        }
        match kind {
            AdversaryKind::RerouteWrongLocation => self.counters.rerouted += 1,
            _ => self.counters.spoofed += 1,
        }
        Some(kind)
    }

    /// Passes a message through the adversary and enqueues what comes out.
    pub fn send(&mut self, bytes: Vec<u8>, attacked: bool) {
        self.counters.sent += 1;
        let current = Delivery { bytes, attacked };
        let kind = self.adversary.as_ref().map(|a| a.policy.kind).unwrap_or(AdversaryKind::None);
        match kind {
            AdversaryKind::TamperRandomByte if !current.bytes.is_empty() && self.fires() => {
                let adv = self.adversary.as_mut().expect("adversary present");
                let mut bytes = current.bytes.clone();
                let i = adv.rng.gen_range(0..bytes.len());
                bytes[i] ^= adv.rng.gen_range(1..=255u8);
                self.counters.tampered += 1;
                self.queue.push_back(Delivery { bytes, attacked: true });
            }
            AdversaryKind::ReplayPrevious => {
                self.queue.push_back(current.clone());
                if self.fires() {
                    if let Some(prev) = self.last.clone() {
                        self.counters.replayed += 1;
                        self.queue.push_back(Delivery { bytes: prev.bytes, attacked: true });
                    }
                }
            }
            AdversaryKind::InjectForged => {
                self.queue.push_back(current.clone());
                if self.fires() {
                    if let Some(bytes) = self.forge(&current.bytes) {
                        self.counters.forged += 1;
                        self.queue.push_back(Delivery { bytes, attacked: true });
                    }
                }
            }
            _ => self.queue.push_back(current.clone()),
        }
        self.last = Some(current);
    }

    /// Attacker copy of a signed GPD: advanced seq_no, resealed digest, and
    /// a signature from the attacker's own key under the real edge key id.
    fn forge(&self, bytes: &[u8]) -> Option<Vec<u8>> {
        let adv = self.adversary.as_ref()?;
        let real = SignedGpd::from_wire(bytes).ok()?;
        let g = real.gpd;
        let gpd = GroupedPatientData::seal(g.identity_token, g.location_ct, g.readings, g.created_at, g.seq_no + 1_000);
        let mut forged = SignedGpd::sign_edge(gpd, &adv.forger);
        forged.edge_sig.key_id = real.edge_sig.key_id;
        Some(forged.to_wire())
    }

    pub fn receive(&mut self) -> Option<Delivery> {
        let d = self.queue.pop_front()?;
        self.counters.delivered += 1;
        Some(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub patients: usize,
    pub batch_size: usize,
    /// Readings per patient.
    pub reading_count: usize,
    pub adversary: AdversaryPolicy,
    pub home_radius_m: f64,
    pub seed: u64,
    /// Honest devices report a position up to this far from home.
    pub location_jitter_m: f64,
    pub freshness_check: bool,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            patients: 1,
            batch_size: DEFAULT_BATCH_SIZE,
            reading_count: 20,
            adversary: AdversaryPolicy::none(),
            home_radius_m: DEFAULT_HOME_RADIUS_M,
            seed: 42,
            location_jitter_m: 10.0,
            freshness_check: true,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid scenario: {0}")]
pub struct ConfigError(pub String);

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError(m.to_string()));
        if self.patients == 0 {
            return bad("patients must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.reading_count == 0 {
            return bad("reading_count must be at least 1");
        }
        if !(self.home_radius_m.is_finite() && self.home_radius_m > 0.0) {
            return bad("home_radius_m must be positive");
        }
        if !(self.location_jitter_m.is_finite() && self.location_jitter_m >= 0.0) {
            return bad("location_jitter_m must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.adversary.probability) {
            return bad("adversary probability must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StageCounts {
    pub hcp_forwarded: u64,
    pub hcp_discarded: BTreeMap<String, u64>,
    pub vn_passed: BTreeMap<String, u64>,
    pub vn_rejected: BTreeMap<String, u64>,
    pub stored: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub spec: ScenarioSpec,
    pub readings_ingested: u64,
    pub gpds_emitted: u64,
    pub stages: StageCounts,
    pub ped_link: ChannelCounters,
    pub vn_link: ChannelCounters,
    pub attacked_messages: u64,
    pub attacked_stored: u64,
    /// Where attacked messages were stopped; HCP-E discards count as `integrity`.
    pub attacked_rejected: BTreeMap<String, u64>,
    pub clean_stored: u64,
    pub clean_rejected: BTreeMap<String, u64>,
    pub ledger_entries: u64,
    pub chain_length: u64,
    pub replay_matches_live: bool,
    pub expected_stage: Option<String>,
    pub containment_ok: bool,
    pub notes: Vec<String>,
}

impl ScenarioReport {
    pub fn to_json(&self) -> Vec<u8> {
        canonical_encode(self)
    }
}

/// Reproducible ledger account for a name. Patients use their ledger id.
pub fn named_account(seed: u64, name: &str) -> Account {
    match name {
        "admin" | "registrar" | "hcp" => Account::derive(seed, name),
        other => Account::derive(seed, &format!("user/{other}")),
    }
}

pub fn patient_identity(i: usize) -> String {
    format!("patient-{:03}", i + 1)
}

pub fn patient_ledger_id(i: usize) -> String {
    format!("P{:03}", i + 1)
}

pub fn master_key_for_seed(seed: u64) -> SecretKey {
    SecretKey::from_bytes(rng::derive_bytes(seed, "directory/master"))
}

/// Reading whose value falls inside the sensor's plausible range.
pub fn synth_reading(rng: &mut SimRng, kind: SensorKind, captured_at: u64) -> PhysiologicalReading {
    let (lo, hi) = kind.plausible_range();
    let round = |v: f64| (v * 10.0).round() / 10.0;
    match kind {
        SensorKind::BloodPressure => {
            let sys = round(rng.gen_range(100.0..150.0));
            let dia = round(rng.gen_range(60.0..95.0));
            PhysiologicalReading::blood_pressure(sys, dia, captured_at)
        }
        _ => {
            let span = hi - lo;
            let v = round(rng.gen_range(lo + 0.3 * span..hi - 0.3 * span));
            PhysiologicalReading::scalar(kind, v, captured_at)
        }
    }
}

#[derive(Debug)]
pub struct PatientSim {
    pub identity: String,
    pub ledger_id: String,
    pub key: SecretKey,
    pub home: GeoCoordinate,
    pub edge: PatientEdge,
    pub ingested: Vec<PhysiologicalReading>,
}

#[derive(Debug, Default, Clone)]
struct Tally {
    readings: u64,
    gpds: u64,
    stages: StageCounts,
    /// Attacked messages seen on the PED link; forged VN-link copies are
    /// counted by that channel.
    attacked: u64,
    attacked_stored: u64,
    attacked_rejected: BTreeMap<String, u64>,
    clean_stored: u64,
    clean_rejected: BTreeMap<String, u64>,
}

impl Tally {
    fn rejected(&mut self, attacked: bool, stage: &str) {
        let map = if attacked { &mut self.attacked_rejected } else { &mut self.clean_rejected };
        *map.entry(stage.to_string()).or_default() += 1;
    }
}

/// Fully wired topology: one provider (HCP-E, VN, directory) and a set of
/// patient devices, all writing to one ledger.
#[derive(Debug)]
pub struct Simulation {
    spec: ScenarioSpec,
    clock: u64,
    ledger: Ledger,
    directory: SecuredDirectory,
    hcp_edge: HcpEdge,
    vn: VerificationNode,
    patients: Vec<PatientSim>,
    ped_link: Channel,
    vn_link: Channel,
    reading_rng: SimRng,
    tally: Tally,
}

impl Simulation {
    /// Bootstraps genesis, a registrar, the provider account and every
    /// patient. `master_key` defaults to one derived from the seed.
    pub fn new(spec: ScenarioSpec, master_key: Option<SecretKey>) -> Result<Self, ConfigError> {
        spec.validate()?;
        let seed = spec.seed;
        let master_key = master_key.unwrap_or_else(|| master_key_for_seed(seed));
        let directory = SecuredDirectory::in_memory(master_key, rng::derive(seed, "directory"));

        let admin = named_account(seed, "admin");
        let registrar = named_account(seed, "registrar");
        let hcp = named_account(seed, "hcp");
        let mut clock = 0;
        let mut ledger = Ledger::genesis(&admin, clock);
        let step = |ledger: &mut Ledger, clock: &mut u64, who: &Account, call: ContractCall| {
            *clock += 1;
            ledger.call_at(who, call, *clock).map(|_| ()).map_err(|e| ConfigError(format!("bootstrap: {e}")))
        };
        step(&mut ledger, &mut clock, &admin, ContractCall::AddMembership { address: registrar.address(), role: Role::HcpRegistration })?;
        step(&mut ledger, &mut clock, &registrar, ContractCall::AddMembership { address: hcp.address(), role: Role::Hcp })?;

        let edge_keys = SignatureKeyPair::from_seed(rng::derive_bytes(seed, "hcp-edge"));
        let mut vn = VerificationNode::new(hcp.clone(), spec.home_radius_m);
        vn.trust_edge(edge_keys.public());
        vn.set_freshness_check(spec.freshness_check);

        let mut home_rng = rng::derive(seed, "homes");
        let mut patients = Vec::with_capacity(spec.patients);
        for i in 0..spec.patients {
            let identity = patient_identity(i);
            let ledger_id = patient_ledger_id(i);
            let key = SecretKey::generate(&mut rng::derive(seed, &format!("patient-key/{i}")));
            let home = GeoCoordinate::new(home_rng.gen_range(-60.0..60.0), home_rng.gen_range(-179.0..179.0))
                .map_err(|e| ConfigError(e.to_string()))?;
            directory
                .register_patient(&identity, &key, home, &ledger_id, clock)
                .map_err(|e| ConfigError(format!("directory: {e}")))?;
            let account = named_account(seed, &ledger_id);
            step(
                &mut ledger,
                &mut clock,
                &hcp,
                ContractCall::RegisterPatient { patient_id: ledger_id.clone(), patient_account: account.address() },
            )?;
            let location = if spec.location_jitter_m > 0.0 {
                LocationSource::Jitter { max_m: spec.location_jitter_m }
            } else {
                LocationSource::Home
            };
            let config = PatientEdgeConfig {
                patient_identity: identity.clone(),
                secret_key: key.clone(),
                home_location: home,
                batch_size: spec.batch_size,
                location,
            };
            let edge = PatientEdge::new(config, rng::derive(seed, &format!("ped/{i}")))
                .map_err(|e| ConfigError(e.to_string()))?;
            patients.push(PatientSim { identity, ledger_id, key, home, edge, ingested: Vec::new() });
        }

        let ped_policy = (!matches!(spec.adversary.kind, AdversaryKind::InjectForged)).then_some(spec.adversary);
        let vn_policy = matches!(spec.adversary.kind, AdversaryKind::InjectForged).then_some(spec.adversary);
        Ok(Simulation {
            clock,
            ledger,
            directory,
            hcp_edge: HcpEdge::new(edge_keys),
            vn,
            patients,
            ped_link: Channel::new("ped-hcp", ped_policy),
            vn_link: Channel::new("hcp-vn", vn_policy),
            reading_rng: rng::derive(seed, "readings"),
            tally: Tally::default(),
            spec,
        })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut Ledger {
        &mut self.ledger
    }

    pub fn directory(&self) -> &SecuredDirectory {
        &self.directory
    }

    pub fn hcp_edge(&self) -> &HcpEdge {
        &self.hcp_edge
    }

    pub fn verification_node(&self) -> &VerificationNode {
        &self.vn
    }

    pub fn patients(&self) -> &[PatientSim] {
        &self.patients
    }

    /// Streams every reading through the pipeline and drains both links.
    pub fn run(&mut self) -> ScenarioReport {
        let kinds = SensorKind::ALL;
        for step in 0..self.spec.reading_count {
            for p in 0..self.patients.len() {
                self.clock += 1;
                let reading = synth_reading(&mut self.reading_rng, kinds[step % kinds.len()], self.clock);
                self.ingest(p, reading);
                self.drain();
            }
        }
        self.drain();
        self.report()
    }

    fn ingest(&mut self, p: usize, reading: PhysiologicalReading) {
        let attack = if self.patients[p].edge.emits_on_next_ingest() { self.ped_link.source_attack() } else { None };
        let patient = &mut self.patients[p];
        match attack {
            Some(AdversaryKind::RerouteWrongLocation) => {
                let bearing = self.reading_rng.gen_range(0.0..360.0);
                patient.edge.set_location_source(LocationSource::Offset { bearing_deg: bearing, distance_m: REROUTE_OFFSET_M });
            }
            Some(_) => patient.edge.set_claimed_identity(Some(format!("intruder-{}", self.ped_link.counters().spoofed))),
            None => {}
        }
        patient.ingested.push(reading.clone());
        self.tally.readings += 1;
        let outcome = patient.edge.ingest_reading(reading).expect("synthetic readings are well formed");
        if attack.is_some() {
            let honest = patient.edge.config().location;
            patient.edge.set_claimed_identity(None);
            patient.edge.set_location_source(match honest {
                LocationSource::Offset { .. } if self.spec.location_jitter_m > 0.0 => {
                    LocationSource::Jitter { max_m: self.spec.location_jitter_m }
                }
                LocationSource::Offset { .. } => LocationSource::Home,
                other => other,
            });
        }
        if let IngestOutcome::Emitted(gpd) = outcome {
            self.tally.gpds += 1;
            self.ped_link.send(gpd.to_wire(), attack.is_some());
        }
    }

    fn drain(&mut self) {
        while let Some(d) = self.ped_link.receive() {
            self.clock += 1;
            if d.attacked {
                self.tally.attacked += 1;
            }
            match self.hcp_edge.handle_incoming(&d.bytes, self.clock) {
                HcpOutcome::Forwarded(signed) => {
                    self.tally.stages.hcp_forwarded += 1;
                    self.vn_link.send(signed.to_wire(), d.attacked);
                }
                HcpOutcome::Discarded(reason) => {
                    *self.tally.stages.hcp_discarded.entry(reason.kind().to_string()).or_default() += 1;
                    self.tally.rejected(d.attacked, discard_stage(&reason));
                }
            }
        }
        while let Some(d) = self.vn_link.receive() {
            self.clock += 1;
            let signed = match SignedGpd::from_wire(&d.bytes) {
                Ok(s) => s,
                Err(_) => {
                    *self.tally.stages.vn_rejected.entry("parse".into()).or_default() += 1;
                    self.tally.rejected(d.attacked, "parse");
                    continue;
                }
            };
            match self.vn.process(signed, &self.directory, &mut self.ledger, self.clock) {
                Ok(_) => {
                    self.tally.stages.stored += 1;
                    if d.attacked {
                        self.tally.attacked_stored += 1;
                    } else {
                        self.tally.clean_stored += 1;
                    }
                }
                Err(rejection) => {
                    let stage = rejection.stage().name();
                    *self.tally.stages.vn_rejected.entry(stage.to_string()).or_default() += 1;
                    self.tally.rejected(d.attacked, stage);
                }
            }
        }
    }

    pub fn report(&self) -> ScenarioReport {
        let mut stages = self.tally.stages.clone();
        for e in self.vn.audit().entries() {
            if e.outcome == "pass" {
                let name = Stage::ALL.iter().find(|s| s.code() == e.stage).map_or(e.stage, |s| s.name());
                *stages.vn_passed.entry(name.to_string()).or_default() += 1;
            }
        }
        let replay_matches_live = ledger::replay_state(self.ledger.blocks())
            .map(|s| s.canonical_bytes() == self.ledger.state().canonical_bytes())
            .unwrap_or(false);
        let expected = self.spec.adversary.kind.expected_stage();
        let t = &self.tally;
        let attacked = t.attacked + self.vn_link.counters().forged;
        let containment_ok = t.attacked_stored == 0
            && match expected {
                Some(stage) => t.attacked_rejected.keys().all(|k| k == stage),
                None => attacked == 0,
            };
        let mut notes = Vec::new();
        if self.spec.freshness_check {
            notes.push(FRESHNESS_NOTE.to_string());
        }
        ScenarioReport {
            spec: self.spec.clone(),
            readings_ingested: t.readings,
            gpds_emitted: t.gpds,
            stages,
            ped_link: self.ped_link.counters(),
            vn_link: self.vn_link.counters(),
            attacked_messages: attacked,
            attacked_stored: t.attacked_stored,
            attacked_rejected: t.attacked_rejected.clone(),
            clean_stored: t.clean_stored,
            clean_rejected: t.clean_rejected.clone(),
            ledger_entries: self.ledger.state().entry_count() as u64,
            chain_length: self.ledger.len() as u64,
            replay_matches_live,
            expected_stage: expected.map(str::to_string),
            containment_ok,
            notes,
        }
    }

    /// Decrypts every stored reading with the escrowed patient keys, per
    /// ledger patient id in chain order.
    pub fn stored_plaintexts(&self) -> BTreeMap<String, Vec<PhysiologicalReading>> {
        let mut out = BTreeMap::new();
        for p in &self.patients {
            let record = self.directory.lookup(p.edge.identity_token()).expect("enrolled patient");
            let key = self.directory.fetch_patient_key(&record).expect("escrowed key");
            let readings = self
                .ledger
                .state()
                .entries(&p.ledger_id)
                .unwrap_or(&[])
                .iter()
                .flat_map(|e| e.signed_gpd.gpd.readings.iter())
                .map(|r| r.open(&key).expect("stored reading decrypts"))
                .collect();
            out.insert(p.ledger_id.clone(), readings);
        }
        out
    }

    /// Writes the chain, directory, audit logs, report and replayable state
    /// into `dir`, replacing earlier artifacts.
    pub fn write_artifacts(&mut self, dir: &Path) -> io::Result<ScenarioReport> {
        fs::create_dir_all(dir)?;
        let report = self.report();
        self.ledger.persist(&dir.join(CHAIN_FILE))?;
        self.directory.persist_to(&dir.join(STORE_FILE)).map_err(|e| io::Error::other(e.to_string()))?;
        for f in [HCP_AUDIT_FILE, VN_AUDIT_FILE] {
            match fs::remove_file(dir.join(f)) {
                Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(e),
                _ => {}
            }
        }
        let mut hcp_audit = self.hcp_edge.audit().clone();
        hcp_audit.flush_to(&dir.join(HCP_AUDIT_FILE))?;
        let mut vn_audit = self.vn.audit().clone();
        vn_audit.flush_to(&dir.join(VN_AUDIT_FILE))?;
        fs::write(dir.join(REPORT_FILE), report.to_json())?;
        fs::write(dir.join(STATE_FILE), self.ledger.state().canonical_bytes())?;
        Ok(report)
    }
}

fn discard_stage(_reason: &DiscardReason) -> &'static str {
    "integrity"
}

pub fn run_scenario(spec: ScenarioSpec) -> Result<ScenarioReport, ConfigError> {
    Ok(Simulation::new(spec, None)?.run())
}
