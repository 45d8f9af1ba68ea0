//! Command implementations behind the `hchain` binary.
//!
//! Exit codes: 0 success, 1 protocol rejection, 2 configuration error,
//! 3 I/O error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use hchain_core::bench::{self, BenchError};
use hchain_core::directory::{SecuredDirectory, MASTER_KEY_ENV, STORE_FILE};
use hchain_core::ledger::{self, ContractCall, Ledger, LedgerError, LoadError, TxOutcome};
use hchain_core::rng;
use hchain_core::simnet::{
    self, named_account, AdversaryKind, AdversaryPolicy, ScenarioReport, ScenarioSpec, Simulation, CHAIN_FILE,
    STATE_FILE,
};
use hchain_core::SecretKey;
use serde::Deserialize;
use thiserror::Error;

pub const BENCH_FILE: &str = "bench.csv";
pub const DEMO_READINGS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Rejected = 1,
    Config = 2,
    Io = 3,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Rejected(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit(&self) -> Exit {
        match self {
            CliError::Rejected(_) => Exit::Rejected,
            CliError::Config(_) => Exit::Config,
            CliError::Io(_) => Exit::Io,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "hchain", version, about = "Encrypted IoMT pipeline and EHR ledger simulator")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags that override values from `--config`.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    /// JSON config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub home_radius_m: Option<f64>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Directory master key, 64 hex characters.
    #[arg(long, global = true)]
    pub master_key: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One patient, 20 readings, clean channel.
    Demo,
    /// Runs one adversary at probability 1 and checks it is contained.
    Attack {
        #[arg(long, value_enum)]
        kind: AttackKind,
    },
    /// Patient-controlled grants and record reads on an existing chain.
    Access {
        #[arg(value_enum)]
        action: AccessAction,
        #[arg(long)]
        patient: String,
        #[arg(long)]
        grantee: Option<String>,
    },
    /// Validates chain.jsonl and checks replayed state against state.json.
    VerifyChain,
    /// Symmetric vs chunked asymmetric timing sweep, written to bench.csv.
    Bench {
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Runs a scenario spec file and prints its report as JSON.
    Run {
        #[arg(long)]
        spec: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AttackKind {
    Tamper,
    Replay,
    ForgeSignature,
    WrongLocation,
    BadIdentity,
}

impl AttackKind {
    pub fn adversary(self) -> AdversaryKind {
        match self {
            AttackKind::Tamper => AdversaryKind::TamperRandomByte,
            AttackKind::Replay => AdversaryKind::ReplayPrevious,
            AttackKind::ForgeSignature => AdversaryKind::InjectForged,
            AttackKind::WrongLocation => AdversaryKind::RerouteWrongLocation,
            AttackKind::BadIdentity => AdversaryKind::SpoofIdentity,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Tamper => "tamper",
            AttackKind::Replay => "replay",
            AttackKind::ForgeSignature => "forge-signature",
            AttackKind::WrongLocation => "wrong-location",
            AttackKind::BadIdentity => "bad-identity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AccessAction {
    Grant,
    Revoke,
    Read,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    home_radius_m: Option<f64>,
    batch_size: Option<usize>,
    data_dir: Option<PathBuf>,
    master_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub home_radius_m: f64,
    pub batch_size: usize,
    pub data_dir: PathBuf,
    pub master_key: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            home_radius_m: 100.0,
            batch_size: 5,
            data_dir: PathBuf::from("./hchain-data"),
            master_key: None,
        }
    }
}

impl RunConfig {
    /// Defaults, then the config file, then flags, then `env_master_key`
    /// for the master key only.
    pub fn resolve(overrides: &Overrides, env_master_key: Option<String>) -> Result<RunConfig> {
        let file = match &overrides.config {
            Some(path) => {
                let bytes = fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                serde_json::from_slice::<ConfigFile>(&bytes)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => ConfigFile::default(),
        };
        let d = RunConfig::default();
        let cfg = RunConfig {
            seed: overrides.seed.or(file.seed).unwrap_or(d.seed),
            home_radius_m: overrides.home_radius_m.or(file.home_radius_m).unwrap_or(d.home_radius_m),
            batch_size: overrides.batch_size.or(file.batch_size).unwrap_or(d.batch_size),
            data_dir: overrides.data_dir.clone().or(file.data_dir).unwrap_or(d.data_dir),
            master_key: env_master_key.filter(|k| !k.is_empty()).or(overrides.master_key.clone()).or(file.master_key),
        };
        cfg.master_secret()?;
        Ok(cfg)
    }

    pub fn master_secret(&self) -> Result<SecretKey> {
        match &self.master_key {
            Some(hex) => SecretKey::from_hex(hex.trim()).map_err(|e| CliError::Config(format!("master key: {e}"))),
            None => Ok(simnet::master_key_for_seed(self.seed)),
        }
    }

    fn scenario(&self) -> ScenarioSpec {
        ScenarioSpec {
            seed: self.seed,
            home_radius_m: self.home_radius_m,
            batch_size: self.batch_size,
            reading_count: DEMO_READINGS,
            ..ScenarioSpec::default()
        }
    }

    fn path(&self, file: &str) -> PathBuf {
        self.data_dir.join(file)
    }
}

/// Runs a parsed command line, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Exit {
    let env_key = std::env::var(MASTER_KEY_ENV).ok();
    run_with_env(cli, env_key, out)
}

pub fn run_with_env(cli: &Cli, env_master_key: Option<String>, out: &mut dyn Write) -> Exit {
    let result = RunConfig::resolve(&cli.overrides, env_master_key).and_then(|cfg| match &cli.command {
        Command::Demo => cmd_demo(&cfg, out),
        Command::Attack { kind } => cmd_attack(&cfg, *kind, out),
        Command::Access { action, patient, grantee } => cmd_access(&cfg, *action, patient, grantee.as_deref(), out),
        Command::VerifyChain => cmd_verify_chain(&cfg, out),
        Command::Bench { sizes, reps } => cmd_bench(&cfg, sizes.as_deref(), *reps, out),
        Command::Run { spec } => cmd_run(&cfg, spec, out),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(out, "{e}");
            e.exit()
        }
    }
}

fn print_report(out: &mut dyn Write, r: &ScenarioReport) -> io::Result<()> {
    writeln!(out, "readings ingested: {}", r.readings_ingested)?;
    writeln!(out, "GPDs emitted:      {}", r.gpds_emitted)?;
    writeln!(out, "hcp-edge forwarded {}, discarded {:?}", r.stages.hcp_forwarded, r.stages.hcp_discarded)?;
    writeln!(out, "vn passed   {:?}", r.stages.vn_passed)?;
    writeln!(out, "vn rejected {:?}", r.stages.vn_rejected)?;
    writeln!(out, "stored on chain:   {}", r.ledger_entries)?;
    writeln!(out, "chain length:      {}", r.chain_length)?;
    for note in &r.notes {
        writeln!(out, "note: {note}")?;
    }
    Ok(())
}

fn run_simulation(cfg: &RunConfig, spec: ScenarioSpec, dir: &Path) -> Result<(Simulation, ScenarioReport)> {
    let mut sim = Simulation::new(spec, Some(cfg.master_secret()?)).map_err(|e| CliError::Config(e.to_string()))?;
    sim.run();
    let report = sim.write_artifacts(dir)?;
    Ok((sim, report))
}

pub fn cmd_demo(cfg: &RunConfig, out: &mut dyn Write) -> Result<Exit> {
    let (sim, report) = run_simulation(cfg, cfg.scenario(), &cfg.data_dir)?;
    print_report(out, &report)?;
    let buffered: usize = sim.patients().iter().map(|p| p.edge.buffered()).sum();
    if buffered > 0 {
        writeln!(out, "readings still buffered (incomplete batch): {buffered}")?;
    }
    writeln!(out, "artifacts written to {}", cfg.data_dir.display())?;
    if report.ledger_entries == report.gpds_emitted && report.clean_rejected.is_empty() && buffered == 0 {
        Ok(Exit::Ok)
    } else {
        let stages: Vec<_> = report.clean_rejected.keys().map(String::as_str).collect();
        writeln!(out, "demo failed: rejected at {}", if stages.is_empty() { "none".into() } else { stages.join(", ") })?;
        Ok(Exit::Rejected)
    }
}

pub fn cmd_attack(cfg: &RunConfig, kind: AttackKind, out: &mut dyn Write) -> Result<Exit> {
    let spec = ScenarioSpec { adversary: AdversaryPolicy::always(kind.adversary(), cfg.seed), ..cfg.scenario() };
    let dir = cfg.data_dir.join(format!("attack-{}", kind.name()));
    let (_, report) = run_simulation(cfg, spec, &dir)?;
    print_report(out, &report)?;
    let expected = report.expected_stage.clone().unwrap_or_default();
    let stages: Vec<_> = report.attacked_rejected.keys().cloned().collect();
    writeln!(out, "attack {}: {} attacked messages, {} stored", kind.name(), report.attacked_messages, report.attacked_stored)?;
    writeln!(out, "rejection stage: {} (expected {expected})", stages.join(", "))?;
    if report.attacked_messages > 0 && report.containment_ok {
        writeln!(out, "contained")?;
        Ok(Exit::Ok)
    } else {
        writeln!(out, "NOT contained")?;
        Ok(Exit::Rejected)
    }
}

fn load_ledger(cfg: &RunConfig) -> Result<Ledger> {
    Ledger::load(&cfg.path(CHAIN_FILE)).map_err(|e| match e {
        LoadError::Io(e) => CliError::Io(format!("{}: {e}", cfg.path(CHAIN_FILE).display())),
        LoadError::Corrupt(c) => CliError::Rejected(c.to_string()),
    })
}

fn save_ledger(cfg: &RunConfig, ledger: &Ledger) -> Result<()> {
    ledger.persist(&cfg.path(CHAIN_FILE))?;
    fs::write(cfg.path(STATE_FILE), ledger.state().canonical_bytes())?;
    Ok(())
}

pub fn cmd_access(
    cfg: &RunConfig,
    action: AccessAction,
    patient: &str,
    grantee: Option<&str>,
    out: &mut dyn Write,
) -> Result<Exit> {
    let mut ledger = load_ledger(cfg)?;
    let seed = cfg.seed;
    let patient_account = named_account(seed, patient);
    let reject = |e: LedgerError| match e {
        LedgerError::Rejected(r) => CliError::Rejected(r.to_string()),
        other => CliError::Rejected(other.to_string()),
    };
    match action {
        AccessAction::Grant | AccessAction::Revoke => {
            let name = grantee.ok_or_else(|| CliError::Config("--grantee is required".into()))?;
            let address = named_account(seed, name).address();
            let call = if action == AccessAction::Grant {
                ContractCall::GrantAccess { patient_id: patient.to_string(), grantee: address }
            } else {
                ContractCall::RevokeAccess { patient_id: patient.to_string(), grantee: address }
            };
            let outcome = ledger.call(&patient_account, call).map_err(reject)?;
            save_ledger(cfg, &ledger)?;
            if let TxOutcome::Committed(receipt) = outcome {
                let verb = if action == AccessAction::Grant { "granted" } else { "revoked" };
                writeln!(out, "{verb} {name} ({address}) on {patient}: block {}", receipt.block_index)?;
            }
            Ok(Exit::Ok)
        }
        AccessAction::Read => {
            let reader = grantee.map(|g| named_account(seed, g)).unwrap_or(patient_account);
            let call = ContractCall::ReadRecords { patient_id: patient.to_string() };
            let entries = match ledger.call(&reader, call).map_err(reject)? {
                TxOutcome::Records(e) => e,
                TxOutcome::Committed(_) => Vec::new(),
            };
            let readable = decryptable_readings(cfg, &entries);
            let total: usize = entries.iter().map(|e| e.signed_gpd.gpd.readings.len()).sum();
            writeln!(out, "{} entries for {patient} as {}", entries.len(), reader.address())?;
            for e in &entries {
                writeln!(out, "  seq_no {} stored_at {} tx {}", e.signed_gpd.gpd.seq_no, e.stored_at, e.tx_hash)?;
            }
            match readable {
                Some(n) => writeln!(out, "decryptable readings: {n}/{total}")?,
                None => writeln!(out, "decryptable readings: directory unavailable")?,
            }
            Ok(Exit::Ok)
        }
    }
}

fn decryptable_readings(cfg: &RunConfig, entries: &[ledger::StoredEntry]) -> Option<usize> {
    let key = cfg.master_secret().ok()?;
    let dir = SecuredDirectory::open(cfg.path(STORE_FILE), key, rng::seeded(cfg.seed)).ok()?;
    let mut n = 0;
    for e in entries {
        let Ok(record) = dir.lookup(&e.signed_gpd.gpd.identity_token) else { continue };
        let Ok(pk) = dir.fetch_patient_key(&record) else { continue };
        n += e.signed_gpd.gpd.readings.iter().filter(|r| r.open(&pk).is_ok()).count();
    }
    Some(n)
}

pub fn cmd_verify_chain(cfg: &RunConfig, out: &mut dyn Write) -> Result<Exit> {
    let path = cfg.path(CHAIN_FILE);
    let bytes = fs::read(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let state = ledger::parse_chain_jsonl(&bytes)
        .and_then(|blocks| ledger::replay_state(&blocks).map(|s| (blocks.len(), s)));
    let (len, state) = match state {
        Ok(v) => v,
        Err(c) => {
            writeln!(out, "{c}")?;
            return Ok(Exit::Rejected);
        }
    };
    match fs::read(cfg.path(STATE_FILE)) {
        Ok(saved) if saved != state.canonical_bytes() => {
            writeln!(out, "replayed state differs from {STATE_FILE}")?;
            return Ok(Exit::Rejected);
        }
        Ok(_) => writeln!(out, "replayed state matches {STATE_FILE}")?,
        Err(e) if e.kind() == io::ErrorKind::NotFound => writeln!(out, "no {STATE_FILE}; replay only")?,
        Err(e) => return Err(e.into()),
    }
    writeln!(out, "chain ok: {len} blocks, {} stored entries", state.entry_count())?;
    Ok(Exit::Ok)
}

pub fn cmd_bench(cfg: &RunConfig, sizes: Option<&[usize]>, reps: Option<usize>, out: &mut dyn Write) -> Result<Exit> {
    let sizes = sizes.unwrap_or(&bench::DEFAULT_SIZES);
    let reps = reps.unwrap_or(bench::DEFAULT_REPS);
    let rows = bench::run_bench(sizes, reps, cfg.seed).map_err(|e| match e {
        BenchError::BadSizes | BenchError::TooFewReps => CliError::Config(e.to_string()),
        BenchError::Io(e) => CliError::Io(e.to_string()),
        other => CliError::Rejected(other.to_string()),
    })?;
    fs::create_dir_all(&cfg.data_dir)?;
    let path = cfg.path(BENCH_FILE);
    bench::emit_csv(&rows, &path).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(out, "{:>10} {:>12} {:>12} {:>12} {:>12}", "bytes", "sym_enc_s", "sym_dec_s", "asym_enc_s", "asym_dec_s")?;
    for r in &rows {
        writeln!(
            out,
            "{:>10} {:>12.6e} {:>12.6e} {:>12.6e} {:>12.6e}",
            r.size_bytes, r.sym_enc_s, r.sym_dec_s, r.asym_enc_s, r.asym_dec_s
        )?;
    }
    writeln!(out, "wrote {}", path.display())?;
    Ok(Exit::Ok)
}

pub fn cmd_run(cfg: &RunConfig, spec_path: &Path, out: &mut dyn Write) -> Result<Exit> {
    let bytes = fs::read(spec_path).map_err(|e| CliError::Config(format!("{}: {e}", spec_path.display())))?;
    let spec: ScenarioSpec =
        serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", spec_path.display())))?;
    let (_, report) = run_simulation(cfg, spec, &cfg.data_dir)?;
    out.write_all(&report.to_json())?;
    writeln!(out)?;
    Ok(if report.containment_ok { Exit::Ok } else { Exit::Rejected })
}
