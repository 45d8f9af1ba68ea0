use std::fs;
use std::path::Path;

use clap::Parser;
use hchain_cli::{run_with_env, Cli, Exit};

fn hchain(dir: &Path, args: &[&str]) -> (Exit, String) {
    hchain_env(dir, args, None)
}

fn hchain_env(dir: &Path, args: &[&str], env_key: Option<&str>) -> (Exit, String) {
    let data = dir.to_str().unwrap();
    let mut argv = vec!["hchain", "--data-dir", data];
    argv.extend_from_slice(args);
    let cli = Cli::try_parse_from(argv).expect("arguments parse");
    let mut out = Vec::new();
    let code = run_with_env(&cli, env_key.map(str::to_string), &mut out);
    (code, String::from_utf8(out).unwrap())
}

#[test]
fn demo_stores_every_batch() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = hchain(dir.path(), &["demo"]);
    assert_eq!(code, Exit::Ok, "{out}");
    assert!(out.contains("stored on chain:   4"), "{out}");
    assert!(out.contains("chain length:      8"), "{out}");
    for f in ["chain.jsonl", "directory.store", "hcp_edge_audit.jsonl", "vn_audit.jsonl", "scenario_report.json", "state.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let vn_audit = fs::read_to_string(dir.path().join("vn_audit.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(vn_audit.lines().next().unwrap()).unwrap();
    assert_eq!(first["stage"], "sig");
}

#[test]
fn demo_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(hchain(a.path(), &["--seed", "7", "demo"]).0, Exit::Ok);
    assert_eq!(hchain(b.path(), &["--seed", "7", "demo"]).0, Exit::Ok);
    for f in ["chain.jsonl", "scenario_report.json", "directory.store"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn degenerate_radius_fails_at_location() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = hchain(dir.path(), &["--home-radius-m", "0.000001", "demo"]);
    assert_eq!(code, Exit::Rejected);
    assert!(out.contains("rejected at location"), "{out}");
}

#[test]
fn every_attack_is_contained() {
    let dir = tempfile::tempdir().unwrap();
    for (kind, stage) in [
        ("tamper", "integrity"),
        ("replay", "freshness"),
        ("forge-signature", "signature"),
        ("wrong-location", "location"),
        ("bad-identity", "identity"),
    ] {
        let (code, out) = hchain(dir.path(), &["attack", "--kind", kind]);
        assert_eq!(code, Exit::Ok, "{kind}: {out}");
        assert!(out.contains(&format!("rejection stage: {stage} (expected {stage})")), "{kind}: {out}");
        assert!(out.contains(", 0 stored"), "{kind}: {out}");
    }
}

#[test]
fn grant_read_revoke_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(hchain(p, &["demo"]).0, Exit::Ok);

    let (code, out) = hchain(p, &["access", "read", "--patient", "P001", "--grantee", "clinic"]);
    assert_eq!((code, out.trim()), (Exit::Rejected, "access denied"));

    assert_eq!(hchain(p, &["access", "grant", "--patient", "P001", "--grantee", "clinic"]).0, Exit::Ok);
    let (code, out) = hchain(p, &["access", "read", "--patient", "P001", "--grantee", "clinic"]);
    assert_eq!(code, Exit::Ok);
    assert!(out.starts_with("4 entries"), "{out}");
    assert!(out.contains("decryptable readings: 20/20"), "{out}");

    assert_eq!(hchain(p, &["access", "revoke", "--patient", "P001", "--grantee", "clinic"]).0, Exit::Ok);
    let (code, out) = hchain(p, &["access", "read", "--patient", "P001", "--grantee", "clinic"]);
    assert_eq!((code, out.trim()), (Exit::Rejected, "access denied"));

    let (code, out) = hchain(p, &["access", "read", "--patient", "P001"]);
    assert_eq!(code, Exit::Ok, "patient reads own records: {out}");
    assert_eq!(hchain(p, &["verify-chain"]).0, Exit::Ok);
}

#[test]
fn grant_needs_a_grantee() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(hchain(dir.path(), &["demo"]).0, Exit::Ok);
    assert_eq!(hchain(dir.path(), &["access", "grant", "--patient", "P001"]).0, Exit::Config);
}

#[test]
fn non_patient_cannot_grant() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(hchain(dir.path(), &["demo"]).0, Exit::Ok);
    let (code, out) = hchain(dir.path(), &["access", "grant", "--patient", "P404", "--grantee", "x"]);
    assert_eq!(code, Exit::Rejected, "{out}");
}

#[test]
fn verify_chain_reports_corrupted_block() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(hchain(dir.path(), &["demo"]).0, Exit::Ok);
    assert_eq!(hchain(dir.path(), &["verify-chain"]).0, Exit::Ok);

    let path = dir.path().join("chain.jsonl");
    let mut bytes = fs::read(&path).unwrap();
    let line_starts: Vec<usize> =
        std::iter::once(0).chain(bytes.iter().enumerate().filter(|(_, &b)| b == b'\n').map(|(i, _)| i + 1)).collect();
    let target = line_starts[5] + 40;
    bytes[target] ^= 0x01;
    fs::write(&path, bytes).unwrap();
    let (code, out) = hchain(dir.path(), &["verify-chain"]);
    assert_eq!(code, Exit::Rejected);
    assert!(out.contains("block 5"), "{out}");
}

#[test]
fn verify_chain_detects_state_drift() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(hchain(dir.path(), &["demo"]).0, Exit::Ok);
    fs::write(dir.path().join("state.json"), b"{}").unwrap();
    assert_eq!(hchain(dir.path(), &["verify-chain"]).0, Exit::Rejected);
}

#[test]
fn missing_chain_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(hchain(dir.path(), &["verify-chain"]).0, Exit::Io);
    assert_eq!(hchain(dir.path(), &["access", "read", "--patient", "P001"]).0, Exit::Io);
}

#[test]
fn bad_config_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, br#"{"seed": "nope"}"#).unwrap();
    assert_eq!(hchain(dir.path(), &["--config", cfg.to_str().unwrap(), "demo"]).0, Exit::Config);
    assert_eq!(hchain(dir.path(), &["--master-key", "abc", "demo"]).0, Exit::Config);
    assert_eq!(hchain(dir.path(), &["--batch-size", "0", "demo"]).0, Exit::Config);
    assert_eq!(hchain(dir.path(), &["bench", "--sizes", "100", "--reps", "2"]).0, Exit::Config);
}

#[test]
fn flags_override_file_and_env_overrides_master_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let file_key = "11".repeat(32);
    let env_key = "22".repeat(32);
    fs::write(&cfg, format!(r#"{{"seed": 9, "batch_size": 4, "master_key": "{file_key}"}}"#)).unwrap();
    let c = cfg.to_str().unwrap();

    let a = dir.path().join("a");
    let (code, out) = hchain(&a, &["--config", c, "--batch-size", "10", "demo"]);
    assert_eq!(code, Exit::Ok, "{out}");
    assert!(out.contains("GPDs emitted:      2"), "{out}");

    let b = dir.path().join("b");
    hchain_env(&b, &["--config", c, "demo"], Some(&env_key));
    let c2 = dir.path().join("c");
    hchain_env(&c2, &["--config", c, "--master-key", &env_key, "demo"], None);
    let store = |d: &Path| fs::read(d.join("directory.store")).unwrap();
    assert_eq!(store(&b), store(&c2), "env key must win over the file key");

    let d = dir.path().join("d");
    hchain(&d, &["--config", c, "demo"]);
    assert_ne!(store(&b), store(&d));
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = hchain(dir.path(), &["bench", "--sizes", "1000,3000", "--reps", "3"]);
    assert_eq!(code, Exit::Ok, "{out}");
    let csv = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "size_bytes,sym_enc_s,sym_dec_s,asym_enc_s,asym_dec_s");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1000,"));
}

#[test]
fn run_prints_report_json() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        br#"{"patients": 2, "reading_count": 10, "adversary": {"kind": "reroute_wrong_location", "probability": 1.0, "seed": 3}}"#,
    )
    .unwrap();
    let (code, out) = hchain(dir.path(), &["run", "--spec", spec.to_str().unwrap()]);
    assert_eq!(code, Exit::Ok, "{out}");
    let report: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(report["ledger_entries"], 0);
    assert_eq!(report["attacked_rejected"]["location"], 4);
}
