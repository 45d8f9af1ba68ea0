//! Append-only JSON-lines audit trail kept by the provider-side nodes.

use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

use crate::encoding::canonical_encode;

#[derive(Debug, Clone)]
pub struct AuditLog<E> {
    entries: Vec<E>,
    flushed: usize,
}

impl<E> Default for AuditLog<E> {
    fn default() -> Self {
        AuditLog { entries: Vec::new(), flushed: 0 }
    }
}

impl<E: Serialize> AuditLog<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, entry: E) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[E] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One canonical JSON object per line.
    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for e in &self.entries {
            out.extend_from_slice(&canonical_encode(e));
            out.push(b'\n');
        }
        out
    }

    /// Appends entries not yet written to `path`.
    pub fn flush_to(&mut self, path: &Path) -> io::Result<()> {
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        for e in &self.entries[self.flushed..] {
            file.write_all(&canonical_encode(e))?;
            file.write_all(b"\n")?;
        }
        self.flushed = self.entries.len();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Line {
        ts: u64,
        outcome: &'static str,
    }

    #[test]
    fn flush_appends_only_new_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.jsonl");
        let mut log = AuditLog::new();
        log.record(Line { ts: 1, outcome: "forwarded" });
        log.flush_to(&path).unwrap();
        log.record(Line { ts: 2, outcome: "discarded" });
        log.flush_to(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "{\"outcome\":\"forwarded\",\"ts\":1}\n{\"outcome\":\"discarded\",\"ts\":2}\n");
        assert_eq!(log.to_jsonl(), text.as_bytes());
    }
}
