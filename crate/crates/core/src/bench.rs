//! Wall-clock comparison of AES-256-GCM against chunked RSA-OAEP across
//! payload sizes.

use std::io;
use std::path::Path;
use std::time::Instant;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{self, AsymmetricKeyPair, SecretKey, RSA_BENCH_BITS};
use crate::rng;

pub const DEFAULT_SIZES: [usize; 5] = [1_000, 3_000, 10_000, 100_000, 1_000_000];
pub const DEFAULT_REPS: usize = 5;
pub const MIN_REPS: usize = 3;
pub const CSV_HEADER: &str = "size_bytes,sym_enc_s,sym_dec_s,asym_enc_s,asym_dec_s";

/// Median seconds per operation at one payload size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub size_bytes: u64,
    pub sym_enc_s: f64,
    pub sym_dec_s: f64,
    pub asym_enc_s: f64,
    pub asym_dec_s: f64,
}

impl BenchRow {
    pub fn columns(&self) -> [f64; 4] {
        [self.sym_enc_s, self.sym_dec_s, self.asym_enc_s, self.asym_dec_s]
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("sizes must be non-empty and positive")]
    BadSizes,
    #[error("at least {MIN_REPS} repetitions required")]
    TooFewReps,
    #[error("{op} roundtrip mismatch at {size} bytes")]
    Roundtrip { op: &'static str, size: usize },
    #[error(transparent)]
    Crypto(#[from] crypto::CryptoError),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Times each operation `reps` times per size on a fixed random payload and
/// keeps the median. Every repetition's roundtrip is checked.
pub fn run_bench(sizes: &[usize], reps: usize, seed: u64) -> Result<Vec<BenchRow>, BenchError> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(BenchError::BadSizes);
    }
    if reps < MIN_REPS {
        return Err(BenchError::TooFewReps);
    }
    let mut r = rng::derive(seed, "bench");
    let sym_key = SecretKey::generate(&mut r);
    let rsa = AsymmetricKeyPair::generate(&mut r, RSA_BENCH_BITS)?;

    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut rows = Vec::with_capacity(sorted.len());
    for size in sorted {
        let mut payload = vec![0u8; size];
        r.fill_bytes(&mut payload);
        let mut t = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        for _ in 0..reps {
            let (ct, s) = timed(|| crypto::symmetric_encrypt(&sym_key, &payload, &mut r));
            t[0].push(s);
            let (pt, s) = timed(|| crypto::symmetric_decrypt(&sym_key, &ct));
            t[1].push(s);
            if pt? != payload {
                return Err(BenchError::Roundtrip { op: "symmetric", size });
            }

            let (chunks, s) = timed(|| crypto::asymmetric_encrypt_chunked(&rsa.public, &payload, &mut r));
            t[2].push(s);
            let chunks = chunks?;
            let (pt, s) = timed(|| crypto::asymmetric_decrypt_chunked(&rsa.private, &chunks));
            t[3].push(s);
            if pt? != payload {
                return Err(BenchError::Roundtrip { op: "asymmetric", size });
            }
        }
        let [a, b, c, d] = t.map(median);
        rows.push(BenchRow { size_bytes: size as u64, sym_enc_s: a, sym_dec_s: b, asym_enc_s: c, asym_dec_s: d });
    }
    Ok(rows)
}

/// Writes rows as CSV with [`CSV_HEADER`], seconds in scientific notation
/// with 9 significant digits.
pub fn write_csv<W: io::Write>(rows: &[BenchRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for row in rows {
        let mut rec = vec![row.size_bytes.to_string()];
        rec.extend(row.columns().iter().map(|v| format!("{v:.8e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(rows: &[BenchRow], path: &Path) -> Result<(), BenchError> {
    if rows.is_empty() {
        return Err(BenchError::BadSizes);
    }
    write_csv(rows, std::fs::File::create(path)?)
}

pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<BenchRow>, BenchError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if headers != CSV_HEADER {
        return Err(BenchError::Io(io::Error::new(io::ErrorKind::InvalidData, format!("unexpected header {headers}"))));
    }
    rdr.deserialize().map(|r| r.map_err(BenchError::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(run_bench(&[], 5, 0), Err(BenchError::BadSizes)));
        assert!(matches!(run_bench(&[0], 5, 0), Err(BenchError::BadSizes)));
        assert!(matches!(run_bench(&[10], 2, 0), Err(BenchError::TooFewReps)));
    }

    #[test]
    fn csv_roundtrip() {
        let rows = run_bench(&[500, 200], 3, 1).unwrap();
        assert_eq!(rows.iter().map(|r| r.size_bytes).collect::<Vec<_>>(), [200, 500]);
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(text.lines().count(), 3);
        let back = read_csv(buf.as_slice()).unwrap();
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.size_bytes, b.size_bytes);
            for (x, y) in a.columns().iter().zip(b.columns()) {
                assert!((x - y).abs() <= x.abs() * 1e-8);
            }
        }
    }
}
