use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use hchain_bench::{payload, PAYLOAD_SIZES};
use hchain_core::crypto::{self, AsymmetricKeyPair, SecretKey, SignatureKeyPair, RSA_BENCH_BITS};
use hchain_core::rng;

fn symmetric(c: &mut Criterion) {
    let mut r = rng::derive(1, "bench/sym");
    let key = SecretKey::generate(&mut r);
    let mut group = c.benchmark_group("aes_gcm");
    for size in PAYLOAD_SIZES {
        let data = payload(size, 1);
        let ct = crypto::symmetric_encrypt(&key, &data, &mut r);
        group.throughput(Throughput::Bytes(size as u64));
        group.bench_with_input(BenchmarkId::new("encrypt", size), &data, |b, d| {
            b.iter(|| crypto::symmetric_encrypt(&key, d, &mut r))
        });
        group.bench_with_input(BenchmarkId::new("decrypt", size), &ct, |b, ct| {
            b.iter(|| crypto::symmetric_decrypt(&key, ct).unwrap())
        });
    }
    group.finish();
}

fn asymmetric(c: &mut Criterion) {
    let mut r = rng::derive(2, "bench/rsa");
    let kp = AsymmetricKeyPair::generate(&mut r, RSA_BENCH_BITS).unwrap();
    let mut group = c.benchmark_group("rsa_oaep_chunked");
    group.sample_size(10);
    for size in [1_000, 10_000] {
        let data = payload(size, 2);
        let chunks = crypto::asymmetric_encrypt_chunked(&kp.public, &data, &mut r).unwrap();
        group.throughput(Throughput::Bytes(size as u64));
        group.bench_with_input(BenchmarkId::new("encrypt", size), &data, |b, d| {
            b.iter(|| crypto::asymmetric_encrypt_chunked(&kp.public, d, &mut r).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("decrypt", size), &chunks, |b, ch| {
            b.iter(|| crypto::asymmetric_decrypt_chunked(&kp.private, ch).unwrap())
        });
    }
    group.finish();
}

fn signatures_and_hashing(c: &mut Criterion) {
    let kp = SignatureKeyPair::from_seed([7; 32]);
    let msg = payload(3_000, 3);
    let sig = kp.sign(&msg);
    let public = kp.public();
    c.bench_function("ed25519/sign_3kB", |b| b.iter(|| kp.sign(&msg)));
    c.bench_function("ed25519/verify_3kB", |b| b.iter(|| public.verify(&msg, &sig)));
    c.bench_function("sha256/3kB", |b| b.iter(|| crypto::hash_bytes(&msg)));

    let key = SecretKey::from_bytes([9; 32]);
    c.bench_function("identity_token/encrypt", |b| {
        b.iter(|| crypto::deterministic_encrypt_identity(&key, "patient-001").unwrap())
    });
}

criterion_group!(benches, symmetric, asymmetric, signatures_and_hashing);
criterion_main!(benches);
