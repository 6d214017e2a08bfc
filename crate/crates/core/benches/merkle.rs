use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use logstamp::kdf::{self, Salt};
use logstamp::merkle::{ExecMode, MerkleTree};
use logstamp::pipeline;

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn build(c: &mut Criterion) {
    let mut group = c.benchmark_group("merkle_build");
    for n in [16usize, 1_000, 100_000] {
        let contents: Vec<Vec<u8>> = (0..n).map(|i| format!("rotated log file {i}\n").repeat(8).into_bytes()).collect();
        group.throughput(Throughput::Elements(n as u64));
        for (name, mode) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &contents, |b, contents| {
                b.iter(|| MerkleTree::build_with(black_box(contents), mode).unwrap().root())
            });
        }
    }
    group.finish();
}

fn proofs(c: &mut Criterion) {
    let contents: Vec<Vec<u8>> = (0..10_000).map(|i| format!("file {i}").into_bytes()).collect();
    let tree = MerkleTree::build(&contents).unwrap();
    c.bench_function("merkle_proof_all_10000", |b| {
        b.iter(|| (0..tree.leaf_count()).map(|i| tree.proof(i).unwrap().steps.len()).sum::<usize>())
    });
}

fn hash_files(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<_> = (0..64)
        .map(|i| {
            let p = dir.path().join(format!("f{i}.log"));
            std::fs::write(&p, vec![i as u8; 256 * 1024]).unwrap();
            p
        })
        .collect();
    let mut group = c.benchmark_group("hash_files_64x256KiB");
    group.throughput(Throughput::Bytes(64 * 256 * 1024));
    for (name, mode) in MODES {
        group.bench_function(name, |b| b.iter(|| pipeline::hash_files(black_box(&paths), mode).unwrap()));
    }
    group.finish();
}

fn kdf_chain(c: &mut Criterion) {
    let root = logstamp::digest::sha256(b"root");
    let salt = Salt([7; 16]);
    let mut group = c.benchmark_group("kdf_chain");
    group.throughput(Throughput::Elements(100_000));
    group.bench_function("100000", |b| b.iter(|| kdf::kdf_chain(&root, &salt, black_box(100_000)).unwrap()));
    group.finish();
}

criterion_group!(benches, build, proofs, hash_files, kdf_chain);
criterion_main!(benches);
