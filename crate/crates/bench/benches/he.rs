use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use triad::bfv::{GaloisKeys, KeyMode, KeyOwner, ReEncryptionKey, SecretKey};
use triad::linear::{he_conv, prepare_conv, ConvOptions, ConvSpec, Padding};
use triad::ring::Preset;
use triad_bench::Fixture;

fn primitives(c: &mut Criterion) {
    let mut f = Fixture::new(Preset::Toy);
    let ct = f.encrypt_random();
    let w = f.random_slots();
    let pt = f.bfv.encode(&w).unwrap();
    let mut g = c.benchmark_group("bfv-toy");
    g.bench_function("encrypt", |b| {
        let v = f.random_slots();
        let mut rng = f.rng.clone();
        b.iter(|| f.bfv.encrypt_slots(&f.sk, &v, &mut rng).unwrap())
    });
    g.bench_function("decrypt", |b| b.iter(|| f.bfv.decrypt_slots(&f.sk, &ct).unwrap()));
    g.bench_function("mul_plain", |b| b.iter(|| f.bfv.mul_plain(&ct, &pt).unwrap()));
    let mut rng = f.rng.clone();
    for mode in [KeyMode::AllKeys, KeyMode::LogKeys] {
        let keys = GaloisKeys::generate(&f.ctx, &f.sk, mode, Some(&[7]), 1 << 20, &mut rng).unwrap();
        g.bench_function(BenchmarkId::new("rotate-7", mode.name()), |b| b.iter(|| f.bfv.rotate(&ct, 7, &keys).unwrap()));
    }
    let sp = SecretKey::generate(&f.ctx, KeyOwner::Proxy, &mut rng);
    let rk = ReEncryptionKey::generate(&f.ctx, &f.sk, &sp, 1 << 28, &mut rng).unwrap();
    g.bench_function("reencrypt", |b| b.iter(|| f.bfv.reencrypt(&ct, &rk).unwrap()));
    g.finish();
}

/// 4 -> 4 channel 3x3 convolution on 8x8 at increasing kernel sparsity.
fn sparse_conv(c: &mut Criterion) {
    let mut f = Fixture::new(Preset::Toy);
    let spec = ConvSpec {
        c_in: 4,
        c_out: 4,
        kernel: 3,
        height: 8,
        width: 8,
        stride: 1,
        padding: Padding::Same,
    };
    let keys = GaloisKeys::generate(&f.ctx, &f.sk, KeyMode::LogKeys, None, 1 << 16, &mut f.rng).unwrap();
    let ct = f.encrypt_random();
    let mut g = c.benchmark_group("sparse-conv");
    for zeros_per_ten in [0usize, 5, 9] {
        // deterministic pattern: the first `zeros_per_ten` of every ten weights are zero
        let kernels: Vec<i64> = (0..spec.weight_count()).map(|i| if i % 10 < zeros_per_ten { 0 } else { 1 + (i % 3) as i64 }).collect();
        let prepared = prepare_conv(&f.bfv, &spec, &kernels).unwrap();
        let alpha = format!("{:.1}", zeros_per_ten as f64 / 10.0);
        g.bench_function(BenchmarkId::new("alpha", alpha), |b| {
            b.iter(|| he_conv(&f.bfv, std::slice::from_ref(&ct), &prepared, &keys, ConvOptions::default()).unwrap())
        });
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = primitives, sparse_conv
}
criterion_main!(benches);
