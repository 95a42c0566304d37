//! Parallel vs sequential reference paths for the data-parallel kernels.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hsi_elm::elm::{hidden_map, hidden_map_seq, init_hidden};
use hsi_elm::kernels::{gaussian_gram, gaussian_gram_seq};
use hsi_elm::synth::{generate_scene, SynthConfig};
use hsi_elm::wcf::{spatial_mean, spatial_mean_seq, CombineRule, WcfConfig};

fn random_features(d: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(d, n, |_, _| rng.gen_range(0.0..1.0))
}

fn bench_gram(c: &mut Criterion) {
    let mut group = c.benchmark_group("gaussian_gram");
    for &n in &[200usize, 600] {
        let x = random_features(32, n, 1);
        group.bench_with_input(BenchmarkId::new("parallel", n), &x, |b, x| {
            b.iter(|| gaussian_gram(x, x, 1.0))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &x, |b, x| {
            b.iter(|| gaussian_gram_seq(x, x, 1.0))
        });
    }
    group.finish();
}

fn bench_hidden(c: &mut Criterion) {
    let mut group = c.benchmark_group("hidden_map");
    let layer = init_hidden(3, 450, 32);
    for &n in &[500usize, 2000] {
        let x = random_features(32, n, 2);
        group.bench_with_input(BenchmarkId::new("parallel", n), &x, |b, x| {
            b.iter(|| hidden_map(&layer, x))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &x, |b, x| {
            b.iter(|| hidden_map_seq(&layer, x))
        });
    }
    group.finish();
}

fn bench_spatial_mean(c: &mut Criterion) {
    let mut group = c.benchmark_group("spatial_mean");
    let cfg = SynthConfig {
        rows: 48,
        cols: 48,
        bands: 16,
        ..SynthConfig::default()
    };
    let (cube, _) = generate_scene(&cfg).unwrap();
    let coords: Vec<(usize, usize)> = (0..cfg.rows)
        .flat_map(|r| (0..cfg.cols).map(move |c| (r, c)))
        .collect();
    let wcf = WcfConfig {
        window: 13,
        z: 0.2,
        mu: 0.1,
        combine_rule: CombineRule::Linear,
    };
    group.bench_function("parallel", |b| b.iter(|| spatial_mean(&cube, &coords, &wcf)));
    group.bench_function("sequential", |b| {
        b.iter(|| spatial_mean_seq(&cube, &coords, &wcf))
    });
    group.finish();
}

criterion_group!(benches, bench_gram, bench_hidden, bench_spatial_mean);
criterion_main!(benches);
