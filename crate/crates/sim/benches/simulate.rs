use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use martrep_core::exec::ExecPolicy;
use martrep_sim::{martingale_ztest, preset, simulate, Channel, Conditioning, SimConfig};

fn bench_simulate(c: &mut Criterion) {
    let model = preset("baseline").unwrap();
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    for policy in [ExecPolicy::Sequential, ExecPolicy::Parallel] {
        let cfg = SimConfig {
            policy,
            ..SimConfig::new(5_000, 1e-3, 7)
        };
        group.bench_with_input(BenchmarkId::new("baseline", format!("{policy:?}")), &cfg, |b, cfg| {
            b.iter(|| simulate(&model, cfg).unwrap())
        });
    }
    group.finish();

    let batch = simulate(&model, &SimConfig::new(20_000, 1e-3, 7)).unwrap();
    c.bench_function("ztest/MH", |b| b.iter(|| martingale_ztest(&batch, Channel::MH, Conditioning::Full)));
}

criterion_group!(benches, bench_simulate);
criterion_main!(benches);
