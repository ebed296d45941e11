use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sburgers_core::ensemble::ExecMode;
use sburgers_core::integrator::{SimConfig, Simulator};
use sburgers_core::lyapunov::VNormIntegral;
use sburgers_core::spectral::SpectralField;

fn ensemble(c: &mut Criterion) {
    let sim = Simulator::new(SimConfig::default_model(32, 0.1)).unwrap();
    let x0 = SpectralField::zeros(32);
    let mut group = c.benchmark_group("ensemble_64_paths");
    group.sample_size(10);
    for (label, mode) in [("parallel", ExecMode::Parallel), ("sequential", ExecMode::Sequential)] {
        group.bench_with_input(BenchmarkId::from_parameter(label), &mode, |b, &mode| {
            b.iter(|| sim.ensemble(&x0, 64, mode, |_| VNormIntegral::new(0.5)))
        });
    }
    group.finish();
}

criterion_group!(benches, ensemble);
criterion_main!(benches);
