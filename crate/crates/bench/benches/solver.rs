use criterion::{criterion_group, criterion_main, Criterion};
use finopt_bench::{geometry, reference_vector, setup};
use finopt_core::geometry::{decode, DecisionVector};
use finopt_core::solver::simulate;

fn simulate_reference(c: &mut Criterion) {
    let g = geometry();
    let fins = decode(&DecisionVector::new(reference_vector(), &g).unwrap(), &g)
        .unwrap()
        .fins;
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    for (nx, ny) in [(64, 32), (128, 64)] {
        let s = setup(nx, ny);
        group.bench_function(format!("{nx}x{ny}"), |b| b.iter(|| simulate(&fins, &s).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, simulate_reference);
criterion_main!(benches);
