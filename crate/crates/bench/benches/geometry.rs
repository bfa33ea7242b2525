use criterion::{black_box, criterion_group, criterion_main, Criterion};
use finopt_bench::{geometry, reference_vector, setup};
use finopt_core::geometry::{decode, rasterize, DecisionVector};

fn decode_reference(c: &mut Criterion) {
    let g = geometry();
    let x = DecisionVector::new(reference_vector(), &g).unwrap();
    c.bench_function("decode", |b| b.iter(|| decode(black_box(&x), &g).unwrap()));
}

fn rasterize_reference(c: &mut Criterion) {
    let g = geometry();
    let fins = decode(&DecisionVector::new(reference_vector(), &g).unwrap(), &g)
        .unwrap()
        .fins;
    let mut group = c.benchmark_group("rasterize");
    for (nx, ny) in [(64, 32), (128, 64), (256, 128)] {
        let grid = setup(nx, ny).domain.grid();
        group.bench_function(format!("{nx}x{ny}"), |b| b.iter(|| rasterize(black_box(&fins), &grid)));
    }
    group.finish();
}

criterion_group!(benches, decode_reference, rasterize_reference);
criterion_main!(benches);
