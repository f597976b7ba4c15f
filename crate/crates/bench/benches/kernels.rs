use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dispersim::nonlinearity::{apply_cubic, SeparableTerm};
use dispersim::solver::Stepper;
use dispersim::wavepacket::{test_profile, ChiKind};
use dispersim::{make_preset, CubicSymbol};
use dispersim_bench::gaussian_state;

fn step(c: &mut Criterion) {
    let sym = make_preset("nls", &[]).unwrap();
    let q = CubicSymbol::constant(1.0);
    let mut group = c.benchmark_group("lawson_rk4_step");
    for n in [1024, 4096, 16384] {
        let s = gaussian_state(n, 400.0, 4.0, 1.0);
        let stepper = Stepper::new(s.grid(), &sym, &q, 0.05);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            let mut spec = s.spectrum().to_vec();
            b.iter(|| stepper.step(black_box(&mut spec)).unwrap());
        });
    }
    group.finish();
}

fn cubic(c: &mut Criterion) {
    let mut group = c.benchmark_group("cubic");
    let small = gaussian_state(64, 20.0, 2.0, 1.0);
    let dense = CubicSymbol::dense_expr("1 + 0.1*xi1*xi3").unwrap();
    group.bench_function("dense_64", |b| b.iter(|| apply_cubic(&dense, small.grid(), black_box(small.spectrum())).unwrap()));
    let big = gaussian_state(4096, 400.0, 4.0, 1.0);
    let constant = CubicSymbol::constant(1.0);
    group.bench_function("constant_4096", |b| {
        b.iter(|| apply_cubic(&constant, big.grid(), black_box(big.spectrum())).unwrap())
    });
    let term = SeparableTerm::from_exprs(["exp(-xi^2/4)", "1", "1", "1/(1+xi^2)"]).unwrap();
    let separable = CubicSymbol::separable(vec![term], false);
    group.bench_function("separable_4096", |b| {
        b.iter(|| apply_cubic(&separable, big.grid(), black_box(big.spectrum())).unwrap())
    });
    group.finish();
}

fn packets(c: &mut Criterion) {
    let sym = make_preset("nls", &[]).unwrap();
    let s = gaussian_state(8192, 3200.0, 3.0, 100.0);
    let v: Vec<f64> = (0..37).map(|k| -0.9 + 0.05 * k as f64).collect();
    c.bench_function("test_profile_37v_8192", |b| {
        b.iter(|| test_profile(black_box(&s), &sym, &v, ChiKind::Bump).unwrap())
    });
}

criterion_group!(benches, step, cubic, packets);
criterion_main!(benches);
