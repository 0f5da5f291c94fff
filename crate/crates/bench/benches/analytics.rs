use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use queuecorr::fluid::{gamma_sp, stationary_workload_fluid, two_state_gamma};
use queuecorr::properties::check_shape;
use queuecorr::transform::{correlation_from_gamma, decay_rate_fit};
use queuecorr::{
    FitMode, FluidView, GeneratorMatrix, InversionParams, MapModel, TransformEvaluator, TwoStateFluidParams,
};

fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

fn three_state() -> MapModel {
    let g = GeneratorMatrix::from_rows(&[vec![-1.0, 1.0, 0.0], vec![0.0, -1.0, 1.0], vec![1.0, 0.0, -1.0]]).unwrap();
    MapModel::fluid(g, &[1.0, -2.0, -3.0])
}

fn transforms(c: &mut Criterion) {
    let p = TwoStateFluidParams::new(1.0, 4.0).unwrap();
    c.bench_function("two_state_gamma", |b| b.iter(|| two_state_gamma(&p, black_box(0.7)).unwrap()));

    let fv = FluidView::new(&three_state()).unwrap();
    let sw = stationary_workload_fluid(&fv).unwrap();
    c.bench_function("gamma_sp_three_state", |b| b.iter(|| gamma_sp(&fv, &sw, black_box(0.7)).unwrap()));
}

fn inversion(c: &mut Criterion) {
    let params = InversionParams::default();
    let t = grid(0.1, 10.0, 100);
    let cyclic = TransformEvaluator::cyclic(6).unwrap();
    c.bench_function("invert_cyclic6_100pts", |b| {
        b.iter(|| correlation_from_gamma(&cyclic, black_box(&t), &params).unwrap())
    });

    let two = TransformEvaluator::two_state(TwoStateFluidParams::new(1.0, 4.0).unwrap()).unwrap();
    let window = grid(10.0, 40.0, 121);
    c.bench_function("two_state_decay_fit", |b| {
        b.iter(|| {
            let curve = correlation_from_gamma(&two, &window, &params).unwrap();
            decay_rate_fit(&curve, (10.0, 40.0), FitMode::PowerCorrected).unwrap()
        })
    });

    let fluid = TransformEvaluator::fluid(&three_state()).unwrap();
    let short = grid(0.5, 5.0, 10);
    c.bench_function("invert_fluid_three_state_10pts", |b| {
        b.iter(|| correlation_from_gamma(&fluid, black_box(&short), &params).unwrap())
    });

    let curve = correlation_from_gamma(&cyclic, &grid(0.0, 30.0, 301), &params).unwrap();
    c.bench_function("check_shape_301pts", |b| b.iter(|| check_shape(black_box(&curve), 0.01).unwrap()));
}

criterion_group!(benches, transforms, inversion);
criterion_main!(benches);
