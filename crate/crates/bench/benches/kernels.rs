use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nearfield::channel::build_steering_set;
use nearfield::numerics::Cholesky;
use nearfield::{assemble_fisher, fisher_blocks, AmplitudeModel, CMatrix, Complex64, TxCovariance};
use nearfield_bench::{reference_context, reference_scene};

fn objective(c: &mut Criterion) {
    let (scene, ctx) = reference_context();
    let positions = scene.positions();
    c.bench_function("objective_k1", |b| b.iter(|| ctx.evaluate(black_box(&positions[..1])).unwrap()));
    c.bench_function("objective_k2", |b| b.iter(|| ctx.evaluate(black_box(&positions)).unwrap()));
    let fixed = ctx.columns(&positions[0]).unwrap();
    c.bench_function("objective_k2_one_moving", |b| {
        b.iter(|| {
            let moving = ctx.columns(black_box(&positions[1])).unwrap();
            ctx.evaluate_columns(&[&fixed, &moving]).unwrap()
        })
    });
}

fn fisher(c: &mut Criterion) {
    let (scene, x) = reference_scene();
    let r = TxCovariance::from_block(&x);
    let st = build_steering_set(&scene.tx, &scene.rx, &scene.positions(), scene.wavenumber(), AmplitudeModel::Exact).unwrap();
    let b = scene.coeffs();
    c.bench_function("fisher_blocks_k2", |bch| {
        bch.iter(|| assemble_fisher(&fisher_blocks(&st, &b, &r, &scene.noise, 52).unwrap()))
    });
}

fn cholesky(c: &mut Criterion) {
    let a = CMatrix::from_fn(36, 36, |i, j| Complex64::new(((i * 7 + j * 3) % 11) as f64, ((i + 2 * j) % 5) as f64));
    let m = &a * a.adjoint() + CMatrix::identity(36, 36);
    c.bench_function("cholesky_36", |b| b.iter(|| Cholesky::new(black_box(&m)).unwrap().log_det()));
}

criterion_group!(benches, objective, fisher, cholesky);
criterion_main!(benches);
