use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fracdiff::forward::uniform_times;
use fracdiff::inversion::{cost, CostConfig};
use fracdiff::mittag_leffler::{mlf, MlfEvaluator};
use fracdiff::quadrature::QuadratureRule;
use fracdiff::spectral::{build_operator_matrix, eigendecompose, Grid1D};
use fracdiff::{ParameterVector, SolverContext};

fn mittag_leffler(c: &mut Criterion) {
    c.bench_function("mlf direct, 100 arguments", |b| {
        b.iter(|| (0..100).map(|k| mlf(-0.1 * k as f64, black_box(0.7), 1.0).unwrap()).sum::<f64>())
    });
    let ev = MlfEvaluator::new(0.7).unwrap();
    c.bench_function("mlf table, 100 arguments", |b| {
        b.iter(|| (0..100).map(|k| ev.eval_neg(black_box(0.1 * k as f64))).sum::<f64>())
    });
    c.bench_function("mlf table build", |b| b.iter(|| MlfEvaluator::new(black_box(0.7)).unwrap()));
}

fn eigensolve(c: &mut Criterion) {
    let grid = Grid1D::new(199).unwrap();
    c.bench_function("operator + eigendecomposition, n = 199", |b| {
        b.iter(|| eigendecompose(&build_operator_matrix(&grid, black_box(0.5), 1.5).unwrap()).unwrap())
    });
}

fn cost_evaluation(c: &mut Criterion) {
    let ctx = SolverContext::with_default_bump(199).unwrap();
    let g = ctx.trajectory(&ParameterVector::REFERENCE, &uniform_times(1.0, 100).unwrap()).unwrap();
    let cfg = CostConfig::new(g, 0.0, QuadratureRule::Simpson).unwrap();
    let theta = ParameterVector::new(0.6, 1.4, 0.65);
    cost(&theta, &cfg, &ctx).unwrap();
    c.bench_function("cost, cached eigenpairs", |b| b.iter(|| cost(black_box(&theta), &cfg, &ctx).unwrap()));
}

criterion_group!(benches, mittag_leffler, eigensolve, cost_evaluation);
criterion_main!(benches);
