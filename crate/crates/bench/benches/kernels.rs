use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hmtoc_core::control::apply_control;
use hmtoc_core::dynamics::{builtin_exp2, builtin_pielou, builtin_ricker, from_expression};
use hmtoc_core::scan::{run_scan, ScanConfig};
use hmtoc_core::stability::{jury_table, root_oracle, CharPoly};
use hmtoc_core::{iterate, parse_expr, TargetControl};

fn orbits(c: &mut Criterion) {
    let builtin = apply_control(builtin_pielou(8.0, 3).unwrap(), TargetControl::new(0.5, 7.0).unwrap());
    let parsed = apply_control(
        from_expression(parse_expr("8*x1/(1+x3)", 3).unwrap()),
        TargetControl::new(0.5, 7.0).unwrap(),
    );
    let mut group = c.benchmark_group("iterate_10k");
    group.bench_function("pielou_builtin", |b| b.iter(|| iterate(&builtin, black_box(&[1.0, 2.0, 3.0]), 10_000)));
    group.bench_function("pielou_expression", |b| b.iter(|| iterate(&parsed, black_box(&[1.0, 2.0, 3.0]), 10_000)));
    group.finish();
}

fn schur(c: &mut Criterion) {
    let mut group = c.benchmark_group("schur");
    for coeffs in [vec![-1.0, -2.0], vec![0.3, -0.2, 0.1, 0.05, -0.4]] {
        let poly = CharPoly::new(coeffs);
        let k = poly.degree();
        group.bench_with_input(BenchmarkId::new("jury_table", k), &poly, |b, p| b.iter(|| jury_table(black_box(p))));
        group.bench_with_input(BenchmarkId::new("root_oracle", k), &poly, |b, p| b.iter(|| root_oracle(black_box(p))));
    }
    group.finish();
}

fn dual(c: &mut Criterion) {
    let ast = parse_expr("exp(1-x1)*exp(1-x2^2)", 2).unwrap();
    c.bench_function("eval_dual_exp2", |b| b.iter(|| ast.eval_dual(black_box(&[0.7, 1.3]))));
    c.bench_function("eval_exp2", |b| b.iter(|| ast.eval(black_box(&[0.7, 1.3]))));
}

fn sweep(c: &mut Criterion) {
    let config = ScanConfig {
        c_count: 60,
        transient: 1000,
        samples: 50,
        ..ScanConfig::default()
    };
    let mut group = c.benchmark_group("scan_60x1050");
    group.sample_size(10);
    group.bench_function("exp2", |b| {
        b.iter(|| run_scan(&config, |c| Ok(apply_control(builtin_exp2(), TargetControl::new(c, 1.0)?))))
    });
    group.bench_function("ricker", |b| {
        let f = builtin_ricker(1.5, 2).unwrap();
        b.iter(|| run_scan(&config, |c| Ok(apply_control(f.clone(), TargetControl::new(c, 0.0)?))))
    });
    group.finish();
}

criterion_group!(benches, orbits, schur, dual, sweep);
criterion_main!(benches);
