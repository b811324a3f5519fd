use bnnverify_bench::instances;
use bnnverify_core::cuts::{phase_one, phase_two, CutConfig};
use bnnverify_core::formulation::build_one_ip;
use bnnverify_core::hull::constraint_generation;
use bnnverify_core::mip::{solve_mip, SolveControls};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn bench_one_ip_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("one_ip_solve");
    for (name, model, spec) in instances() {
        group.bench_function(&name, |b| {
            b.iter(|| {
                let ip = build_one_ip(black_box(&model), black_box(&spec)).unwrap();
                solve_mip(&ip.model, &SolveControls::default(), None).unwrap()
            })
        });
    }
    group.finish();
}

fn bench_cut_phases(c: &mut Criterion) {
    let config = CutConfig::default();
    let mut group = c.benchmark_group("cut_phases");
    for (name, model, spec) in instances() {
        group.bench_function(format!("{name}/phase_one"), |b| {
            b.iter(|| phase_one(black_box(&model), black_box(&spec), &config).unwrap())
        });
        group.bench_function(format!("{name}/phase_two"), |b| {
            b.iter(|| {
                let (mut outer, mut inner, mut census) =
                    phase_one(&model, &spec, &config).unwrap();
                phase_two(&model, &spec, &mut outer, &mut inner, &mut census, &config)
                    .unwrap();
                outer
            })
        });
    }
    group.finish();
}

fn bench_hull_generation(c: &mut Criterion) {
    let mut group = c.benchmark_group("hull_generation");
    for (name, model, spec) in instances() {
        group.bench_function(&name, |b| {
            b.iter(|| {
                let mut ip = build_one_ip(&model, &spec).unwrap();
                constraint_generation(&mut ip, None).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_one_ip_solve, bench_cut_phases, bench_hull_generation);
criterion_main!(benches);
